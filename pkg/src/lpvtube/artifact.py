"""Synthesis artifact: gains and invariant set in a human-readable JSON file.

Top-level keys
--------------
``format``       always ``"lpvtube-synthesis"``
``version``      integer schema version (currently 1)
``model_hash``   sha256 of the canonical JSON of ``LpvModel.describe()``
``model``        that description, for inspection
``gains``        ``K`` and ``P`` (lists of vertex matrices), ``Q_syn``, ``R_syn``,
                 ``p_min``, ``p_max``, ``lmi_margin``, ``lmi_theta``, ``preconditioned``
``rpi``          ``G``, ``h`` (halfspace form), ``vertices``, ``iterations_used``
``tolerances``   numeric tolerances used during synthesis
``diagnostics``  free-form metadata (timings, weight choices, ...)
``checksum``     sha256 of the canonical JSON of every other key

Floats are written with ``repr`` precision, so a save/load round trip is
bit-exact.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .polytope import MEMBERSHIP_TOL, HPolytope, VPolytope
from .synthesis import RPI_TOL, GainSchedule, RpiSet
from .opt.sdp import FEASIBILITY_MARGIN
from .vehicle import LpvModel

FORMAT = "lpvtube-synthesis"
VERSION = 1


class ArtifactError(ValueError):
    pass


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def model_hash(model: LpvModel) -> str:
    return hashlib.sha256(_canonical(model.describe()).encode()).hexdigest()


def _matrices(seq):
    return [np.asarray(M, dtype=float).tolist() for M in seq]


def artifact_dict(model: LpvModel, gains: GainSchedule, S: RpiSet,
                  metadata: Optional[dict] = None) -> dict:
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "model_hash": model_hash(model),
        "model": model.describe(),
        "gains": {
            "K": _matrices(gains.K),
            "P": _matrices(gains.P),
            "Q_syn": np.asarray(gains.Q_syn, dtype=float).tolist(),
            "R_syn": np.asarray(gains.R_syn, dtype=float).tolist(),
            "p_min": float(gains.p_min),
            "p_max": float(gains.p_max),
            "lmi_margin": float(gains.lmi_margin),
            "lmi_theta": None if gains.lmi_theta is None else np.asarray(gains.lmi_theta).tolist(),
            "preconditioned": bool(gains.preconditioned),
        },
        "rpi": {
            "G": S.H.G.tolist(),
            "h": S.H.h.tolist(),
            "vertices": S.V.vertices.tolist(),
            "iterations_used": int(S.iterations_used),
        },
        "tolerances": {
            "lmi_feasibility_margin": FEASIBILITY_MARGIN,
            "rpi_convergence": RPI_TOL,
            "membership": MEMBERSHIP_TOL,
        },
        "diagnostics": dict(metadata or {}),
    }
    doc["checksum"] = hashlib.sha256(_canonical(doc).encode()).hexdigest()
    return doc


def save_artifact(path, model: LpvModel, gains: GainSchedule, S: RpiSet,
                  metadata: Optional[dict] = None) -> Path:
    path = Path(path)
    doc = artifact_dict(model, gains, S, metadata)
    path.write_text(json.dumps(doc, indent=1) + "\n")
    return path


def load_artifact(path, model: Optional[LpvModel] = None, with_metadata: bool = False):
    """Read an artifact and return ``(gains, S)``.

    When ``model`` is given its hash must match the stored one.  With
    ``with_metadata`` the full document is returned as a third element.
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as exc:
        raise ArtifactError(f"cannot read artifact {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"artifact {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != FORMAT:
        raise ArtifactError(f"{path} is not a synthesis artifact")
    if doc.get("version") != VERSION:
        raise ArtifactError(f"artifact version {doc.get('version')} not supported "
                            f"(expected {VERSION})")
    stored = doc.pop("checksum", None)
    if stored != hashlib.sha256(_canonical(doc).encode()).hexdigest():
        raise ArtifactError("artifact checksum mismatch: file was modified or corrupted")
    if model is not None and doc["model_hash"] != model_hash(model):
        raise ArtifactError("artifact was synthesized for a different model "
                            "(model hash mismatch); re-run synthesis")
    try:
        g = doc["gains"]
        theta = g["lmi_theta"]
        gains = GainSchedule(
            K=[np.array(K) for K in g["K"]], P=[np.array(P) for P in g["P"]],
            Q_syn=np.array(g["Q_syn"]), R_syn=np.array(g["R_syn"]),
            p_min=g["p_min"], p_max=g["p_max"], lmi_margin=g["lmi_margin"],
            lmi_theta=None if theta is None else np.array(theta),
            preconditioned=g["preconditioned"])
        r = doc["rpi"]
        S = RpiSet(H=HPolytope(np.array(r["G"]), np.array(r["h"])),
                   V=VPolytope(np.array(r["vertices"])), iterations_used=r["iterations_used"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"artifact is missing or has malformed field: {exc}") from exc
    doc["checksum"] = stored
    return (gains, S, doc) if with_metadata else (gains, S)
