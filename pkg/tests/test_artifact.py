import json

import numpy as np
import pytest

from lpvtube.artifact import VERSION, ArtifactError, load_artifact, model_hash, save_artifact
from lpvtube.config import default_config


def test_round_trip_is_bit_exact(artifact_path, model, gains, rpi):
    g, S = load_artifact(artifact_path, model)
    for a, b in zip(g.K + g.P, gains.K + gains.P):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(S.H.G, rpi.H.G)
    np.testing.assert_array_equal(S.H.h, rpi.H.h)
    np.testing.assert_array_equal(S.V.vertices, rpi.V.vertices)
    np.testing.assert_array_equal(g.lmi_theta, gains.lmi_theta)


def test_metadata_and_version(artifact_path, model):
    _, _, doc = load_artifact(artifact_path, model, with_metadata=True)
    assert doc["version"] == VERSION
    assert doc["diagnostics"]["origin"] == "test session"
    assert doc["model_hash"] == model_hash(model)


def test_tampered_file_rejected(artifact_path, tmp_path):
    doc = json.loads(artifact_path.read_text())
    doc["gains"]["K"][0][0][0] += 1e-12
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises(ArtifactError, match="checksum"):
        load_artifact(bad)


def test_model_mismatch_rejected(artifact_path):
    cfg = default_config()
    other = cfg.replace(vehicle=cfg.vehicle.__class__(m=2600.0)).lateral_model()
    with pytest.raises(ArtifactError, match="model hash"):
        load_artifact(artifact_path, other)


def test_wrong_version_rejected(artifact_path, tmp_path):
    doc = json.loads(artifact_path.read_text())
    doc["version"] = VERSION + 1
    bad = tmp_path / "v.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises(ArtifactError, match="version"):
        load_artifact(bad)


def test_not_json_and_missing(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ArtifactError):
        load_artifact(p)
    with pytest.raises(ArtifactError):
        load_artifact(tmp_path / "missing.json")


def test_save_is_deterministic(tmp_path, model, gains, rpi):
    a = save_artifact(tmp_path / "a.json", model, gains, rpi, {"x": 1})
    b = save_artifact(tmp_path / "b.json", model, gains, rpi, {"x": 1})
    assert a.read_bytes() == b.read_bytes()
