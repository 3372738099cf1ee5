"""Closed-loop simulation of the longitudinal/lateral cascade.

Each step:

1. the longitudinal MPC returns ``a_cmd`` and the predicted speeds;
2. the true scheduling value ``p_true`` is drawn uniformly from the
   uncertainty band around ``1 / v`` and is handed to the lateral MPC as the
   exactly known current parameter;
3. the scheduling tube is built around ``1 / v*`` of the predicted speeds;
4. the lateral tube MPC returns ``delta = g_0``;
5. both plants advance, the lateral one with ``A(p_true)`` and a disturbance
   ``w`` drawn from ``W``.

An infeasible controller keeps the previous command and the step is
flagged.  All randomness comes from one generator seeded by the config.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .config import ScenarioConfig
from .longitudinal import solve_longitudinal_step
from .synthesis import GainSchedule, RpiSet
from .tube_mpc import SchedulingTube, build_scheduling_tube, solve_lateral_step, tube_nested
from .vehicle import LpvModel

STATE_NAMES = ("e_y", "de_y", "e_psi", "de_psi")


def _columns(N: int) -> List[str]:
    cols = ["k", "t", "s", "v", "v_ref", "a_cmd", "long_status",
            *STATE_NAMES, "delta_cmd", "lat_status",
            "p_nominal", "p_actual", "p_lo", "p_hi", "v_equiv"]
    cols += [f"alpha_{i}" for i in range(N + 1)]
    cols += [f"z1_{n}" for n in STATE_NAMES]
    cols += [f"xpred_{n}" for n in STATE_NAMES]
    cols += [f"w_{n}" for n in STATE_NAMES]
    cols += ["nested", "n_constraints", "qp_iterations",
             "active_tube", "active_state", "active_input", "active_terminal"]
    return cols


@dataclass
class SimLog:
    """One record per simulation step, stored column-wise."""

    columns: List[str]
    data: Dict[str, list] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for c in self.columns:
            self.data.setdefault(c, [])

    def append(self, row: dict):
        missing = set(self.columns) - set(row)
        if missing:
            raise KeyError(f"record misses columns {sorted(missing)}")
        for c in self.columns:
            self.data[c].append(row[c])

    def __len__(self):
        return len(self.data[self.columns[0]]) if self.columns else 0

    def col(self, name) -> np.ndarray:
        vals = self.data[name]
        if vals and isinstance(vals[0], str):
            return np.array(vals)
        return np.asarray(vals, dtype=float)

    @property
    def states(self) -> np.ndarray:
        return np.column_stack([self.col(n) for n in STATE_NAMES])

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(self.columns)
            for i in range(len(self)):
                wr.writerow([_fmt(self.data[c][i]) for c in self.columns])
        return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path) -> SimLog:
    with Path(path).open(newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        log = SimLog(list(header))
        for row in rd:
            rec = {}
            for c, v in zip(header, row):
                try:
                    rec[c] = float(v)
                except ValueError:
                    rec[c] = v
            log.append(rec)
    return log


def parameter_band(p: float, delta_unc: float, model: LpvModel, mode: str = "relative"):
    if mode == "relative":
        lo, hi = p * (1 - delta_unc), p * (1 + delta_unc)
    else:
        lo, hi = p - delta_unc, p + delta_unc
    return max(lo, model.p_min), min(hi, model.p_max)


def _disturbance(rng, cfg: ScenarioConfig, model: LpvModel) -> np.ndarray:
    d = cfg.mpc.d_max
    if cfg.disturbance == "off":
        return np.zeros(model.nx)
    if cfg.disturbance == "vertex":
        w = d * rng.choice([-1.0, 1.0], size=model.nx)
    else:
        w = rng.uniform(-d, d, size=model.nx)
    return cfg.w_scale * w


def run_scenario(cfg: ScenarioConfig, gains: GainSchedule, S: RpiSet,
                 model: Optional[LpvModel] = None, progress=None) -> SimLog:
    """Simulate ``cfg.steps`` steps of the cascade and return the log."""
    model = cfg.lateral_model() if model is None else model
    lon = cfg.longitudinal_model()
    mp = cfg.mpc
    N = mp.N
    Q = mp.Q * np.eye(model.nx)
    rng = np.random.default_rng(cfg.seed)
    log = SimLog(_columns(N), meta={"seed": cfg.seed, "steps": cfg.steps})

    s, v = float(cfg.s0), float(cfg.v0)
    x = np.array(cfg.x0, dtype=float)
    a_prev, delta_prev = 0.0, 0.0
    prev_tube: Optional[SchedulingTube] = None
    for k in range(cfg.steps):
        lc = solve_longitudinal_step(s, v, cfg.v_ref, lon, mp.eta, mp.zeta, N)
        if lc.ok:
            a_cmd, v_pred = lc.a_cmd, lc.v_pred
        else:
            a_cmd, v_pred = a_prev, np.full(N, v)
        p_nom = 1.0 / v
        p_lo, p_hi = parameter_band(p_nom, mp.delta_unc, model, cfg.delta_mode)
        p_true = float(rng.uniform(p_lo, p_hi))
        assert p_lo <= p_true <= p_hi
        v_tube = np.clip(v_pred, lon.v_min, lon.v_max)
        tube = build_scheduling_tube(v_tube, mp.delta_unc, model, p_now=p_true,
                                     mode=cfg.delta_mode)
        sol = solve_lateral_step(x, tube, gains, S, Q, mp.R, N, model,
                                 vertex_rows=cfg.vertex_rows, tighten_w=cfg.tighten_w,
                                 gain_pairing=cfg.gain_pairing)
        delta = sol.delta_cmd if sol.ok else delta_prev
        w = _disturbance(rng, cfg, model)
        row = {"k": k, "t": round(k * lon.t_s, 12), "s": s, "v": v, "v_ref": float(cfg.v_ref),
               "a_cmd": a_cmd, "long_status": lc.status,
               **{n: float(x[i]) for i, n in enumerate(STATE_NAMES)},
               "delta_cmd": delta, "lat_status": sol.status,
               "p_nominal": p_nom, "p_actual": p_true, "p_lo": p_lo, "p_hi": p_hi,
               "v_equiv": 1.0 / p_true,
               **{f"alpha_{i}": float(sol.alpha[i]) for i in range(N + 1)},
               **{f"z1_{n}": float(sol.z[1, i]) for i, n in enumerate(STATE_NAMES)},
               **{f"xpred_{n}": float(sol.x1_nominal[i]) for i, n in enumerate(STATE_NAMES)},
               **{f"w_{n}": float(w[i]) for i, n in enumerate(STATE_NAMES)},
               "nested": tube_nested(prev_tube, tube), "n_constraints": sol.n_constraints,
               "qp_iterations": sol.iterations,
               **{f"active_{f}": sol.active.get(f, -1)
                  for f in ("tube", "state", "input", "terminal")}}
        log.append(row)
        x = model.step(x, delta, p_true, w)
        s, v = lon.step(s, v, a_cmd)
        a_prev, delta_prev, prev_tube = a_cmd, delta, tube
        if progress is not None:
            progress(k, row)
    log.meta["final_state"] = x.tolist()
    log.meta["final_speed"] = v
    return log


def _settle_time(t, err, tol):
    """First time after which ``|err| <= tol`` holds until the end."""
    bad = np.flatnonzero(np.abs(err) > tol)
    if bad.size == 0:
        return 0.0
    if bad[-1] == len(err) - 1:
        return math.nan
    return float(t[bad[-1] + 1])


def compute_metrics(log: SimLog, model: Optional[LpvModel] = None, delta_max: Optional[float] = None,
                    v_tol: float = 0.05, ey_tol: float = 0.1, tol: float = 1e-9) -> dict:
    """Summary numbers of a run.

    Violations are counted per step: a state violation when the logged state
    leaves ``X``, an input violation when ``|delta| > delta_max``.
    """
    if len(log) == 0:
        raise ValueError("empty log")
    t = log.col("t")
    v = log.col("v")
    ey = log.col("e_y")
    X = log.states
    delta = log.col("delta_cmd")
    if model is not None:
        state_bad = ~np.all(X @ model.X.G.T <= model.X.h + tol, axis=1)
        dmax = float(model.U.h[0]) if delta_max is None else delta_max
    else:
        state_bad = np.zeros(len(log), dtype=bool)
        dmax = np.inf if delta_max is None else delta_max
    input_bad = np.abs(delta) > dmax + tol
    lat_ok = log.col("lat_status") == "optimal"
    lon_ok = log.col("long_status") == "optimal"
    nested = log.col("nested")
    return {
        "steps": len(log),
        "settling_time_v": _settle_time(t, v - log.col("v_ref"), v_tol),
        "max_abs_e_y": float(np.max(np.abs(ey))),
        "time_to_e_y_band": _settle_time(t, ey, ey_tol),
        "state_violations": int(state_bad.sum()),
        "input_violations": int(input_bad.sum()),
        "constraint_violations": int(state_bad.sum() + input_bad.sum()),
        "infeasible_steps": int(np.sum(~lat_ok | ~lon_ok)),
        "lateral_infeasible_steps": int(np.sum(~lat_ok)),
        "nested_fraction": float(np.mean(nested)),
        "max_constraints": int(np.max(log.col("n_constraints"))),
    }


def _batch_worker(job):
    cfg, gains, S, model = job
    return run_scenario(cfg, gains, S, model)


def run_batch(cfg: ScenarioConfig, gains: GainSchedule, S: RpiSet, seeds,
              model: Optional[LpvModel] = None, jobs: int = 1) -> List[SimLog]:
    """Run one scenario per seed, in ``jobs`` worker processes when ``jobs > 1``.

    Every run draws from its own seeded generator, so the logs do not depend
    on ``jobs``.
    """
    model = cfg.lateral_model() if model is None else model
    work = [(cfg.replace(seed=int(s)), gains, S, model) for s in seeds]
    if jobs <= 1 or len(work) <= 1:
        return [_batch_worker(w) for w in work]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(_batch_worker, work))
