"""Longitudinal speed-tracking MPC.

With the accelerations ``a = [a_0, ..., a_{N-1}]`` as the only decision
variables the predicted speeds are ``v_{i+1} = v + t_s * sum_{k<=i} a_k``,
i.e. ``v_pred = v 1 + t_s L a`` with ``L`` the lower-triangular matrix of
ones.  The cost ``sum eta (v_{i+1} - v_ref)^2 + zeta a_i^2`` is then a dense
QP in ``a``.  The position does not enter the problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .opt import INFEASIBLE, OPTIMAL, QpProblem, solve_qp
from .vehicle import LongitudinalModel


@dataclass
class LongCommand:
    a_cmd: float
    v_pred: np.ndarray
    a_seq: np.ndarray
    objective: float
    status: str
    diagnostic: str = ""

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def longitudinal_qp(v: float, v_ref, model: LongitudinalModel, eta: float, zeta: float,
                    N: int) -> QpProblem:
    v_ref = np.broadcast_to(np.asarray(v_ref, dtype=float), (N,))
    ts = model.t_s
    L = np.tril(np.ones((N, N)))
    H = 2.0 * (eta * ts ** 2 * L.T @ L + zeta * np.eye(N))
    f = 2.0 * eta * ts * L.T @ (v - v_ref)
    I = np.eye(N)
    G = np.vstack([I, -I, ts * L, -ts * L])
    h = np.concatenate([np.full(N, model.a_max), np.full(N, -model.a_min),
                        np.full(N, model.v_max - v), np.full(N, v - model.v_min)])
    return QpProblem(H, f, G, h)


def solve_longitudinal_step(s: float, v: float, v_ref, model: LongitudinalModel,
                            eta: float = 100.0, zeta: float = 0.1, N: int = 5) -> LongCommand:
    """First optimal acceleration and the predicted speeds ``v*_{1|k} .. v*_{N|k}``.

    ``s`` is accepted for interface symmetry with the plant state but does
    not influence the result.  The speed box applies to predicted speeds
    only; the current speed must already lie inside it.
    """
    if not (eta > 0 and zeta > 0):
        raise ValueError("eta and zeta must be positive")
    v_ref = np.broadcast_to(np.asarray(v_ref, dtype=float), (N,))
    if not model.v_min <= v <= model.v_max:
        return LongCommand(np.nan, np.full(N, np.nan), np.full(N, np.nan), np.nan, INFEASIBLE,
                           f"current speed {v:g} outside [{model.v_min:g}, {model.v_max:g}]")
    sol = solve_qp(longitudinal_qp(v, v_ref, model, eta, zeta, N))
    if sol.status != OPTIMAL:
        return LongCommand(np.nan, np.full(N, np.nan), np.full(N, np.nan), np.nan, sol.status,
                           "longitudinal QP not solved")
    a = np.clip(sol.x, model.a_min, model.a_max)
    v_pred = v + model.t_s * np.cumsum(a)
    # constant part of the cost left out of the QP objective
    obj = float(eta * np.sum((v_pred - v_ref) ** 2) + zeta * np.sum(a ** 2))
    return LongCommand(float(a[0]), v_pred, a, obj, OPTIMAL)
