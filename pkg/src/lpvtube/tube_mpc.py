"""Homothetic tube LPV-MPC for the lateral dynamics.

The state tube is ``X_i = z_i + alpha_i S`` with ``S`` the invariant set and
the control tube ``g_i + alpha_i K(p) S``.  Using the vertices ``v^j`` of
``S`` and the vertex gains ``K^l``, every set inclusion becomes a finite
family of linear inequalities in the decision vector::

    d = [alpha_0 .. alpha_N, z_0 .. z_N, g_0 .. g_{N-1}]      (6N + 5 entries)

For a fixed facet row, the vertex index ``j`` and the gain index only
enter through the coefficient of ``alpha_i``.  Because ``alpha_i >= 0`` the
whole family over ``(j, l)`` is equivalent to the single row with the
largest such coefficient.  ``vertex_rows="max"`` uses that reduction;
``vertex_rows="full"`` writes every row out and is only practical for small
sets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .opt import OPTIMAL, QpProblem, solve_qp
from .polytope import support_many
from .synthesis import GainSchedule, RpiSet
from .vehicle import LpvModel

RIDGE = 1e-8


@dataclass(frozen=True)
class SchedulingTube:
    """Per-step scheduling bounds.  Entry ``i`` belongs to the speed ``v*_{i+1|k}``."""

    p_hat: np.ndarray
    p_lo: np.ndarray
    p_hi: np.ndarray
    p_now: float

    def __post_init__(self):
        for name in ("p_hat", "p_lo", "p_hi"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.p_hat.shape == self.p_lo.shape == self.p_hi.shape):
            raise ValueError("tube vectors must have equal length")
        if np.any(self.p_lo > self.p_hat + 1e-15) or np.any(self.p_hat > self.p_hi + 1e-15):
            raise ValueError("tube bounds must bracket the nominal values")

    @property
    def N(self) -> int:
        return self.p_hat.shape[0]

    def bounds(self, i: int):
        """Parameter interval used to propagate prediction step ``i`` to ``i + 1``.

        Step 0 uses the measured value; step ``i >= 1`` uses the tube around
        ``1 / v*_{i|k}``.
        """
        if i == 0:
            return self.p_now, self.p_now
        return float(self.p_lo[i - 1]), float(self.p_hi[i - 1])


def build_scheduling_tube(predicted_speeds, delta_unc: float, model: LpvModel,
                          p_now: Optional[float] = None, mode: str = "relative",
                          v_tol: float = 1e-9) -> SchedulingTube:
    """Scheduling tube around ``p_hat = 1 / v*``.

    ``mode="relative"`` gives ``p_hat (1 -/+ delta_unc)``, ``mode="additive"``
    gives ``p_hat -/+ delta_unc``; both are clipped to ``[p_min, p_max]``.
    ``p_now`` defaults to ``p_hat[0]``.
    """
    v = np.atleast_1d(np.asarray(predicted_speeds, dtype=float))
    if delta_unc < 0:
        raise ValueError("delta_unc must be non-negative")
    v_min, v_max = 1.0 / model.p_max, 1.0 / model.p_min
    if np.any(v < v_min - v_tol) or np.any(v > v_max + v_tol):
        raise ValueError(f"predicted speed outside [{v_min:g}, {v_max:g}]: {v}")
    p_hat = np.clip(1.0 / v, model.p_min, model.p_max)
    if mode == "relative":
        lo, hi = p_hat * (1 - delta_unc), p_hat * (1 + delta_unc)
    elif mode == "additive":
        lo, hi = p_hat - delta_unc, p_hat + delta_unc
    else:
        raise ValueError(f"unknown tube mode {mode!r}")
    lo = np.clip(lo, model.p_min, model.p_max)
    hi = np.clip(hi, model.p_min, model.p_max)
    if p_now is None:
        p_now = float(p_hat[0])
    return SchedulingTube(p_hat, lo, hi, float(p_now))


def tube_nested(prev: Optional[SchedulingTube], cur: SchedulingTube, tol: float = 1e-12) -> bool:
    """True if the new tube lies inside the previous one shifted by a step.

    ``cur.p_now`` is checked against the previous first interval and each
    later interval against the previous interval one step further ahead.
    """
    if prev is None:
        return True
    if not prev.p_lo[0] - tol <= cur.p_now <= prev.p_hi[0] + tol:
        return False
    n = min(cur.N - 1, prev.N - 1)
    return bool(np.all(cur.p_lo[:n] >= prev.p_lo[1:n + 1] - tol)
                and np.all(cur.p_hi[:n] <= prev.p_hi[1:n + 1] + tol))


class _Index:
    def __init__(self, N, nx):
        self.N, self.nx = N, nx
        self.n = (N + 1) + (N + 1) * nx + N

    def alpha(self, i):
        return i

    def z(self, i):
        o = self.N + 1 + i * self.nx
        return slice(o, o + self.nx)

    def g(self, i):
        return (self.N + 1) * (1 + self.nx) + i


@dataclass
class LateralQp:
    problem: QpProblem
    counts: dict
    index: _Index = field(repr=False)
    families: np.ndarray = field(default=None, repr=False)  # family name per inequality row


def _as_weight(M, n):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape == (1, 1) and n != 1:
        M = M[0, 0] * np.eye(n)
    return M


def _gain_at(gains: GainSchedule, p: float) -> np.ndarray:
    span = gains.p_max - gains.p_min
    lam = min(max((p - gains.p_min) / span, 0.0), 1.0) if span > 0 else 0.0
    return ((1 - lam) * gains.K[0] + lam * gains.K[-1]).reshape(-1)


def _unique_rows(M: np.ndarray) -> np.ndarray:
    """Sorted indices of the first occurrence of every distinct row of ``M``."""
    # rows are grouped by a fixed random projection, then compared exactly
    key = M @ np.random.default_rng(12345).standard_normal(M.shape[1])
    order = np.argsort(key, kind="stable")
    Ms = M[order]
    same = np.all(Ms[1:] == Ms[:-1], axis=1)
    drop = np.zeros(M.shape[0], dtype=bool)
    if same.any():
        # equal rows have equal keys, so after a stable sort every duplicate
        # follows an identical row that occurs earlier in M
        drop[order[1:][same]] = True
    return np.flatnonzero(~drop)


def build_lateral_qp(x, tube: SchedulingTube, gains: GainSchedule, S: RpiSet, Q, R, N: int,
                     model: LpvModel, vertex_rows: str = "max", tighten_w: bool = False,
                     gain_pairing: str = "matched") -> LateralQp:
    """Assemble the tube MPC quadratic program for the current state ``x``.

    ``gain_pairing`` selects the feedback assumed inside the tube at a
    parameter bound ``p``: ``"matched"`` uses the scheduled gain ``K(p)``,
    ``"all"`` pairs every bound with every vertex gain ``K^l``.  Since
    ``A(p) + B K(p)`` is affine in ``p``, the matched rows at both bounds
    cover every ``p`` in between.  The cost always sums over all ``K^l``.
    """
    x = np.asarray(x, dtype=float)
    nx = model.nx
    if tube.N < N:
        raise ValueError(f"scheduling tube has {tube.N} steps, horizon needs {N}")
    if vertex_rows not in ("max", "full"):
        raise ValueError(f"vertex_rows must be 'max' or 'full', got {vertex_rows!r}")
    if gain_pairing not in ("matched", "all"):
        raise ValueError(f"gain_pairing must be 'matched' or 'all', got {gain_pairing!r}")
    Q = _as_weight(Q, nx)
    R = float(np.asarray(R, dtype=float).reshape(-1)[0])
    V = S.V.vertices
    r = V.shape[0]
    Gf, hf = S.H.G, S.H.h
    Gx, hx = model.X.G, model.X.h
    Gu, hu = model.U.G, model.U.h
    B = model.B[:, 0]
    Ks = [K.reshape(-1) for K in gains.K]
    idx = _Index(N, nx)
    n = idx.n
    wf = support_many(model.W, Gf) if tighten_w else np.zeros(Gf.shape[0])
    wx = support_many(model.W, Gx) if tighten_w else np.zeros(Gx.shape[0])

    rows, rhs, fams = [], [], []
    counts = {"tube": 0, "state": 0, "input": 0, "terminal": 0, "alpha_nonneg": 0}

    n_dup = [0]

    def emit(family, block, b, like=None):
        if like is not None:
            # rows identical to the same rows at the other parameter bound
            lb, lrhs = like
            same = np.all(block == lb, axis=1) & (b == lrhs)
            n_dup[0] += int(same.sum())
            block, b = block[~same], b[~same]
        rows.append(block)
        rhs.append(b)
        fams.extend([family] * block.shape[0])
        counts[family] += block.shape[0]

    for i in range(N):
        lo, hi = tube.bounds(i)
        params = (lo,) if lo == hi else (lo, hi)
        prev = {}
        for p in params:
            Ap = model.A(p)
            Kp = Ks if gain_pairing == "all" else [_gain_at(gains, p)]
            # alpha_i coefficient candidates, one column per (gain, vertex) pair
            AV = np.hstack([(V @ (Ap + np.outer(B, K)).T).T for K in Kp])
            for Grow, h_, w_, fam in ((Gf, hf, wf, "tube"), (Gx, hx, wx, "state")):
                coef = Grow @ AV
                if vertex_rows == "max":
                    coef = coef.max(axis=1, keepdims=True)
                m, k = Grow.shape[0], coef.shape[1]
                blk = np.zeros((m * k, n))
                blk[:, idx.alpha(i)] = coef.T.reshape(-1)
                blk[:, idx.z(i)] = np.tile(Grow @ Ap, (k, 1))
                blk[:, idx.g(i)] = np.tile(Grow @ B, k)
                if fam == "tube":
                    blk[:, idx.z(i + 1)] = np.tile(-Grow, (k, 1))
                    blk[:, idx.alpha(i + 1)] = np.tile(-h_, k)
                    b = np.tile(-w_, k)
                else:
                    b = np.tile(h_ - w_, k)
                emit(fam, blk, b, prev.get(fam))
                prev[fam] = (blk, b)
            KV = np.concatenate([V @ K for K in Kp])
            coef = np.outer(Gu[:, 0], KV)
            if vertex_rows == "max":
                coef = coef.max(axis=1, keepdims=True)
            m, k = Gu.shape[0], coef.shape[1]
            blk = np.zeros((m * k, n))
            blk[:, idx.alpha(i)] = coef.T.reshape(-1)
            blk[:, idx.g(i)] = np.tile(Gu[:, 0], k)
            b = np.tile(hu, k)
            emit("input", blk, b, prev.get("input"))
            prev["input"] = (blk, b)
    coef = V @ Gf.T  # (r, m)
    if vertex_rows == "max":
        coef = coef.max(axis=0, keepdims=True)
    k = coef.shape[0]
    blk = np.zeros((Gf.shape[0] * k, n))
    blk[:, idx.alpha(N)] = coef.reshape(-1)
    blk[:, idx.z(N)] = np.tile(Gf, (k, 1))
    emit("terminal", blk, np.tile(hf, k))
    blk = np.zeros((N, n))
    blk[np.arange(N), [idx.alpha(i) for i in range(1, N + 1)]] = -1.0
    emit("alpha_nonneg", blk, np.zeros(N))

    G = np.vstack(rows)
    h = np.concatenate(rhs)
    families = np.array(fams)
    counts["duplicates_removed"] = n_dup[0]
    if vertex_rows == "full" or gain_pairing == "all":
        # per-vertex and per-gain copies repeat rows in many places (e.g.
        # state rows whose coefficients do not depend on the vertex)
        keep = _unique_rows(np.hstack([G, h[:, None]]))
        counts["duplicates_removed"] += G.shape[0] - keep.size
        G, h, families = G[keep], h[keep], families[keep]
    counts["total"] = G.shape[0]

    # equalities alpha_0 = 0, z_0 = x
    A = np.zeros((1 + nx, n))
    A[0, idx.alpha(0)] = 1.0
    A[1:, idx.z(0)] = np.eye(nx)
    b = np.concatenate([[0.0], x])

    # cost: sum over gain vertices l and set vertices j
    L = len(gains.K)
    s1 = V.sum(axis=0)
    M2 = V.T @ V
    C = np.zeros((n, n))

    def add_state_term(i, M):
        zi, ai = idx.z(i), idx.alpha(i)
        C[zi, zi] += r * M
        C[zi, ai] += M @ s1
        C[ai, zi] += M @ s1
        C[ai, ai] += np.sum(M * M2)

    for i in range(N):
        add_state_term(i, L * Q)
        gi, ai = idx.g(i), idx.alpha(i)
        for K in Ks:
            Ks1 = K @ s1
            C[gi, gi] += r * R
            C[gi, ai] += R * Ks1
            C[ai, gi] += R * Ks1
            C[ai, ai] += R * (K @ M2 @ K)
    for P in gains.P:
        add_state_term(N, P)
    H = 2.0 * C + RIDGE * np.eye(n)
    return LateralQp(QpProblem(0.5 * (H + H.T), np.zeros(n), G, h, A, b), counts, idx, families)


@dataclass
class TubeSolution:
    alpha: np.ndarray
    z: np.ndarray
    g: np.ndarray
    delta_cmd: float
    objective: float
    status: str
    n_constraints: int = 0
    iterations: int = 0
    counts: dict = field(default_factory=dict)
    active: dict = field(default_factory=dict)  # active inequality rows per family
    # one-step nominal prediction A(p_now) z_0 + B g_0; with alpha_0 = 0 the
    # tube constraints only require it to lie in z_1 + alpha_1 S
    x1_nominal: np.ndarray = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def solve_lateral_step(x, tube: SchedulingTube, gains: GainSchedule, S: RpiSet, Q, R, N: int,
                       model: LpvModel, vertex_rows: str = "max", tighten_w: bool = False,
                       gain_pairing: str = "matched") -> TubeSolution:
    """Solve one tube MPC problem; the applied steering is ``g_0``."""
    qp = build_lateral_qp(x, tube, gains, S, Q, R, N, model, vertex_rows, tighten_w,
                          gain_pairing)
    sol = solve_qp(qp.problem)
    d = sol.x
    alpha = d[:N + 1].copy()
    z = d[N + 1:(N + 1) * (1 + model.nx)].reshape(N + 1, model.nx).copy()
    g = d[(N + 1) * (1 + model.nx):].copy()
    delta = float(g[0]) if sol.status == OPTIMAL else float("nan")
    active = {}
    if sol.status == OPTIMAL:
        pr = qp.problem
        slack = pr.h - pr.G @ d
        hit = slack <= 1e-7 * (1.0 + np.abs(pr.h))
        for fam in ("tube", "state", "input", "terminal", "alpha_nonneg"):
            active[fam] = int(np.sum(hit & (qp.families == fam)))
    x1 = model.A(tube.p_now) @ z[0] + model.B[:, 0] * g[0]
    return TubeSolution(alpha=alpha, z=z, g=g, delta_cmd=delta, objective=sol.objective,
                        status=sol.status, n_constraints=qp.problem.n_ineq,
                        iterations=sol.iterations, counts=qp.counts, active=active,
                        x1_nominal=x1)
