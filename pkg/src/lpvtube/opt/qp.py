"""Dense convex quadratic programming by a primal-dual interior-point method.

Problems have the form::

    minimize    0.5 x'Hx + f'x
    subject to  Gx <= h
                Ax  = b

The solver is a Mehrotra predictor-corrector on the standard slack
formulation.  Inequality and equality rows are scaled to unit infinity norm
and the cost is normalized before solving; results are reported in the
original scaling.  Linear programs are the special case ``H = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as sla
from scipy.linalg.lapack import dgetrs as getrs

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITER = "max_iter"

PSD_TOL = 1e-10


class KktResiduals(NamedTuple):
    stationarity: float
    primal: float
    dual: float
    complementarity: float

    def max(self) -> float:
        return max(self)


def _as_matrix(M, ncols, name):
    if M is None:
        return np.zeros((0, ncols))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return np.zeros((0, ncols))
    if M.shape[1] != ncols:
        raise ValueError(f"dimension mismatch: {name} has {M.shape[1]} columns, expected {ncols}")
    return M


def _as_vector(v, n, name):
    if v is None:
        return np.zeros(0)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.shape[0] != n:
        raise ValueError(f"dimension mismatch: {name} has length {v.shape[0]}, expected {n}")
    return v


@dataclass(frozen=True)
class QpProblem:
    """Dense QP data.  ``G``/``h`` and ``A``/``b`` may be omitted."""

    H: np.ndarray
    f: np.ndarray
    G: Optional[np.ndarray] = None
    h: Optional[np.ndarray] = None
    A: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None

    def __post_init__(self):
        f = np.asarray(self.f, dtype=float).reshape(-1)
        n = f.shape[0]
        H = np.asarray(self.H, dtype=float)
        if H.ndim == 0 and H == 0:
            H = np.zeros((n, n))
        H = np.atleast_2d(H)
        if H.shape != (n, n):
            raise ValueError(f"dimension mismatch: H is {H.shape}, f has length {n}")
        if not np.allclose(H, H.T, atol=1e-12 * max(1.0, np.abs(H).max(initial=0.0))):
            raise ValueError("indefinite cost: H is not symmetric")
        H = 0.5 * (H + H.T)
        if n and np.abs(H).max() > 0:
            lmin = np.linalg.eigvalsh(H)[0]
            if lmin < -PSD_TOL * max(1.0, np.abs(H).max()):
                raise ValueError(f"indefinite cost: min eigenvalue {lmin:.3e}")
        G = _as_matrix(self.G, n, "G")
        h = _as_vector(self.h, G.shape[0], "h")
        A = _as_matrix(self.A, n, "A")
        b = _as_vector(self.b, A.shape[0], "b")
        for name, val in zip("HfGhAb", (H, f, G, h, A, b)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.f.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.G.shape[0]

    @property
    def n_eq(self) -> int:
        return self.A.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ self.H @ x + self.f @ x)


@dataclass
class QpSolution:
    x: np.ndarray
    objective: float
    status: str
    kkt_residuals: KktResiduals
    z: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    duality_gap: float = np.nan
    # Farkas ray (z, y) with z >= 0, G'z + A'y = 0 and h'z + b'y < 0
    certificate: Optional[dict] = None

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


class _Scaled:
    """Row-scaled, cost-normalized copy of a problem."""

    def __init__(self, p: QpProblem):
        self.p = p
        gs = np.abs(p.G).max(axis=1) if p.n_ineq else np.zeros(0)
        gs[gs == 0] = 1.0
        es = np.abs(p.A).max(axis=1) if p.n_eq else np.zeros(0)
        es[es == 0] = 1.0
        self.gs, self.es = gs, es
        self.G = p.G / gs[:, None]
        self.h = p.h / gs
        self.A = p.A / es[:, None]
        self.b = p.b / es
        c = max(np.abs(p.H).max(initial=0.0), np.abs(p.f).max(initial=0.0))
        self.c = c if c > 0 else 1.0
        self.H = p.H / self.c
        self.f = p.f / self.c

    def unscale(self, x, z, y):
        # multipliers of the original problem: c * z_scaled / row_scale
        return x, self.c * z / self.gs, self.c * y / self.es


def _residuals(H, f, G, h, A, b, x, z, y):
    rd = H @ x + f + G.T @ z + A.T @ y
    slack = h - G @ x
    prim = max(np.max(-slack, initial=0.0), np.max(np.abs(A @ x - b), initial=0.0))
    dual = np.max(-z, initial=0.0)
    comp = np.max(np.abs(z * slack), initial=0.0)
    return KktResiduals(float(np.abs(rd).max(initial=0.0)), float(prim), float(dual), float(comp))


def _max_step(v, dv, w, dw):
    """Largest step in (0, 1] that keeps ``v + t dv`` and ``w + t dw`` non-negative.

    ``v`` and ``w`` must be positive.  Non-negative directions give ratios of
    order ``-v * 1e300`` that never attain the maximum below.
    """
    with np.errstate(over="ignore"):
        r = max((v / np.minimum(dv, -1e-300)).max(), (w / np.minimum(dw, -1e-300)).max())
    return min(1.0, float(-r))


_BLOCK_CACHE: dict = {}


def _row_pattern(G, min_rows):
    """Row groups of ``G`` that share a narrow column support (structure only)."""
    m, n = G.shape
    nz = G != 0
    # rows with equal support get equal keys (random weights, fixed seed)
    keys = nz @ np.random.default_rng(0).random(n)
    order = np.argsort(keys, kind="stable")
    ks = keys[order]
    starts = np.flatnonzero(np.r_[True, ks[1:] != ks[:-1]])
    ends = np.r_[starts[1:], m]
    shapes = {}
    used = np.zeros(m, dtype=bool)
    for a, b in zip(starts, ends):
        if b - a < min_rows:
            continue
        rows = np.sort(order[a:b])
        cols = np.flatnonzero(nz[rows[0]])
        if cols.size > n // 2 or np.any(nz[rows] != nz[rows[0]]):
            continue
        shapes.setdefault((rows.size, cols.size), []).append((rows, cols))
        used[rows] = True
    groups = []
    for blocks in shapes.values():
        R = np.array([r for r, _ in blocks])
        C = np.array([c for _, c in blocks])
        pos = (C[:, None, :] * n + C[:, :, None]).transpose(0, 2, 1).reshape(-1)
        groups.append((R, C, pos))
    return groups, np.flatnonzero(~used)


def _row_blocks(G, min_rows=32):
    """Group rows of ``G`` that share a narrow column support.

    Returns ``(groups, rest)``.  Each group stacks blocks of equal shape as
    ``(rows, Gsub', Gsub, pos)`` with ``pos`` the flattened positions of the
    block entries in ``G'G``; ``rest`` holds the remaining rows.  ``G'DG`` is
    then assembled from small batched products, which pays off for
    stage-structured problems such as MPC.  The grouping depends only on the
    sparsity pattern and is cached for repeated solves of one problem family.
    """
    m, n = G.shape
    if m < 2 * min_rows or n < 8:
        return [], np.arange(m)
    key = (m, n, min_rows, np.packbits(G != 0).tobytes())
    hit = _BLOCK_CACHE.get(key)
    if hit is None:
        if len(_BLOCK_CACHE) >= 16:
            _BLOCK_CACHE.clear()
        hit = _BLOCK_CACHE[key] = _row_pattern(G, min_rows)
    pattern, rest = hit
    groups = []
    for R, C, pos in pattern:
        sub = G[R[:, :, None], C[:, None, :]]
        groups.append((R, np.ascontiguousarray(sub.transpose(0, 2, 1)), sub, pos))
    return groups, rest


def _ipm(H, f, G, h, A, b, x0=None, max_iter=100, tol=1e-9):
    """Mehrotra predictor-corrector on the scaled problem.

    Returns ``(x, s, z, y, iterations, converged, diverged)``.
    """
    n, m, p = f.shape[0], G.shape[0], A.shape[0]
    reg = 1e-13

    Kx = np.zeros((n + p, n + p))
    Kx[n:, :n] = A
    Kx[:n, n:] = A.T
    diag = np.arange(n + p)
    GT = np.ascontiguousarray(G.T)
    blocks, rest = _row_blocks(G)
    if blocks:
        Gr = np.ascontiguousarray(G[rest])
        GrT = np.ascontiguousarray(Gr.T)
        pos_all = np.concatenate([g[3] for g in blocks])
    else:
        Gr, GrT = G, GT

    def factor(d):
        # the returned Kx is shared; a factorization is only used until the next call
        Phi = H + (GrT * d[rest]) @ Gr if blocks else H + (GT * d) @ G
        if blocks:
            prods = [((sT * d[R][:, None, :]) @ sub).reshape(-1) for R, sT, sub, _ in blocks]
            Phi += np.bincount(pos_all, np.concatenate(prods), minlength=n * n).reshape(n, n)
        Kx[:n, :n] = Phi
        Kr = Kx.copy()
        Kr[diag[:n], diag[:n]] += reg * max(1.0, np.abs(Phi).max(initial=0.0))
        Kr[diag[n:], diag[n:]] = -reg
        return sla.lu_factor(Kr, overwrite_a=True, check_finite=False), Kx

    def solve(fac, rx, ry):
        (lu, piv), Kx = fac
        rhs = np.concatenate([rx, ry])
        sol = getrs(lu, piv, rhs)[0]
        # iterative refinement removes the bias of the regularization
        sol = sol + getrs(lu, piv, rhs - Kx @ sol)[0]
        return sol[:n], sol[n:]

    # starting point
    lu = factor(np.ones(m))
    x, y = solve(lu, -f + GT @ h, b)
    if x0 is not None:
        x = np.asarray(x0, dtype=float).copy()
    if m == 0:
        # equality-constrained QP: a single KKT solve is exact
        return x, np.zeros(0), np.zeros(0), y, 1, True, False
    s = h - G @ x
    z = -s.copy()
    ds = max(-1.5 * s.min(), 0.0)
    dz = max(-1.5 * z.min(), 0.0)
    s = s + ds
    z = z + dz
    sz = s @ z
    if sz <= 0 or not np.isfinite(sz):
        s = np.maximum(s, 1.0)
        z = np.ones(m)
        sz = s @ z
    s = s + 0.5 * sz / max(z.sum(), 1e-300)
    z = z + 0.5 * sz / max(s.sum(), 1e-300)
    s = np.maximum(s, 1e-8)
    z = np.maximum(z, 1e-8)

    nf = 1.0 + np.abs(f).max(initial=0.0)
    nh = 1.0 + max(np.abs(h).max(initial=0.0), np.abs(b).max(initial=0.0))
    best, stall, best_pt = np.inf, 0, None
    for it in range(1, max_iter + 1):
        Hx, Gz, Ay = H @ x, GT @ z, A.T @ y
        rd = Hx + f + Gz + Ay
        rp = G @ x + s - h
        re = A @ x - b
        gap = s @ z
        pobj = 0.5 * x @ Hx + f @ x
        # stationarity relative to the size of the terms that must cancel
        nd = max(nf, np.abs(Hx).max(), np.abs(Gz).max(), np.abs(Ay).max(initial=0.0))
        merit = max(np.abs(rd).max() / nd,
                    max(np.abs(rp).max(), np.abs(re).max(initial=0.0)) / nh,
                    gap / max(1.0, abs(pobj)))
        if merit <= tol:
            return x, s, z, y, it, True, False
        # near the solution the normal equations lose accuracy and the merit
        # can stall or grow again; a stalled run returns its best iterate when
        # that meets the looser level
        if merit <= 0.9 * best:
            stall = 0
        else:
            stall += 1
        if merit < best:
            best, best_pt = merit, (x, s, z, y)
        if stall >= 3 and best <= 1e3 * tol:
            return (*best_pt, it, True, False)
        big = max(np.abs(x).max(), z.max())
        if not big <= 1e12:  # also catches nan
            return x, s, z, y, it, False, True
        mu = gap / m
        d = z / s
        lu = factor(d)

        def direction(rc):
            rhs = -rd - GT @ ((-rc + z * rp) / s)
            dx, dy = solve(lu, rhs, -re)
            dsv = -rp - G @ dx
            dzv = (-rc - z * dsv) / s
            return dx, dsv, dzv, dy

        dx_a, ds_a, dz_a, _ = direction(s * z)
        a_aff = _max_step(s, ds_a, z, dz_a)
        mu_aff = (s + a_aff * ds_a) @ (z + a_aff * dz_a) / m
        sigma = (mu_aff / mu) ** 3
        rc = s * z + ds_a * dz_a - sigma * mu
        dx, dsv, dzv, dy = direction(rc)
        alpha = 0.99 * _max_step(s, dsv, z, dzv)
        x = x + alpha * dx
        s = s + alpha * dsv
        z = z + alpha * dzv
        y = y + alpha * dy
        s = np.maximum(s, 1e-300)
        z = np.maximum(z, 1e-300)
    if best <= 1e3 * tol:
        return (*best_pt, max_iter, True, False)
    return x, s, z, y, max_iter, False, False


def _phase_one(sc: _Scaled, max_iter, tol):
    """Minimize the worst inequality violation; returns (t*, z, y) in scaled rows."""
    n, m, p = sc.f.shape[0], sc.G.shape[0], sc.A.shape[0]
    # variables (x, t);  Gx - t <= h,  -t <= 1,  Ax = b
    G1 = np.zeros((m + 1, n + 1))
    G1[:m, :n] = sc.G
    G1[:m, n] = -1.0
    G1[m, n] = -1.0
    h1 = np.concatenate([sc.h, [1.0]])
    A1 = np.hstack([sc.A, np.zeros((p, 1))])
    f1 = np.zeros(n + 1)
    f1[n] = 1.0
    x, s, z, y, it, conv, _ = _ipm(np.zeros((n + 1, n + 1)), f1, G1, h1, A1, sc.b,
                                   max_iter=max_iter, tol=tol)
    return x[n], z[:m], y, conv


def _finish(p: QpProblem, sc: _Scaled, x, z, y, status, it, certificate=None):
    x, z_o, y_o = sc.unscale(x, z, y)
    res = _residuals(sc.H, sc.f, sc.G, sc.h, sc.A, sc.b, x, z, y)
    if status == OPTIMAL:
        dual_obj = -0.5 * x @ p.H @ x - p.h @ z_o - p.b @ y_o
        gap = p.objective(x) - dual_obj
    else:
        gap = np.nan
    return QpSolution(x=x, objective=p.objective(x), status=status, kkt_residuals=res,
                      z=z_o, y=y_o, iterations=it, duality_gap=float(gap),
                      certificate=certificate)


def _farkas(sc: _Scaled, z, y):
    """Certificate in original rows, normalized so that sum(z) = 1."""
    z = np.maximum(z, 0.0)
    tot = z.sum()
    if tot <= 0:
        return None
    z, y = z / tot, y / tot
    z_o, y_o = z / sc.gs, y / sc.es
    return {
        "z": z_o,
        "y": y_o,
        "violation": float(-(sc.h @ z + sc.b @ y)),
        "residual": float(np.abs(sc.G.T @ z + sc.A.T @ y).max(initial=0.0)),
    }


def solve_qp(p: QpProblem, x0=None, max_iter: int = 100, tol: float = 1e-10) -> QpSolution:
    """Solve a convex QP.

    ``x0`` is an optional starting hint for the primal variable.  When the
    interior-point iteration does not converge, a phase-one problem decides
    between ``infeasible`` (with a Farkas certificate), ``unbounded`` (linear
    objective only) and ``max_iter``.
    """
    sc = _Scaled(p)
    if p.n == 0:
        return _finish(p, sc, np.zeros(0), np.zeros(p.n_ineq), np.zeros(p.n_eq), OPTIMAL, 0)
    x, s, z, y, it, conv, diverged = _ipm(sc.H, sc.f, sc.G, sc.h, sc.A, sc.b,
                                          x0=x0, max_iter=max_iter, tol=tol)
    if conv:
        if sc.G.shape[0] == 0 and sc.A.shape[0]:
            if np.abs(sc.A @ x - sc.b).max() > 1e-8 * (1 + np.abs(sc.b).max()):
                return _finish(p, sc, x, z, y, INFEASIBLE, it)
        return _finish(p, sc, x, z, y, OPTIMAL, it)

    t, zf, yf, pconv = _phase_one(sc, max_iter, tol)
    cert = _farkas(sc, zf, yf) if t > 1e-8 else None
    # a certificate with residual r and violation v rules out every point with
    # |x|_1 < v / r, so a strong one is accepted even if phase one stalled
    if cert is not None and cert["violation"] >= 1e-8 and (
            pconv or cert["violation"] >= 1e4 * cert["residual"]):
        return _finish(p, sc, x, z, y, INFEASIBLE, it, certificate=cert)
    if np.abs(sc.H).max(initial=0.0) == 0 and np.all(np.isfinite(x)) and np.abs(x).max() > 0:
        d = x / np.abs(x).max()
        if (sc.f @ d < -1e-9 and np.max(sc.G @ d, initial=0.0) <= 1e-6
                and np.abs(sc.A @ d).max(initial=0.0) <= 1e-6):
            return _finish(p, sc, x, z, y, UNBOUNDED, it)
    if diverged and not np.all(np.isfinite(x)):
        x = np.zeros_like(x)
    return _finish(p, sc, x, z, y, MAX_ITER, it)


def solve_lp(f, G, h, A=None, b=None, max_iter: int = 100, tol: float = 1e-10) -> QpSolution:
    """Minimize ``f'x`` subject to ``Gx <= h`` and ``Ax = b``."""
    f = np.asarray(f, dtype=float).reshape(-1)
    n = f.shape[0]
    return solve_qp(QpProblem(np.zeros((n, n)), f, G, h, A, b), max_iter=max_iter, tol=tol)
