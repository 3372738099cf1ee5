"""Offline synthesis: vertex gains from LMIs and the robust invariant set.

The gains come from a poly-quadratic stabilization LMI solved at the two
vertices of the scheduling range.  Each block, for current vertex ``j`` and
successor vertex ``l``, is::

    [ X_j + X_j' - S_j     *                    *          *   * ]
    [ A_j X_j              S_l - B Y_l - Y_l'B'  *          *   * ]
    [ -W_j                 Z_l B' - Y_l          Z_l + Z_l'  *   * ]  > 0
    [ Q^1/2 X_j            0                     0          I   * ]
    [ R^1/2 W_j            0                     0          0   I ]

with ``K_j = W_j X_j^-1`` and ``P_j = S_j^-1``.  A congruence with
``[I 0; 0 I; 0 -B']`` reduces it to the standard slack-variable condition,
which implies ``(A_j + B K_j)' P_l (A_j + B K_j) - P_j < -(Q + K_j' R K_j)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence

import numpy as np

from .opt import LmiProblem, LmiResult, solve_lmi_feasibility
from .opt.sdp import FEASIBILITY_MARGIN
from .polytope import (HPolytope, PolytopeError, VPolytope, _PolytopeCone, affine_dimension,
                       facet_rows, remove_redundant, support_many)
from .vehicle import LpvModel

log = logging.getLogger(__name__)

RPI_TOL = 1e-8


class SynthesisError(RuntimeError):
    pass


class RpiError(RuntimeError):
    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


def _sym_sqrt(M, inverse=False):
    w, U = np.linalg.eigh(0.5 * (M + M.T))
    if np.any(w <= 0):
        raise ValueError("weight matrix must be positive definite")
    d = w ** (-0.5 if inverse else 0.5)
    return (U * d) @ U.T


# ---------------------------------------------------------------------------
# LMI gain synthesis

@dataclass
class GainSchedule:
    """Vertex gains and terminal matrices at ``p_min`` (index 0) and ``p_max``."""

    K: List[np.ndarray]
    P: List[np.ndarray]
    Q_syn: np.ndarray
    R_syn: np.ndarray
    p_min: float
    p_max: float
    lmi_margin: float = np.nan
    lmi_theta: Optional[np.ndarray] = field(default=None, repr=False)
    preconditioned: bool = True

    @property
    def K1(self):
        return self.K[0]

    @property
    def K2(self):
        return self.K[-1]

    @property
    def P1(self):
        return self.P[0]

    @property
    def P2(self):
        return self.P[-1]


class _LmiLayout:
    """Index bookkeeping for the decision vector of the lateral LMI."""

    def __init__(self, nx, nu, nv):
        self.nx, self.nu, self.nv = nx, nu, nv
        self.tri = np.triu_indices(nx)
        per_j = nx * nx + nu * nx + len(self.tri[0])
        per_l = nu * nx + nu * nu
        self.per_j, self.per_l = per_j, per_l
        self.size = nv * (per_j + per_l)

    def unpack(self, theta):
        nx, nu = self.nx, self.nu
        X, W, S, Y, Z = [], [], [], [], []
        o = 0
        for _ in range(self.nv):
            X.append(theta[o:o + nx * nx].reshape(nx, nx)); o += nx * nx
            W.append(theta[o:o + nu * nx].reshape(nu, nx)); o += nu * nx
            k = len(self.tri[0])
            Sm = np.zeros((nx, nx))
            Sm[self.tri] = theta[o:o + k]; o += k
            S.append(Sm + np.triu(Sm, 1).T)
        for _ in range(self.nv):
            Y.append(theta[o:o + nu * nx].reshape(nu, nx)); o += nu * nx
            Z.append(theta[o:o + nu * nu].reshape(nu, nu)); o += nu * nu
        return X, W, S, Y, Z


@dataclass
class LateralLmi:
    """The LMI problem together with the coordinate change used to build it."""

    problem: LmiProblem
    layout: _LmiLayout
    T: np.ndarray        # x = T x_scaled
    sigma: float         # u = sigma u_scaled
    vertex_A: list


def lateral_lmi(model: LpvModel, Q_syn, R_syn, precondition: bool = True) -> LateralLmi:
    """Assemble the vertex LMIs for ``model``.

    With ``precondition`` the states are scaled so the state weight becomes
    the identity and the input so the scaled ``B`` has unit norm.  The
    feasible set is unchanged; only the conditioning of the margin differs.
    """
    Q = np.atleast_2d(np.asarray(Q_syn, dtype=float))
    R = np.atleast_2d(np.asarray(R_syn, dtype=float))
    nx, nu = model.nx, model.nu
    Av = model.vertex_matrices()
    if precondition:
        T = _sym_sqrt(Q, inverse=True)
        Ti = np.linalg.inv(T)
        sigma = 1.0 / np.linalg.norm(Ti @ model.B, 2)
    else:
        T, Ti, sigma = np.eye(nx), np.eye(nx), 1.0
    As = [Ti @ A @ T for A in Av]
    Bs = Ti @ model.B * sigma
    Qh = _sym_sqrt(T.T @ Q @ T)
    Rh = _sym_sqrt(R * sigma ** 2)
    layout = _LmiLayout(nx, nu, len(Av))
    n = 2 * nx + 2 * nu + nx

    def blocks(theta):
        X, W, S, Y, Z = layout.unpack(theta)
        out = []
        for j in range(layout.nv):
            for l in range(layout.nv):
                M = np.zeros((n, n))
                a, b, c, d = nx, 2 * nx, 2 * nx + nu, 3 * nx + nu
                M[:a, :a] = X[j] + X[j].T - S[j]
                M[a:b, :a] = As[j] @ X[j]
                M[a:b, a:b] = S[l] - Bs @ Y[l] - Y[l].T @ Bs.T
                M[b:c, :a] = -W[j]
                M[b:c, a:b] = Z[l].T @ Bs.T - Y[l]
                M[b:c, b:c] = Z[l] + Z[l].T
                M[c:d, :a] = Qh @ X[j]
                M[c:d, c:d] = np.eye(nx)
                M[d:, :a] = Rh @ W[j]
                M[d:, d:] = np.eye(nu)
                out.append(np.tril(M) + np.tril(M, -1).T)
        for j in range(layout.nv):
            out.append(S[j])
        return out

    names = [f"vertex({j},{l})" for j in range(layout.nv) for l in range(layout.nv)]
    names += [f"S{j}" for j in range(layout.nv)]
    prob = LmiProblem.from_affine_map(blocks, layout.size, names)
    return LateralLmi(prob, layout, T, sigma, Av)


def synthesize_gains(model: LpvModel, Q_syn, R_syn, precondition: bool = True,
                     eps: float = FEASIBILITY_MARGIN) -> GainSchedule:
    """Vertex feedback gains and Lyapunov matrices from the LMI conditions."""
    Q = np.atleast_2d(np.asarray(Q_syn, dtype=float))
    R = np.atleast_2d(np.asarray(R_syn, dtype=float))
    for name, M in (("Q_syn", Q), ("R_syn", R)):
        if not np.allclose(M, M.T) or np.linalg.eigvalsh(M)[0] <= 0:
            raise ValueError(f"{name} must be symmetric positive definite")
    lmi = lateral_lmi(model, Q, R, precondition)
    # start from X = I so the first blocks are well scaled
    theta0 = np.zeros(lmi.layout.size)
    nx = model.nx
    o = 0
    for _ in range(lmi.layout.nv):
        theta0[o:o + nx * nx] = np.eye(nx).ravel()
        o += lmi.layout.per_j
    res = solve_lmi_feasibility(lmi.problem, eps=eps, theta0=theta0)
    if not res.feasible:
        raise SynthesisError(f"LMI infeasible: best margin {res.margin:.3e} < {eps:.1e}")
    X, W, S, _, _ = lmi.layout.unpack(res.theta)
    Ti = np.linalg.inv(lmi.T)
    K, P = [], []
    for j in range(lmi.layout.nv):
        if np.linalg.cond(X[j]) > 1e12:
            raise SynthesisError(f"X{j + 1} is numerically singular")
        Ks = W[j] @ np.linalg.inv(X[j])
        K.append(lmi.sigma * Ks @ Ti)
        Ps = np.linalg.inv(S[j])
        Pj = Ti.T @ Ps @ Ti
        P.append(0.5 * (Pj + Pj.T))
    return GainSchedule(K=K, P=P, Q_syn=Q, R_syn=R, p_min=model.p_min, p_max=model.p_max,
                        lmi_margin=res.margin, lmi_theta=res.theta, preconditioned=precondition)


class GainAtParam(NamedTuple):
    K: np.ndarray
    P: np.ndarray
    clamped: bool


def interpolate_gain(gains: GainSchedule, p: float) -> GainAtParam:
    """Affine interpolation of the vertex gains at scheduling value ``p``."""
    clamped = False
    if p < gains.p_min or p > gains.p_max:
        clamped = True
        p = min(max(p, gains.p_min), gains.p_max)
    span = gains.p_max - gains.p_min
    lam = (p - gains.p_min) / span if span > 0 else 0.0
    K = (1 - lam) * gains.K[0] + lam * gains.K[-1]
    P = (1 - lam) * gains.P[0] + lam * gains.P[-1]
    return GainAtParam(K, P, clamped)


def closed_loop_vertices(model: LpvModel, gains: GainSchedule) -> List[np.ndarray]:
    return [A + model.B @ K for A, K in zip(model.vertex_matrices(), gains.K)]


def lyapunov_decrease(model: LpvModel, gains: GainSchedule) -> np.ndarray:
    """Max eigenvalue of ``Acl_j' P_l Acl_j - P_j + Q + K_j' R K_j`` per pair (j, l)."""
    Acl = closed_loop_vertices(model, gains)
    nv = len(Acl)
    out = np.zeros((nv, nv))
    for j in range(nv):
        base = gains.Q_syn + gains.K[j].T @ gains.R_syn @ gains.K[j] - gains.P[j]
        for l in range(nv):
            M = Acl[j].T @ gains.P[l] @ Acl[j] + base
            out[j, l] = np.linalg.eigvalsh(0.5 * (M + M.T))[-1]
    return out


# ---------------------------------------------------------------------------
# robust positively invariant set

@dataclass
class RpiSet:
    H: HPolytope
    V: VPolytope
    iterations_used: int

    @property
    def n_vertices(self) -> int:
        return self.V.n_vertices


def _normalize_rows(G, h):
    nrm = np.linalg.norm(G, axis=1)
    return G / nrm[:, None], h / nrm, nrm


def max_rpi(closed_loops: Sequence[np.ndarray], X: HPolytope, W=None,
            max_iter: int = 500, tol: float = RPI_TOL) -> RpiSet:
    """Maximal robust positively invariant subset of ``X``.

    Iterates ``S <- S  ∩  {x : G_S Acl x <= h_S - sup_w G_S w}`` for every
    closed-loop matrix in ``closed_loops``.  Only rows that cut the current
    set are added; rows that stop supporting a facet are dropped.  ``W`` may
    be a V- or H-polytope, or ``None`` for no disturbance.
    """
    S0 = remove_redundant(X)
    G, h, _ = _normalize_rows(S0.G, S0.h)
    try:
        cone = _PolytopeCone(G, h)
        V = cone.vertices()
    except PolytopeError as exc:
        raise RpiError(f"initial constraint set: {exc}") from exc
    it = 0
    for it in range(1, max_iter + 1):
        wsup = support_many(W, G) if W is not None else np.zeros(G.shape[0])
        newG, newh = [], []
        for Acl in closed_loops:
            Gn = G @ Acl
            hn = h - wsup
            nrm = np.linalg.norm(Gn, axis=1)
            zero = nrm <= 1e-14
            if np.any(hn[zero] < 0):
                raise RpiError("no invariant set under these gains/bounds",
                               last=HPolytope(G, h))
            Gn, hn = Gn[~zero] / nrm[~zero, None], hn[~zero] / nrm[~zero]
            viol = np.max(V @ Gn.T, axis=0) - hn
            cut = viol > tol
            newG.append(Gn[cut])
            newh.append(hn[cut])
        newG = np.vstack(newG)
        newh = np.concatenate(newh)
        if newG.shape[0] == 0:
            break
        try:
            cone.insert(newG, newh)
            V = cone.vertices()
        except PolytopeError as exc:
            raise RpiError("no invariant set under these gains/bounds",
                           last=HPolytope(G, h)) from exc
        if affine_dimension(V) < X.dim:
            raise RpiError("no invariant set under these gains/bounds (set collapsed)",
                           last=HPolytope(G, h))
        G = np.vstack([G, newG])
        h = np.concatenate([h, newh])
        keep = facet_rows(HPolytope(G, h), V)
        G, h = G[keep], h[keep]
        log.debug("rpi iteration %d: %d rows, %d vertices", it, G.shape[0], V.shape[0])
    else:
        raise RpiError(f"RPI iteration did not converge in {max_iter} iterations",
                       last=HPolytope(G, h))
    H = remove_redundant(HPolytope(G, h))
    if not np.all(H.contains(np.zeros(X.dim))):
        raise RpiError("invariant set does not contain the origin", last=H)
    return RpiSet(H=H, V=VPolytope(V), iterations_used=it)


def rpi_initial_set(model: LpvModel, gains: GainSchedule) -> HPolytope:
    """State constraints intersected with ``U`` under every vertex gain."""
    rows = [model.X.G]
    rhs = [model.X.h]
    for K in gains.K:
        rows.append(model.U.G @ K)
        rhs.append(model.U.h)
    return HPolytope(np.vstack(rows), np.concatenate(rhs))


def compute_rpi(model: LpvModel, gains: GainSchedule, max_iter: int = 500,
                tol: float = RPI_TOL) -> RpiSet:
    """Robust invariant set of the gain-scheduled closed loop inside ``X``."""
    Acl = closed_loop_vertices(model, gains)
    rho = max(max(abs(np.linalg.eigvals(A))) for A in Acl)
    if rho >= 1:
        raise RpiError(f"closed-loop vertex not Schur stable (spectral radius {rho:.4f})")
    Wv = VPolytope(_box_vertices(model.W))
    return max_rpi(Acl, rpi_initial_set(model, gains), Wv, max_iter=max_iter, tol=tol)


def _box_vertices(P: HPolytope) -> np.ndarray:
    from .polytope import vertex_enumeration
    return vertex_enumeration(P).vertices


class WeightTrial(NamedTuple):
    q_scale: float
    r_value: float
    n_vertices: int       # -1 when synthesis or the RPI iteration failed
    n_facets: int
    error: str


def weight_grid_search(model: LpvModel, q_scales, r_values, max_iter: int = 500):
    """Try ``Q = q I`` and ``R = r`` pairs and report the size of the resulting set.

    Trials are sorted by vertex count, failures last.  This mirrors the
    manual tuning loop that trades set complexity against performance.
    """
    trials = []
    for q in q_scales:
        for r in r_values:
            try:
                gains = synthesize_gains(model, q * np.eye(model.nx), r)
                S = compute_rpi(model, gains, max_iter=max_iter)
                trials.append(WeightTrial(q, r, S.n_vertices, S.H.n_rows, ""))
            except (SynthesisError, RpiError) as exc:
                trials.append(WeightTrial(q, r, -1, -1, str(exc)))
    return sorted(trials, key=lambda t: (t.n_vertices < 0, t.n_vertices))


# ---------------------------------------------------------------------------
# Monte-Carlo invariance check

@dataclass
class InvarianceReport:
    n_samples: int
    violations: int
    worst_margin: float
    vertex_worst_margin: float
    counterexamples: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.violations == 0


def sample_polytope(S: RpiSet, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from ``S`` by rejection from its bounding box."""
    lo = S.V.vertices.min(axis=0)
    hi = S.V.vertices.max(axis=0)
    out = []
    got = 0
    batch = max(1000, 4 * n)
    while got < n:
        cand = rng.uniform(lo, hi, size=(batch, S.H.dim))
        acc = cand[S.H.contains(cand, tol=0.0)]
        out.append(acc)
        got += acc.shape[0]
    return np.vstack(out)[:n]


def validate_invariance(S: RpiSet, model: LpvModel, gains: GainSchedule, n_samples: int = 1000,
                        seed: int = 0, tol: float = 1e-9, max_report: int = 10) -> InvarianceReport:
    """Check ``(A(p) + B K(p)) x + w in S`` on random ``x in S``, ``p``, ``w``.

    Half of the disturbances are vertices of ``W`` and half uniform draws.
    The report also carries the exact worst case over vertex triples
    (vertex of S, vertex parameter, vertex of W).
    """
    Wv = _box_vertices(model.W)
    G, h = S.H.G, S.H.h
    # vertex check: every vertex of S, vertex params, vertex disturbances
    vmarg = np.inf
    for A in closed_loop_vertices(model, gains):
        nxt = S.V.vertices @ A.T
        lhs = nxt @ G.T
        wsup = np.max(Wv @ G.T, axis=0)
        vmarg = min(vmarg, float(np.min(h - lhs - wsup)))
    if n_samples <= 0:
        return InvarianceReport(0, 0, np.inf, vmarg)
    rng = np.random.default_rng(seed)
    x = sample_polytope(S, n_samples, rng)
    p = rng.uniform(model.p_min, model.p_max, size=n_samples)
    lo, hi = Wv.min(axis=0), Wv.max(axis=0)
    w = rng.uniform(lo, hi, size=(n_samples, model.nx))
    half = n_samples // 2
    w[:half] = Wv[rng.integers(0, Wv.shape[0], size=half)]
    span = gains.p_max - gains.p_min
    lam = (p - gains.p_min) / span if span > 0 else np.zeros_like(p)
    K = (1 - lam)[:, None] * gains.K[0] + lam[:, None] * gains.K[-1]  # (n, nx)
    u = np.sum(K * x, axis=1)
    Ax = x @ model.A0.T + p[:, None] * (x @ model.A1.T)
    nxt = Ax + u[:, None] * model.B[:, 0][None, :] + w
    marg = np.min(h[None, :] - nxt @ G.T, axis=1)
    bad = np.flatnonzero(marg < -tol)
    cex = [{"x": x[i].tolist(), "p": float(p[i]), "w": w[i].tolist(), "margin": float(marg[i])}
           for i in bad[:max_report]]
    return InvarianceReport(n_samples, int(bad.size), float(marg.min()), vmarg, cex)
