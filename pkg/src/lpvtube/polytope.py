"""Convex polytopes in halfspace (H) and vertex (V) form.

Vertex enumeration uses the double-description method on the homogenized
cone ``{(x, lam) : Gx - h lam <= 0, lam >= 0}``.  Halfspace conversion runs
the same enumeration on the polar set about the centroid.  All polytope
objects are immutable.
"""

from __future__ import annotations

from typing import Iterable, Optional, Union

import numpy as np
import scipy.linalg as sla

from .opt import INFEASIBLE, OPTIMAL, UNBOUNDED, solve_lp

MEMBERSHIP_TOL = 1e-9
DEDUP_TOL = 1e-7  # relative to the polytope diameter
_ZERO_TOL = 1e-10


class PolytopeError(ValueError):
    pass


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


class HPolytope:
    """The set ``{x : Gx <= h}``."""

    __slots__ = ("G", "h")

    def __init__(self, G, h):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        h = np.asarray(h, dtype=float).reshape(-1)
        if G.shape[0] != h.shape[0]:
            raise ValueError(f"G has {G.shape[0]} rows but h has length {h.shape[0]}")
        if G.shape[1] < 1:
            raise ValueError("dimension must be positive")
        object.__setattr__(self, "G", _frozen(G))
        object.__setattr__(self, "h", _frozen(h))

    def __setattr__(self, name, value):
        raise AttributeError("HPolytope is immutable")

    def __reduce__(self):
        return (HPolytope, (self.G, self.h))

    def __repr__(self):
        return f"HPolytope(dim={self.dim}, rows={self.n_rows})"

    @property
    def dim(self) -> int:
        return self.G.shape[1]

    @property
    def n_rows(self) -> int:
        return self.G.shape[0]

    @classmethod
    def from_box(cls, lb, ub) -> "HPolytope":
        lb = np.asarray(lb, dtype=float).reshape(-1)
        ub = np.asarray(ub, dtype=float).reshape(-1)
        if lb.shape != ub.shape:
            raise ValueError("box bounds differ in length")
        if np.any(lb > ub):
            raise ValueError("lower bound above upper bound")
        n = lb.shape[0]
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([ub, -lb]))

    @classmethod
    def from_symmetric_bounds(cls, bound) -> "HPolytope":
        """``{x : |x_i| <= bound_i}`` with ``G = [I, -I]'``."""
        bound = np.asarray(bound, dtype=float).reshape(-1)
        return cls.from_box(-bound, bound)

    def normalized(self) -> "HPolytope":
        """Rows scaled to unit Euclidean norm."""
        nrm = np.linalg.norm(self.G, axis=1)
        nrm[nrm == 0] = 1.0
        return HPolytope(self.G / nrm[:, None], self.h / nrm)

    def intersect(self, other: "HPolytope") -> "HPolytope":
        if other.dim != self.dim:
            raise ValueError("dimension mismatch")
        return HPolytope(np.vstack([self.G, other.G]), np.concatenate([self.h, other.h]))

    def contains(self, x, tol: float = MEMBERSHIP_TOL):
        """Membership of one point (1-D input) or of each row of a 2-D array."""
        x = np.asarray(x, dtype=float)
        viol = (x @ self.G.T if x.ndim > 1 else self.G @ x) - self.h
        return np.all(viol <= tol, axis=-1)

    def margin(self, x) -> np.ndarray:
        """Smallest slack ``min_k (h_k - G_k x)``; negative outside."""
        x = np.asarray(x, dtype=float)
        return np.min(self.h - (x @ self.G.T if x.ndim > 1 else self.G @ x), axis=-1)


class VPolytope:
    """The convex hull of a finite point set."""

    __slots__ = ("vertices",)

    def __init__(self, vertices):
        V = np.atleast_2d(np.asarray(vertices, dtype=float))
        if V.size == 0 or V.shape[0] == 0:
            raise ValueError("VPolytope needs at least one vertex")
        object.__setattr__(self, "vertices", _frozen(V))

    def __setattr__(self, name, value):
        raise AttributeError("VPolytope is immutable")

    def __reduce__(self):
        return (VPolytope, (self.vertices,))

    def __repr__(self):
        return f"VPolytope(dim={self.dim}, vertices={self.n_vertices})"

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    def reduced(self) -> "VPolytope":
        """Copy with duplicate and non-extreme points removed."""
        return VPolytope(extreme_points(self.vertices))


Polytope = Union[HPolytope, VPolytope]


# ---------------------------------------------------------------------------
# helpers

def _diameter(P) -> float:
    P = np.asarray(P)
    if P.shape[0] < 2:
        return 1.0
    return max(float(np.ptp(P, axis=0).max()), 1e-300)


def _dedup(P, tol=DEDUP_TOL):
    P = np.asarray(P, dtype=float)
    if P.shape[0] < 2:
        return P
    eps = tol * max(_diameter(P), 1.0)
    order = np.lexsort(P.T[::-1])
    P = P[order]
    keep = [0]
    for i in range(1, P.shape[0]):
        if np.all(np.abs(P[keep] - P[i]).max(axis=1) > eps):
            keep.append(i)
    return P[keep]


def affine_dimension(P, tol: float = 1e-9) -> int:
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[0] <= 1:
        return 0
    D = P - P.mean(axis=0)
    sv = np.linalg.svd(D, compute_uv=False)
    if sv[0] == 0:
        return 0
    return int(np.sum(sv > tol * max(1.0, sv[0])))


def _lex_order(M):
    return np.lexsort(np.round(M, 12).T[::-1])


# ---------------------------------------------------------------------------
# double description

class _DoubleDescription:
    """Extreme rays of ``{y : C y <= 0}`` maintained under row insertion.

    Zero sets are tracked combinatorially: a new ray built from an adjacent
    pair inherits the intersection of the pair's zero sets.
    """

    def __init__(self, C, tol=_ZERO_TOL):
        C = np.asarray(C, dtype=float)
        self.tol = tol
        self.n = C.shape[1]
        nrm = np.linalg.norm(C, axis=1)
        C = C[nrm > 0] / nrm[nrm > 0][:, None]
        C = C[_lex_order(C)]
        # a well-conditioned initial basis (pivoted QR) keeps the first rays
        # accurate; every later ray is built from them
        _, Rq, piv = sla.qr(C.T, mode="economic", pivoting=True)
        k = min(self.n, C.shape[0])
        if k < self.n or abs(Rq[k - 1, k - 1]) <= 1e-9 * abs(Rq[0, 0]):
            raise PolytopeError("cone is not pointed")
        basis = sorted(piv[:self.n].tolist())
        rest = sorted(piv[self.n:].tolist())
        self.rows = C[basis]
        R = -np.linalg.inv(self.rows).T  # ray k is column k of -inv(rows)
        self.rays = R / np.linalg.norm(R, axis=1)[:, None]
        self.zero = ~np.eye(self.n, dtype=bool)
        self.insert(C[rest])

    def insert(self, rows):
        rows = np.atleast_2d(np.asarray(rows, dtype=float))
        if rows.size == 0:
            return
        nrm = np.linalg.norm(rows, axis=1)
        rows = rows[nrm > 0] / nrm[nrm > 0][:, None]
        for a in rows[_lex_order(rows)]:
            self._insert_one(a)

    def _insert_one(self, a):
        k = self.rays.shape[0]
        vals = self.rays @ a if k else np.zeros(0)
        plus = np.flatnonzero(vals > self.tol)
        minus = np.flatnonzero(vals < -self.tol)
        zero = np.flatnonzero(np.abs(vals) <= self.tol)
        new_rays, new_zero = [], []
        if plus.size and minus.size:
            Zp = self.zero[plus]
            Zm = self.zero[minus]
            common = Zp[:, None, :] & Zm[None, :, :]  # (|+|, |-|, m)
            cnt = common.sum(axis=2)
            ii, jj = np.nonzero(cnt >= self.n - 2)
            if ii.size:
                cm = common[ii, jj]
                # rays whose zero set contains the pair's common zero set
                missing = cm.astype(np.float64) @ (~self.zero).astype(np.float64).T
                contained = (missing == 0).sum(axis=1)
                adj = contained == 2
                for i, j, c in zip(plus[ii[adj]], minus[jj[adj]], cm[adj]):
                    r = vals[i] * self.rays[j] - vals[j] * self.rays[i]
                    size = np.linalg.norm(r)
                    if size < 1e-6 * (vals[i] - vals[j]):
                        # nearly parallel pair: the combination cancels, so
                        # take the ray from its defining rows instead
                        r = self._ray_from_rows(np.vstack([self.rows[c], a]), r)
                        if r is None:
                            continue
                    else:
                        r /= size
                    new_rays.append(r)
                    new_zero.append(c)
        keep = np.concatenate([minus, zero]).astype(int)
        keep.sort()
        rays = self.rays[keep]
        Z = self.zero[keep]
        zcol = np.zeros((Z.shape[0], 1), dtype=bool)
        zcol[np.isin(keep, zero), 0] = True
        Z = np.hstack([Z, zcol])
        if new_rays:
            R = np.array(new_rays)
            nz = np.hstack([np.vstack(new_zero), np.ones((R.shape[0], 1), dtype=bool)])
            # on degenerate input a new ray can lie on further hyperplanes
            # than its parents share; those zeros are found numerically
            nz[:, :-1] |= np.abs(R @ self.rows.T) <= self.tol
            R, nz = self._distinct(R, nz, rays)
            rays = np.vstack([rays, R])
            Z = np.vstack([Z, nz])
        self.rays = rays if rays.size else np.zeros((0, self.n))
        self.zero = Z if Z.size else np.zeros((0, self.rows.shape[0] + 1), dtype=bool)
        self.rows = np.vstack([self.rows, a])


    @staticmethod
    def _distinct(R, nz, kept, tol=1e-9):
        """Drop new rays that repeat a kept ray or an earlier new ray."""
        ok = np.ones(R.shape[0], dtype=bool)
        if kept.shape[0]:
            ok &= np.abs(R[:, None, :] - kept[None, :, :]).max(axis=2).min(axis=1) > tol
        if R.shape[0] > 1:
            d = np.abs(R[:, None, :] - R[None, :, :]).max(axis=2)
            ok &= ~np.any(np.tril(d <= tol, -1), axis=1)
        return R[ok], nz[ok]

    @staticmethod
    def _ray_from_rows(A, hint):
        """Unit vector spanning the null space of ``A`` (rank n - 1)."""
        _, sv, Vt = np.linalg.svd(A)
        n = A.shape[1]
        if sv.shape[0] < n - 1 or sv[n - 2] <= 1e-9 * sv[0]:
            return None
        r = Vt[n - 1]
        return -r if r @ hint < 0 else r


class _PolytopeCone:
    """Homogenized polytope ``Gx <= h`` for incremental vertex enumeration."""

    def __init__(self, G, h):
        G = np.asarray(G, dtype=float)
        h = np.asarray(h, dtype=float)
        self.dim = G.shape[1]
        C = np.vstack([np.hstack([G, -h[:, None]]), np.r_[np.zeros(self.dim), -1.0]])
        self.dd = _DoubleDescription(C)

    def insert(self, G, h):
        G = np.atleast_2d(np.asarray(G, dtype=float))
        h = np.asarray(h, dtype=float).reshape(-1)
        self.dd.insert(np.hstack([G, -h[:, None]]))

    def vertices(self) -> np.ndarray:
        R = self.dd.rays
        if R.shape[0] == 0:
            raise PolytopeError("empty polytope")
        lam = R[:, -1]
        fin = lam > 1e-9
        if not np.any(fin):
            raise PolytopeError("empty polytope")
        if np.any(~fin):
            raise PolytopeError("unbounded polytope")
        return _dedup(R[fin, :-1] / lam[fin, None])


def _check_nonempty_bounded(P: HPolytope):
    G, h = P.G, P.h
    sol = solve_lp(np.zeros(P.dim), G, h)
    if sol.status == INFEASIBLE:
        raise PolytopeError("empty polytope")
    if np.linalg.matrix_rank(G) < P.dim:
        raise PolytopeError("unbounded polytope")


def vertex_enumeration(P: HPolytope) -> VPolytope:
    """Vertices of a bounded, nonempty, full-dimensional H-polytope."""
    try:
        cone = _PolytopeCone(P.G, P.h)
    except PolytopeError:
        _check_nonempty_bounded(P)
        raise
    V = _polish(P, cone.vertices())
    k = affine_dimension(V)
    if k < P.dim:
        raise PolytopeError(f"lower-dimensional polytope (affine dimension {k})")
    return VPolytope(V)


def _polish(P: HPolytope, V, tol=1e-8):
    """Re-solve each vertex from its active rows.

    Rays accumulate rounding error along the insertion order; solving the
    active system directly brings vertices that share a facet back onto a
    common hyperplane to working precision, which later hull computations
    on these points rely on.
    """
    nrm = np.linalg.norm(P.G, axis=1)
    G, h = P.G / nrm[:, None], P.h / nrm
    out = V.copy()
    slack = h[None, :] - V @ G.T
    scale = tol * max(1.0, float(np.abs(V).max()))
    for i in range(V.shape[0]):
        act = slack[i] <= scale
        if act.sum() < P.dim:
            continue
        x, _, rank, _ = np.linalg.lstsq(G[act], h[act], rcond=None)
        if rank == P.dim and np.abs(x - V[i]).max() <= 1e3 * scale:
            out[i] = x
    return out


def _facets(points):
    """Facet normals/offsets of a full-dimensional point cloud via polar DD."""
    P = np.asarray(points, dtype=float)
    c = P.mean(axis=0)
    D = P - c
    scale = _diameter(P)
    cone = _PolytopeCone(D / scale, np.ones(P.shape[0]))
    Y = cone.vertices()
    # facet k: Y_k (x - c)/scale <= 1
    G = Y / scale
    h = 1.0 + G @ c
    nrm = np.linalg.norm(G, axis=1)
    return G / nrm[:, None], h / nrm


def halfspace_conversion(V: VPolytope) -> HPolytope:
    """Irredundant H-representation of the convex hull of ``V.vertices``."""
    P = _dedup(V.vertices)
    k = affine_dimension(P)
    if k < V.dim:
        raise PolytopeError(f"degenerate hull: affine dimension {k} < {V.dim}")
    G, h = _facets(P)
    order = _lex_order(np.hstack([G, h[:, None]]))
    return HPolytope(G[order], h[order])


def extreme_points(points) -> np.ndarray:
    """The extreme points of a finite set, in input order."""
    P = _dedup(points)
    n, d = P.shape
    if n == 1:
        return P
    k = affine_dimension(P)
    c = P.mean(axis=0)
    if k < d:
        # work in coordinates of the affine hull
        U, sv, Vt = np.linalg.svd(P - c, full_matrices=False)
        basis = Vt[:k]
        Q = (P - c) @ basis.T
        if k == 0:
            return P[:1]
        sel = _extreme_idx(Q)
        return P[sel]
    return P[_extreme_idx(P)]


def _extreme_idx(P):
    n, d = P.shape
    if d == 1:
        return np.unique([int(np.argmin(P[:, 0])), int(np.argmax(P[:, 0]))])
    G, h = _facets(P)
    slack = h[None, :] - P @ G.T
    tol = DEDUP_TOL * max(1.0, _diameter(P))
    idx = []
    for i in range(n):
        act = G[slack[i] <= tol]
        if act.shape[0] >= d and np.linalg.matrix_rank(act, tol=1e-7) == d:
            idx.append(i)
    return np.array(idx, dtype=int)


def affine_image(P: VPolytope, M, t=None) -> VPolytope:
    """Image ``{Mx + t : x in P}``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.shape[1] != P.dim:
        raise ValueError(f"dimension mismatch: map has {M.shape[1]} columns, polytope dim {P.dim}")
    t = np.zeros(M.shape[0]) if t is None else np.asarray(t, dtype=float).reshape(-1)
    if t.shape[0] != M.shape[0]:
        raise ValueError("dimension mismatch: offset length")
    return VPolytope(extreme_points(P.vertices @ M.T + t))


def minkowski_sum(P: VPolytope, Q: VPolytope) -> VPolytope:
    if P.dim != Q.dim:
        raise ValueError(f"dimension mismatch: {P.dim} vs {Q.dim}")
    S = (P.vertices[:, None, :] + Q.vertices[None, :, :]).reshape(-1, P.dim)
    return VPolytope(extreme_points(S))


def support(P: Polytope, d) -> float:
    """``max_{x in P} d'x``."""
    d = np.asarray(d, dtype=float).reshape(-1)
    if d.shape[0] != P.dim:
        raise ValueError("dimension mismatch")
    if isinstance(P, VPolytope):
        return float(np.max(P.vertices @ d))
    sol = solve_lp(-d, P.G, P.h)
    if sol.status == UNBOUNDED:
        raise PolytopeError("unbounded in direction d")
    if sol.status == INFEASIBLE:
        raise PolytopeError("empty polytope")
    if sol.status != OPTIMAL:
        raise PolytopeError(f"support LP failed: {sol.status}")
    return -sol.objective


def support_many(P: Polytope, D) -> np.ndarray:
    """Support function for each row of ``D``."""
    D = np.atleast_2d(np.asarray(D, dtype=float))
    if isinstance(P, VPolytope):
        return np.max(D @ P.vertices.T, axis=1)
    return np.array([support(P, d) for d in D])


def remove_redundant(P: HPolytope, tol: float = MEMBERSHIP_TOL) -> HPolytope:
    """Drop rows that do not change the set, one LP per candidate row.

    Rows are normalized and exact duplicates removed first.  Row ``i`` is
    redundant when ``max G_i x`` over the remaining rows (with ``G_i x`` capped
    at ``h_i + 1``) does not exceed ``h_i + tol``.
    """
    N = P.normalized()
    G, h = N.G, N.h
    sol = solve_lp(np.zeros(P.dim), G, h)
    if sol.status == INFEASIBLE:
        raise PolytopeError("empty polytope")
    key = np.round(np.hstack([G, h[:, None]]), 12)
    _, first = np.unique(key, axis=0, return_index=True)
    keep = np.zeros(G.shape[0], dtype=bool)
    keep[np.sort(first)] = True
    for i in range(G.shape[0]):
        if not keep[i]:
            continue
        keep[i] = False
        Gi = np.vstack([G[keep], G[i]])
        hi = np.concatenate([h[keep], [h[i] + 1.0]])
        lp = solve_lp(-G[i], Gi, hi)
        if lp.status == INFEASIBLE:
            raise PolytopeError("empty polytope")
        if lp.status != OPTIMAL or -lp.objective > h[i] + tol:
            keep[i] = True
    return HPolytope(G[keep], h[keep])


def facet_rows(P: HPolytope, V: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Mask of rows of ``P`` that support a facet, judged from its vertex set."""
    N = P.normalized()
    V = np.asarray(V, dtype=float)
    slack = N.h[:, None] - N.G @ V.T
    eps = tol * max(1.0, _diameter(V))
    d = P.dim
    mask = np.zeros(P.n_rows, dtype=bool)
    for k in range(P.n_rows):
        act = V[slack[k] <= eps]
        if act.shape[0] >= d and affine_dimension(act, tol=1e-7) == d - 1:
            mask[k] = True
    # keep one copy of duplicated facets
    key = np.round(np.hstack([N.G, N.h[:, None]]), 9)
    seen = set()
    for k in np.flatnonzero(mask):
        kk = key[k].tobytes()
        if kk in seen:
            mask[k] = False
        seen.add(kk)
    return mask


def contains_polytope(outer: HPolytope, inner: Union[VPolytope, np.ndarray],
                      tol: float = 1e-8) -> bool:
    V = inner.vertices if isinstance(inner, VPolytope) else np.asarray(inner)
    return bool(np.all(outer.contains(V, tol=tol)))


def bounding_box(P: Polytope):
    if isinstance(P, VPolytope):
        return P.vertices.min(axis=0), P.vertices.max(axis=0)
    I = np.eye(P.dim)
    ub = support_many(P, I)
    lb = -support_many(P, -I)
    return lb, ub
