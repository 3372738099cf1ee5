"""Small LMI feasibility solver.

An LMI problem is a list of symmetric blocks, each affine in a real
parameter vector ``theta``::

    F_b(theta) = F_b0 + sum_i theta_i F_bi

Feasibility of ``F_b(theta) > 0`` for all blocks is decided by maximizing
the common margin ``t`` subject to ``F_b(theta) >= t I`` with a log-barrier
method.  A norm-ball barrier ``|theta| < radius`` keeps the iterates bounded
when the feasible set is not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import warnings

import numpy as np
import scipy.linalg as sla

FEASIBILITY_MARGIN = 1e-6


@dataclass(frozen=True)
class LmiProblem:
    """Affine LMI data.

    ``blocks[b]`` is an array of shape ``(m + 1, n_b, n_b)`` holding
    ``F_b0, F_b1, ..., F_bm``.  ``names`` optionally labels the blocks.
    """

    blocks: tuple
    names: tuple = ()

    def __post_init__(self):
        blocks = tuple(np.asarray(B, dtype=float) for B in self.blocks)
        if not blocks:
            raise ValueError("LMI problem has no blocks")
        m = blocks[0].shape[0] - 1
        for k, B in enumerate(blocks):
            if B.ndim != 3 or B.shape[1] != B.shape[2]:
                raise ValueError(f"block {k} must have shape (m+1, n, n), got {B.shape}")
            if B.shape[0] != m + 1:
                raise ValueError(f"block {k} has {B.shape[0] - 1} variables, expected {m}")
            if not np.allclose(B, np.swapaxes(B, 1, 2), atol=1e-12 * max(1.0, np.abs(B).max())):
                raise ValueError(f"block {k} basis matrices are not symmetric")
        object.__setattr__(self, "blocks", blocks)
        names = tuple(self.names) or tuple(f"block{k}" for k in range(len(blocks)))
        if len(names) != len(blocks):
            raise ValueError("one name per block required")
        object.__setattr__(self, "names", names)

    @property
    def n_vars(self) -> int:
        return self.blocks[0].shape[0] - 1

    @property
    def block_sizes(self) -> List[int]:
        return [B.shape[1] for B in self.blocks]

    def evaluate(self, theta) -> List[np.ndarray]:
        theta = np.asarray(theta, dtype=float)
        return [B[0] + np.tensordot(theta, B[1:], axes=1) for B in self.blocks]

    def min_eigenvalues(self, theta) -> np.ndarray:
        return np.array([np.linalg.eigvalsh(0.5 * (F + F.T))[0] for F in self.evaluate(theta)])

    @classmethod
    def from_affine_map(cls, fn: Callable[[np.ndarray], Sequence[np.ndarray]], n_vars: int,
                        names: Sequence[str] = ()) -> "LmiProblem":
        """Build the basis matrices by probing an affine block map at unit vectors."""
        F0 = [np.asarray(F, dtype=float) for F in fn(np.zeros(n_vars))]
        stacks = [[F] for F in F0]
        for i in range(n_vars):
            e = np.zeros(n_vars)
            e[i] = 1.0
            for k, F in enumerate(fn(e)):
                stacks[k].append(np.asarray(F, dtype=float) - F0[k])
        return cls(tuple(np.stack(s) for s in stacks), tuple(names))


@dataclass
class LmiResult:
    theta: np.ndarray
    margin: float
    feasible: bool
    iterations: int
    block_min_eigenvalues: np.ndarray


def _chol(F):
    try:
        return np.linalg.cholesky(F)
    except np.linalg.LinAlgError:
        return None


def solve_lmi_feasibility(p: LmiProblem, eps: float = FEASIBILITY_MARGIN, tol: float = 1e-8,
                          radius: float = 1e4, theta0: Optional[np.ndarray] = None,
                          max_newton: int = 2000) -> LmiResult:
    """Maximize the LMI margin ``t`` with a barrier method.

    Returns the best ``theta`` found.  ``feasible`` is true when the margin,
    evaluated directly from block eigenvalues at ``theta``, is at least
    ``eps``.  The outer loop stops when the barrier duality bound drops below
    ``tol``.
    """
    m = p.n_vars
    blocks = p.blocks
    ident = [np.eye(B.shape[1]) for B in blocks]
    nu = sum(B.shape[1] for B in blocks) + 1  # barrier parameter incl. the ball

    theta = np.zeros(m) if theta0 is None else np.asarray(theta0, dtype=float).copy()
    if theta @ theta >= radius ** 2:
        raise ValueError("initial point outside the norm ball")
    t = float(p.min_eigenvalues(theta).min()) - 1.0

    def barrier(th, tt):
        if th @ th >= radius ** 2:
            return np.inf
        val = -np.log(radius ** 2 - th @ th)
        for B, I in zip(blocks, ident):
            L = _chol(B[0] + np.tensordot(th, B[1:], axes=1) - tt * I)
            if L is None:
                return np.inf
            val -= 2.0 * np.log(np.diag(L)).sum()
        return val

    def grad_hess(th, tt):
        g = np.zeros(m + 1)
        H = np.zeros((m + 1, m + 1))
        for B, I in zip(blocks, ident):
            F = B[0] + np.tensordot(th, B[1:], axes=1) - tt * I
            L = np.linalg.cholesky(F)
            nb = F.shape[0]
            basis = np.concatenate([B[1:], -I[None]], axis=0)  # (m+1, nb, nb)
            # Li F_i Li^T for every basis matrix
            T1 = sla.solve_triangular(L, basis.transpose(1, 0, 2).reshape(nb, -1), lower=True)
            T1 = T1.reshape(nb, m + 1, nb).transpose(1, 2, 0)  # (m+1, nb, nb) = (Li F_i)^T
            T2 = sla.solve_triangular(L, T1.transpose(1, 0, 2).reshape(nb, -1), lower=True)
            Gi = T2.reshape(nb, m + 1, nb).transpose(1, 0, 2)
            g -= np.trace(Gi, axis1=1, axis2=2)
            flat = Gi.reshape(m + 1, -1)
            H += flat @ flat.T
        c = radius ** 2 - th @ th
        g[:m] += 2.0 * th / c
        H[:m, :m] += 2.0 * np.eye(m) / c + 4.0 * np.outer(th, th) / c ** 2
        return g, H

    s = 1.0
    iters = 0
    u = np.concatenate([theta, [t]])
    while True:
        # centering: minimize -s*t + barrier
        for _ in range(200):
            g, H = grad_hess(u[:m], u[m])
            g[m] -= s
            try:
                # late barrier Hessians are near singular along the ball; harmless
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", sla.LinAlgWarning)
                    du = -sla.solve(H, g, assume_a="pos", check_finite=False)
            except (sla.LinAlgError, ValueError):
                du = -np.linalg.lstsq(H, g, rcond=None)[0]
            dec = -g @ du
            iters += 1
            if dec / 2 <= 1e-10 or iters >= max_newton:
                break
            f0 = -s * u[m] + barrier(u[:m], u[m])
            step = 1.0
            while step > 1e-14:
                un = u + step * du
                fn = -s * un[m] + barrier(un[:m], un[m])
                if np.isfinite(fn) and fn <= f0 - 0.25 * step * dec:
                    break
                step *= 0.5
            else:
                break
            u = un
        if nu / s < tol or iters >= max_newton:
            break
        s *= 10.0

    theta = u[:m]
    eigs = p.min_eigenvalues(theta)
    margin = float(eigs.min())
    return LmiResult(theta=theta, margin=margin, feasible=margin >= eps, iterations=iters,
                     block_min_eigenvalues=eigs)
