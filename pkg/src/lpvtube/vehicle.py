"""Discrete-time vehicle models.

The lateral error dynamics are written in lane-relative coordinates with
state ``x = [e_y, de_y, e_psi, de_psi]`` and steering input ``delta``.  With
``p = 1/v`` the forward-Euler discretization is affine in ``p``::

    x+ = (A0 + A1 p) x + B delta + w

The longitudinal model is a double integrator in position and speed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .polytope import HPolytope


@dataclass(frozen=True)
class VehicleParams:
    C_af: float = 153000.0   # N/rad
    C_ar: float = 191000.0   # N/rad
    l_f: float = 1.3         # m
    l_r: float = 1.7         # m
    I_z: float = 5250.0      # kg m^2
    m: float = 2500.0        # kg
    lane_width: float = 10.0  # m
    vehicle_width: float = 2.0  # m
    t_s: float = 0.1         # s

    def __post_init__(self):
        for name in ("C_af", "C_ar", "l_f", "l_r", "I_z", "m", "lane_width",
                     "vehicle_width", "t_s"):
            if not getattr(self, name) > 0:
                raise ValueError(f"vehicle parameter {name} must be positive")

    @property
    def e_y_max(self) -> float:
        """Largest lateral offset that keeps the vehicle inside the lane."""
        return self.lane_width / 2 - self.vehicle_width / 2


class LateralCoefficients(NamedTuple):
    a: float
    b: float
    c: float
    d: float
    e: float
    f: float
    g: float
    h: float


def lateral_coefficients(params: VehicleParams, v: float) -> LateralCoefficients:
    """Entries of the continuous lateral error model at speed ``v``."""
    if not v > 0:
        raise ValueError(f"speed must be positive, got {v}")
    P = params
    cf, cr = 2 * P.C_af, 2 * P.C_ar
    a = -(cf + cr) / (P.m * v)
    b = (cf + cr) / P.m
    c = (-cf * P.l_f + cr * P.l_r) / (P.m * v)
    d = -(cf * P.l_f - cr * P.l_r) / (P.I_z * v)
    e = (cf * P.l_f - cr * P.l_r) / P.I_z
    f = -(cf * P.l_f ** 2 + cr * P.l_r ** 2) / (P.I_z * v)
    g = -(cf * P.l_f - cr * P.l_r) / (P.m * v) - v
    h = -(cf * P.l_f ** 2 + cr * P.l_r ** 2) / (P.I_z * v)
    return LateralCoefficients(a, b, c, d, e, f, g, h)


def continuous_lateral(params: VehicleParams, v: float):
    """Continuous-time ``(A, B, E)``; ``E`` multiplies the road yaw rate."""
    k = lateral_coefficients(params, v)
    A = np.array([[0.0, 1.0, 0.0, 0.0],
                  [0.0, k.a, k.b, k.c],
                  [0.0, 0.0, 0.0, 1.0],
                  [0.0, k.d, k.e, k.f]])
    B = np.array([[0.0], [2 * params.C_af / params.m],
                  [0.0], [2 * params.C_af * params.l_f / params.I_z]])
    E = np.array([[0.0], [k.g], [0.0], [k.h]])
    return A, B, E


@dataclass(frozen=True)
class LateralBounds:
    """Magnitude limits on the lateral state and steering."""

    e_y_max: float = 4.0
    de_y_max: float = 10.0
    e_psi_max: float = np.pi / 2
    de_psi_max: float = np.pi / (3 * 0.1)
    delta_max: float = 0.5

    def __post_init__(self):
        for name in ("e_y_max", "de_y_max", "e_psi_max", "de_psi_max", "delta_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"bound {name} must be positive")

    @property
    def state(self) -> np.ndarray:
        return np.array([self.e_y_max, self.de_y_max, self.e_psi_max, self.de_psi_max])


@dataclass(frozen=True)
class LpvModel:
    """``x+ = (A0 + A1 p) x + B u + w`` with box sets for ``p``, ``w``, ``x``, ``u``."""

    A0: np.ndarray
    A1: np.ndarray
    B: np.ndarray
    p_min: float
    p_max: float
    W: HPolytope
    X: HPolytope
    U: HPolytope
    t_s: float = 0.1

    def __post_init__(self):
        for name in ("A0", "A1", "B"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = self.A0.shape[0]
        if self.A0.shape != (n, n) or self.A1.shape != (n, n) or self.B.shape[0] != n:
            raise ValueError("inconsistent model matrix shapes")
        if not 0 < self.p_min <= self.p_max:
            raise ValueError("need 0 < p_min <= p_max")
        if not np.all(self.W.contains(np.zeros(n))):
            raise ValueError("disturbance set must contain the origin")

    @property
    def nx(self) -> int:
        return self.A0.shape[0]

    @property
    def nu(self) -> int:
        return self.B.shape[1]

    def A(self, p: float) -> np.ndarray:
        return self.A0 + self.A1 * p

    @property
    def vertex_params(self):
        # a frozen parameter (p_min == p_max) has a single vertex
        if self.p_min == self.p_max:
            return (self.p_min,)
        return (self.p_min, self.p_max)

    def vertex_matrices(self):
        return [self.A(p) for p in self.vertex_params]

    def step(self, x, u, p, w=None):
        x = np.asarray(x, dtype=float)
        xn = self.A(p) @ x + self.B @ np.atleast_1d(u)
        return xn if w is None else xn + w

    def describe(self) -> dict:
        """Plain-number description used for hashing and serialization."""
        return {
            "A0": self.A0.tolist(), "A1": self.A1.tolist(), "B": self.B.tolist(),
            "p_min": float(self.p_min), "p_max": float(self.p_max),
            "W": {"G": self.W.G.tolist(), "h": self.W.h.tolist()},
            "X": {"G": self.X.G.tolist(), "h": self.X.h.tolist()},
            "U": {"G": self.U.G.tolist(), "h": self.U.h.tolist()},
            "t_s": float(self.t_s),
        }


def build_lateral_lpv(params: VehicleParams, bounds: LateralBounds = LateralBounds(),
                      v_min: float = 15.0, v_max: float = 30.0, d_min=-1e-2,
                      d_max=1e-2) -> LpvModel:
    """Euler-discretized lateral LPV model scheduled by ``p = 1/v``.

    The lane-keeping limit on ``e_y`` is taken from ``bounds``; use
    ``params.e_y_max`` to derive it from lane and vehicle width.
    """
    if not 0 < v_min <= v_max:
        raise ValueError(f"need 0 < v_min <= v_max, got {v_min}, {v_max}")
    d_min = np.broadcast_to(np.asarray(d_min, dtype=float), (4,))
    d_max = np.broadcast_to(np.asarray(d_max, dtype=float), (4,))
    if np.any(d_min > d_max):
        raise ValueError("d_min exceeds d_max")
    ts = params.t_s
    # A(v) = A_const + A_inv / v, split by evaluating at two speeds
    Ac1, Bc, _ = continuous_lateral(params, 1.0)
    Ac2, _, _ = continuous_lateral(params, 2.0)
    A_inv = 2.0 * (Ac1 - Ac2)
    A_const = Ac1 - A_inv
    A0 = np.eye(4) + ts * A_const
    A1 = ts * A_inv
    B = ts * Bc
    return LpvModel(
        A0=A0, A1=A1, B=B, p_min=1.0 / v_max, p_max=1.0 / v_min,
        W=HPolytope.from_box(d_min, d_max),
        X=HPolytope.from_symmetric_bounds(bounds.state),
        U=HPolytope.from_symmetric_bounds([bounds.delta_max]),
        t_s=ts,
    )


@dataclass(frozen=True)
class LongitudinalModel:
    t_s: float = 0.1
    v_min: float = 15.0
    v_max: float = 30.0
    a_min: float = -6.0
    a_max: float = 2.0

    def __post_init__(self):
        if not self.t_s > 0:
            raise ValueError("t_s must be positive")
        if not self.v_min < self.v_max:
            raise ValueError("v_min must be below v_max")
        if not self.a_min < 0 < self.a_max:
            raise ValueError("need a_min < 0 < a_max")

    @property
    def Ad(self) -> np.ndarray:
        return np.array([[1.0, self.t_s], [0.0, 1.0]])

    @property
    def Bd(self) -> np.ndarray:
        return np.array([[0.0], [self.t_s]])

    def step(self, s, v, a):
        return s + self.t_s * v, v + self.t_s * a


def build_longitudinal(params: VehicleParams, v_min=15.0, v_max=30.0, a_min=-6.0,
                       a_max=2.0) -> LongitudinalModel:
    return LongitudinalModel(t_s=params.t_s, v_min=v_min, v_max=v_max, a_min=a_min, a_max=a_max)
