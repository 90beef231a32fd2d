"""Closed-loop control input ``u = u_g + u_V + u_c`` for a family member."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .family import FamilySpec, GeometryAt, chat, ghat_at
from .plant import (
    State,
    christoffel,
    christoffel_g,
    contract_christoffel,
    kinetic_metric,
    potential_grad,
)

__all__ = ["ControlBreakdown", "LinearGains", "christoffel_ghat", "control", "target_accel"]


@dataclass(frozen=True)
class ControlBreakdown:
    u_g: float
    u_V: float
    u_c: float
    u_total: float

    @classmethod
    def of(cls, u_g: float, u_V: float, u_c: float) -> "ControlBreakdown":
        return cls(u_g, u_V, u_c, u_g + u_V + u_c)

    @classmethod
    def total_only(cls, u: float) -> "ControlBreakdown":
        """For laws outside the family, where the split is undefined."""
        nan = float("nan")
        return cls(nan, nan, nan, float(u))


def christoffel_ghat(s: float, theta: float, spec: FamilySpec, geo: GeometryAt | None = None) -> np.ndarray:
    """Levi-Civita symbols of ``ghat``, ``out[k, i, j]``."""
    if geo is None:
        geo = ghat_at(s, theta, spec)
    return christoffel(geo.ghat.matrix(), geo.ghat_grad)


def control(x: State, spec: FamilySpec) -> ControlBreakdown:
    """Matching control torque at state ``x``.

    Each part is the ``theta`` component of a covector lowered with ``g``:
    the connection difference on the velocity, the potential mismatch, and the
    dissipation mismatch.
    """
    q, v = x.q, x.qdot
    geo = ghat_at(x.s, x.theta, spec)
    g = kinetic_metric(q, spec.plant).matrix()
    ghat = geo.ghat.matrix()

    accel_gap = contract_christoffel(christoffel_g(q, spec.plant), v) - contract_christoffel(
        christoffel(ghat, geo.ghat_grad), v
    )
    u_g = float((g @ accel_gap)[1])
    u_V = float(potential_grad(q, spec.plant)[1] - (g @ np.linalg.solve(ghat, geo.dvhat))[1])
    u_c = float(spec.plant.a7 * x.theta_dot - (g @ chat(x, spec))[1])
    return ControlBreakdown.of(u_g, u_V, u_c)


def target_accel(x: State, spec: FamilySpec) -> np.ndarray:
    """Accelerations of the target closed loop ``-Gammahat(v, v) - chat(v) - ghat^{-1} dVhat``."""
    geo = ghat_at(x.s, x.theta, spec)
    ghat = geo.ghat.matrix()
    return (
        -contract_christoffel(christoffel(ghat, geo.ghat_grad), x.qdot)
        - chat(x, spec)
        - np.linalg.solve(ghat, geo.dvhat)
    )


@dataclass(frozen=True)
class LinearGains:
    """``u_lin = a8 + Kbp (s - s0) + Kap theta + Kbd s_dot + Kad theta_dot``."""

    a8: float
    Kbp: float
    Kap: float
    Kbd: float
    Kad: float

    def __post_init__(self):
        if not all(np.isfinite(self.as_array())):
            raise ValueError(f"non-finite linear gains: {self}")

    def feedback(self) -> np.ndarray:
        return np.array([self.Kbp, self.Kap, self.Kbd, self.Kad])

    def as_array(self) -> np.ndarray:
        return np.array([self.a8, self.Kbp, self.Kap, self.Kbd, self.Kad])

    def __call__(self, x: State, s0: float) -> float:
        return self.a8 + float(self.feedback() @ (x.as_array() - np.array([s0, 0.0, 0.0, 0.0])))
