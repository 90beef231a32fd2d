"""Ball-and-beam plant: linkage, kinetic metric, potential and equations of motion.

Configuration is ``q = (s, theta)``: ball position along the beam and motor
angle. The beam angle ``alpha`` is driven by the motor through a lever linkage,
``alpha = arcsin(rho * sin(theta))``. All quantities are in the rescaled,
dimensionless units of the model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeneratorError, LinkageDomainError, SingularityError

__all__ = [
    "PlantParams",
    "State",
    "Metric2",
    "alpha",
    "kinetic_metric",
    "kinetic_metric_grad",
    "potential",
    "potential_grad",
    "kinetic_energy",
    "total_energy",
    "open_loop_rhs",
    "christoffel",
    "christoffel_g",
    "contract_christoffel",
]


@dataclass(frozen=True)
class PlantParams:
    """Dimensionless plant constants.

    Attributes:
        a3: ball/beam inertia coupling term (>= 1 keeps det g > 0)
        a4: motor and beam inertia (> 0)
        a5: gravity torque on the beam
        a6: offset length in the ball potential
        a7: viscous dissipation on the motor axis (>= 0)
        rho: linkage ratio, 0 < rho <= 1
        s_max: beam half-length; |s| > s_max means the ball left the beam
    """

    a3: float = 1.4
    a4: float = 2.0
    a5: float = 1.0
    a6: float = 0.1
    a7: float = 0.05
    rho: float = 0.25
    s_max: float = 1.0

    def __post_init__(self):
        checks = [
            ("a4", self.a4 > 0, "must be > 0"),
            ("a3", self.a3 >= 1, "must be >= 1"),
            ("a7", self.a7 >= 0, "must be >= 0"),
            ("s_max", self.s_max > 0, "must be > 0"),
            ("rho", 0 < self.rho <= 1, "must satisfy 0 < rho <= 1"),
        ]
        for name, ok, msg in checks:
            value = getattr(self, name)
            if not (math.isfinite(value) and ok):
                raise GeneratorError(f"plant.{name}={value!r} {msg}")

    def feedforward(self, s0: float) -> float:
        """Torque holding the ball at ``s0`` with the beam level."""
        return self.a5 + (self.a6 + s0) * self.rho


@dataclass(frozen=True)
class State:
    s: float
    theta: float
    s_dot: float
    theta_dot: float

    @classmethod
    def from_array(cls, x) -> "State":
        return cls(float(x[0]), float(x[1]), float(x[2]), float(x[3]))

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.theta, self.s_dot, self.theta_dot])

    @property
    def q(self) -> np.ndarray:
        return np.array([self.s, self.theta])

    @property
    def qdot(self) -> np.ndarray:
        return np.array([self.s_dot, self.theta_dot])


@dataclass(frozen=True)
class Metric2:
    """Symmetric 2x2 bilinear form stored by its three independent entries."""

    g11: float
    g12: float
    g22: float

    @classmethod
    def from_matrix(cls, m) -> "Metric2":
        return cls(float(m[0, 0]), float(0.5 * (m[0, 1] + m[1, 0])), float(m[1, 1]))

    def matrix(self) -> np.ndarray:
        return np.array([[self.g11, self.g12], [self.g12, self.g22]])

    @property
    def det(self) -> float:
        return self.g11 * self.g22 - self.g12 * self.g12

    @property
    def trace(self) -> float:
        return self.g11 + self.g22

    def is_positive_definite(self) -> bool:
        return self.g11 > 0 and self.det > 0


def alpha(theta: float, params: PlantParams) -> tuple[float, float, float]:
    """Beam angle and its first two derivatives with respect to ``theta``."""
    rho = params.rho
    st, ct = math.sin(theta), math.cos(theta)
    r = rho * st
    if abs(r) >= 1.0:
        raise LinkageDomainError(f"linkage singular at theta={theta!r} (|rho sin theta| >= 1)")
    d = 1.0 - r * r
    sd = math.sqrt(d)
    return math.asin(r), rho * ct / sd, -rho * (1.0 - rho * rho) * st / (d * sd)


def kinetic_metric(q, params: PlantParams) -> Metric2:
    s, theta = float(q[0]), float(q[1])
    _, ap, _ = alpha(theta, params)
    return Metric2(1.0, ap, params.a4 + (params.a3 + 2.5 * s * s) * ap * ap)


def kinetic_metric_grad(q, params: PlantParams) -> np.ndarray:
    """``out[k, i, j] = d g_ij / d q_k``."""
    s, theta = float(q[0]), float(q[1])
    _, ap, app = alpha(theta, params)
    out = np.zeros((2, 2, 2))
    out[0, 1, 1] = 5.0 * s * ap * ap
    out[1, 0, 1] = out[1, 1, 0] = app
    out[1, 1, 1] = 2.0 * (params.a3 + 2.5 * s * s) * ap * app
    return out


def potential(q, params: PlantParams) -> float:
    s, theta = float(q[0]), float(q[1])
    al, _, _ = alpha(theta, params)
    return params.a5 * math.sin(theta) + (s + params.a6) * math.sin(al)


def potential_grad(q, params: PlantParams) -> np.ndarray:
    s, theta = float(q[0]), float(q[1])
    al, ap, _ = alpha(theta, params)
    return np.array([math.sin(al), params.a5 * math.cos(theta) + (s + params.a6) * math.cos(al) * ap])


def kinetic_energy(x: State, params: PlantParams) -> float:
    v = x.qdot
    return 0.5 * float(v @ kinetic_metric(x.q, params).matrix() @ v)


def total_energy(x: State, params: PlantParams) -> float:
    return kinetic_energy(x, params) + potential(x.q, params)


def open_loop_rhs(x: State, u: float, params: PlantParams, det_tol: float = 1e-12) -> tuple[float, float]:
    """Accelerations ``(s_ddot, theta_ddot)`` from the two equations of motion."""
    s, th, sd, thd = x.s, x.theta, x.s_dot, x.theta_dot
    al, ap, app = alpha(th, params)
    inertia = params.a3 + 2.5 * s * s
    m11, m12, m22 = 1.0, ap, params.a4 + inertia * ap * ap
    b1 = -(app - 2.5 * s * ap * ap) * thd * thd - math.sin(al)
    b2 = (
        u
        - 5.0 * ap * ap * s * sd * thd
        - inertia * ap * app * thd * thd
        - params.a5 * math.cos(th)
        - (params.a6 + s) * math.cos(al) * ap
        - params.a7 * thd
    )
    det = m11 * m22 - m12 * m12
    if det <= det_tol:
        raise SingularityError(f"mass matrix singular at s={s!r}, theta={th!r}")
    return (b1 * m22 - m12 * b2) / det, (m11 * b2 - m12 * b1) / det


def christoffel(metric: np.ndarray, metric_grad: np.ndarray) -> np.ndarray:
    """Levi-Civita symbols ``out[k, i, j]`` from a metric and its partials.

    ``metric_grad[k, i, j]`` is ``d metric_ij / d q_k``.
    """
    # first kind: [ij, l] = 1/2 (d_i g_jl + d_j g_il - d_l g_ij)
    first = 0.5 * (
        metric_grad
        + np.transpose(metric_grad, (1, 0, 2))
        - np.transpose(metric_grad, (1, 2, 0))
    )
    return np.einsum("kl,ijl->kij", np.linalg.inv(metric), first)


def christoffel_g(q, params: PlantParams) -> np.ndarray:
    return christoffel(kinetic_metric(q, params).matrix(), kinetic_metric_grad(q, params))


def contract_christoffel(gamma: np.ndarray, v: np.ndarray) -> np.ndarray:
    """``Gamma^k_ij v^i v^j``."""
    return np.einsum("kij,i,j->k", gamma, v, v)
