"""One member of the explicit family of matching control laws.

A member is selected by three generator polynomials (``mu1`` in the beam angle,
``h`` and ``w`` in the characteristic coordinate ``y``), the target ball
position ``s0`` and the gains of the closed-loop dissipation. From these the
module evaluates the closed-loop metric ``ghat``, the closed-loop potential
``vhat``, their exact first derivatives, and the matching residuals that
certify the construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import GeneratorError, SingularityError
from .plant import (
    Metric2,
    PlantParams,
    State,
    alpha,
    christoffel,
    christoffel_g,
    kinetic_metric,
    kinetic_metric_grad,
    potential,
    potential_grad,
)
from .quadrature import CumulativeGrid

__all__ = [
    "S_TOL",
    "GeneratorSpec",
    "FamilySpec",
    "GeometryAt",
    "MatchingResiduals",
    "psi",
    "y_coord",
    "mu_sigma",
    "ghat_at",
    "vhat_at",
    "chat",
    "chat_jacobian",
    "matching_residuals",
    "alpha_interval",
]

S_TOL = 1e-3
_SAMPLES = 201
_AP_TOL = 1e-12  # alpha' below this counts as the linkage dead point


def _coeffs(values) -> tuple[float, ...]:
    out = tuple(float(v) for v in values)
    if not out:
        raise GeneratorError("polynomial coefficient list is empty")
    return out


@dataclass(frozen=True)
class GeneratorSpec:
    """Free data of the family. Polynomials list coefficients constant term first.

    ``chat_gains = (k1, k2)`` defines the dissipation component
    ``chat2 = k1 * s_dot + k2 * theta_dot``.
    """

    mu1: tuple[float, ...] = (2.0, 1.0)
    h: tuple[float, ...] = (1.0,)
    w: tuple[float, ...] = (0.0, 0.0, 1.0)
    s0: float = 0.5
    chat_gains: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "mu1", _coeffs(self.mu1))
        object.__setattr__(self, "h", _coeffs(self.h))
        object.__setattr__(self, "w", _coeffs(self.w))
        object.__setattr__(self, "s0", float(self.s0))
        gains = tuple(float(k) for k in self.chat_gains)
        if len(gains) != 2:
            raise GeneratorError("generator.chat_gains must have two entries")
        object.__setattr__(self, "chat_gains", gains)
        for name in ("mu1", "h", "w"):
            if not all(math.isfinite(c) for c in getattr(self, name)):
                raise GeneratorError(f"generator.{name} has non-finite coefficients")
        if not (math.isfinite(self.s0) and all(math.isfinite(k) for k in gains)):
            raise GeneratorError("generator.s0 and generator.chat_gains must be finite")

    @cached_property
    def mu1_d1(self) -> np.ndarray:
        return P.polyder(self.mu1)

    @cached_property
    def mu1_d2(self) -> np.ndarray:
        return P.polyder(self.mu1, 2)

    @cached_property
    def h_d1(self) -> np.ndarray:
        return P.polyder(self.h)

    @cached_property
    def w_d1(self) -> np.ndarray:
        return P.polyder(self.w)

    def replace(self, **changes) -> "GeneratorSpec":
        fields = dict(mu1=self.mu1, h=self.h, w=self.w, s0=self.s0, chat_gains=self.chat_gains)
        fields.update(changes)
        return GeneratorSpec(**fields)


def alpha_interval(params: PlantParams) -> tuple[float, float]:
    """Range of beam angles reachable through the linkage."""
    top = math.asin(min(params.rho, 1.0))
    return -top, top


@dataclass(frozen=True)
class FamilySpec:
    """A complete closed-loop design: plant plus generator data.

    ``ghat11_scale`` multiplies the assembled ``ghat_11`` entry. It exists only
    to corrupt a design on purpose when exercising the verification suite.
    """

    plant: PlantParams = field(default_factory=PlantParams)
    gen: GeneratorSpec = field(default_factory=GeneratorSpec)
    ghat11_scale: float = 1.0

    def __post_init__(self):
        self.validate()

    @property
    def x_eq(self) -> np.ndarray:
        return np.array([self.gen.s0, 0.0, 0.0, 0.0])

    def validate(self) -> None:
        gen, plant = self.gen, self.plant
        if not abs(gen.s0) < plant.s_max:
            raise GeneratorError(f"generator.s0={gen.s0!r} must satisfy |s0| < s_max={plant.s_max!r}")
        lo, hi = alpha_interval(plant)
        a = np.linspace(lo, hi, _SAMPLES)
        slope = P.polyval(a, gen.mu1_d1)
        if np.min(slope) <= 0:
            worst = a[np.argmin(slope)]
            raise GeneratorError(
                f"generator.mu1: derivative must be positive on alpha in [{lo:.4g}, {hi:.4g}]"
                f" (mu1'({worst:.4g}) = {np.min(slope):.4g})"
            )
        if len(gen.h) == 1:
            ok = gen.h[0] > 0
            y_lo = y_hi = 0.0
        else:
            y_lo, y_hi = self.y_interval()
            ok = np.min(P.polyval(np.linspace(y_lo, y_hi, _SAMPLES), gen.h)) > 0
        if not ok:
            raise GeneratorError(f"generator.h must be positive on y in [{y_lo:.4g}, {y_hi:.4g}]")
        if not (math.isfinite(self.ghat11_scale) and self.ghat11_scale != 0):
            raise GeneratorError("ghat11_scale must be finite and nonzero")

    def y_interval(self) -> tuple[float, float]:
        """Bounds of ``y`` over ``|s| <= s_max`` and all linkage angles (sampled)."""
        lo, hi = alpha_interval(self.plant)
        ys = []
        for a in np.linspace(lo, hi, 41):
            terms = _integrals(float(a), self.gen, with_nested=False)
            for s in (-self.plant.s_max, self.plant.s_max):
                ys.append(terms.psi * s - self.gen.s0 + terms.psi_int)
        return float(min(ys)), float(max(ys))

    def with_gen(self, **changes) -> "FamilySpec":
        return FamilySpec(self.plant, self.gen.replace(**changes), self.ghat11_scale)


@dataclass(frozen=True)
class _Integrals:
    psi: float          # psi(alpha)
    psi_int: float      # int_0^alpha psi
    c_int: float        # int_0^alpha 1 / (mu1' psi^2)
    a_int: float        # int_0^alpha sin / (mu1' psi)
    b_int: float        # int_0^alpha sin(phi) / (mu1' psi) * int_0^phi psi


def _integrals(al: float, gen: GeneratorSpec, with_nested: bool = True) -> _Integrals:
    grid = CumulativeGrid(al)
    x = grid.x
    slope = P.polyval(x, gen.mu1_d1)
    if np.min(slope) <= 0:
        raise GeneratorError(f"mu1' <= 0 on [0, {al!r}]")
    psi_x = np.exp(-5.0 * grid.cumulative(P.polyval(x, gen.mu1) / slope))
    psi_int_x = grid.cumulative(psi_x)
    weight = 1.0 / (slope * psi_x)
    c_int = grid.cumulative(weight / psi_x)[-1]
    sin_w = np.sin(x) * weight
    a_int = grid.cumulative(sin_w)[-1]
    b_int = grid.cumulative(sin_w * psi_int_x)[-1] if with_nested else math.nan
    return _Integrals(float(psi_x[-1]), float(psi_int_x[-1]), float(c_int), float(a_int), float(b_int))


@dataclass(frozen=True)
class GeometryAt:
    """Closed-loop geometry at one configuration.

    ``ghat_grad[k, i, j]`` is ``d ghat_ij / d q_k`` with ``q = (s, theta)``;
    ``lam`` is the (1,1) tensor with ``g = ghat @ lam``. ``mu`` and ``sigma``
    are ``nan`` at ``s == 0`` where they are undefined.
    """

    ghat: Metric2
    vhat: float
    dvhat: np.ndarray
    ghat_grad: np.ndarray
    lam: np.ndarray
    mu: float
    sigma: float
    psi: float
    y: float


def psi(alpha_val: float, gen: GeneratorSpec) -> float:
    """``exp(-5 int_0^alpha mu1 / mu1')``."""
    return _integrals(alpha_val, gen, with_nested=False).psi


def y_coord(s: float, theta: float, gen: GeneratorSpec, params: PlantParams) -> float:
    al, _, _ = alpha(theta, params)
    terms = _integrals(al, gen, with_nested=False)
    return terms.psi * s - gen.s0 + terms.psi_int


def mu_sigma(s: float, theta: float, gen: GeneratorSpec, params: PlantParams) -> tuple[float, float]:
    """Components of ``lambda d/ds = sigma d/ds + mu d/dtheta``."""
    al, ap, _ = alpha(theta, params)
    if s == 0 or abs(ap) < _AP_TOL:
        raise SingularityError(f"mu, sigma undefined at s={s!r}, alpha'={ap!r}")
    m = float(P.polyval(al, gen.mu1_d1))
    n = float(P.polyval(al, gen.mu1))
    return m / (5.0 * s * ap), n - m / (5.0 * s)


def _evaluate(s: float, theta: float, spec: FamilySpec) -> GeometryAt:
    gen, plant = spec.gen, spec.plant
    al, ap, app = alpha(theta, plant)
    t = _integrals(al, gen)
    n = float(P.polyval(al, gen.mu1))
    m = float(P.polyval(al, gen.mu1_d1))
    mpp = float(P.polyval(al, gen.mu1_d2))

    ps = t.psi
    ps_a = -5.0 * n / m * ps
    y = ps * s - gen.s0 + t.psi_int
    y_a = ps_a * s + ps
    h = float(P.polyval(y, gen.h))
    h1 = float(P.polyval(y, gen.h_d1))
    w = float(P.polyval(y, gen.w))
    w1 = float(P.polyval(y, gen.w_d1))

    g11 = ps * ps * (h + 10.0 * t.c_int)
    g11_s = ps ** 3 * h1
    g11_t = ap * (2.0 * ps * ps_a * (h + 10.0 * t.c_int) + ps * ps * h1 * y_a + 10.0 / m)

    # 1/s-cancelled forms of (g11 - sigma ghat11)/mu and (g12 - sigma ghat12)/mu
    q = 5.0 * s * ap / m
    q_s = 5.0 * ap / m
    q_t = 5.0 * s * (app * m - ap * ap * mpp) / (m * m)
    n_t = m * ap
    g12 = ap * g11 + q * (1.0 - n * g11)
    g12_s = ap * g11_s + q_s * (1.0 - n * g11) - q * n * g11_s
    g12_t = app * g11 + ap * g11_t + q_t * (1.0 - n * g11) - q * (n_t * g11 + n * g11_t)
    g22 = ap * g12 + q * (ap - n * g12)
    g22_s = ap * g12_s + q_s * (ap - n * g12) - q * n * g12_s
    g22_t = app * g12 + ap * g12_t + q_t * (ap - n * g12) + q * (app - n_t * g12 - n * g12_t)

    k = spec.ghat11_scale
    ghat = np.array([[k * g11, g12], [g12, g22]])
    grad = np.array([[[k * g11_s, g12_s], [g12_s, g22_s]], [[k * g11_t, g12_t], [g12_t, g22_t]]])

    sin_w = math.sin(al) / (m * ps)
    vhat = w + 5.0 * (y + gen.s0) * t.a_int - 5.0 * t.b_int
    dv_s = w1 * ps + 5.0 * ps * t.a_int
    dv_t = ap * (w1 * y_a + 5.0 * y_a * t.a_int + 5.0 * (y + gen.s0) * sin_w - 5.0 * sin_w * t.psi_int)

    det = ghat[0, 0] * ghat[1, 1] - ghat[0, 1] ** 2
    if not math.isfinite(det) or abs(det) <= 1e-14 * float(np.sum(ghat * ghat)):
        raise SingularityError(f"ghat not invertible at s={s!r}, theta={theta!r}")
    g = kinetic_metric((s, theta), plant).matrix()
    lam = np.linalg.solve(ghat, g)

    if s != 0 and abs(ap) >= _AP_TOL:
        mu, sigma = m / (5.0 * s * ap), n - m / (5.0 * s)
    else:
        mu = sigma = math.nan
    return GeometryAt(Metric2.from_matrix(ghat), vhat, np.array([dv_s, dv_t]), grad, lam, mu, sigma, ps, y)


def ghat_at(s: float, theta: float, spec: FamilySpec) -> GeometryAt:
    """Closed-loop metric, potential and their derivatives at ``(s, theta)``.

    Raises:
        SingularityError: ``ghat`` is not invertible (it degenerates on ``s = 0``).
        LinkageDomainError: ``theta`` outside the linkage domain.
    """
    return _evaluate(float(s), float(theta), spec)


def vhat_at(s: float, theta: float, spec: FamilySpec) -> tuple[float, np.ndarray]:
    geo = _evaluate(float(s), float(theta), spec)
    return geo.vhat, geo.dvhat


def chat(x: State, spec: FamilySpec) -> np.ndarray:
    """Closed-loop dissipation vector; it lies in the kernel of the projection."""
    _, ap, _ = alpha(x.theta, spec.plant)
    k1, k2 = spec.gen.chat_gains
    c2 = k1 * x.s_dot + k2 * x.theta_dot
    return np.array([-ap * c2, c2])


def chat_jacobian(theta: float, spec: FamilySpec) -> np.ndarray:
    """``d chat^i / d (s_dot, theta_dot)^j`` (constant in the velocities)."""
    _, ap, _ = alpha(theta, spec.plant)
    k1, k2 = spec.gen.chat_gains
    return np.array([[-ap * k1, -ap * k2], [k1, k2]])


@dataclass(frozen=True)
class MatchingResiduals:
    r3: float
    r4_V: float
    r5_lambda: float
    r5_lie: float

    def max(self) -> float:
        return max(self.r3, self.r4_V, self.r5_lambda, self.r5_lie)


Geometry = Callable[[float, float], GeometryAt]


def matching_residuals(
    s: float,
    theta: float,
    spec: FamilySpec,
    geometry: Optional[Geometry] = None,
    fd_step: float = 2.5e-4,
) -> MatchingResiduals:
    """Residuals of the kinetic, potential, lambda and Lie-derivative matching equations.

    The projection is ``P = (ds + alpha' dtheta) (x) d/ds``; ``d/ds`` has unit
    length, so each projected quantity is measured by its ``ds + alpha' dtheta``
    component. ``geometry`` replaces the family evaluation (used for stubs).
    """
    plant = spec.plant
    if geometry is None:
        geometry = lambda a, b: ghat_at(a, b, spec)  # noqa: E731
    _, ap, _ = alpha(theta, plant)
    q = (s, theta)
    geo = geometry(s, theta)
    g = kinetic_metric(q, plant).matrix()
    ghat = geo.ghat.matrix()
    gamma = christoffel_g(q, plant)
    gamma_hat = christoffel(ghat, geo.ghat_grad)

    diff = gamma - gamma_hat
    r3 = float(np.max(np.abs(diff[0] + ap * diff[1])))

    raised = g @ np.linalg.solve(ghat, geo.dvhat)
    r4 = abs(float(potential_grad(q, plant)[0] - raised[0]))

    # kappa = g lambda as a (0,2) tensor; W = lambda d/ds
    def kappa_w(a, b):
        gg = kinetic_metric((a, b), plant).matrix()
        geo_ab = geometry(a, b)
        lam = np.linalg.solve(geo_ab.ghat.matrix(), gg)
        return gg @ lam, lam[:, 0]

    # fourth-order central stencil
    d_kappa = np.zeros((2, 2, 2))
    d_w = np.zeros((2, 2))
    for k, unit in enumerate(((1.0, 0.0), (0.0, 1.0))):
        for mult, weight in ((-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)):
            kap, wv = kappa_w(s + mult * fd_step * unit[0], theta + mult * fd_step * unit[1])
            d_kappa[k] += weight * kap
            d_w[k] += weight * wv
    d_kappa /= 12.0 * fd_step
    d_w /= 12.0 * fd_step

    kappa = g @ geo.lam
    cov = d_kappa[:, 0, 0] - 2.0 * np.einsum("lk,l->k", gamma[:, :, 0], kappa[:, 0])
    r5_lambda = float(np.max(np.abs(cov)))

    w_vec = geo.lam[:, 0]
    # (L_W ghat)_ij = W^k d_k ghat_ij + ghat_kj d_i W^k + ghat_ik d_j W^k ; d_w[i, k] = d_i W^k
    lie = np.einsum("k,kij->ij", w_vec, geo.ghat_grad) + d_w @ ghat + (d_w @ ghat).T
    target = kinetic_metric_grad(q, plant)[0]
    r5_lie = float(np.max(np.abs(lie - target)))
    return MatchingResiduals(r3, r4, r5_lambda, r5_lie)


def plant_geometry(spec: FamilySpec) -> Geometry:
    """The trivial design ``ghat = g``, ``vhat = V``: the plant matched to itself."""

    def geometry(s, theta):
        q = (s, theta)
        return GeometryAt(
            kinetic_metric(q, spec.plant),
            potential(q, spec.plant),
            potential_grad(q, spec.plant),
            kinetic_metric_grad(q, spec.plant),
            np.eye(2),
            math.nan,
            math.nan,
            1.0,
            math.nan,
        )

    return geometry
