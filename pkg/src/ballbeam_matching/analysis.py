"""Local stability tests, linearization, gain fitting and basin sampling."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .controller import LinearGains
from .errors import FitError, GeneratorError, NonEquilibriumError, SingularityError
from .family import FamilySpec, chat_jacobian, ghat_at
from .plant import State, kinetic_metric, open_loop_rhs
from .sim import NONLINEAR, Law, SimConfig, Termination, closed_loop_field, law_function, simulate

__all__ = [
    "LinearGains",
    "StabilityReport",
    "LinearizationResult",
    "BasinOutcome",
    "BasinResult",
    "stability_conditions",
    "linearize",
    "open_loop_linearization",
    "fit_linear_gains",
    "fit_initial_guess",
    "basin_estimate",
]

EQUILIBRIUM_TOL = 1e-8
_FD_STEP = 2e-4
# A value counts as positive only above roundoff relative to the matrix size:
# det > POSITIVITY_RTOL * |M|^2 and trace > POSITIVITY_RTOL * |M|.
POSITIVITY_RTOL = 1e-10


def _fd_jacobian(fun, x0: np.ndarray, step: float = _FD_STEP) -> np.ndarray:
    """Fourth-order central differences; columns are partials along each coordinate."""
    x0 = np.asarray(x0, dtype=float)
    cols = []
    for i in range(len(x0)):
        h = step * max(1.0, abs(x0[i]))
        e = np.zeros_like(x0)
        e[i] = h
        cols.append((fun(x0 - 2 * e) - 8 * fun(x0 - e) + 8 * fun(x0 + e) - fun(x0 + 2 * e)) / (12 * h))
    return np.column_stack(cols)


def _det_tr(m: np.ndarray) -> tuple[float, float]:
    return float(np.linalg.det(m)), float(np.trace(m))


@dataclass(frozen=True)
class StabilityReport:
    """Sufficient conditions for local asymptotic stability via the closed-loop energy.

    Matrices are evaluated at the equilibrium in ``(s, theta)`` coordinates;
    ``d2vhat`` is the raw finite-difference Hessian (determinant and trace are
    taken of its symmetric part).
    """

    ghat: np.ndarray
    ghat_chat: np.ndarray
    d2vhat: np.ndarray
    singular: bool = False

    @property
    def values(self) -> dict[str, float]:
        d2 = 0.5 * (self.d2vhat + self.d2vhat.T)
        det_g, tr_g = _det_tr(self.ghat)
        det_c, tr_c = _det_tr(self.ghat_chat)
        det_v, tr_v = _det_tr(d2)
        return {
            "det_ghat": det_g,
            "tr_ghat": tr_g,
            "det_ghat_chat": det_c,
            "tr_ghat_chat": tr_c,
            "det_d2vhat": det_v,
            "tr_d2vhat": tr_v,
        }

    @property
    def tests(self) -> dict[str, bool]:
        out = {}
        values = self.values
        for key, m in (("ghat", self.ghat), ("ghat_chat", self.ghat_chat), ("d2vhat", self.d2vhat)):
            scale = float(np.max(np.abs(m))) if np.all(np.isfinite(m)) else math.nan
            out[f"det_{key}"] = bool(values[f"det_{key}"] > POSITIVITY_RTOL * scale * scale)
            out[f"tr_{key}"] = bool(values[f"tr_{key}"] > POSITIVITY_RTOL * scale)
        return {k: out[k] for k in values}

    @property
    def overall(self) -> bool:
        return not self.singular and all(self.tests.values())

    def to_text(self) -> str:
        lines = ["[stability]"]
        for key, value in self.values.items():
            lines.append(f"{key} = {value:.17g}")
            lines.append(f"{key}_positive = {str(self.tests[key]).lower()}")
        lines.append(f"singular = {str(self.singular).lower()}")
        lines.append(f"overall = {str(self.overall).lower()}")
        for name in ("ghat", "ghat_chat", "d2vhat"):
            m = getattr(self, name)
            lines.append(f"{name} = [[{m[0, 0]:.17g}, {m[0, 1]:.17g}], [{m[1, 0]:.17g}, {m[1, 1]:.17g}]]")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = ["condition,value,positive"]
        rows += [f"{k},{v:.17g},{str(self.tests[k]).lower()}" for k, v in self.values.items()]
        return "\n".join(rows) + "\n"


def stability_conditions(spec: FamilySpec, hessian_step: float = 1e-4) -> StabilityReport:
    s0 = spec.gen.s0
    try:
        geo = ghat_at(s0, 0.0, spec)
        cols = []
        for e in ((hessian_step, 0.0), (0.0, hessian_step)):
            plus = ghat_at(s0 + e[0], e[1], spec).dvhat
            minus = ghat_at(s0 - e[0], -e[1], spec).dvhat
            cols.append((plus - minus) / (2 * hessian_step))
    except SingularityError:
        nan = np.full((2, 2), np.nan)
        return StabilityReport(nan, nan, nan, singular=True)
    ghat = geo.ghat.matrix()
    return StabilityReport(ghat, ghat @ chat_jacobian(0.0, spec), np.column_stack(cols))


@dataclass(frozen=True)
class LinearizationResult:
    A: np.ndarray
    poles: np.ndarray
    gains_equivalent: LinearGains
    char_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def stable(self) -> bool:
        return bool(np.all(self.poles.real < 0))

    def to_text(self) -> str:
        g = self.gains_equivalent
        lines = ["[linearization]"]
        for name in ("a8", "Kbp", "Kap", "Kbd", "Kad"):
            lines.append(f"{name} = {getattr(g, name):.17g}")
        lines.append("poles = [" + ", ".join(f'"{p:.17g}"' for p in self.poles) + "]")
        lines.append(f"max_real_part = {float(np.max(self.poles.real)):.17g}")
        lines.append(f"stable = {str(self.stable).lower()}")
        lines.append("A = [" + ", ".join("[" + ", ".join(f"{v:.17g}" for v in row) + "]" for row in self.A) + "]")
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        rows = ["pole_real,pole_imag,char_residual"]
        rows += [f"{p.real:.17g},{p.imag:.17g},{r:.3e}" for p, r in zip(self.poles, self.char_residuals)]
        return "\n".join(rows) + "\n"


def _sorted_poles(values: np.ndarray) -> np.ndarray:
    return np.array(sorted(values, key=lambda z: (round(z.real, 9), round(z.imag, 9))))


def _char_residuals(A: np.ndarray, poles: np.ndarray) -> np.ndarray:
    scale = np.linalg.norm(A, 2)
    n = A.shape[0]
    return np.array([abs(np.linalg.det(p * np.eye(n) - A)) / max(1.0, abs(p) + scale) ** n for p in poles])


def linearize(spec: FamilySpec, law: Law = NONLINEAR) -> LinearizationResult:
    """Closed-loop Jacobian, poles and equivalent linear gains at ``(s0, 0, 0, 0)``.

    Raises:
        NonEquilibriumError: the closed-loop field does not vanish there.
    """
    law_fn = law_function(law, spec)
    x_eq = spec.x_eq
    residual = closed_loop_field(x_eq, spec, law_fn)
    if np.linalg.norm(residual) > EQUILIBRIUM_TOL:
        raise NonEquilibriumError(f"|f(x_eq)| = {np.linalg.norm(residual):.3e} for law {law!r}")
    A = _fd_jacobian(lambda x: closed_loop_field(x, spec, law_fn), x_eq)
    u = lambda x: np.array([law_fn(State.from_array(x)).u_total])  # noqa: E731
    grad = _fd_jacobian(u, x_eq)[0]
    a8 = law_fn(State.from_array(x_eq)).u_total
    poles = _sorted_poles(np.linalg.eigvals(A))
    return LinearizationResult(A, poles, LinearGains(a8, *grad), _char_residuals(A, poles))


def open_loop_linearization(spec: FamilySpec) -> tuple[np.ndarray, np.ndarray]:
    """``(A, B)`` of the plant around the equilibrium with the feedforward torque applied."""
    a8 = spec.plant.feedforward(spec.gen.s0)

    def field_u(z):
        state = State.from_array(z[:4])
        return np.array([z[2], z[3], *open_loop_rhs(state, a8 + z[4], spec.plant)])

    jac = _fd_jacobian(field_u, np.append(spec.x_eq, 0.0))
    return jac[:, :4], jac[:, 4:]


# ---------------------------------------------------------------------------
# gain fitting
#
# Free scalars z = (mu1'(0), w''(0), k1, k2); h(0), mu1(0) and the remaining
# polynomial coefficients come from the template.


def _spec_from_scalars(template: FamilySpec, z: np.ndarray) -> FamilySpec:
    m1, w2, k1, k2 = (float(v) for v in z)
    mu1 = list(template.gen.mu1) + [0.0] * max(0, 2 - len(template.gen.mu1))
    mu1[1] = m1
    w = list(template.gen.w) + [0.0] * max(0, 3 - len(template.gen.w))
    w[2] = 0.5 * w2
    return template.with_gen(mu1=tuple(mu1), w=tuple(w), chat_gains=(k1, k2))


def _scalars_of(spec: FamilySpec) -> np.ndarray:
    gen = spec.gen
    m1 = gen.mu1[1] if len(gen.mu1) > 1 else 0.0
    w2 = 2.0 * gen.w[2] if len(gen.w) > 2 else 0.0
    return np.array([m1, w2, *gen.chat_gains])


def fit_initial_guess(target: LinearGains, template: FamilySpec) -> np.ndarray:
    """Closed-form solution of the linearized matching map (smallest admissible root).

    Falls back to a unit heuristic when no positive ``mu1'(0)`` reproduces the
    position gains for the pinned ``h(0)`` and ``mu1(0)``.
    """
    plant, gen = template.plant, template.gen
    rho, s0 = plant.rho, gen.s0
    g22 = kinetic_metric((s0, 0.0), plant).g22
    spread = g22 - rho * rho
    k1 = -target.Kbd / spread
    k2 = (plant.a7 - target.Kad) / spread
    c, h0 = gen.mu1[0], gen.h[0]
    excess = c * h0 - 1.0
    prod = (target.Kbp - rho) * 5.0 * rho * s0 * excess / spread
    lin = prod - 5.0 * s0 * excess * (target.Kap + rho * rho) / spread
    roots = np.roots([h0, -lin, 5.0 * c * s0 * prod]) if h0 != 0 else np.array([])
    admissible = sorted(r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 0)
    if not admissible:
        return np.array([1.0, target.Kbp, k1, k2])
    m1 = admissible[0]
    return np.array([m1, prod / m1, k1, k2])


def _gain_error(template: FamilySpec, z: np.ndarray, target: LinearGains) -> np.ndarray:
    lin = linearize(_spec_from_scalars(template, z), NONLINEAR)
    return lin.gains_equivalent.feedback() - target.feedback()


def fit_linear_gains(
    target: LinearGains,
    template: FamilySpec,
    tol: float = 1e-8,
    max_iter: int = 50,
    guess: Sequence[float] | None = None,
) -> FamilySpec:
    """Family member whose linearization at the equilibrium equals ``target``.

    Damped Newton on ``(mu1'(0), w''(0), k1, k2)`` with a finite-difference
    Jacobian. The feedforward ``a8`` of the result is always the gravity
    balance at ``s0``, whatever ``target.a8`` says.

    Raises:
        FitError: no convergence within ``max_iter`` or a singular Jacobian.
    """
    z = np.asarray(guess if guess is not None else fit_initial_guess(target, template), dtype=float)
    try:
        err = _gain_error(template, z, target)
    except (GeneratorError, SingularityError, NonEquilibriumError) as exc:
        raise FitError(f"initial guess is not admissible: {exc}") from exc
    norm = float(np.linalg.norm(err))
    for _ in range(max_iter):
        if norm < tol:
            return _spec_from_scalars(template, z)
        steps = 1e-5 * np.maximum(1.0, np.abs(z))
        jac = np.empty((4, 4))
        for i in range(4):
            e = np.zeros(4)
            e[i] = steps[i]
            try:
                jac[:, i] = (_gain_error(template, z + e, target) - _gain_error(template, z - e, target)) / (2 * steps[i])
            except (GeneratorError, SingularityError) as exc:
                raise FitError(f"Jacobian evaluation failed: {exc}", norm) from exc
        if not np.all(np.isfinite(jac)) or np.linalg.cond(jac) > 1e14:
            raise FitError("gain Jacobian is singular", norm)
        delta = np.linalg.solve(jac, -err)
        damping = 1.0
        while damping > 1e-4:
            trial = z + damping * delta
            try:
                trial_err = _gain_error(template, trial, target)
                trial_norm = float(np.linalg.norm(trial_err))
            except (GeneratorError, SingularityError, NonEquilibriumError):
                trial_norm = math.inf
            if trial_norm < norm or trial_norm < tol:
                break
            damping *= 0.5
        else:
            raise FitError(f"line search stalled at gain error {norm:.3e}", norm)
        z, err, norm = trial, trial_err, trial_norm
    if norm < tol:
        return _spec_from_scalars(template, z)
    raise FitError(f"no convergence after {max_iter} iterations (gain error {norm:.3e})", norm)


# ---------------------------------------------------------------------------
# basin of attraction


@dataclass(frozen=True)
class BasinOutcome:
    point: tuple[float, float, float, float]
    termination: Termination
    final_distance: float
    captured: bool


@dataclass(frozen=True)
class BasinResult:
    fraction: float
    outcomes: list[BasinOutcome]

    def to_csv(self) -> str:
        rows = ["s,theta,s_dot,theta_dot,outcome,captured,final_distance"]
        for o in self.outcomes:
            coords = ",".join(f"{v:.17g}" for v in o.point)
            rows.append(f"{coords},{o.termination.value},{str(o.captured).lower()},{o.final_distance:.17g}")
        return "\n".join(rows) + "\n"


def _basin_task(args) -> BasinOutcome:
    point, spec, law, cfg, radius = args
    traj = simulate(State(*point), spec, cfg, law)
    distance = float(np.linalg.norm(traj.x[-1] - spec.x_eq))
    captured = traj.termination is Termination.COMPLETED and distance < radius
    return BasinOutcome(point, traj.termination, distance, captured)


def basin_estimate(
    spec: FamilySpec,
    law: Law,
    grid: Sequence[Sequence[float]],
    cfg: SimConfig,
    capture_radius: float,
    workers: int = 1,
) -> BasinResult:
    """Simulate from every point of the Cartesian ``grid`` over ``(s, theta, s_dot, theta_dot)``.

    Outcomes are ordered by grid index regardless of ``workers``.
    """
    if len(grid) != 4:
        raise ValueError("grid needs one axis per state coordinate")
    points = [tuple(float(v) for v in p) for p in itertools.product(*grid)]
    tasks = [(p, spec, law, cfg, capture_radius) for p in points]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_basin_task, tasks))
    else:
        outcomes = [_basin_task(t) for t in tasks]
    fraction = sum(o.captured for o in outcomes) / len(outcomes) if outcomes else math.nan
    return BasinResult(fraction, outcomes)
