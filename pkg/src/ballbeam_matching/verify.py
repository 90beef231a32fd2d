"""Numerical self-checks: matching residuals on a grid, derivative oracles and energy dissipation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LinkageDomainError, SingularityError
from .family import FamilySpec, ghat_at, matching_residuals
from .plant import State, alpha, christoffel, christoffel_g, kinetic_metric
from .sim import NONLINEAR, SimConfig, hhat_rate_identity, simulate

__all__ = ["CheckResult", "VerifyReport", "residual_check", "derivative_check", "dissipation_check", "run_verify"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float
    where: tuple[float, ...] = ()

    @property
    def passed(self) -> bool:
        return math.isfinite(self.value) and self.value < self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        at = ", ".join(f"{v:.6g}" for v in self.where)
        suffix = f" at ({at})" if self.where else ""
        return f"{status} {self.name}: {self.value:.3e} (tol {self.tolerance:.1e}){suffix}"


@dataclass
class VerifyReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_text(self) -> str:
        lines = [c.line() for c in self.checks]
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


def residual_check(spec: FamilySpec, s_axis, theta_axis, tolerance: float) -> list[CheckResult]:
    """Worst value of each matching residual over the grid, with its location."""
    names = ("r3", "r4_V", "r5_lambda", "r5_lie")
    worst = {n: (-1.0, ()) for n in names}
    for s in s_axis:
        for th in theta_axis:
            try:
                res = matching_residuals(s, th, spec)
                values = (res.r3, res.r4_V, res.r5_lambda, res.r5_lie)
            except (SingularityError, LinkageDomainError):
                values = (math.inf,) * 4
            for n, v in zip(names, values):
                if not v <= worst[n][0]:
                    worst[n] = (v, (float(s), float(th)))
    return [CheckResult(f"matching.{n}", worst[n][0], tolerance, worst[n][1]) for n in names]


def _central(fun, x: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central difference along each coordinate; ``out[k]`` is the partial along ``k``."""
    out = []
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        out.append((fun(x - 2 * e) - 8 * fun(x - e) + 8 * fun(x + e) - fun(x + 2 * e)) / (12 * h))
    return np.array(out)


def derivative_check(
    spec: FamilySpec, s_axis, theta_axis, n_points: int, tolerance: float, seed: int
) -> list[CheckResult]:
    """Compare analytic derivatives against finite differences at random points of the grid box."""
    rng = np.random.default_rng(seed)
    s_lo, s_hi = min(s_axis), max(s_axis)
    t_lo, t_hi = min(theta_axis), max(theta_axis)
    h = 1e-4
    worst: dict[str, tuple[float, tuple]] = {}

    def record(name, err, point):
        if name not in worst or not err <= worst[name][0]:
            worst[name] = (err, point)

    for _ in range(n_points):
        q = np.array([rng.uniform(s_lo, s_hi), rng.uniform(t_lo, t_hi)])
        point = (float(q[0]), float(q[1]))

        def rel(a, b):
            return float(np.max(np.abs(np.asarray(a) - np.asarray(b))) / max(1.0, float(np.max(np.abs(b)))))

        _, ap, app = alpha(q[1], spec.plant)
        fd = _central(lambda th: np.array(alpha(th[0], spec.plant)[:2]), q[1:], h)[0]
        record("alpha_prime", rel(ap, fd[0]), point)
        record("alpha_second", rel(app, fd[1]), point)

        gam = christoffel_g(q, spec.plant)
        dg = _central(lambda z: kinetic_metric(z, spec.plant).matrix(), q, h)
        record("christoffel_g", rel(gam, christoffel(kinetic_metric(q, spec.plant).matrix(), dg)), point)

        geo = ghat_at(q[0], q[1], spec)
        fd_ghat = _central(lambda z: ghat_at(z[0], z[1], spec).ghat.matrix(), q, h)
        record("ghat_grad", rel(geo.ghat_grad, fd_ghat), point)
        fd_v = _central(lambda z: np.array([ghat_at(z[0], z[1], spec).vhat]), q, h)[:, 0]
        record("dvhat", rel(geo.dvhat, fd_v), point)
        record(
            "christoffel_ghat",
            rel(christoffel(geo.ghat.matrix(), geo.ghat_grad), christoffel(geo.ghat.matrix(), fd_ghat)),
            point,
        )
    return [CheckResult(f"derivative.{n}", v, tolerance, p) for n, (v, p) in worst.items()]


def dissipation_check(spec: FamilySpec, x0: State, t_final: float, tolerance: float) -> CheckResult:
    """Closed-loop energy rate against ``-ghat(chat(v), v)`` along a nonlinear run."""
    traj = simulate(x0, spec, SimConfig(t_final=t_final, dt=1e-3, integrator_tol=1e-11), NONLINEAR)
    value = hhat_rate_identity(traj, spec) if len(traj) >= 5 else math.inf
    return CheckResult(f"dissipation[{traj.termination.value}]", value, tolerance, tuple(x0.as_array()))


def run_verify(spec: FamilySpec, options, x0: State | None = None) -> VerifyReport:
    """All checks configured by a ``VerifyOptions``-like object."""
    if x0 is None:
        x0 = State(spec.gen.s0 + 0.1, 0.05, 0.0, 0.0)
    report = VerifyReport()
    report.checks += residual_check(spec, options.s, options.theta, options.tolerance)
    report.checks += derivative_check(
        spec, options.s, options.theta, options.derivative_points, options.derivative_tolerance, options.seed
    )
    report.checks.append(dissipation_check(spec, x0, options.dissipation_t_final, options.dissipation_tolerance))
    return report
