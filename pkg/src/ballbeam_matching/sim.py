"""Open- and closed-loop simulation with Lyapunov diagnostics."""

from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass
from typing import Callable, TextIO, Union

import numpy as np
from scipy.integrate import RK45

from .controller import ControlBreakdown, LinearGains, control
from .errors import GeneratorError, LinkageDomainError, SingularityError
from .family import FamilySpec, chat, ghat_at
from .plant import State, open_loop_rhs

__all__ = [
    "NONLINEAR",
    "OPEN_LOOP",
    "Law",
    "SimConfig",
    "Termination",
    "Trajectory",
    "law_function",
    "closed_loop_field",
    "simulate",
    "hhat",
    "hhat_rate_identity",
    "central_rate",
    "CSV_HEADER",
]

NONLINEAR = "nonlinear"
OPEN_LOOP = "open"
Law = Union[str, LinearGains]

CSV_HEADER = "t,s,theta,s_dot,theta_dot,u,u_g,u_V,u_c,H_hat,H_hat_rate"

_GEOMETRY_ERRORS = (SingularityError, LinkageDomainError, GeneratorError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class SimConfig:
    """Integration settings.

    ``fixed_step`` disables error control and advances with a constant step;
    it is meant for convergence studies of the integrator itself.
    """

    t_final: float = 10.0
    dt: float = 1e-3
    integrator_tol: float = 1e-10
    stop_on_beam_exit: bool = True
    fixed_step: float | None = None

    def __post_init__(self):
        if not self.t_final > 0:
            raise ValueError(f"sim.t_final={self.t_final!r} must be > 0")
        if not self.dt > 0:
            raise ValueError(f"sim.dt={self.dt!r} must be > 0")
        if not 1e-14 < self.integrator_tol < 1e-2:
            raise ValueError(f"sim.integrator_tol={self.integrator_tol!r} must lie in (1e-14, 1e-2)")
        if self.fixed_step is not None and not self.fixed_step > 0:
            raise ValueError("sim.fixed_step must be > 0")

    @property
    def n_samples(self) -> int:
        return int(math.floor(self.t_final / self.dt + 1e-9)) + 1


class Termination(str, enum.Enum):
    COMPLETED = "completed"
    BEAM_EXIT = "beam_exit"
    SINGULARITY = "singularity"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class Trajectory:
    """Uniformly sampled trajectory.

    ``u`` columns are ``(u_total, u_g, u_V, u_c)``; the split is ``nan`` for
    laws outside the family. ``H`` is the closed-loop energy of the design the
    trajectory was generated with (``nan`` where it cannot be evaluated).
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    H: np.ndarray
    H_rate: np.ndarray
    termination: Termination

    def __len__(self) -> int:
        return len(self.t)

    def state(self, i: int) -> State:
        return State.from_array(self.x[i])

    def samples(self):
        for i in range(len(self.t)):
            u = self.u[i]
            yield self.t[i], self.state(i), ControlBreakdown(u[1], u[2], u[3], u[0]), self.H[i], self.H_rate[i]

    def to_csv(self, out: TextIO | None = None) -> str:
        buf = io.StringIO() if out is None else out
        buf.write(CSV_HEADER + "\n")
        rows = np.column_stack([self.t, self.x, self.u, self.H, self.H_rate])
        for row in rows:
            buf.write(",".join(f"{v:.17g}" for v in row) + "\n")
        buf.write(f"# termination={self.termination.value}\n")
        return buf.getvalue() if out is None else ""


def law_function(law: Law, spec: FamilySpec) -> Callable[[State], ControlBreakdown]:
    if isinstance(law, LinearGains):
        s0 = spec.gen.s0
        return lambda x: ControlBreakdown.total_only(law(x, s0))
    if law == NONLINEAR:
        return lambda x: control(x, spec)
    if law == OPEN_LOOP:
        return lambda x: ControlBreakdown.total_only(0.0)
    raise ValueError(f"unknown law {law!r}")


def closed_loop_field(x: np.ndarray, spec: FamilySpec, law_fn) -> np.ndarray:
    state = State.from_array(x)
    sdd, tdd = open_loop_rhs(state, law_fn(state).u_total, spec.plant)
    return np.array([x[2], x[3], sdd, tdd])


def hhat(x: State, spec: FamilySpec) -> float:
    """Closed-loop energy ``1/2 ghat(v, v) + vhat``."""
    geo = ghat_at(x.s, x.theta, spec)
    v = x.qdot
    return 0.5 * float(v @ geo.ghat.matrix() @ v) + geo.vhat


def central_rate(values: np.ndarray, dt: float) -> np.ndarray:
    """Fourth-order finite-difference derivative on a uniform grid."""
    f = np.asarray(values, dtype=float)
    n = len(f)
    if n < 5:
        return np.gradient(f, dt) if n > 1 else np.full(n, np.nan)
    out = np.empty(n)
    out[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * dt)
    out[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * dt)
    out[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * dt)
    out[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * dt)
    out[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * dt)
    return out


def _sample(x: np.ndarray, spec: FamilySpec, law_fn) -> tuple[np.ndarray, float]:
    state = State.from_array(x)
    try:
        cb = law_fn(state)
        u = np.array([cb.u_total, cb.u_g, cb.u_V, cb.u_c])
    except _GEOMETRY_ERRORS:
        u = np.full(4, np.nan)
    try:
        h = hhat(state, spec)
    except _GEOMETRY_ERRORS:
        h = math.nan
    return u, h


def simulate(x0: State, spec: FamilySpec, cfg: SimConfig, law: Law = NONLINEAR) -> Trajectory:
    """Integrate the plant under ``law`` and sample every ``cfg.dt``.

    Failures never raise: the returned trajectory ends early and carries the
    reason in ``termination``.
    """
    law_fn = law_function(law, spec)
    s_max = spec.plant.s_max
    n_total = cfg.n_samples
    times, states = [], []
    termination = Termination.COMPLETED

    def exited(x):
        return cfg.stop_on_beam_exit and abs(x[0]) > s_max

    x_start = x0.as_array()
    times.append(0.0)
    states.append(x_start)
    if not np.all(np.isfinite(x_start)):
        termination = Termination.NUMERICAL_FAILURE
    elif exited(x_start):
        termination = Termination.BEAM_EXIT
    else:
        if cfg.fixed_step is None:
            opts = dict(rtol=cfg.integrator_tol, atol=cfg.integrator_tol)
        else:
            opts = dict(rtol=1e3, atol=1e3, first_step=cfg.fixed_step, max_step=cfg.fixed_step)
        try:
            solver = RK45(lambda t, y: closed_loop_field(y, spec, law_fn), 0.0, x_start, cfg.t_final, **opts)
        except _GEOMETRY_ERRORS:
            solver = None
            termination = Termination.SINGULARITY
        k = 1
        while solver is not None and k < n_total:
            try:
                solver.step()
            except _GEOMETRY_ERRORS:
                termination = Termination.SINGULARITY
                break
            except (FloatingPointError, OverflowError, ZeroDivisionError):
                termination = Termination.NUMERICAL_FAILURE
                break
            if solver.status == "failed" or not np.all(np.isfinite(solver.y)):
                termination = Termination.NUMERICAL_FAILURE
                break
            dense = solver.dense_output()
            stop = False
            while k < n_total and (k * cfg.dt <= solver.t or solver.status == "finished"):
                xk = solver.y.copy() if k == n_total - 1 and solver.status == "finished" else dense(k * cfg.dt)
                times.append(k * cfg.dt)
                states.append(xk)
                k += 1
                if exited(xk):
                    termination = Termination.BEAM_EXIT
                    stop = True
                    break
            if stop or solver.status == "finished":
                break

    t = np.array(times)
    x = np.array(states)
    u = np.empty((len(t), 4))
    H = np.empty(len(t))
    for i, xi in enumerate(x):
        u[i], H[i] = _sample(xi, spec, law_fn)
    return Trajectory(t, x, u, H, central_rate(H, cfg.dt), termination)


def hhat_rate_identity(traj: Trajectory, spec: FamilySpec) -> float:
    """Max ``|dH/dt + ghat(chat(v), v)|`` over the samples of ``traj``."""
    worst = 0.0
    for i in range(len(traj)):
        if not math.isfinite(traj.H_rate[i]):
            continue
        x = traj.state(i)
        geo = ghat_at(x.s, x.theta, spec)
        dissipation = float(chat(x, spec) @ geo.ghat.matrix() @ x.qdot)
        worst = max(worst, abs(traj.H_rate[i] + dissipation))
    return worst
