import math

import numpy as np
import pytest

from ballbeam_matching import FamilySpec, PlantParams, State, chat, ghat_at
from ballbeam_matching.plant import total_energy
from ballbeam_matching.sim import (
    CSV_HEADER,
    NONLINEAR,
    OPEN_LOOP,
    SimConfig,
    Termination,
    central_rate,
    hhat,
    hhat_rate_identity,
    simulate,
)

from conftest import random_spec


class TestSimConfig:
    @pytest.mark.parametrize(
        "kwargs", [dict(t_final=0.0), dict(dt=-1.0), dict(integrator_tol=1e-15), dict(integrator_tol=0.1)]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError, match="sim."):
            SimConfig(**kwargs)

    def test_sample_count(self):
        assert SimConfig(t_final=1.0, dt=0.1).n_samples == 11


class TestSimulate:
    def test_fixed_point(self, fitted_spec):
        traj = simulate(State(*fitted_spec.x_eq), fitted_spec, SimConfig(t_final=10.0, dt=1e-2), NONLINEAR)
        assert traj.termination is Termination.COMPLETED
        assert np.max(np.abs(traj.x - fitted_spec.x_eq)) < 1e-9

    def test_time_grid(self, fitted_spec):
        traj = simulate(State(0.55, 0.0, 0.0, 0.0), fitted_spec, SimConfig(t_final=1.0, dt=0.05))
        assert traj.t[0] == 0.0 and np.all(np.diff(traj.t) > 0)
        assert len(traj) == 21 and traj.t[-1] == pytest.approx(1.0)

    def test_open_loop_energy(self):
        p = PlantParams(a7=0.0)
        traj = simulate(State(-0.3, 0.05, 0.1, 0.0), FamilySpec(plant=p), SimConfig(t_final=10.0), OPEN_LOOP)
        e = [total_energy(traj.state(i), p) for i in range(0, len(traj), 50)]
        assert np.ptp(e) < 1e-6

    def test_halving_tolerance(self, fitted_spec):
        x0 = State(0.6, 0.05, 0.0, 0.0)
        tol = 1e-8
        a = simulate(x0, fitted_spec, SimConfig(t_final=5.0, dt=1e-2, integrator_tol=tol))
        b = simulate(x0, fitted_spec, SimConfig(t_final=5.0, dt=1e-2, integrator_tol=tol / 2))
        assert np.max(np.abs(a.x[-1] - b.x[-1])) < 10 * tol

    def test_observed_order(self, fitted_spec):
        x0 = State(0.6, 0.05, 0.0, 0.0)
        finals = []
        for h in (0.04, 0.02, 0.01):
            traj = simulate(x0, fitted_spec, SimConfig(t_final=2.0, dt=0.04, fixed_step=h))
            finals.append(traj.x[-1])
        order = math.log2(np.linalg.norm(finals[0] - finals[1]) / np.linalg.norm(finals[1] - finals[2]))
        assert order >= 4.0

    def test_beam_exit(self, fitted_spec):
        traj = simulate(State(2.0, 0.0, 0.0, 0.0), fitted_spec, SimConfig(t_final=1.0))
        assert traj.termination is Termination.BEAM_EXIT and len(traj) == 1

    def test_ball_rolls_off_open_loop(self):
        traj = simulate(State(0.5, 0.3, 0.0, 0.0), FamilySpec(), SimConfig(t_final=20.0, dt=1e-2), OPEN_LOOP)
        assert traj.termination is Termination.BEAM_EXIT
        assert abs(traj.x[-1, 0]) > 1.0

    def test_singular_start(self, fitted_spec):
        traj = simulate(State(0.0, 0.1, 0.0, 0.0), fitted_spec, SimConfig(t_final=1.0))
        assert traj.termination is Termination.SINGULARITY

    def test_csv_format(self, fitted_spec):
        traj = simulate(State(0.55, 0.0, 0.0, 0.0), fitted_spec, SimConfig(t_final=0.1, dt=0.05))
        lines = traj.to_csv().splitlines()
        assert lines[0] == CSV_HEADER
        assert lines[-1] == "# termination=completed"
        row = [float(v) for v in lines[1].split(",")]
        assert row[1] == 0.55 and len(row) == 11
        assert float(lines[2].split(",")[1]) == traj.x[1, 0]  # 17 significant digits round-trip


class TestHhat:
    def test_zero_velocity(self):
        spec = random_spec(np.random.default_rng(20))
        x = State(0.5, 0.2, 0.0, 0.0)
        assert hhat(x, spec) == ghat_at(0.5, 0.2, spec).vhat

    def test_equilibrium(self, fitted_spec):
        assert hhat(State(*fitted_spec.x_eq), fitted_spec) == 0.0

    def test_bounded_below_by_potential(self, fitted_spec):
        rng = np.random.default_rng(21)
        n = 0
        for _ in range(200):
            x = State(rng.uniform(0.3, 0.8), rng.uniform(-0.2, 0.2), rng.normal(), rng.normal())
            geo = ghat_at(x.s, x.theta, fitted_spec)
            if geo.ghat.is_positive_definite:
                n += 1
                assert hhat(x, fitted_spec) >= geo.vhat
        assert n > 100


class TestDissipation:
    def test_central_rate_is_fourth_order(self):
        t = np.linspace(0, 1, 101)
        err = np.max(np.abs(central_rate(np.sin(3 * t), t[1]) - 3 * np.cos(3 * t)))
        assert err < 1e-5

    def test_conservative_closed_loop(self, fitted_spec):
        spec = fitted_spec.with_gen(chat_gains=(0.0, 0.0))
        traj = simulate(State(0.55, 0.02, 0.0, 0.0), spec, SimConfig(t_final=10.0, dt=1e-3, integrator_tol=1e-11))
        assert traj.termination is Termination.COMPLETED
        assert np.max(np.abs(traj.H - traj.H[0])) < 1e-6

    @pytest.mark.slow
    def test_identity_along_fitted_run(self, fitted_spec):
        traj = simulate(State(0.6, 0.05, 0.0, 0.0), fitted_spec, SimConfig(t_final=10.0, dt=1e-3))
        assert traj.termination is Termination.COMPLETED
        assert hhat_rate_identity(traj, fitted_spec) < 1e-4

    def test_identity_random_spec(self):
        spec = random_spec(np.random.default_rng(22))
        traj = simulate(State(spec.gen.s0 + 0.05, 0.02, 0.0, 0.0), spec, SimConfig(t_final=2.0, dt=1e-3))
        assert hhat_rate_identity(traj, spec) < 1e-4

    def test_energy_falls_where_dissipation_is_positive(self, fitted_spec):
        traj = simulate(State(0.6, 0.05, 0.0, 0.0), fitted_spec, SimConfig(t_final=3.0, dt=1e-3))
        for i in range(0, len(traj), 25):
            x = traj.state(i)
            geo = ghat_at(x.s, x.theta, fitted_spec)
            d = float(chat(x, fitted_spec) @ geo.ghat.matrix() @ x.qdot)
            if d > 1e-6:
                assert traj.H_rate[i] < 0
