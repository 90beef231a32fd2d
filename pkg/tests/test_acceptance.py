"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line; the lines are printed in the
terminal summary (see ``conftest.py``) and when this file is run directly.
"""

from __future__ import annotations

import time

import numpy as np
import pytest
from scipy.signal import place_poles

from ballbeam_matching import (
    FamilySpec,
    FitError,
    GeneratorSpec,
    LinearGains,
    PlantParams,
    State,
    control,
    fit_linear_gains,
    ghat_at,
    linearize,
    matching_residuals,
    open_loop_linearization,
    stability_conditions,
    target_accel,
)
from ballbeam_matching.cli import main
from ballbeam_matching.controller import christoffel_ghat
from ballbeam_matching.plant import alpha, christoffel_g, kinetic_metric, open_loop_rhs, total_energy
from ballbeam_matching.sim import OPEN_LOOP, SimConfig, Termination, hhat_rate_identity, simulate

from conftest import DEFAULT_CONFIG, christoffel_from_partials, fd4, random_spec

RESULTS: list[str] = []


def report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def template_spec(s0: float = 0.5) -> FamilySpec:
    return FamilySpec(PlantParams(), GeneratorSpec(mu1=(2.0, 1.0), h=(1.0,), w=(0.0, 0.0, 1.0), s0=s0))


def random_target(rng, spec: FamilySpec) -> tuple[LinearGains, np.ndarray]:
    """Pole-placed gains for the plant linearized at ``spec``'s equilibrium, and the closed-loop poles."""
    a, b = open_loop_linearization(spec)
    poles = -rng.uniform(0.5, 3.0, 4)
    k = -place_poles(a, b, poles).gain_matrix[0]
    return LinearGains(spec.plant.feedforward(spec.gen.s0), *k), np.linalg.eigvals(a + b @ k[None, :])


def root_distance(a, b) -> float:
    b = list(b)
    worst = 0.0
    for z in a:
        j = int(np.argmin([abs(z - w) for w in b]))
        worst = max(worst, abs(z - b.pop(j)))
    return worst


def test_criterion_1_matching_exactness():
    start = time.perf_counter()
    rng = np.random.default_rng(101)
    worst, where = 0.0, None
    for _ in range(5):
        spec = random_spec(rng)
        for s in np.linspace(0.3, 0.9, 20):
            for th in np.linspace(-0.5, 0.5, 20):
                r = matching_residuals(s, th, spec).max()
                if r > worst:
                    worst, where = r, (round(float(s), 4), round(float(th), 4))
    elapsed = time.perf_counter() - start
    report(1, "matching exactness", worst < 1e-6 and elapsed < 60, f"max residual {worst:.2e} at {where}, {elapsed:.1f} s")


def test_criterion_2_closed_loop_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(102)
    specs = [random_spec(rng) for _ in range(4)]
    worst = 0.0
    for i in range(1000):
        spec = specs[i % 4]
        x = State(rng.uniform(0.2, 1.0), rng.uniform(-0.5, 0.5), rng.normal(), rng.normal())
        acc = np.array(open_loop_rhs(x, control(x, spec).u_total, spec.plant))
        target = target_accel(x, spec)
        worst = max(worst, float(np.max(np.abs(acc - target) / np.maximum(1.0, np.abs(target)))))
    elapsed = time.perf_counter() - start
    report(2, "closed-loop equivalence", worst < 1e-8 and elapsed < 10, f"max rel error {worst:.2e}, {elapsed:.1f} s")


def test_criterion_3_dissipation_identity(fitted_spec):
    x0 = State(fitted_spec.gen.s0 + 0.1, 0.05, 0.0, 0.0)
    traj = simulate(x0, fitted_spec, SimConfig(t_final=10.0, dt=1e-3))
    identity = hhat_rate_identity(traj, fitted_spec)
    conservative = fitted_spec.with_gen(chat_gains=(0.0, 0.0))
    traj0 = simulate(x0, conservative, SimConfig(t_final=10.0, dt=1e-3, integrator_tol=1e-11))
    drift = float(np.max(np.abs(traj0.H - traj0.H[0])))
    ok = (
        traj.termination is Termination.COMPLETED
        and traj0.termination is Termination.COMPLETED
        and identity < 1e-4
        and drift < 1e-6
    )
    report(3, "dissipation identity", ok, f"identity residual {identity:.2e}, zero-dissipation drift {drift:.2e}")


def test_criterion_4_conservation():
    p = PlantParams(a7=0.0)
    # the uncontrolled ball leaves the beam; the equations stay valid beyond it
    cfg = SimConfig(t_final=10.0, dt=1e-3, stop_on_beam_exit=False)
    traj = simulate(State(0.3, 0.1, 0.0, 0.0), FamilySpec(plant=p), cfg, OPEN_LOOP)
    energy = np.array([total_energy(traj.state(i), p) for i in range(len(traj))])
    drift = float(np.max(np.abs(energy - energy[0])))
    ok = traj.termination is Termination.COMPLETED and drift < 1e-6
    report(4, "conservation", ok, f"T+V drift {drift:.2e} over {traj.t[-1]:.0f} time units")


def test_criterion_5_linearization_round_trip():
    start = time.perf_counter()
    rng = np.random.default_rng(105)
    worst_gain = worst_pole = 0.0
    failures = 0
    for _ in range(10):
        template = template_spec(rng.uniform(0.3, 0.7))
        target, target_poles = random_target(rng, template)
        try:
            fitted = fit_linear_gains(target, template)
        except FitError:
            failures += 1
            continue
        lin = linearize(fitted)
        worst_gain = max(worst_gain, float(np.max(np.abs(lin.gains_equivalent.feedback() - target.feedback()))))
        worst_pole = max(worst_pole, root_distance(lin.poles, target_poles))
    elapsed = time.perf_counter() - start
    ok = failures == 0 and worst_gain < 1e-6 and worst_pole < 1e-5 and elapsed < 120
    detail = f"{10 - failures}/10 fits converged, gain error {worst_gain:.2e}, pole error {worst_pole:.2e}, {elapsed:.1f} s"
    report(5, "linearization round-trip", ok, detail)


def test_criterion_6_stability_pole_consistency():
    rng = np.random.default_rng(106)
    budget, wanted = 400, 50
    passing, counterexamples, sampled = 0, 0, 0
    failing_condition: dict[str, int] = {}
    while sampled < budget and passing < wanted:
        sampled += 1
        if sampled % 2:
            template = template_spec(rng.uniform(0.3, 0.7))
            try:
                spec = fit_linear_gains(random_target(rng, template)[0], template)
            except FitError:
                continue
        else:
            spec = random_spec(rng)
            spec = spec.with_gen(w=(spec.gen.w[0], 0.0, *spec.gen.w[2:]))
        rep = stability_conditions(spec)
        for key, ok in rep.tests.items():
            if not ok:
                failing_condition[key] = failing_condition.get(key, 0) + 1
        if not rep.overall:
            continue
        passing += 1
        if not linearize(spec).stable:
            counterexamples += 1
    ok = passing >= wanted and counterexamples == 0
    detail = (
        f"{passing} of {sampled} sampled specs pass all six conditions (need {wanted}); "
        f"{counterexamples} counterexamples; failed conditions {dict(sorted(failing_condition.items()))}"
    )
    report(6, "stability/pole consistency", ok, detail)


def test_criterion_7_convergence(fitted_spec):
    x0 = State(fitted_spec.gen.s0 + 0.1, 0.05, 0.0, 0.0)
    traj = simulate(x0, fitted_spec, SimConfig(t_final=30.0, dt=1e-2, integrator_tol=1e-9))
    dist = np.linalg.norm(traj.x - fitted_spec.x_eq, axis=1)
    inside = np.nonzero(dist < 1e-3)[0]
    exited = traj.termination is Termination.BEAM_EXIT
    ok = len(inside) > 0 and not exited
    when = f"t={traj.t[inside[0]]:.2f}" if len(inside) else "never"
    report(7, "convergence", ok, f"distance < 1e-3 reached at {when}, termination {traj.termination.value}")


def test_criterion_8_derivative_oracles():
    rng = np.random.default_rng(108)
    spec = random_spec(rng)
    plant = spec.plant
    h = 1e-4
    worst = dict.fromkeys(("alpha", "dvhat", "ghat_grad", "christoffel_g", "christoffel_ghat"), 0.0)

    def rel(a, b):
        return float(np.max(np.abs(np.asarray(a) - b)) / max(1.0, float(np.max(np.abs(b)))))

    for _ in range(100):
        q = np.array([rng.uniform(0.2, 1.0) * rng.choice([-1, 1]), rng.uniform(-0.8, 0.8)])
        _, ap, app = alpha(q[1], plant)
        fd_alpha = fd4(lambda t: np.array(alpha(t[0], plant)[:2]), q[1:], h)[0]
        worst["alpha"] = max(worst["alpha"], rel([ap, app], fd_alpha))

        geo = ghat_at(q[0], q[1], spec)
        fd_v = fd4(lambda z: np.array(ghat_at(z[0], z[1], spec).vhat), q, h)
        worst["dvhat"] = max(worst["dvhat"], rel(geo.dvhat, fd_v))
        fd_g = fd4(lambda z: ghat_at(z[0], z[1], spec).ghat.matrix(), q, h)
        worst["ghat_grad"] = max(worst["ghat_grad"], rel(geo.ghat_grad, fd_g))
        fd_k = fd4(lambda z: kinetic_metric(z, plant).matrix(), q, h)
        oracle_g = christoffel_from_partials(kinetic_metric(q, plant).matrix(), fd_k)
        worst["christoffel_g"] = max(worst["christoffel_g"], rel(christoffel_g(q, plant), oracle_g))
        oracle_hat = christoffel_from_partials(geo.ghat.matrix(), fd_g)
        worst["christoffel_ghat"] = max(worst["christoffel_ghat"], rel(christoffel_ghat(q[0], q[1], spec), oracle_hat))
    top = max(worst.values())
    report(8, "derivative oracles", top < 1e-5, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_9_determinism(tmp_path):
    text = DEFAULT_CONFIG.read_text()
    text = text.replace("t_final = 30.0", "t_final = 5.0").replace("workers = 1", "workers = 2")
    cfg = tmp_path / "run.toml"
    cfg.write_text(text)
    files = {}
    codes = []
    for run in ("first", "second"):
        out = tmp_path / run
        codes.append(main(["simulate", "--config", str(cfg), "--out", str(out)]))
        codes.append(main(["basin", "--config", str(cfg), "--out", str(out)]))
        files[run] = {name: (out / name).read_bytes() for name in ("trajectory.csv", "basin.csv", "basin.txt")}
    same = all(files["first"][k] == files["second"][k] for k in files["first"])
    ok = same and codes == [0, 0, 0, 0]
    report(9, "determinism", ok, f"exit codes {codes}, byte-identical {same}")


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(pytest.main([__file__, "-q", "-s"]))
