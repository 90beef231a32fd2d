from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from ballbeam_matching import FamilySpec, GeneratorError, GeneratorSpec, PlantParams
from ballbeam_matching.config import load_config

ROOT = Path(__file__).resolve().parents[1]
DEFAULT_CONFIG = ROOT / "configs" / "default.toml"


def random_plant(rng: np.random.Generator) -> PlantParams:
    return PlantParams(
        a3=rng.uniform(1.0, 2.0),
        a4=rng.uniform(1.0, 3.0),
        a5=rng.uniform(0.5, 1.5),
        a6=rng.uniform(0.0, 0.2),
        a7=rng.uniform(0.0, 0.1),
        rho=rng.uniform(0.15, 0.5),
        s_max=1.0,
    )


def random_spec(rng: np.random.Generator, plant: PlantParams | None = None) -> FamilySpec:
    """A random admissible design with ``mu1(0) h(0) > 1`` (definite ``ghat`` near equilibrium)."""
    plant = plant or random_plant(rng)
    while True:
        h0 = rng.uniform(0.5, 2.0)
        c = rng.uniform(1.05 / h0, 3.0 / h0)
        gen = GeneratorSpec(
            mu1=(c, rng.uniform(0.5, 2.0), rng.uniform(-0.3, 0.3), rng.uniform(0.0, 0.5)),
            h=(h0, rng.uniform(-0.01, 0.01)),
            w=(rng.uniform(-0.1, 0.1), rng.uniform(-0.2, 0.2), rng.uniform(0.5, 2.0), rng.uniform(-0.2, 0.2)),
            s0=rng.uniform(0.3, 0.7),
            chat_gains=(rng.uniform(-1, 1), rng.uniform(-1, 1)),
        )
        try:
            return FamilySpec(plant, gen)
        except GeneratorError:
            continue


def fd4(fun, x, h):
    """Fourth-order central differences; ``out[k]`` is the partial of ``fun`` along coordinate ``k``."""
    x = np.asarray(x, dtype=float)
    out = []
    for k in range(len(x)):
        e = np.zeros_like(x)
        e[k] = h
        out.append((fun(x - 2 * e) - 8 * fun(x - e) + 8 * fun(x + e) - fun(x + 2 * e)) / (12 * h))
    return np.array(out)


def christoffel_from_partials(metric: np.ndarray, partials: np.ndarray) -> np.ndarray:
    """Textbook loop form, ``partials[l, i, j] = d_l metric_ij``."""
    inv = np.linalg.inv(metric)
    out = np.zeros((2, 2, 2))
    for k in range(2):
        for i in range(2):
            for j in range(2):
                out[k, i, j] = 0.5 * sum(
                    inv[k, l] * (partials[i, j, l] + partials[j, i, l] - partials[l, i, j]) for l in range(2)
                )
    return out


@pytest.fixture(scope="session")
def default_config():
    return load_config(DEFAULT_CONFIG)


@pytest.fixture(scope="session")
def fitted_spec(default_config) -> FamilySpec:
    return default_config.spec


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion, including ones that errored before reporting."""
    import test_acceptance

    reported = {line.split(" (")[0].split()[-1] for line in test_acceptance.RESULTS}
    lines = list(test_acceptance.RESULTS)
    for report in terminalreporter.stats.get("failed", []):
        name = report.nodeid.rsplit("::", 1)[-1]
        if name.startswith("test_criterion_") and name.split("_")[2] not in reported:
            lines.append(f"FAIL criterion {name.split('_')[2]}: {report.longrepr.reprcrash.message}")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("criterion ")[1].split()[0].rstrip(":"))):
            terminalreporter.write_line(line)
