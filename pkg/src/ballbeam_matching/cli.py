"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 simulation ended by beam exit
or a singular configuration (also: analysis impossible for the chosen law),
3 verification breach, 4 gain fit did not converge.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .analysis import basin_estimate, fit_linear_gains, linearize, stability_conditions
from .config import LAW_NAMES, RunConfig, load_config
from .errors import ConfigError, FitError, NonEquilibriumError
from .plant import State
from .sim import Termination, simulate
from .verify import run_verify

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SIM = 2
EXIT_VERIFY = 3
EXIT_FIT = 4

_PLOT_SCRIPT = '''"""Plot a trajectory CSV written by the simulate command."""
import csv
import sys

import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else "trajectory.csv"
with open(path) as fh:
    rows = [r for r in csv.DictReader(line for line in fh if not line.startswith("#"))]
cols = {k: [float(r[k]) for r in rows] for k in rows[0]}
fig, axes = plt.subplots(3, 1, sharex=True, figsize=(7, 8))
for name in ("s", "theta"):
    axes[0].plot(cols["t"], cols[name], label=name)
for name in ("u", "u_g", "u_V", "u_c"):
    axes[1].plot(cols["t"], cols[name], label=name)
axes[2].plot(cols["t"], cols["H_hat"], label="H_hat")
for ax in axes:
    ax.legend()
axes[-1].set_xlabel("t")
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=120)
'''


def _parse_x0(text: str) -> State:
    parts = text.split(",")
    if len(parts) != 4:
        raise ConfigError(f"--x0 needs four comma-separated numbers, got {text!r}")
    try:
        return State(*(float(p) for p in parts))
    except ValueError as exc:
        raise ConfigError(f"--x0: {exc}") from exc


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _x0(args, cfg: RunConfig) -> State:
    if args.x0 is not None:
        return _parse_x0(args.x0)
    if cfg.x0 is not None:
        return cfg.x0
    return State(cfg.generator.s0 + 0.1, 0.05, 0.0, 0.0)


def cmd_simulate(args, cfg: RunConfig) -> int:
    law = cfg.resolve_law(args.law)
    traj = simulate(_x0(args, cfg), cfg.spec, cfg.sim, law)
    path = _write(args.out, "trajectory.csv", traj.to_csv())
    if args.emit_plots:
        _write(args.out, "plot_trajectory.py", _PLOT_SCRIPT)
    final = traj.x[-1]
    print(f"termination: {traj.termination.value}")
    print(f"t_end: {traj.t[-1]:.6g}")
    print("final_state: " + ", ".join(f"{v:.6g}" for v in final))
    print(f"wrote {path}")
    return EXIT_OK if traj.termination is Termination.COMPLETED else EXIT_SIM


def cmd_verify(args, cfg: RunConfig) -> int:
    x0 = _parse_x0(args.x0) if args.x0 is not None else cfg.x0
    report = run_verify(cfg.spec, cfg.verify, x0)
    text = report.to_text()
    _write(args.out, "verify.txt", text)
    sys.stdout.write(text)
    for failure in report.failures():
        print(f"breach: {failure.line()}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_stability(args, cfg: RunConfig) -> int:
    report = stability_conditions(cfg.spec)
    _write(args.out, "stability.txt", report.to_text())
    _write(args.out, "stability.csv", report.to_csv())
    sys.stdout.write(report.to_text())
    return EXIT_OK


def cmd_linearize(args, cfg: RunConfig) -> int:
    law = cfg.resolve_law(args.law)
    try:
        result = linearize(cfg.spec, law)
    except NonEquilibriumError as exc:
        print(f"error: not an equilibrium of the chosen law: {exc}", file=sys.stderr)
        return EXIT_SIM
    _write(args.out, "linearization.txt", result.to_text())
    _write(args.out, "linearization.csv", result.to_csv())
    sys.stdout.write(result.to_text())
    return EXIT_OK


def _generator_block(spec) -> str:
    gen = spec.gen

    def arr(values):
        return "[" + ", ".join(f"{v:.17g}" for v in values) + "]"

    return "\n".join(
        [
            "[generator]",
            f"mu1 = {arr(gen.mu1)}",
            f"h = {arr(gen.h)}",
            f"w = {arr(gen.w)}",
            f"s0 = {gen.s0:.17g}",
            f"chat_gains = {arr(gen.chat_gains)}",
        ]
    )


def cmd_fit(args, cfg: RunConfig) -> int:
    if cfg.linear is None:
        raise ConfigError("fit needs a [linear] table with the target gains Kbp, Kap, Kbd, Kad")
    try:
        fitted = fit_linear_gains(cfg.linear, cfg.spec, tol=cfg.fit_tol, max_iter=cfg.fit_max_iter)
    except FitError as exc:
        print(f"error: gain fit did not converge: {exc}", file=sys.stderr)
        return EXIT_FIT
    lin = linearize(fitted)
    achieved = lin.gains_equivalent
    target = cfg.linear
    names = ("Kbp", "Kap", "Kbd", "Kad")
    text = _generator_block(fitted) + "\n\n" + lin.to_text()
    text += f"gain_error = {float(np.linalg.norm(achieved.feedback() - target.feedback())):.3e}\n"
    csv_rows = ["gain,target,achieved"]
    csv_rows += [f"{n},{getattr(target, n):.17g},{getattr(achieved, n):.17g}" for n in names]
    _write(args.out, "fit.txt", text)
    _write(args.out, "fit.csv", "\n".join(csv_rows) + "\n")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_basin(args, cfg: RunConfig) -> int:
    opts = cfg.basin
    law = cfg.resolve_law(args.law or opts.law)
    result = basin_estimate(cfg.spec, law, opts.axes, cfg.sim, opts.capture_radius, workers=opts.workers)
    _write(args.out, "basin.csv", result.to_csv())
    counts: dict[str, int] = {}
    for o in result.outcomes:
        counts[o.termination.value] = counts.get(o.termination.value, 0) + 1
    lines = ["[basin]", f"points = {len(result.outcomes)}", f"captured_fraction = {result.fraction:.17g}"]
    lines += [f"{k} = {counts.get(k, 0)}" for k in (t.value for t in Termination)]
    text = "\n".join(lines) + "\n"
    _write(args.out, "basin.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "stability": cmd_stability,
    "linearize": cmd_linearize,
    "fit": cmd_fit,
    "basin": cmd_basin,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ballbeam-matching", description="Matching controllers for the ball and beam.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, type=Path, help="TOML run configuration")
        p.add_argument("--out", type=Path, default=Path("."), help="directory for reports (default: cwd)")
        if name in ("simulate", "linearize", "basin"):
            p.add_argument("--law", choices=LAW_NAMES, default=None, help="overrides the configured law")
        if name in ("simulate", "verify"):
            p.add_argument("--x0", default=None, help="initial state s,theta,s_dot,theta_dot")
        if name == "simulate":
            p.add_argument("--emit-plots", action="store_true", help="also write a matplotlib plotting script")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
