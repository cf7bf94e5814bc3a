"""Command line entry point: ``phasetr {run,check-gradient,validate} CONFIG``.

Exit codes are 0 on success, 1 on configuration errors and 2 on runtime
failures.  ``PHASETR_OUTPUT_DIR`` overrides the configured output directory.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigurationError, RunConfig, build_problem, load_config, preset_path, serialize_config
from .homotopy import run, write_iterations_csv, write_timings_csv
from .mesh import write_field
from .problems import gradient_check

__all__ = ["main", "run_experiment", "check_gradient", "write_summary", "OUTPUT_ENV"]

OUTPUT_ENV = "PHASETR_OUTPUT_DIR"
GRADIENT_THRESHOLDS = {"elliptic": 1e-6, "wave": 1e-3}

log = logging.getLogger("phasetr")


def _output_dir(cfg: RunConfig, override=None) -> Path:
    out = override or os.environ.get(OUTPUT_ENV) or cfg.output.dir
    return Path(out)


def write_summary(path, result, cfg: RunConfig) -> Path:
    """Per-phase table: eps, iterations, accepted, initial/final surrogate, nonbinary fraction."""
    lines = [
        f"problem: {cfg.problem}",
        f"mesh: {cfg.mesh.nx}x{cfg.mesh.ny}",
        f"iterations: {len(result.records)}",
        f"accepted: {sum(r.accepted for r in result.records)}",
        f"stop_reason: {result.stop_reason}",
        "",
        f"{'eps':>12} {'iterations':>10} {'accepted':>8} {'pred_initial':>13} "
        f"{'pred_final':>13} {'nonbinary':>10} {'total':>14}",
    ]
    for ph in result.phases:
        lines.append(
            f"{ph.eps:12.4e} {ph.iterations:10d} {ph.accepted:8d} {ph.pred_initial:13.4e} "
            f"{ph.pred_final:13.4e} {ph.nonbinary_fraction:10.4f} {ph.total:14.6e}"
        )
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def run_experiment(cfg: RunConfig, output_dir=None) -> int:
    """Run the homotopy method for ``cfg`` and write all outputs; returns the exit status."""
    out = _output_dir(cfg, output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.cfg").write_text(serialize_config(cfg))
    problem, w0, params = build_problem(cfg)
    mesh = problem.mesh

    def on_accept(record, state):
        if cfg.output.dump_every_accept:
            write_field(out / f"w_accept_{record.n}.field", mesh, state.w)

    def progress(record):
        log.info("n=%d eps=%.3g delta=%.3g pred=%.3e ared=%.3e %s", record.n, record.eps,
                 record.delta, record.pred, record.ared, "accepted" if record.accepted else "rejected")

    result = run(problem, w0, params, on_accept=on_accept, postmortem_dir=out, log=progress)
    write_iterations_csv(out / "iterations.csv", result.records)
    write_timings_csv(out / "timings.csv", result.records)
    write_summary(out / "summary.txt", result, cfg)
    write_field(out / "w_final.field", mesh, result.w)
    return 0


def check_gradient(cfg: RunConfig, n_directions: int = 5, h: float | None = None) -> float:
    problem, _, _ = build_problem(cfg)
    rng = np.random.default_rng(cfg.seed)
    w = rng.uniform(0.25, 0.75, problem.mesh.n_nodes)
    if h is None:
        h = 1e-3 if cfg.problem == "elliptic" else 1e-4
    errors = gradient_check(problem, w, n_directions, h=h, seed=cfg.seed)
    return float(errors.max())


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phasetr", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log every iteration")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the homotopy trust-region experiment")
    p_run.add_argument("config", help="configuration file or bundled preset name")
    p_run.add_argument("--output-dir", default=None)
    p_run.add_argument("--seed", type=int, default=None, help="override the configured seed")

    p_grad = sub.add_parser("check-gradient", help="compare adjoint gradient with finite differences")
    p_grad.add_argument("config")
    p_grad.add_argument("--directions", type=int, default=5)
    p_grad.add_argument("--step", type=float, default=None)

    p_val = sub.add_parser("validate", help="parse and validate a configuration")
    p_val.add_argument("config")
    return parser


def _resolve(name: str) -> Path:
    path = Path(name)
    if not path.exists() and not path.suffix:
        try:
            return preset_path(name)
        except ConfigurationError:
            pass
    return path


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(_resolve(args.config))
        if getattr(args, "seed", None) is not None:
            cfg = replace(cfg, seed=args.seed)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1

    if args.command == "validate":
        print(f"{args.config}: ok ({cfg.problem}, {cfg.mesh.nx}x{cfg.mesh.ny})")
        return 0
    try:
        if args.command == "run":
            status = run_experiment(cfg, args.output_dir)
            print(f"results written to {_output_dir(cfg, args.output_dir)}")
            return status
        err = check_gradient(cfg, args.directions, args.step)
        limit = GRADIENT_THRESHOLDS[cfg.problem]
        print(f"max relative error {err:.3e} (threshold {limit:.0e}): {'PASS' if err <= limit else 'FAIL'}")
        return 0 if err <= limit else 2
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # any module failure is a runtime error
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
