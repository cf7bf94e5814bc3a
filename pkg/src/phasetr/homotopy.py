"""Homotopy trust-region driver.

Each iteration linearizes the reduced objective at the current control,
solves a trust-region subproblem with the Ginzburg-Landau energy at the
current ``eps`` and accepts the trial point on sufficient decrease.  When the
radius falls below the floor, the driver first retries with the nonconvex
subproblem and then reduces ``eps`` by the factor ``r`` while halving the
floor and ``kappa``.  The run stops once ``eps`` is reduced after a phase
without any accepted step.
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .mesh import write_field
from .objective import GLParams, interface_diagnostics
from .subproblem import SubproblemSpec, solve_convex, solve_nonconvex

__all__ = [
    "ConfigurationError",
    "HomotopyParams",
    "TrustRegionState",
    "IterationRecord",
    "PhaseSummary",
    "RunResult",
    "CSV_COLUMNS",
    "ared",
    "initial_state",
    "step",
    "run",
    "instationarity_surrogate",
    "write_iterations_csv",
    "write_timings_csv",
]

MODES = ("convex_only", "with_nonconvex")


class ConfigurationError(ValueError):
    """Algorithm parameters violate the input conditions."""


@dataclass(frozen=True)
class HomotopyParams:
    delta0: float = 1.5
    eps0: float = 1.0
    r: float = 5.0
    rho: float = 1e-4
    kappa0: float = 1e-8
    delta_floor0: float = 1.14e-5
    max_iter: int = 1000
    max_wall_time: float = math.inf
    mode: str = "convex_only"
    subproblem_tol: float = 1e-9
    subproblem_max_iter: int = 5000
    n_starts: int = 4
    seed: int = 0
    pred_tol: float = 1e-14

    def __post_init__(self):
        checks = [
            (self.delta0 > 0, "delta0 > 0"),
            (self.eps0 > 0, "eps0 > 0"),
            (self.r > 4, "r > 4"),
            (0 < self.rho < 1, "0 < rho < 1"),
            (0 < self.kappa0 < self.rho, "0 < kappa0 < rho"),
            (0 < self.delta_floor0 < self.delta0, "0 < delta_floor0 < delta0"),
            (self.max_iter >= 1, "max_iter >= 1"),
            (self.max_wall_time > 0, "max_wall_time > 0"),
            (self.mode in MODES, f"mode in {MODES}"),
            (self.subproblem_tol > 0, "subproblem_tol > 0"),
            (self.n_starts >= 2, "n_starts >= 2"),
            (self.pred_tol >= 0, "pred_tol >= 0"),
        ]
        for ok, rule in checks:
            if not ok:
                raise ConfigurationError(f"algorithm parameters violate {rule}")


@dataclass
class TrustRegionState:
    n: int
    w: np.ndarray
    delta: float
    delta_floor: float
    eps: float
    kappa: float
    cvxflag: int
    grad_cache: np.ndarray
    reductions: int = 0
    j_value: float = 0.0
    gl_energy: float = 0.0
    total: float = 0.0
    accepted_in_phase: int = 0
    memo: dict = field(default_factory=dict, repr=False)


@dataclass(frozen=True)
class IterationRecord:
    n: int
    eps: float
    delta: float
    cvxflag: int
    accepted: bool
    j_value: float
    gl_energy: float
    total: float
    ared: float
    pred: float
    ratio: float
    nonbinary_fraction: float
    wall_time: float


CSV_COLUMNS = [f for f in IterationRecord.__dataclass_fields__ if f != "wall_time"]


@dataclass(frozen=True)
class PhaseSummary:
    eps: float
    iterations: int
    accepted: int
    pred_initial: float
    pred_final: float
    nonbinary_fraction: float
    total: float


@dataclass
class RunResult:
    w: np.ndarray
    records: list
    phases: list
    stop_reason: str
    state: TrustRegionState


def ared(problem, w, v, eps: float) -> float:
    """Actual reduction ``total(w) - total(v)`` of ``j + gamma E_eps``."""
    return problem.total(w, eps) - problem.total(v, eps)


def _evaluate(problem, state: TrustRegionState):
    ev = problem.evaluate(state.w, state.eps)
    state.j_value, state.gl_energy, state.total = ev.j_value, ev.gl_energy, ev.total


def initial_state(problem, w0, params: HomotopyParams) -> TrustRegionState:
    w = np.asarray(w0, dtype=float).copy()
    if w.shape != (problem.mesh.n_nodes,):
        raise ConfigurationError(f"initial control has shape {w.shape}, expected ({problem.mesh.n_nodes},)")
    if w.min() < 0.0 or w.max() > 1.0:
        raise ConfigurationError("initial control is not in [0, 1]")
    state = TrustRegionState(
        n=0, w=w, delta=params.delta0, delta_floor=params.delta_floor0, eps=params.eps0,
        kappa=params.kappa0, cvxflag=1, grad_cache=problem.gradient(w),
    )
    _evaluate(problem, state)
    return state


def _subproblem(problem, state: TrustRegionState, params: HomotopyParams, variant: str, delta: float):
    key = (variant, delta)
    if key not in state.memo:
        spec = SubproblemSpec(
            w_bar=state.w, g=state.grad_cache, delta=delta,
            gl=GLParams(state.eps, problem.gamma), stiffness=problem.stiffness,
            weights=problem.weights, variant=variant,
        )
        if variant == "convex":
            res = solve_convex(spec, tol=params.subproblem_tol, max_iter=params.subproblem_max_iter)
        else:
            res = solve_nonconvex(spec, tol=params.subproblem_tol, n_starts=params.n_starts,
                                  max_iter=params.subproblem_max_iter, seed=params.seed)
        state.memo[key] = [res, None]
    return state.memo[key]


def instationarity_surrogate(problem, state: TrustRegionState, params: HomotopyParams) -> float:
    """Predicted reduction of the convex subproblem at the reset radius ``delta0``."""
    return 0.0 - _subproblem(problem, state, params, "convex", params.delta0)[0].objective_value


def step(problem, state: TrustRegionState, params: HomotopyParams, clock_start: float | None = None):
    """One iteration; mutates ``state`` and returns ``(state, record, eps_reduced)``."""
    t0 = time.perf_counter() if clock_start is None else clock_start
    use_convex = state.cvxflag == 1 or params.mode == "convex_only"
    variant = "convex" if use_convex else "nonconvex"
    delta, eps, cvxflag = state.delta, state.eps, state.cvxflag
    entry = _subproblem(problem, state, params, variant, delta)
    res = entry[0]
    pred = 0.0 - res.objective_value

    accepted = False
    a = math.nan
    ratio = math.nan
    if pred > params.pred_tol:
        if entry[1] is None:
            entry[1] = problem.total(res.w_star, eps)
        a = state.total - entry[1]
        ratio = a / pred
        accepted = ratio >= params.rho and a > state.kappa * state.delta_floor

    if accepted:
        state.w = res.w_star.copy()
        state.total = entry[1]
        state.grad_cache = problem.gradient(state.w)
        _evaluate(problem, state)
        state.memo.clear()
        state.delta = min(params.delta0, 2.0 * delta)
        state.cvxflag = 1
        state.accepted_in_phase += 1
    else:
        state.delta = 0.5 * delta

    record = IterationRecord(
        n=state.n, eps=eps, delta=delta, cvxflag=cvxflag, accepted=accepted,
        j_value=state.j_value, gl_energy=state.gl_energy, total=state.total,
        ared=a, pred=pred, ratio=ratio,
        nonbinary_fraction=interface_diagnostics(state.w, problem.mesh)["nonbinary_fraction"],
        wall_time=time.perf_counter() - t0,
    )

    eps_reduced = False
    if state.delta < state.delta_floor:
        if state.cvxflag == 1:
            state.cvxflag = 0
        else:
            state.eps /= params.r
            state.delta_floor *= 0.5
            state.kappa *= 0.5
            state.reductions += 1
            state.cvxflag = 1
            state.memo.clear()
            _evaluate(problem, state)
            eps_reduced = True
        state.delta = params.delta0
    state.n += 1
    return state, record, eps_reduced


def _postmortem(directory, problem, state: TrustRegionState, exc: BaseException):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_field(directory / "w_postmortem.field", problem.mesh, state.w)
    info = {k: v for k, v in asdict(replace(state, memo={})).items()
            if k not in ("w", "grad_cache", "memo")}
    info["error"] = f"{type(exc).__name__}: {exc}"
    (directory / "postmortem.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")


def run(problem, w0, params: HomotopyParams, on_accept=None, postmortem_dir=None,
        log=None) -> RunResult:
    """Run the homotopy trust-region method from ``w0``.

    ``on_accept(record, state)`` is called after every accepted step.  On any
    failure inside a step the current state is written to ``postmortem_dir``
    (if given) before the exception propagates.
    """
    state = initial_state(problem, w0, params)
    records, phases = [], []
    start = time.perf_counter()
    phase_start_n = 0
    pred_initial = instationarity_surrogate(problem, state, params)
    last_accepted_w = None
    stop_reason = "max_iter"

    def close_phase(eps, total):
        # phases without an accepted step have no last accepted iterate
        nb = math.nan
        if last_accepted_w is not None:
            nb = interface_diagnostics(last_accepted_w, problem.mesh)["nonbinary_fraction"]
        phases.append(PhaseSummary(
            eps=eps, iterations=len(records) - phase_start_n,
            accepted=sum(r.accepted for r in records[phase_start_n:]),
            pred_initial=pred_initial, pred_final=pred_final,
            nonbinary_fraction=nb, total=total,
        ))

    while True:
        if len(records) >= params.max_iter:
            stop_reason = "max_iter"
            break
        if time.perf_counter() - start > params.max_wall_time:
            stop_reason = "wall_time"
            break
        eps_before, had_accepts = state.eps, state.accepted_in_phase
        try:
            iter_start = time.perf_counter()
            # the final-phase surrogate must be taken at the old eps
            w_before = state.w
            state, record, eps_reduced = step(problem, state, params, iter_start)
        except Exception as exc:
            if postmortem_dir is not None:
                _postmortem(postmortem_dir, problem, state, exc)
            raise
        records.append(record)
        if record.accepted:
            last_accepted_w = state.w.copy()
            if on_accept is not None:
                on_accept(record, state)
        if log is not None:
            log(record)
        if eps_reduced:
            pred_final = _phase_final_surrogate(problem, w_before, eps_before, state, params)
            close_phase(eps_before, records[-1].total)
            phase_start_n = len(records)
            if had_accepts == 0:
                stop_reason = "no_progress"
                break
            state.accepted_in_phase = 0
            last_accepted_w = None
            pred_initial = instationarity_surrogate(problem, state, params)

    if stop_reason != "no_progress":
        pred_final = instationarity_surrogate(problem, state, params)
        close_phase(state.eps, state.total)
    return RunResult(state.w, records, phases, stop_reason, state)


def _phase_final_surrogate(problem, w, eps, state: TrustRegionState, params: HomotopyParams) -> float:
    tmp = replace(state, w=w, eps=eps, memo={})
    return instationarity_surrogate(problem, tmp, params)


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(value)
    return repr(float(value))


def write_iterations_csv(path, records) -> Path:
    """Iteration log with a fixed column order; run-to-run reproducible."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in records:
            writer.writerow([_fmt(getattr(rec, c)) for c in CSV_COLUMNS])
    return path


def write_timings_csv(path, records) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "wall_time"])
        for rec in records:
            writer.writerow([rec.n, f"{rec.wall_time:.6f}"])
    return path
