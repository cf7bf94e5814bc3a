"""INI run configurations: loading, validation, serialization and problem setup.

Sections are ``[problem] [mesh] [time] [physics] [objective] [source]
[algorithm] [solver] [output]``.  Physics and algorithm keys are mandatory;
solver and output keys fall back to defaults.  Unknown sections or keys are
rejected.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .elliptic import EllipticConfig, solve_elliptic
from .homotopy import ConfigurationError, HomotopyParams
from .linsolve import SolverOptions
from .mesh import MeshCG1, build_mesh
from .problems import EllipticProblem, WaveProblem
from .wave import SourceSpec, WaveConfig

__all__ = [
    "ConfigParseError",
    "ConfigurationError",
    "RunConfig",
    "load_config",
    "parse_config",
    "serialize_config",
    "build_problem",
    "preset_path",
    "PRESETS",
]

PRESETS = ("paper_wave", "desk_wave", "desk_elliptic")


class ConfigParseError(ConfigurationError):
    """Malformed configuration text."""


@dataclass(frozen=True)
class MeshSection:
    bounds: tuple = (-1.0, 1.0, -1.0, 2.0)
    nx: int = 32
    ny: int = 32


@dataclass(frozen=True)
class TimeSection:
    T: float = 5.0
    n_steps: int = 128


@dataclass(frozen=True)
class PhysicsSection:
    c_sq: float | None = None
    b: float | None = None
    sigma: float | None = None
    nu: float | None = None
    B: str | None = None
    radius: float | None = None


@dataclass(frozen=True)
class ObjectiveSection:
    gamma: float = 7.5e-6
    focal_region: str = "disk"
    focal_center: tuple = (0.0, 1.25)
    focal_radius: float = 0.3
    target: str = "gaussian"
    target_amplitude: float = 1.0
    target_center: tuple = (0.0, 1.25)
    target_width: float = 0.15


@dataclass(frozen=True)
class AlgorithmSection:
    delta0: float
    eps0: float
    r: float
    rho: float
    kappa0: float
    delta_floor0: float
    w0_value: float
    mode: str
    max_iter: int


@dataclass(frozen=True)
class SolverSection:
    tol: float = 1e-10
    max_iter: int = 10000
    subproblem_tol: float = 1e-9
    subproblem_max_iter: int = 5000
    n_starts: int = 4
    pred_tol: float = 1e-14
    max_wall_time: float = math.inf


@dataclass(frozen=True)
class OutputSection:
    dir: str = "output"
    dump_every_accept: bool = True


@dataclass(frozen=True)
class RunConfig:
    problem: str
    mesh: MeshSection
    physics: PhysicsSection
    objective: ObjectiveSection
    algorithm: AlgorithmSection
    time: TimeSection | None = None
    source: SourceSpec | None = None
    solver: SolverSection = field(default_factory=SolverSection)
    output: OutputSection = field(default_factory=OutputSection)
    seed: int = 0

    def homotopy_params(self) -> HomotopyParams:
        a, s = self.algorithm, self.solver
        return HomotopyParams(
            delta0=a.delta0, eps0=a.eps0, r=a.r, rho=a.rho, kappa0=a.kappa0,
            delta_floor0=a.delta_floor0, max_iter=a.max_iter, max_wall_time=s.max_wall_time,
            mode=a.mode, subproblem_tol=s.subproblem_tol, subproblem_max_iter=s.subproblem_max_iter,
            n_starts=s.n_starts, seed=self.seed, pred_tol=s.pred_tol,
        )

    def solver_options(self) -> SolverOptions:
        return SolverOptions(tol=self.solver.tol, max_iter=self.solver.max_iter)


_WAVE_PHYSICS = ("c_sq", "b", "sigma")
_ELLIPTIC_PHYSICS = ("nu", "B")


def _floats(n):
    def parse(text):
        parts = text.replace(",", " ").split()
        if len(parts) != n:
            raise ValueError(f"expected {n} numbers, got {len(parts)}")
        return tuple(float(p) for p in parts)
    return parse


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text):
    value = float(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


_PARSERS = {
    "problem": {"type": str, "seed": _int},
    "mesh": {"bounds": _floats(4), "nx": _int, "ny": _int},
    "time": {"T": float, "n_steps": _int},
    "physics": {"c_sq": float, "b": float, "sigma": float, "nu": float, "B": str, "radius": float},
    "objective": {
        "gamma": float, "focal_region": str, "focal_center": _floats(2), "focal_radius": float,
        "target": str, "target_amplitude": float, "target_center": _floats(2), "target_width": float,
    },
    "source": {"amplitude": float, "center": _floats(2), "spatial_width": float, "f0": float, "t0": float},
    "algorithm": {
        "delta0": float, "eps0": float, "r": float, "rho": float, "kappa0": float,
        "delta_floor0": float, "w0_value": float, "mode": str, "max_iter": _int,
    },
    "solver": {
        "tol": float, "max_iter": _int, "subproblem_tol": float, "subproblem_max_iter": _int,
        "n_starts": _int, "pred_tol": float, "max_wall_time": float,
    },
    "output": {"dir": str, "dump_every_accept": _bool},
}


def _read(text: str, source: str) -> configparser.ConfigParser:
    if not text.strip():
        raise ConfigParseError(f"{source}: line 1: empty configuration")
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigParseError(f"{source}: line {exc.lineno}: key outside of any section") from exc
    except configparser.ParsingError as exc:
        lines = ", ".join(str(lineno) for lineno, _ in exc.errors)
        raise ConfigParseError(f"{source}: line {lines}: cannot parse") from exc
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ConfigParseError(f"{source}: line {exc.lineno}: {exc.message}") from exc
    return parser


def _section(parser, name, source) -> dict:
    if not parser.has_section(name):
        return {}
    known = _PARSERS[name]
    out = {}
    for key, raw in parser.items(name):
        if key not in known:
            raise ConfigurationError(f"{source}: unknown key {key!r} in [{name}]")
        try:
            out[key] = known[key](raw)
        except ValueError as exc:
            raise ConfigurationError(f"{source}: [{name}] {key}: {exc}") from exc
    return out


def _require(values: dict, keys, name, source):
    missing = [k for k in keys if k not in values]
    if missing:
        raise ConfigurationError(f"{source}: [{name}] missing mandatory keys: {', '.join(missing)}")


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    parser = _read(text, source)
    unknown = [s for s in parser.sections() if s not in _PARSERS]
    if unknown:
        raise ConfigurationError(f"{source}: unknown section [{unknown[0]}]")
    sec = {name: _section(parser, name, source) for name in _PARSERS}

    _require(sec["problem"], ["type"], "problem", source)
    kind = sec["problem"]["type"]
    if kind not in ("wave", "elliptic"):
        raise ConfigurationError(f"{source}: [problem] type must be 'wave' or 'elliptic', got {kind!r}")
    seed = sec["problem"].get("seed", 0)

    physics = sec["physics"]
    if kind == "wave":
        _require(physics, _WAVE_PHYSICS, "physics", source)
        _require(sec["time"], ["T", "n_steps"], "time", source)
        extra = set(physics) - set(_WAVE_PHYSICS)
    else:
        _require(physics, _ELLIPTIC_PHYSICS, "physics", source)
        extra = set(physics) - {"nu", "B", "radius"}
        for name in ("time", "source"):
            if sec[name]:
                raise ConfigurationError(f"{source}: [{name}] is only valid for wave problems")
    if extra:
        raise ConfigurationError(f"{source}: [physics] keys {sorted(extra)} do not apply to {kind} problems")

    _require(sec["algorithm"], [f.name for f in fields(AlgorithmSection)], "algorithm", source)
    _require(sec["objective"], ["gamma"], "objective", source)

    try:
        cfg = RunConfig(
            problem=kind,
            seed=seed,
            mesh=MeshSection(**sec["mesh"]),
            time=TimeSection(**sec["time"]) if kind == "wave" else None,
            physics=PhysicsSection(**physics),
            objective=ObjectiveSection(**sec["objective"]),
            source=SourceSpec(**sec["source"]) if kind == "wave" else None,
            algorithm=AlgorithmSection(**sec["algorithm"]),
            solver=SolverSection(**sec["solver"]),
            output=OutputSection(**sec["output"]),
        )
        validate(cfg)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc
    except ValueError as exc:
        raise ConfigurationError(f"{source}: {exc}") from exc
    return cfg


def validate(cfg: RunConfig) -> None:
    """Check every downstream constraint without building the problem."""
    m = cfg.mesh
    if not (m.bounds[0] < m.bounds[1] and m.bounds[2] < m.bounds[3]):
        raise ConfigurationError("mesh bounds need x_min < x_max and y_min < y_max")
    if m.nx < 1 or m.ny < 1:
        raise ConfigurationError("mesh needs nx >= 1 and ny >= 1")
    cfg.homotopy_params()
    cfg.solver_options()
    if not 0.0 <= cfg.algorithm.w0_value <= 1.0:
        raise ConfigurationError("w0_value must lie in [0, 1]")
    o = cfg.objective
    if not o.gamma > 0:
        raise ConfigurationError("gamma must be positive")
    if o.focal_region not in ("disk", "all"):
        raise ConfigurationError(f"focal_region must be 'disk' or 'all', got {o.focal_region!r}")
    if not o.focal_radius > 0 or not o.target_width > 0:
        raise ConfigurationError("focal_radius and target_width must be positive")
    if cfg.problem == "wave":
        if o.target != "gaussian":
            raise ConfigurationError(f"wave problems support target 'gaussian', got {o.target!r}")
        _wave_config(cfg)
    else:
        if o.target != "disk_state":
            raise ConfigurationError(f"elliptic problems support target 'disk_state', got {o.target!r}")
        _elliptic_config(cfg)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return " ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: RunConfig) -> str:
    """INI text that :func:`parse_config` maps back to an equal configuration."""
    blocks = [("problem", {"type": cfg.problem, "seed": cfg.seed})]
    for name in ("mesh", "time", "physics", "objective", "source", "algorithm", "solver", "output"):
        section = getattr(cfg, name)
        if section is None:
            continue
        values = {f.name: getattr(section, f.name) for f in fields(section)}
        blocks.append((name, {k: v for k, v in values.items() if v is not None}))
    out = []
    for name, values in blocks:
        out.append(f"[{name}]")
        out.extend(f"{k} = {_fmt(v)}" for k, v in values.items())
        out.append("")
    return "\n".join(out)


def preset_path(name: str) -> Path:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; choose from {PRESETS}")
    return Path(__file__).parent / "presets" / f"{name}.cfg"


def _wave_config(cfg: RunConfig) -> WaveConfig:
    p = cfg.physics
    return WaveConfig(c_sq=p.c_sq, b=p.b, sigma=p.sigma, T=cfg.time.T, n_steps=cfg.time.n_steps,
                      source=cfg.source)


def _elliptic_config(cfg: RunConfig) -> EllipticConfig:
    p = cfg.physics
    return EllipticConfig(nu=p.nu, B=p.B, radius=p.radius)


def _disk(mesh: MeshCG1, center, radius) -> np.ndarray:
    dist = np.linalg.norm(mesh.nodes - np.asarray(center, dtype=float), axis=1)
    return (dist <= radius).astype(float)


def build_problem(cfg: RunConfig):
    """Return ``(problem, w0, params)`` for a validated configuration."""
    mesh = build_mesh(cfg.mesh.bounds, cfg.mesh.nx, cfg.mesh.ny)
    o = cfg.objective
    mask = None if o.focal_region == "all" else _disk(mesh, o.focal_center, o.focal_radius)
    if cfg.problem == "wave":
        dx = mesh.nodes - np.asarray(o.target_center, dtype=float)
        u_d = o.target_amplitude * np.exp(-(dx * dx).sum(axis=1) / (2.0 * o.target_width**2))
        if mask is None:
            mask = np.ones(mesh.n_nodes)
        problem = WaveProblem(mesh, _wave_config(cfg), u_d, mask, o.gamma, cfg.solver_options())
    else:
        ecfg = _elliptic_config(cfg)
        disk = _disk(mesh, o.target_center, o.target_width)
        u_d = o.target_amplitude * solve_elliptic(mesh, disk, ecfg, cfg.solver_options())
        problem = EllipticProblem(mesh, ecfg, u_d, o.gamma, mask, cfg.solver_options())
    w0 = np.full(mesh.n_nodes, cfg.algorithm.w0_value)
    return problem, w0, cfg.homotopy_params()
