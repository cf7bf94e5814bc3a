import time
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from phasetr.cli import main
from phasetr.config import (
    ConfigParseError, ConfigurationError, load_config, parse_config, preset_path, serialize_config,
)

ELLIPTIC = preset_path("desk_elliptic").read_text()


def test_paper_wave_values():
    cfg = load_config(preset_path("paper_wave"))
    assert (cfg.mesh.nx, cfg.mesh.ny, cfg.time.n_steps, cfg.time.T) == (96, 96, 256, 5.0)
    assert (cfg.physics.c_sq, cfg.physics.b, cfg.physics.sigma) == (20.0, 1.25e-2, 0.25)
    a = cfg.algorithm
    assert cfg.objective.gamma == 7.5e-6
    assert (a.delta0, a.eps0, a.rho, a.kappa0, a.delta_floor0, a.w0_value) == (1.5, 1.0, 1e-4, 1e-8, 1.14e-5, 0.5)
    assert a.mode == "convex_only" and cfg.seed == 0


@pytest.mark.parametrize("name", ["paper_wave", "desk_wave", "desk_elliptic"])
def test_presets_load(name):
    cfg = load_config(preset_path(name))
    assert parse_config(serialize_config(cfg)) == cfg


def test_r_boundary():
    with pytest.raises(ConfigurationError, match="r > 4"):
        parse_config(ELLIPTIC.replace("r = 5", "r = 4"))


def test_empty_file(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("")
    with pytest.raises(ConfigParseError, match="line 1"):
        load_config(path)


def test_parse_error_line_number():
    text = ELLIPTIC.replace("nx = 8", "nx 8")
    lineno = text.splitlines().index("nx 8") + 1
    with pytest.raises(ConfigParseError, match=f"line {lineno}"):
        parse_config(text)


@pytest.mark.parametrize("text,match", [
    (ELLIPTIC.replace("nx = 8", "nx = 8\nnz = 3"), "unknown key 'nz'"),
    (ELLIPTIC + "\n[extra]\na = 1\n", r"unknown section \[extra\]"),
    (ELLIPTIC.replace("kappa0 = 1e-8\n", ""), "missing mandatory keys: kappa0"),
    (ELLIPTIC.replace("nu = 1.0\n", ""), "missing mandatory keys: nu"),
    (ELLIPTIC.replace("kappa0 = 1e-8", "kappa0 = 1e-3"), "kappa0 < rho"),
    (ELLIPTIC.replace("nx = 8", "nx = 2.5"), "not an integer"),
    (ELLIPTIC.replace("w0_value = 0.5", "w0_value = 1.5"), r"\[0, 1\]"),
    (ELLIPTIC.replace("type = elliptic", "type = heat"), "type must be"),
])
def test_validation_errors(text, match):
    with pytest.raises(ConfigurationError, match=match):
        parse_config(text)


def test_solver_and_output_defaults():
    text = ELLIPTIC[: ELLIPTIC.index("[output]")]
    cfg = parse_config(text)
    assert cfg.solver.tol == 1e-10 and cfg.output.dir == "output" and cfg.output.dump_every_accept


positive = st.floats(1e-6, 1e3, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(
    wave=st.booleans(), nx=st.integers(1, 64), ny=st.integers(1, 64), gamma=positive,
    delta0=st.floats(1e-3, 10), frac=st.floats(1e-6, 0.99), r=st.floats(4.001, 50),
    rho=st.floats(1e-6, 0.99), kfrac=st.floats(1e-6, 0.99), w0=st.floats(0, 1),
    seed=st.integers(0, 2**31), mode=st.sampled_from(["convex_only", "with_nonconvex"]),
    dump=st.booleans(), x0=st.floats(-10, 10), width=st.floats(1e-3, 10),
)
def test_round_trip(wave, nx, ny, gamma, delta0, frac, r, rho, kfrac, w0, seed, mode, dump, x0, width):
    base = load_config(preset_path("desk_wave" if wave else "desk_elliptic"))
    cfg = replace(
        base, seed=seed,
        mesh=replace(base.mesh, nx=nx, ny=ny, bounds=(x0, x0 + width, x0, x0 + 2 * width)),
        objective=replace(base.objective, gamma=gamma),
        algorithm=replace(base.algorithm, delta0=delta0, delta_floor0=frac * delta0, r=r, rho=rho,
                          kappa0=kfrac * rho, w0_value=w0, mode=mode),
        output=replace(base.output, dump_every_accept=dump),
    )
    assert parse_config(serialize_config(cfg)) == cfg


def test_cli_validate(capsys):
    assert main(["validate", "desk_elliptic"]) == 0
    assert "ok" in capsys.readouterr().out


def test_cli_config_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text(ELLIPTIC.replace("r = 5", "r = 3"))
    assert main(["validate", str(bad)]) == 1
    assert main(["run", str(bad)]) == 1
    assert "r > 4" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.cfg")]) == 1


def test_cli_runtime_error_exit(tmp_path, capsys):
    cfg = tmp_path / "tight.cfg"
    cfg.write_text(ELLIPTIC.replace("[output]", "[solver]\nmax_iter = 1\n\n[output]"))
    assert main(["run", str(cfg), "--output-dir", str(tmp_path / "out")]) == 2
    assert "runtime error" in capsys.readouterr().err


def test_cli_check_gradient(capsys):
    assert main(["check-gradient", "desk_elliptic", "--directions", "3"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_cli_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("PHASETR_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["run", "desk_elliptic"]) == 0
    assert (tmp_path / "env" / "iterations.csv").exists()


@pytest.fixture(scope="module")
def elliptic_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    t0 = time.perf_counter()
    assert main(["run", "desk_elliptic", "--output-dir", str(base / "a")]) == 0
    elapsed = time.perf_counter() - t0
    assert main(["run", "desk_elliptic", "--output-dir", str(base / "b")]) == 0
    return base, elapsed


def test_desk_elliptic_run(elliptic_runs):
    base, elapsed = elliptic_runs
    out = base / "a"
    assert elapsed < 10.0
    for name in ("config.cfg", "iterations.csv", "timings.csv", "summary.txt", "w_final.field"):
        assert (out / name).exists()
    assert list(out.glob("w_accept_*.field"))
    summary = (out / "summary.txt").read_text().splitlines()
    table = summary[summary.index("") + 2:]
    assert len(table) >= 2
    assert load_config(out / "config.cfg") == load_config(preset_path("desk_elliptic"))


def test_desk_elliptic_deterministic(elliptic_runs):
    base, _ = elliptic_runs
    assert (base / "a" / "iterations.csv").read_bytes() == (base / "b" / "iterations.csv").read_bytes()
