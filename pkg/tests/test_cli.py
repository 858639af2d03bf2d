import json
import subprocess
import sys
import time

import numpy as np
import pytest

from sps import cli
from sps.config import (
    PRESETS,
    ConfigError,
    build_config,
    grid_values,
    parse_grid,
    parse_number,
    parse_text,
    parse_values,
    resolve,
)


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def data_rows(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    return lines[0].split(","), np.array([[float(x) for x in l.split(",")] for l in lines[1:]])


def header(text):
    return dict(l[2:].split("=", 1) for l in text.splitlines() if l.startswith("# ") and "=" in l)


def test_parse_number_units():
    assert parse_number("5e4/Gamma") == 5e4
    assert parse_number("2*gamma") == 2
    assert parse_number("-sqrt(2)*1e-3") == pytest.approx(-1.41421356e-3)
    for bad in ("__import__('os')", "1/0", "x", "1e999"):
        with pytest.raises(ConfigError):
            parse_number(bad)


def test_grids():
    g = parse_grid("linear(0, 5e4/Gamma, 2000)")
    v = grid_values(g)
    assert len(v) == 2000 and v[0] == 0 and v[-1] == 5e4
    lg = grid_values(parse_grid("logspace(1e-3,1,25)"))
    assert lg[0] == pytest.approx(1e-3) and lg[-1] == pytest.approx(1.0) and len(lg) == 25
    assert np.allclose(np.diff(np.log(lg)), np.log(10) / 8)
    d = grid_values(parse_grid("dense(-1e-3, 1e-3, 101)"), centers=(0.0, 5e-4))
    assert d[0] == -1e-3 and d[-1] == 1e-3 and len(d) > 101 and 5e-4 in d
    for bad in ("linear(1, 0, 10)", "linear(0, 1, 1)", "linear(0,1)", "logspace(0, 1, 5)", "cubic(0,1,3)", "linear(0,1,2.5)"):
        with pytest.raises(ConfigError):
            parse_grid(bad)
    assert list(parse_values("0.1, 0.2,0.3")) == [0.1, 0.2, 0.3]


def test_parse_text_and_csv_block():
    cfg = parse_text("task = spectrum  # comment\n\n# full comment\nmodel.omega = 1e-2\n")
    assert cfg == {"task": "spectrum", "model.omega": "1e-2"}
    with pytest.raises(ConfigError):
        parse_text("no equals sign")
    csv = "# sps 0.1.0\n# [config]\n# task=g2\n# model.omega=1\n# [/config]\n# coherent_weight=1\nx\n1\n"
    assert parse_text(csv) == {"task": "g2", "model.omega": "1"}


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_presets_resolve_and_round_trip(name):
    cfg = build_config(name)
    again = resolve(parse_text("\n".join(cfg.lines())))
    assert again.values == cfg.values


def test_validation_errors():
    with pytest.raises(ConfigError, match="model.bogus"):
        build_config("fig2a", overrides=["model.bogus=1"])
    with pytest.raises(ConfigError, match="model.omega_b"):
        build_config("fig2a", overrides=["model.omega_b=1"])
    with pytest.raises(ConfigError, match="unknown preset"):
        build_config("fig9")
    with pytest.raises(ConfigError, match="grid.tau"):
        build_config("fig2a", overrides=["task=g2"])
    with pytest.raises(ConfigError):
        build_config("fig2a", overrides=["model.omega=abc"])
    with pytest.raises(ConfigError):
        build_config("fig2a", overrides=["task=sweep", "sweep.param=omega"])
    with pytest.raises(ConfigError, match="scalar"):
        build_config("fig2a", overrides=["sweep.param=omega", "sweep.values=1,2"])


def test_validate_dimensions(capsys):
    code, out, _ = run(["validate", "--preset", "fig2a"], capsys)
    assert code == 0
    assert "hilbert_dim=3" in out and "liouvillian_shape=9x9" in out
    code, out, _ = run(["validate", "--preset", "fig3", "--set", "detector.n_max=3"], capsys)
    assert "hilbert_dim=12" in out and "liouvillian_shape=144x144" in out
    assert "estimated_flops=" in out


def test_validate_unknown_key(capsys):
    code, _, err = run(["validate", "--preset", "fig2a", "--set", "model.omgea=1"], capsys)
    assert code == 2 and "model.omgea" in err


def test_set_short_names():
    cfg = build_config("figS3a", overrides=["omega_b=2e-3", "kappa=0.2"])
    assert cfg.values["model.omega_b"] == "2e-3"
    assert cfg.values["detector.kappa"] == "0.2"
    with pytest.raises(ConfigError, match="omega_r"):
        build_config("figS3a", overrides=["omega_r=1"])


def test_run_takes_task_from_config(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("model.scheme = lambda\ntask = steady\nmodel.omega = 1e-2\nmodel.omega_r = 1e-3\n")
    code, out, _ = run(["run", "--config", str(cfg)], capsys)
    assert code == 0
    cols, rows = data_rows(out)
    assert cols == ["i", "j", "re_rho", "im_rho"]
    assert rows[:, 2][[0, 4, 8]].sum() == pytest.approx(1.0)
    cfg.write_text("model.scheme = lambda\nmodel.omega = 1e-2\nmodel.omega_r = 1e-3\n")
    code, _, err = run(["run", "--config", str(cfg)], capsys)
    assert code == 2 and "task" in err


def test_spectrum_output(capsys, tmp_path):
    out = tmp_path / "s.csv"
    code, _, _ = run(["run", "--preset", "fig2a", "--task", "spectrum", "--out", str(out)], capsys)
    assert code == 0
    text = out.read_text()
    cols, data = data_rows(text)
    assert cols == ["omega", "S_incoherent"]
    h = header(text)
    assert float(h["coherent_weight"]) > 0 and "convention" in h
    assert np.all(np.diff(data[:, 0]) > 0)
    line = [l for l in text.splitlines() if not l.startswith("#")][1]
    assert all(len(x.split("e")[0].lstrip("-")) == 13 for x in line.split(","))


def test_sweep_output(capsys, monkeypatch):
    monkeypatch.setenv("SPS_THREADS", "3")
    code, out, _ = run(
        ["run", "--preset", "fig3", "--task", "detector-g2", "--sweep", "kappa=logspace(1e-3,1,25)"], capsys
    )
    assert code == 0
    cols, data = data_rows(out)
    assert cols == ["kappa", "g2_0"] and len(data) == 25
    assert np.all(np.diff(data[:, 0]) > 0)
    monkeypatch.setenv("SPS_THREADS", "1")
    _, serial, _ = run(
        ["run", "--preset", "fig3", "--task", "detector-g2", "--sweep", "kappa=logspace(1e-3,1,25)"], capsys
    )
    assert serial == out


def test_lockstep_sweep(capsys):
    code, out, _ = run(["detector-g2", "--preset", "figS3c", "--sweep", "v_eg,omega_b=1e-3,3e-3"], capsys)
    assert code == 0
    cols, data = data_rows(out)
    assert cols == ["v_eg", "g2_0"] and data.shape == (2, 2)


def test_g2_grid_override(capsys):
    code, out, _ = run(["run", "--preset", "figS3b", "--task", "g2", "--grid", "tau=linear(0,5e4/Gamma,2000)"], capsys)
    assert code == 0
    cols, data = data_rows(out)
    assert cols == ["tau", "tau_us", "g2"] and len(data) == 2000
    assert data[-1, 0] == 5e4 and data[0, 2] == 0


def test_deterministic_and_stamp(capsys):
    a = run(["spectrum", "--preset", "fig2b"], capsys)[1]
    b = run(["spectrum", "--preset", "fig2b"], capsys)[1]
    assert a == b
    c = run(["spectrum", "--preset", "fig2b", "--stamp"], capsys)[1]
    extra = set(c.splitlines()) - set(a.splitlines())
    assert len(extra) == 1 and extra.pop().startswith("# generated=")


def test_header_round_trip(capsys, tmp_path):
    out = tmp_path / "g.csv"
    run(["g2", "--preset", "fig2c", "--set", "model.omega_r=2e-3", "--out", str(out)], capsys)
    code, report, _ = run(["validate", "--config", str(out)], capsys)
    assert code == 0
    assert "model.omega_r=2e-3" in report
    assert build_config(path=out).values == build_config("fig2c", overrides=["model.omega_r=2e-3"]).values


def test_header_json(capsys, tmp_path):
    j = tmp_path / "h.json"
    code, _, _ = run(["steady", "--preset", "fig2b", "--header-json", str(j)], capsys)
    assert code == 0
    head = json.loads(j.read_text())
    assert head["config"]["model.omega_r"] == "1e-3"


def test_steady_and_bandwidth(capsys):
    code, out, _ = run(["steady", "--preset", "fig2b"], capsys)
    cols, data = data_rows(out)
    assert cols == ["i", "j", "re_rho", "im_rho"] and len(data) == 9
    assert data[8, 2] == pytest.approx(4.98728e-5, rel=1e-5)
    code, out, _ = run(["bandwidth", "--preset", "fig2b"], capsys)
    cols, data = data_rows(out)
    assert code == 0 and cols == ["bandwidth"] and data[0, 0] == pytest.approx(7.89e-3, rel=2e-2)


def test_exit_codes(capsys, tmp_path):
    assert run(["spectrum", "--preset", "fig2a", "--out", str(tmp_path / "no" / "x.csv")], capsys)[0] == 4
    assert run(["spectrum", "--preset", "fig2a", "--set", "model.omega=0", "--set", "model.omega_r=0"], capsys)[0] == 3
    assert run(["detector-g2", "--preset", "fig3", "--set", "detector.g=1", "--set", "detector.kappa=1", "--strict"], capsys)[0] == 3
    cutoff = ["--set", "model.omega=1", "--set", "model.omega_r=1", "--set", "detector.g=1", "--set", "detector.kappa=0.5"]
    code, _, err = run(["detector-g2", "--preset", "fig3", *cutoff, "--strict"], capsys)
    assert code == 3 and "cutoff" in err
    assert run(["bandwidth", "--preset", "fig2a", "--set", "bandwidth.window=1e-3"], capsys)[0] == 3
    assert run(["spectrum", "--preset", "fig2a", "--set", "oops"], capsys)[0] == 2
    assert run(["spectrum", "--preset", "fig2a", "--grid", "omega=linear(1,0,3)"], capsys)[0] == 2
    assert run(["spectrum", "--preset", "fig2a", "--set", "model.omega=-1"], capsys)[0] == 2
    assert run(["spectrum", "--config", str(tmp_path / "missing.cfg")], capsys)[0] == 2


def test_strict_mode_passes_for_presets(capsys):
    for name in ("fig3", "figS3c", "figS3f"):
        code, out, err = run(["detector-g2", "--preset", name, "--strict"], capsys)
        assert code == 0, err
    assert run(["g2", "--preset", "fig2c", "--strict"], capsys)[0] == 0
    assert run(["spectrum", "--preset", "fig2b", "--strict"], capsys)[0] == 0


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_fast(name, capsys, tmp_path):
    t0 = time.perf_counter()
    code, _, err = run([PRESETS[name]["task"], "--preset", name, "--out", str(tmp_path / "o.csv")], capsys)
    assert code == 0, err
    assert time.perf_counter() - t0 < 60


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "sps.cli", "validate", "--preset", "figS3a"], capture_output=True, text=True
    )
    assert proc.returncode == 0 and "hilbert_dim=4" in proc.stdout
