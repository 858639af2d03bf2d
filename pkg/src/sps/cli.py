"""Command-line front end producing CSV data for spectra, g2 traces and sweeps.

Usage::

    sps <task> [--preset NAME | --config FILE] [--set key=value]... [--out FILE]
               [--strict] [--stamp] [--sweep name=values] [--grid axis=expr]
    sps run --task <task> ...
    sps validate [--preset NAME | --config FILE] [--set key=value]...

Exit status: 0 success, 2 configuration error, 3 convergence failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction

import numpy as np

from . import __version__
from .atomic import (
    DetectorAttachment,
    HyperfineSpec,
    attach_detector,
    build_hyperfine_model,
    build_rb87_model,
    coupling_for_rabi,
    emission_operator,
)
from .config import (
    PRESETS,
    TASKS,
    ConfigError,
    RunConfig,
    build_config,
    full_key,
    grid_values,
    parse_grid,
    parse_values,
)
from .correl import (
    ConvergenceError,
    detector_g2_converged,
    detector_g2_zero,
    emission_spectrum,
    frequency_grid,
    g2_emitter,
    spectrum_bandwidth,
    two_time_correlation,
)
from .liouville import DensityMatrix, SteadyStateError, evolve, steady_state
from .models import A, E, DetectorParams, LambdaParams, build_emitter_detector, build_lambda_emitter, sigma

EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_IO = 2, 3, 4


def fmt(x: float) -> str:
    return f"{float(x):.11e}"


class Setup:
    """Model, detected lowering operator and spectral line centers for a config."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        try:
            self._build()
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(str(exc)) from None

    def _build(self):
        c = self.cfg
        if c.scheme == "lambda":
            self.params = LambdaParams(
                c.num("model.omega"), c.num("model.omega_r"), c.num("model.gamma1"),
                c.num("model.gamma2"), c.num("model.delta_e"),
            )
            self.emitter = build_lambda_emitter(self.params)
            self.lowering = sigma(A, E)
            self.excited = [E]
            w = 2 * self.params.omega_r
            self.centers = (0.0, -w, w)
            return
        if c.scheme == "rb87":
            base = HyperfineSpec(1, 0, gamma=c.num("model.gamma"), q_l=int(c.num("model.q_l")))
            omega_l = coupling_for_rabi(base, -1, c.num("model.v_eg"))
            self.spec = HyperfineSpec(
                1, 0, omega_l=omega_l, omega_b=c.num("model.omega_b"), gamma=c.num("model.gamma"),
                delta_e=c.num("model.delta_e"), q_l=int(c.num("model.q_l")),
            )
            self.emitter = build_rb87_model(self.spec)
        else:
            self.spec = HyperfineSpec(
                Fraction(c.values["model.f_g"]), Fraction(c.values["model.f_e"]),
                omega_l=c.num("model.omega_l"), omega_b=c.num("model.omega_b"),
                gamma=c.num("model.gamma"), delta_e=c.num("model.delta_e"), q_l=int(c.num("model.q_l")),
            )
            self.emitter = build_hyperfine_model(self.spec)
        s = self.spec
        self.excited = list(range(s.n_ground, s.dim))
        m_e = Fraction(c.values["model.detect_m_e"]) if c.has("model.detect_m_e") else None
        if c.has("model.detect_d"):
            self.lowering = emission_operator(s, d=Fraction(c.values["model.detect_d"]), m_e=m_e)
        elif c.has("model.detect_q"):
            self.lowering = emission_operator(s, q=int(c.num("model.detect_q")))
        else:
            self.lowering = None
        # ground Zeeman ladder of sqrt(2) omega_b F_x has spacing sqrt(2) omega_b
        step = math.sqrt(2) * s.omega_b
        kmax = int(2 * s.F_g)
        self.centers = tuple(k * step for k in range(-kmax, kmax + 1))

    def detector_model(self, n_max: int | None = None, g: float | None = None):
        c = self.cfg
        n = int(c.num("detector.n_max")) if n_max is None else n_max
        g = c.detector_g() if g is None else g
        kappa, ds = c.num("detector.kappa"), c.num("detector.delta_s")
        if c.scheme == "lambda":
            return build_emitter_detector(self.params, DetectorParams(g, kappa, ds, n))
        m_e = Fraction(c.values["model.detect_m_e"]) if c.has("model.detect_m_e") else None
        att = DetectorAttachment(Fraction(c.values["model.detect_d"]), g, kappa, ds, n, m_e)
        return attach_detector(self.emitter, self.spec, att)

    def emitter_dim(self) -> int:
        return self.emitter.dim


def hilbert_dim(cfg: RunConfig) -> int:
    if cfg.scheme == "lambda":
        d = 3
    elif cfg.scheme == "rb87":
        d = 4
    else:
        d = int(2 * Fraction(cfg.values["model.f_g"]) + 1 + 2 * Fraction(cfg.values["model.f_e"]) + 1)
    inner = cfg.values.get("sweep.task", "detector-g2") if cfg.task == "sweep" else cfg.task
    if inner == "detector-g2":
        d *= int(cfg.num("detector.n_max")) + 1
    return d


def _inner_task(cfg: RunConfig) -> str:
    return cfg.values.get("sweep.task", "detector-g2") if cfg.task == "sweep" else cfg.task


class Table:
    def __init__(self, columns, rows, meta=None):
        self.columns = list(columns)
        self.rows = [list(r) for r in rows]
        self.meta = dict(meta or {})


def _bandwidth_grid(setup: Setup) -> np.ndarray:
    window = setup.cfg.num("bandwidth.window")
    return frequency_grid(window, 4001, centers=setup.centers, resolution=window * 1e-9, n_dense=1500)


def _need_lowering(setup: Setup):
    if setup.lowering is None:
        raise ConfigError("this task needs a detected transition (model.detect_d or model.detect_q)")
    return setup.lowering


def scalar_task(cfg: RunConfig, task: str) -> tuple[str, float]:
    setup = Setup(cfg)
    if task == "steady":
        rho = steady_state(setup.emitter)
        return "excited_population", float(sum(rho.matrix[i, i].real for i in setup.excited))
    if task == "detector-g2":
        return "g2_0", detector_g2(setup)
    if task == "bandwidth":
        res = emission_spectrum(setup.emitter, _need_lowering(setup), _bandwidth_grid(setup))
        return "bandwidth", spectrum_bandwidth(res, cfg.num("bandwidth.mass"))
    raise ConfigError(f"{task} is not a scalar task")


def detector_g2(setup: Setup) -> float:
    cfg = setup.cfg
    n = int(cfg.num("detector.n_max"))
    if not cfg.strict:
        return detector_g2_zero(setup.detector_model(n))
    v = detector_g2_converged(lambda k: setup.detector_model(k), n, rtol=5e-3)
    half = detector_g2_zero(setup.detector_model(n, g=cfg.detector_g() / 2))
    if abs(half - v) > 1e-2 * abs(v):
        raise ConvergenceError(f"g2(0) changes from {v:.6g} to {half:.6g} under g -> g/2")
    return v


def run_task(cfg: RunConfig) -> Table:
    if cfg.task == "sweep" or cfg.has("sweep.param"):
        return run_sweep(cfg)
    setup = Setup(cfg)
    meta = {}
    if cfg.task == "steady":
        rho = steady_state(setup.emitter)
        m = rho.matrix
        rows = [[i, j, m[i, j].real, m[i, j].imag] for i in range(len(m)) for j in range(len(m))]
        return Table(["i", "j", "re_rho", "im_rho"], rows)
    if cfg.task == "spectrum":
        low = _need_lowering(setup)
        w = grid_values(parse_grid(cfg.values["grid.omega"]), setup.centers)
        res = emission_spectrum(setup.emitter, low, w)
        if cfg.strict:
            peak = np.max(np.abs(res.incoherent))
            if res.incoherent.min() < -1e-8 * peak:
                raise ConvergenceError("incoherent spectrum has negative values beyond round-off")
        meta = {"convention": res.convention, "coherent_weight": fmt(res.coherent_weight),
                "total_incoherent": fmt(res.total_incoherent)}
        cols, data = ["omega", "S_incoherent"], [w, res.incoherent]
        if cfg.has("units.gamma_mhz"):
            cols.insert(1, "freq_mhz")
            data.insert(1, w * cfg.num("units.gamma_mhz"))
        return Table(cols, zip(*data), meta)
    if cfg.task == "g2":
        low = _need_lowering(setup)
        tau = grid_values(parse_grid(cfg.values["grid.tau"]))
        rho = steady_state(setup.emitter)
        tr = g2_emitter(setup.emitter, low, tau, rho)
        if cfg.strict:
            _check_g2_backend(setup, low, rho, tau[-1], tr.values[-1])
        meta = {"normalization": fmt(tr.normalization)}
        cols, data = ["tau", "g2"], [tau, tr.values]
        if cfg.has("units.gamma_mhz"):
            cols.insert(1, "tau_us")
            data.insert(1, tau / (2 * math.pi * cfg.num("units.gamma_mhz")))
        return Table(cols, zip(*data), meta)
    name, value = scalar_task(cfg, cfg.task)
    return Table([name], [[value]])


def _check_g2_backend(setup, low, rho, tau, value):
    lm = low.matrix
    cond = lm @ rho.matrix @ lm.conj().T
    p = np.trace(cond).real
    later = evolve(setup.emitter, DensityMatrix(cond / p, check=False), tau).matrix
    n = np.trace(lm.conj().T @ lm @ rho.matrix).real
    direct = p * np.trace(lm.conj().T @ lm @ later).real / n**2
    if abs(direct - value) > 1e-8 * max(1.0, abs(direct)):
        raise ConvergenceError(f"g2 backends disagree at tau={tau:g}: {value:.10g} vs {direct:.10g}")


def _threads() -> int:
    env = os.environ.get("SPS_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"SPS_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def run_sweep(cfg: RunConfig) -> Table:
    names = [n.strip() for n in cfg.values["sweep.param"].split(",")]
    keys = [full_key(n, cfg.scheme) for n in names]
    values = np.sort(parse_values(cfg.values["sweep.values"]))
    inner = _inner_task(cfg)
    base = {k: v for k, v in cfg.values.items() if not k.startswith("sweep.")}
    base["task"] = inner

    def point(v):
        raw = dict(base)
        for k in keys:
            raw[k] = repr(float(v))
        from .config import resolve

        return scalar_task(resolve(raw), inner)

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = list(pool.map(point, values))
    col = results[0][0]
    return Table([names[0], col], [[v, r[1]] for v, r in zip(values, results)])


def header_lines(cfg: RunConfig, table: Table, stamp: bool) -> list[str]:
    out = [f"# sps {__version__}", "# [config]"]
    out += [f"# {line}" for line in cfg.lines()]
    out.append("# [/config]")
    out += [f"# {k}={v}" for k, v in table.meta.items()]
    if stamp:
        out.append(f"# generated={_dt.datetime.now(_dt.timezone.utc).isoformat(timespec='seconds')}")
    return out


def render_csv(cfg: RunConfig, table: Table, stamp: bool = False) -> str:
    buf = io.StringIO()
    for line in header_lines(cfg, table, stamp):
        buf.write(line + "\n")
    buf.write(",".join(table.columns) + "\n")
    for row in table.rows:
        buf.write(",".join(str(x) if isinstance(x, (int, np.integer)) else fmt(x) for x in row) + "\n")
    return buf.getvalue()


def estimated_flops(cfg: RunConfig) -> float:
    n = hilbert_dim(cfg) ** 2
    solve = 2.0 / 3.0 * n**3
    inner = _inner_task(cfg)
    if inner == "spectrum":
        work = solve * len(grid_values(parse_grid(cfg.values["grid.omega"])))
    elif inner == "g2":
        work = 30 * n**3 + 2 * n**2 * parse_grid(cfg.values["grid.tau"]).n
    elif inner == "bandwidth":
        work = solve * 4001 + solve * 6 * 1500
    elif inner == "detector-g2":
        work = 2 * solve * (4 if cfg.strict else 1)
    else:
        work = solve
    work += 10 * n**3  # kernel check
    if cfg.has("sweep.param"):
        work *= len(parse_values(cfg.values["sweep.values"]))
    return work


def validate_report(cfg: RunConfig) -> str:
    d = hilbert_dim(cfg)
    lines = ["[resolved]"] + cfg.lines() + [
        "[dimensions]",
        f"hilbert_dim={d}",
        f"liouvillian_dim={d * d}",
        f"liouvillian_shape={d * d}x{d * d}",
        "[cost]",
        f"estimated_flops={estimated_flops(cfg):.3e}",
    ]
    return "\n".join(lines) + "\n"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sps", description="Emitter spectra, photon statistics and detector response.")
    p.add_argument("command", choices=TASKS + ("run", "validate"), help="task to run, or 'run'/'validate'")
    p.add_argument("--task", choices=TASKS, help="task for run/validate (default: the task in the preset or config)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--preset", help=f"preset name ({', '.join(PRESETS)})")
    src.add_argument("--config", help="config file (key = value lines, or a CSV produced by sps)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--sweep", metavar="NAME=VALUES", help="sweep a parameter, e.g. kappa=logspace(1e-3,1,25)")
    p.add_argument("--grid", action="append", default=[], metavar="AXIS=EXPR", help="omega=... or tau=...")
    p.add_argument("--out", help="output CSV (default stdout)")
    p.add_argument("--strict", action="store_true", help="run convergence cross-checks")
    p.add_argument("--stamp", action="store_true", help="add a timestamp to the header")
    p.add_argument("--header-json", metavar="FILE", help="also write the provenance header as JSON")
    return p


def resolve_args(args) -> RunConfig:
    overrides = list(args.set)
    task = args.task if args.command in ("run", "validate") else args.command
    if task:
        overrides.append(f"task={task}")
    for g in args.grid:
        if "=" not in g:
            raise ConfigError(f"--grid expects axis=expr, got {g!r}")
        axis, expr = g.split("=", 1)
        if axis.strip() not in ("omega", "tau"):
            raise ConfigError(f"unknown grid axis {axis.strip()!r}")
        overrides.append(f"grid.{axis.strip()}={expr}")
    if args.sweep:
        if "=" not in args.sweep:
            raise ConfigError(f"--sweep expects name=values, got {args.sweep!r}")
        name, expr = args.sweep.split("=", 1)
        overrides += [f"sweep.param={name.strip()}", f"sweep.values={expr.strip()}"]
    if args.strict:
        overrides.append("strict=true")
    if not (args.preset or args.config or overrides):
        raise ConfigError("give --preset, --config or --set")
    return build_config(args.preset, args.config, overrides)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = resolve_args(args)
        if args.command == "validate":
            sys.stdout.write(validate_report(cfg))
            return 0
        table = run_task(cfg)
    except ConfigError as exc:
        print(f"sps: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, SteadyStateError, np.linalg.LinAlgError) as exc:
        print(f"sps: convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    text = render_csv(cfg, table, args.stamp)
    try:
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if args.header_json:
            head = {"version": __version__, "config": dict(sorted(cfg.values.items())), **table.meta}
            with open(args.header_json, "w") as fh:
                json.dump(head, fh, indent=2, sort_keys=True)
    except OSError as exc:
        print(f"sps: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
