"""Flat ``key = value`` run configurations, presets and grid expressions.

A config is a mapping of dotted keys to strings, e.g.::

    task = spectrum
    model.scheme = lambda
    model.omega = 1e-2
    grid.omega = linear(-1e-3, 1e-3, 2001)

Numbers may use the unit symbols ``gamma``/``Gamma`` (both equal to 1, all
rates being in units of the emitter linewidth) and ``pi``, so
``5e4/Gamma`` is a valid delay. Grids are written ``linear(a, b, n)``,
``logspace(a, b, n)`` (geometric from ``a`` to ``b``) or ``dense(a, b, n)``
(linear plus refinement around the model's spectral lines). Sweep values are
a grid expression or a comma-separated list.
"""

from __future__ import annotations

import ast
import math
import operator
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TASKS = ("steady", "spectrum", "g2", "detector-g2", "bandwidth", "sweep")
SCALAR_TASKS = ("steady", "detector-g2", "bandwidth")
SCHEMES = ("lambda", "rb87", "hyperfine")

COMMON_KEYS = {
    "task", "strict", "output.path", "units.gamma_mhz",
    "grid.omega", "grid.tau", "sweep.param", "sweep.values", "sweep.task",
    "bandwidth.mass", "bandwidth.window",
    "detector.g", "detector.kappa", "detector.delta_s", "detector.n_max",
    "model.scheme",
}
SCHEME_KEYS = {
    "lambda": {"model.omega", "model.omega_r", "model.gamma1", "model.gamma2", "model.delta_e"},
    "rb87": {"model.v_eg", "model.omega_b", "model.gamma", "model.delta_e", "model.q_l", "model.detect_d"},
    "hyperfine": {
        "model.f_g", "model.f_e", "model.omega_l", "model.omega_b", "model.gamma",
        "model.delta_e", "model.q_l", "model.detect_q", "model.detect_d", "model.detect_m_e",
    },
}
DEFAULTS = {
    "lambda": {"model.gamma1": "1", "model.gamma2": "1", "model.delta_e": "0"},
    "rb87": {"model.gamma": "1", "model.delta_e": "0", "model.q_l": "1", "model.detect_d": "0",
             "units.gamma_mhz": "6.0666"},
    "hyperfine": {"model.gamma": "1", "model.delta_e": "0", "model.q_l": "1"},
}
COMMON_DEFAULTS = {"strict": "false", "bandwidth.mass": "0.99", "bandwidth.window": "5",
                   "detector.g": "auto", "detector.delta_s": "0", "detector.n_max": "3"}

_SQ2 = math.sqrt(2)

PRESETS: dict[str, dict[str, str]] = {
    "fig2a": {
        "task": "spectrum", "model.scheme": "lambda", "model.omega": "1e-2", "model.omega_r": "1e-5",
        "grid.omega": "dense(-1.06e-3, 1.06e-3, 2001)",
    },
    "fig2b": {
        "task": "spectrum", "model.scheme": "lambda", "model.omega": "1e-2", "model.omega_r": "1e-3",
        "grid.omega": "dense(-7e-3, 7e-3, 4001)",
    },
    "fig2c": {
        "task": "g2", "model.scheme": "lambda", "model.omega": "1e-2", "model.omega_r": "1e-3",
        "grid.tau": "linear(0, 2e5, 4001)",
    },
    "fig3": {
        "task": "detector-g2", "model.scheme": "lambda", "model.omega": "1e-2", "model.omega_r": "1e-2",
        "detector.kappa": "1e-1", "detector.n_max": "3",
    },
}
for _tag, _d in (("a", 0), ("d", 1)):
    PRESETS[f"figS3{_tag}"] = {
        "task": "spectrum", "model.scheme": "rb87", "model.v_eg": "1e-2", "model.omega_b": "1e-3",
        "model.detect_d": str(_d), "grid.omega": "dense(-4.25e-3, 4.25e-3, 2001)",
    }
for _tag, _d in (("b", 0), ("e", 1)):
    PRESETS[f"figS3{_tag}"] = {
        "task": "g2", "model.scheme": "rb87", "model.v_eg": "1e-2", "model.omega_b": "1e-3",
        "model.detect_d": str(_d), "grid.tau": "linear(0, 5e4, 2001)",
    }
for _tag, _d in (("c", 0), ("f", 1)):
    PRESETS[f"figS3{_tag}"] = {
        "task": "detector-g2", "model.scheme": "rb87", "model.v_eg": "1e-3", "model.omega_b": "1e-3",
        "model.detect_d": str(_d), "detector.kappa": "1e-1", "detector.n_max": "3",
    }
PRESETS["figS2"] = dict(PRESETS["fig2c"])
for _tag, _fg in (("a", "2"), ("b", "1")):
    PRESETS[f"figS4{_tag}"] = {
        "task": "spectrum", "model.scheme": "hyperfine", "model.f_g": _fg, "model.f_e": "1",
        "model.omega_l": "1e-2", "model.omega_b": "1e-3", "model.detect_q": "0",
        "grid.omega": "dense(-6e-3, 6e-3, 2001)",
    }


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration (CLI exit status 2)."""


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_NAMES = {"gamma": 1.0, "Gamma": 1.0, "pi": math.pi}
_FUNCS = {"sqrt": math.sqrt}


def _eval(node):
    if isinstance(node, ast.Expression):
        return _eval(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left), _eval(node.right))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        return _FUNCS[node.func.id](*[_eval(a) for a in node.args])
    raise ConfigError(f"unsupported expression element: {ast.dump(node)}")


def parse_number(text: str) -> float:
    try:
        v = _eval(ast.parse(str(text).strip(), mode="eval"))
    except (SyntaxError, ZeroDivisionError, TypeError) as exc:
        raise ConfigError(f"cannot parse number {text!r}: {exc}") from None
    if not math.isfinite(v):
        raise ConfigError(f"non-finite value {text!r}")
    return v


def _split_args(body: str) -> list[str]:
    parts, depth, cur = [], 0, ""
    for ch in body:
        if ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur += ch
    parts.append(cur)
    return [p.strip() for p in parts]


@dataclass(frozen=True)
class GridSpec:
    kind: str
    start: float
    stop: float
    n: int

    def __str__(self):
        return f"{self.kind}({self.start:.12g}, {self.stop:.12g}, {self.n})"


_GRID_RE = re.compile(r"^\s*(linear|logspace|dense)\s*\((.*)\)\s*$")


def parse_grid(text: str) -> GridSpec:
    m = _GRID_RE.match(str(text))
    if not m:
        raise ConfigError(f"grid must look like linear(a, b, n), logspace(a, b, n) or dense(a, b, n): {text!r}")
    args = _split_args(m.group(2))
    if len(args) != 3:
        raise ConfigError(f"grid {text!r} needs exactly three arguments")
    a, b, n = parse_number(args[0]), parse_number(args[1]), parse_number(args[2])
    if n != int(n) or n < 2:
        raise ConfigError(f"grid point count must be an integer >= 2, got {args[2]}")
    if not a < b:
        raise ConfigError(f"grid bounds must satisfy start < stop in {text!r}")
    if m.group(1) == "logspace" and a <= 0:
        raise ConfigError("logspace bounds must be positive")
    return GridSpec(m.group(1), a, b, int(n))


def grid_values(spec: GridSpec, centers=(0.0,)) -> np.ndarray:
    if spec.kind == "linear":
        return np.linspace(spec.start, spec.stop, spec.n)
    if spec.kind == "logspace":
        return np.geomspace(spec.start, spec.stop, spec.n)
    from .correl import frequency_grid

    half = max(abs(spec.start), abs(spec.stop))
    g = frequency_grid(half, spec.n, centers=centers, resolution=(spec.stop - spec.start) / (10 * spec.n))
    return g[(g >= spec.start) & (g <= spec.stop)]


def parse_values(text: str) -> np.ndarray:
    if _GRID_RE.match(text):
        spec = parse_grid(text)
        if spec.kind == "dense":
            raise ConfigError("dense grids are only available for frequency axes")
        return grid_values(spec)
    return np.array([parse_number(t) for t in text.split(",") if t.strip()])


def parse_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines. In files whose lines start with ``#`` (CSV
    outputs) only the block between ``# [config]`` and ``# [/config]`` is read."""
    lines = text.splitlines()
    if lines and lines[0].startswith("#") and any(l.strip() == "# [config]" for l in lines):
        start = next(i for i, l in enumerate(lines) if l.strip() == "# [config]")
        end = next((i for i, l in enumerate(lines) if l.strip() == "# [/config]"), len(lines))
        lines = [l.lstrip("#") for l in lines[start + 1:end]]
    out = {}
    for no, raw in enumerate(lines, 1):
        line = raw.split(" #", 1)[0].strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{no}: expected 'key = value', got {raw!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = v
    return out


def load_file(path) -> dict[str, str]:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_text(text, str(p))


def _bool(v: str) -> bool:
    if v.lower() in ("1", "true", "yes", "on"):
        return True
    if v.lower() in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


@dataclass
class RunConfig:
    """Fully resolved configuration; ``values`` holds the canonical strings."""

    values: dict[str, str] = field(default_factory=dict)

    @property
    def task(self) -> str:
        return self.values["task"]

    @property
    def scheme(self) -> str:
        return self.values["model.scheme"]

    @property
    def strict(self) -> bool:
        return _bool(self.values["strict"])

    def num(self, key: str) -> float:
        return parse_number(self.values[key])

    def has(self, key: str) -> bool:
        return key in self.values

    def detector_g(self) -> float:
        """Detector coupling; ``auto`` is the passive default ``min(1e-3, kappa / 10)``."""
        if self.values["detector.g"] == "auto":
            return min(1e-3, self.num("detector.kappa") / 10)
        return self.num("detector.g")

    def lines(self) -> list[str]:
        return [f"{k}={self.values[k]}" for k in sorted(self.values)]

    def with_value(self, key: str, value: str) -> "RunConfig":
        v = dict(self.values)
        v[key] = value
        return resolve(v)


SHORT_NAMES = {"kappa": "detector.kappa", "g": "detector.g", "n_max": "detector.n_max",
               "delta_s": "detector.delta_s"}


def full_key(name: str, scheme: str) -> str:
    if "." in name:
        return name
    if name in SHORT_NAMES:
        return SHORT_NAMES[name]
    key = f"model.{name}"
    if key in SCHEME_KEYS[scheme]:
        return key
    raise ConfigError(f"unknown parameter {name!r} for scheme {scheme}")


def resolve(raw: dict[str, str]) -> RunConfig:
    """Validate keys and fill defaults; raises :class:`ConfigError` naming the offending key."""
    vals = {k: str(v).strip() for k, v in raw.items()}
    scheme = vals.get("model.scheme")
    if scheme not in SCHEMES:
        raise ConfigError(f"model.scheme must be one of {SCHEMES}, got {scheme!r}")
    allowed = COMMON_KEYS | SCHEME_KEYS[scheme]
    for k in vals:
        if k not in allowed:
            raise ConfigError(f"unknown parameter {k!r} for scheme {scheme}")
    for k, v in {**COMMON_DEFAULTS, **DEFAULTS[scheme]}.items():
        vals.setdefault(k, v)
    task = vals.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {TASKS}, got {task!r}")
    required = {
        "lambda": ("model.omega", "model.omega_r"),
        "rb87": ("model.v_eg", "model.omega_b"),
        "hyperfine": ("model.f_g", "model.f_e", "model.omega_l", "model.omega_b"),
    }[scheme]
    for k in required:
        if k not in vals:
            raise ConfigError(f"missing required parameter {k!r}")
    numeric = [
        k for k in vals
        if k.startswith(("model.", "detector.", "units.", "bandwidth."))
        and k != "model.scheme" and not (k == "detector.g" and vals[k] == "auto")
    ]
    for k in numeric:
        parse_number(vals[k])
    _bool(vals["strict"])
    cfg = RunConfig(vals)
    inner = vals.get("sweep.task", "detector-g2") if task == "sweep" else task
    if task == "sweep" or "sweep.param" in vals:
        if "sweep.param" not in vals or "sweep.values" not in vals:
            raise ConfigError("a sweep needs sweep.param and sweep.values")
        if inner not in SCALAR_TASKS:
            raise ConfigError(f"sweeps run scalar tasks {SCALAR_TASKS}, not {inner!r}")
        for name in vals["sweep.param"].split(","):
            full_key(name.strip(), scheme)
        if len(parse_values(vals["sweep.values"])) < 1:
            raise ConfigError("sweep.values is empty")
    if inner == "spectrum":
        if "grid.omega" not in vals:
            raise ConfigError("task spectrum needs grid.omega")
        parse_grid(vals["grid.omega"])
    if inner == "g2":
        if "grid.tau" not in vals:
            raise ConfigError("task g2 needs grid.tau")
        gs = parse_grid(vals["grid.tau"])
        if gs.kind != "linear" or gs.start != 0:
            raise ConfigError("grid.tau must be linear(0, T, n)")
    if inner == "detector-g2":
        if "detector.kappa" not in vals:
            raise ConfigError("task detector-g2 needs detector.kappa")
        n = cfg.num("detector.n_max")
        if n != int(n) or n < 2:
            raise ConfigError("detector.n_max must be an integer >= 2")
    if scheme == "hyperfine" and inner in ("spectrum", "g2", "bandwidth") and not (
        "model.detect_q" in vals or "model.detect_d" in vals
    ):
        raise ConfigError("hyperfine spectra need model.detect_q or model.detect_d")
    if scheme == "hyperfine" and inner == "detector-g2" and "model.detect_d" not in vals:
        raise ConfigError("hyperfine detector runs need model.detect_d")
    m = cfg.num("bandwidth.mass")
    if not 0 < m < 1:
        raise ConfigError("bandwidth.mass must lie in (0, 1)")
    return cfg


def build_config(preset: str | None = None, path=None, overrides=()) -> RunConfig:
    raw: dict[str, str] = {}
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; available: {', '.join(PRESETS)}")
        raw.update(PRESETS[preset])
    if path:
        raw.update(load_file(path))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = (x.strip() for x in item.split("=", 1))
        if "." not in k and k not in COMMON_KEYS and raw.get("model.scheme") in SCHEMES:
            k = full_key(k, raw["model.scheme"])
        raw[k] = v
    return resolve(raw)
