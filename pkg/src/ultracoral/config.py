"""Run configuration: TOML documents, dotted overrides and validation.

Grammar: a TOML document with the tables ``[model]``, ``[solver]``,
``[growth]`` and ``[output]``. Dotted keys at the top level work too, so
``model.beta = -0.3`` and ``[model]\\nbeta = -0.3`` are equivalent. Every
key is optional; unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import math
import os
import sys
from dataclasses import dataclass, field, fields

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .growth import GrowthConfig
from .integrator import SolverConfig
from .kinetics import KineticParams, ParameterError, SpeciesState
from .padic import is_prime

OUT_ENV = "ULTRACORAL_OUT"
FORMATS = ("csv", "json", "svg", "lsys")


class ConfigError(ValueError):
    """Invalid configuration. ``path`` names the offending field when known."""

    def __init__(self, message: str, path: str | None = None,
                 line: int | None = None, column: int | None = None):
        self.path, self.line, self.column = path, line, column
        where = f"{path}: " if path else ""
        if line is not None:
            where = f"line {line}, column {column}: " + where
        super().__init__(where + message)


Number = (int, float)


@dataclass(frozen=True)
class ModelSection:
    p: int = 2
    alpha: float = 2.0
    d: float = 0.1
    eta: float = 1.0
    beta: float = -0.2
    sigma: float = 1.0
    kappa_sp: float = 1.0
    allow_nonnegative_beta: bool = False
    # a scalar, or one value per compartment for fixed-level runs
    u0: float | tuple[float, ...] = 8.0
    v0: float | tuple[float, ...] = 10.0
    w0: float | tuple[float, ...] = 0.0


@dataclass(frozen=True)
class SolverSection:
    rtol: float = 1e-8
    atol: float = 1e-10
    h_init: float = 1e-3
    h_min: float = 1e-12
    h_max: float = 10.0
    max_steps: int = 1_000_000
    event_tol: float = 1e-9
    t_end: float = 100.0


@dataclass(frozen=True)
class GrowthSection:
    seed: int = 0
    theta_delta: float = 0.1
    m_max: int = 4
    omega_threshold: float = 1.0
    t_max_level: float = 500.0
    log_saturation: bool = False


@dataclass(frozen=True)
class OutputSection:
    directory: str = ""
    formats: tuple[str, ...] = ("csv", "json", "svg")
    svg_angle: float = 25.0
    svg_length_scale: float = 10.0


@dataclass(frozen=True)
class RunConfig:
    model: ModelSection = field(default_factory=ModelSection)
    solver: SolverSection = field(default_factory=SolverSection)
    growth: GrowthSection = field(default_factory=GrowthSection)
    output: OutputSection = field(default_factory=OutputSection)

    # derived objects -------------------------------------------------
    def kinetic_params(self) -> KineticParams:
        m = self.model
        return KineticParams(m.d, m.eta, m.beta, m.sigma, m.kappa_sp, m.allow_nonnegative_beta)

    def solver_config(self) -> SolverConfig:
        s = self.solver
        return SolverConfig(s.rtol, s.atol, s.h_init, s.h_min, s.h_max, s.max_steps, s.event_tol)

    def growth_config(self) -> GrowthConfig:
        g = self.growth
        return GrowthConfig(
            seed=g.seed, theta_delta=g.theta_delta, m_max=g.m_max,
            omega_threshold=g.omega_threshold, t_max_level=g.t_max_level,
            log_saturation=g.log_saturation, p=self.model.p, alpha=self.model.alpha,
            solver=self.solver_config(),
        )

    def initial_state(self) -> SpeciesState:
        m = self.model
        vals = [m.u0, m.v0, m.w0]
        if any(isinstance(x, tuple) for x in vals):
            raise ConfigError("a single-compartment run needs scalar initial values", "model.u0")
        return SpeciesState(*vals)

    def initial_vectors(self, n: int):
        """Initial ``(u, v, w)`` lists of length ``n``; scalars are broadcast."""
        out = []
        for name in ("u0", "v0", "w0"):
            x = getattr(self.model, name)
            if isinstance(x, tuple):
                if len(x) != n:
                    raise ConfigError(f"expected {n} values, got {len(x)}", f"model.{name}")
                out.append(list(x))
            else:
                out.append([x] * n)
        return out

    def output_dir(self) -> str:
        return self.output.directory or os.environ.get(OUT_ENV, "") or "."


_SECTIONS = {
    "model": ModelSection,
    "solver": SolverSection,
    "growth": GrowthSection,
    "output": OutputSection,
}


# ------------------------------------------------------------------ coercion

def _coerce(path: str, ftype: str, value):
    if ftype == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"expected a boolean, got {value!r}", path)
        return value
    if ftype == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"expected an integer, got {value!r}", path)
        return value
    if ftype == "float":
        if isinstance(value, bool) or not isinstance(value, Number):
            raise ConfigError(f"expected a number, got {value!r}", path)
        return float(value)
    if ftype == "str":
        if not isinstance(value, str):
            raise ConfigError(f"expected a string, got {value!r}", path)
        return value
    if ftype.startswith("float |"):
        if isinstance(value, list):
            return tuple(_coerce(f"{path}[{k}]", "float", x) for k, x in enumerate(value))
        return _coerce(path, "float", value)
    if ftype.startswith("tuple[str"):
        if isinstance(value, str):
            value = [s.strip() for s in value.split(",") if s.strip()]
        if not isinstance(value, list):
            raise ConfigError(f"expected a list of strings, got {value!r}", path)
        return tuple(_coerce(f"{path}[{k}]", "str", x) for k, x in enumerate(value))
    raise AssertionError(ftype)


def _build(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a table")
    sections = {}
    for name, value in raw.items():
        if name not in _SECTIONS:
            raise ConfigError("unknown section", name)
        if not isinstance(value, dict):
            raise ConfigError("expected a table", name)
    for name, cls in _SECTIONS.items():
        given = raw.get(name, {})
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, value in given.items():
            if key not in known:
                raise ConfigError("unknown key", f"{name}.{key}")
            kwargs[key] = _coerce(f"{name}.{key}", known[key].type, value)
        sections[name] = cls(**kwargs)
    cfg = RunConfig(**sections)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Check every invariant, reporting the first violation by field path."""
    m = cfg.model
    if not is_prime(m.p):
        raise ConfigError(f"p must be prime, got {m.p}", "model.p")
    if not m.alpha > 0:
        raise ConfigError(f"alpha must be positive, got {m.alpha}", "model.alpha")
    try:
        cfg.kinetic_params()
    except ParameterError as exc:
        name = str(exc).split()[0]
        raise ConfigError(str(exc), f"model.{name}") from None
    for name in ("u0", "v0", "w0"):
        x = getattr(m, name)
        for val in x if isinstance(x, tuple) else (x,):
            if not (val >= 0 and math.isfinite(val)):
                raise ConfigError(f"{name} must be finite and non-negative, got {val}", f"model.{name}")

    s = cfg.solver
    for name in ("rtol", "atol", "event_tol", "t_end"):
        if not getattr(s, name) > 0:
            raise ConfigError(f"{name} must be positive", f"solver.{name}")
    if not 0 < s.h_min <= s.h_init <= s.h_max:
        raise ConfigError("need 0 < h_min <= h_init <= h_max", "solver.h_init")
    if not s.max_steps > 0:
        raise ConfigError("max_steps must be positive", "solver.max_steps")

    g = cfg.growth
    checks = [
        ("seed", g.seed >= 0, "seed must be non-negative"),
        ("theta_delta", 0 <= g.theta_delta < 0.5, "theta_delta must lie in [0, 0.5)"),
        ("m_max", g.m_max >= 0, "m_max must be >= 0"),
        ("omega_threshold", g.omega_threshold > 0, "omega_threshold must be positive"),
        ("t_max_level", g.t_max_level > 0, "t_max_level must be positive"),
    ]
    for name, ok, msg in checks:
        if not ok:
            raise ConfigError(msg, f"growth.{name}")
    try:
        from .padic import IndexLattice
        IndexLattice(m.p, g.m_max)
    except ValueError as exc:
        raise ConfigError(str(exc), "growth.m_max") from None

    o = cfg.output
    for f in o.formats:
        if f not in FORMATS:
            raise ConfigError(f"unknown format {f!r}; choose from {', '.join(FORMATS)}", "output.formats")
    if not o.svg_length_scale > 0:
        raise ConfigError("svg_length_scale must be positive", "output.svg_length_scale")


# ------------------------------------------------------------------ entry points

def _load(text: str) -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        msg = str(exc).split(" (at line")[0]
        raise ConfigError(msg, line=getattr(exc, "lineno", None),
                          column=getattr(exc, "colno", None)) from None


def parse_value(text: str):
    """Interpret an override value as a TOML value, falling back to a bare string."""
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(raw: dict, overrides) -> dict:
    """Merge ``section.key=value`` strings into a raw document."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        key, value = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) != 2 or not all(parts):
            raise ConfigError(f"override key {key.strip()!r} must be section.key")
        section, name = parts
        raw.setdefault(section, {})
        if not isinstance(raw[section], dict):
            raise ConfigError("expected a table", section)
        raw[section][name] = parse_value(value.strip())
    return raw


def parse_config(text: str = "", overrides=()) -> RunConfig:
    """Parse a TOML document and ``--set`` style overrides into a validated RunConfig."""
    return _build(apply_overrides(_load(text), overrides))


def load_config(path: str | None = None, overrides=()) -> RunConfig:
    text = ""
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, overrides)


def replace_fields(cfg: RunConfig, **updates) -> RunConfig:
    """Override ``section.key`` fields given as ``section__key=value``; revalidates."""
    raw = to_dict(cfg)
    for k, v in updates.items():
        section, name = k.split("__", 1)
        raw[section][name] = list(v) if isinstance(v, tuple) else v
    return _build(raw)


def to_dict(cfg: RunConfig) -> dict:
    out = {}
    for name in _SECTIONS:
        sec = dataclasses.asdict(getattr(cfg, name))
        out[name] = {k: list(v) if isinstance(v, tuple) else v for k, v in sec.items()}
    return out


def _escape(ch: str) -> str:
    if ch in '"\\':
        return "\\" + ch
    if ord(ch) < 0x20 or ord(ch) == 0x7F:
        return f"\\u{ord(ch):04x}"
    return ch


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, str):
        return '"' + "".join(_escape(ch) for ch in v) + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(type(v))


def serialize(cfg: RunConfig) -> str:
    """TOML text with every field written out; ``parse_config`` reads it back unchanged."""
    lines = []
    for name, sec in to_dict(cfg).items():
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_toml_value(v)}" for k, v in sec.items())
        lines.append("")
    return "\n".join(lines)
