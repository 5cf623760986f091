"""Run configuration: an INI file (``key = value`` sections) with command-line overrides.

Example::

    [run]
    metric = funk
    dim = 2
    samples = 20
    seed = 1
    fields = c-projective, rotation
    suite = all
    output = report.json

    [metric]            ; used instead of a catalog label
    expr = sqrt(y1^2 + y2^2) + 0.2*y1
    guard =
    x_radius = 1.0

    [fields]            ; custom fields, components separated by ';'
    shear = x2; 0

    [tolerances]
    jet = 1e-8
    flow = 1e-5
    quadrature = 1e-3

    [geodesic]
    x0 = 0.1, 0.2
    y0 = 1, 0
    T = 1
    steps = 1000
    probe = flag_curvature
    csv = trajectory.csv
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field
from typing import Optional

from .catalog import METRICS, VECTOR_FIELDS, CatalogEntry, catalog_vector_fields, get_field, get_metric
from .errors import ConfigError, FinslerError
from .expr import parse_metric, parse_vector_field
from .harness import DEFAULT_TIERS, SUITES

PROBES = ("flag_curvature", "ric", "s_over_f", "tau", "none")


@dataclass
class RunConfig:
    dim: Optional[int] = None
    metric: Optional[str] = None
    metric_expr: Optional[str] = None
    guard: Optional[str] = None
    x_radius: float = 1.0
    samples: int = 20
    seed: int = 0
    fields: list = field(default_factory=list)
    field_exprs: dict = field(default_factory=dict)
    suite: str = "all"
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TIERS))
    output: Optional[str] = None
    flags: int = 5
    x0: Optional[list] = None
    y0: Optional[list] = None
    T: float = 1.0
    steps: int = 1000
    probe: str = "flag_curvature"
    csv: Optional[str] = None

    def echo(self) -> dict:
        """Config as recorded in reports (output paths excluded so payloads stay path-independent)."""
        d = asdict(self)
        d.pop("output")
        d.pop("csv")
        return d

    # --- validation -----------------------------------------------------------
    def validate(self, need_metric: bool = True) -> "RunConfig":
        if self.dim is None:
            raise ConfigError("missing required option --dim (dimension 1..4)")
        if not 1 <= self.dim <= 4:
            raise ConfigError(f"--dim must be between 1 and 4, got {self.dim}")
        if need_metric and not (self.metric or self.metric_expr):
            raise ConfigError("a metric is required: --metric LABEL or --metric-expr EXPR")
        if self.metric and self.metric not in METRICS:
            raise ConfigError(f"unknown catalog metric {self.metric!r}; choose from {sorted(METRICS)}")
        if self.samples < 1:
            raise ConfigError("--samples must be positive")
        if self.suite not in SUITES + ("all",):
            raise ConfigError(f"unknown suite {self.suite!r}; choose from {list(SUITES) + ['all']}")
        t = self.tolerances
        if not all(k in t for k in DEFAULT_TIERS):
            raise ConfigError(f"tolerance tiers must include {list(DEFAULT_TIERS)}")
        if not 0 < t["jet"] <= t["flow"] <= t["quadrature"]:
            raise ConfigError("tolerance tiers must satisfy 0 < jet <= flow <= quadrature")
        if self.probe not in PROBES:
            raise ConfigError(f"unknown probe {self.probe!r}; choose from {list(PROBES)}")
        for f in self.fields:
            if f not in VECTOR_FIELDS and f not in self.field_exprs:
                raise ConfigError(f"unknown vector field {f!r}")
        return self

    # --- resolution -------------------------------------------------------------
    def entry(self) -> CatalogEntry:
        try:
            if self.metric_expr:
                m = parse_metric(self.metric_expr, self.dim, guard=self.guard or None, label="custom")
                return CatalogEntry("custom", m, {}, {}, x_radius=self.x_radius)
            return get_metric(self.metric, self.dim)
        except FinslerError as exc:
            raise ConfigError(f"invalid metric: {exc}") from exc

    def vector_fields(self) -> list:
        try:
            if not self.fields and not self.field_exprs:
                return catalog_vector_fields(self.dim)
            out = [get_field(f, self.dim) for f in self.fields if f not in self.field_exprs]
            out += [parse_vector_field(c, self.dim, name) for name, c in self.field_exprs.items()]
            return out
        except FinslerError as exc:
            raise ConfigError(f"invalid vector field: {exc}") from exc


def _floats(text: str, what: str) -> list:
    try:
        return [float(v) for v in text.replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{what} must be a comma-separated list of numbers, got {text!r}") from None


def _typed(cfg: RunConfig, key: str, raw: str):
    kind = type(getattr(RunConfig(), key))
    try:
        if key in ("dim",):
            return int(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key} = {raw!r} is not a valid number") from None
    return raw


def load_config(path: Optional[str]) -> RunConfig:
    """Read an INI config file; ``None`` gives the defaults."""
    cfg = RunConfig()
    if path is None:
        return cfg
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    known = set(RunConfig.__dataclass_fields__)
    for section in cp.sections():
        items = dict(cp.items(section))
        if section in ("run", "geodesic"):
            for k, v in items.items():
                if k == "fields":
                    cfg.fields = [f.strip() for f in v.split(",") if f.strip()]
                elif k in ("x0", "y0"):
                    setattr(cfg, k, _floats(v, k))
                elif k in known and k not in ("tolerances", "field_exprs"):
                    setattr(cfg, k, _typed(cfg, k, v))
                else:
                    raise ConfigError(f"unknown key {k!r} in [{section}]")
        elif section == "metric":
            for k, v in items.items():
                if k == "expr":
                    cfg.metric_expr = v or None
                elif k == "guard":
                    cfg.guard = v or None
                elif k == "x_radius":
                    cfg.x_radius = float(v)
                elif k == "dim":
                    cfg.dim = int(v)
                else:
                    raise ConfigError(f"unknown key {k!r} in [metric]")
        elif section == "fields":
            for name, comps in items.items():
                cfg.field_exprs[name] = [c.strip() for c in comps.split(";")]
        elif section == "tolerances":
            for k, v in items.items():
                if k not in DEFAULT_TIERS:
                    raise ConfigError(f"unknown tolerance tier {k!r}")
                cfg.tolerances[k] = float(v)
        else:
            raise ConfigError(f"unknown config section [{section}]")
    return cfg


def apply_overrides(cfg: RunConfig, args) -> RunConfig:
    """Command-line flags win over file values; only flags actually given are applied."""
    for key in ("dim", "metric", "metric_expr", "guard", "samples", "seed", "suite", "output", "flags",
                "T", "steps", "probe", "csv"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, v)
    if getattr(args, "field", None):
        cfg.fields = []
        for f in args.field:
            if "=" in f:
                name, comps = f.split("=", 1)
                cfg.field_exprs[name.strip()] = [c.strip() for c in comps.split(";")]
                cfg.fields.append(name.strip())
            else:
                cfg.fields.append(f)
    for key in ("x0", "y0"):
        v = getattr(args, key, None)
        if v is not None:
            setattr(cfg, key, _floats(v, key))
    for tier in DEFAULT_TIERS:
        v = getattr(args, f"tol_{tier}", None)
        if v is not None:
            cfg.tolerances[tier] = v
    return cfg
