"""Experiment files: an INI dialect with [domain], [functions], [weights], [checks], [sweeps] and [run].

Example::

    [domain]
    dim = 2
    lower = 0
    upper = 1
    resolution = 64

    [functions]
    f1 = x1
    f2 = sin(pi*x1)*cos(pi*x2)

    [weights]
    w = |x|^0.5

    [checks]
    P1 =
    S1 = p=2; weight=w
    S1:flat = weight=flat

    [sweeps]
    F3.delta = 0.5, 0.9, 0.99

    [run]
    seed = 3

Check lines are ``ID[:label] = key=value; key=value``. Values are JSON
when they parse as JSON and plain strings otherwise. Keys in [domain] and
the [functions] list apply to every check; per-check values win.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field

from . import expr as ex
from .grid import BASES, is_power_of_two
from .kernels import DEFAULT_PAIR_BUDGET
from .verify.catalog import CATALOG
from .weights import WEIGHT_CATALOG

SECTIONS = ("domain", "functions", "weights", "checks", "sweeps", "run")
DOMAIN_KEYS = ("dim", "lower", "upper", "split", "basis", "resolution", "depth", "roots", "min_cells")
RUN_KEYS = ("seed", "jobs", "pair_budget", "output_dir")


class ConfigError(ValueError):
    """All problems found in one experiment file."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass
class CheckSpec:
    check_id: str
    label: str = ""
    overrides: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return f"{self.check_id}:{self.label}" if self.label else self.check_id


@dataclass
class SweepSpec:
    check_id: str
    param: str
    values: list


@dataclass
class ExperimentConfig:
    domain: dict = field(default_factory=dict)
    functions: dict = field(default_factory=dict)
    weights: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    sweeps: list = field(default_factory=list)
    seed: int = 0
    jobs: int = 1
    pair_budget: int = DEFAULT_PAIR_BUDGET
    output_dir: str | None = None

    def params_for(self, spec) -> dict:
        """Resolved overrides for one check or sweep: domain, corpus, then the entry's own values."""
        params = dict(self.domain)
        if self.functions:
            params["functions"] = list(self.functions.values())
        params.update(getattr(spec, "overrides", {}))
        if isinstance(params.get("weight"), str) and params["weight"] in self.weights:
            params["weight"] = self.weights[params["weight"]]
        return params


# ---------------------------------------------------------------------------
# value parsing


def parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except ValueError:
        return text


def format_value(value) -> str:
    if isinstance(value, str):
        try:
            json.loads(value)
        except ValueError:
            if ";" not in value and value == value.strip() and value:
                return value
        return json.dumps(value)
    return json.dumps(value)


def _numbers(text: str):
    text = text.strip()
    if text.startswith("["):
        return json.loads(text)
    parts = [p for p in text.replace(",", " ").split()]
    vals = [json.loads(p) for p in parts]
    return vals[0] if len(vals) == 1 else vals


def _overrides(text: str, where: str, errors: list) -> dict:
    out = {}
    for item in text.split(";"):
        item = item.strip()
        if not item:
            continue
        if "=" not in item:
            errors.append(f"{where}: expected key=value, got {item!r}")
            continue
        k, v = item.split("=", 1)
        out[k.strip()] = parse_value(v)
    return out


# ---------------------------------------------------------------------------
# parsing and validation


def _check_expr(text: str, ndim, where: str, errors: list):
    try:
        ex.parse(text, ndim)
    except ex.ExprError as exc:
        errors.append(f"{where}: {exc}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate an experiment file; raises ``ConfigError`` listing every problem."""
    cp = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#",),
                                   inline_comment_prefixes=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    errors = []
    cfg = ExperimentConfig()
    for sec in cp.sections():
        if sec not in SECTIONS:
            errors.append(f"unknown section [{sec}]; valid: {', '.join(SECTIONS)}")

    if cp.has_section("domain"):
        for k, v in cp.items("domain"):
            if k not in DOMAIN_KEYS:
                errors.append(f"[domain]: unknown key {k!r}; valid: {', '.join(DOMAIN_KEYS)}")
                continue
            try:
                cfg.domain[k] = v.strip() if k == "basis" else _numbers(v)
            except ValueError:
                errors.append(f"[domain] {k}: cannot read {v!r}")
    dom = cfg.domain
    if "basis" in dom and dom["basis"] not in BASES:
        errors.append(f"[domain] basis: {dom['basis']!r} is not one of {', '.join(BASES)}")
    for k in ("dim", "resolution", "depth", "roots", "min_cells"):
        if k in dom and not (isinstance(dom[k], int) and not isinstance(dom[k], bool) and dom[k] >= 0):
            errors.append(f"[domain] {k}: expected a nonnegative integer, got {dom[k]!r}")
    if isinstance(dom.get("resolution"), int) and not is_power_of_two(dom["resolution"]):
        errors.append(f"[domain] resolution: {dom['resolution']} is not a power of two")
    ndim = dom.get("dim") if isinstance(dom.get("dim"), int) else None

    if cp.has_section("functions"):
        for k, v in cp.items("functions"):
            cfg.functions[k] = v.strip()
            _check_expr(v.strip(), ndim, f"[functions] {k}", errors)
    if cp.has_section("weights"):
        for k, v in cp.items("weights"):
            cfg.weights[k] = v.strip()
            if v.strip() not in WEIGHT_CATALOG:
                _check_expr(v.strip(), ndim, f"[weights] {k}", errors)

    if cp.has_section("checks"):
        for k, v in cp.items("checks"):
            cid, _, label = k.partition(":")
            where = f"[checks] {k}"
            if cid not in CATALOG:
                errors.append(f"{where}: unknown check {cid!r}; valid ids: {', '.join(CATALOG)}")
                continue
            spec = CheckSpec(cid, label, _overrides(v, where, errors))
            _validate_overrides(cfg, spec.overrides, cid, where, ndim, errors)
            cfg.checks.append(spec)

    if cp.has_section("sweeps"):
        for k, v in cp.items("sweeps"):
            cid, _, param = k.partition(".")
            where = f"[sweeps] {k}"
            if cid not in CATALOG:
                errors.append(f"{where}: unknown check {cid!r}; valid ids: {', '.join(CATALOG)}")
                continue
            if param not in CATALOG[cid].schema():
                errors.append(f"{where}: {cid} has no parameter {param!r}")
                continue
            try:
                vals = parse_value(v) if v.strip().startswith("[") else _numbers(v)
            except ValueError:
                errors.append(f"{where}: cannot read values {v!r}")
                continue
            cfg.sweeps.append(SweepSpec(cid, param, vals if isinstance(vals, list) else [vals]))

    if cp.has_section("run"):
        for k, v in cp.items("run"):
            if k not in RUN_KEYS:
                errors.append(f"[run]: unknown key {k!r}; valid: {', '.join(RUN_KEYS)}")
            elif k == "output_dir":
                cfg.output_dir = v.strip()
            else:
                val = parse_value(v)
                if not isinstance(val, int) or isinstance(val, bool) or val < (0 if k == "seed" else 1):
                    errors.append(f"[run] {k}: expected an integer, got {v.strip()!r}")
                else:
                    setattr(cfg, k, val)
    if errors:
        raise ConfigError(errors)
    return cfg


def _validate_overrides(cfg, overrides, cid, where, ndim, errors):
    schema = CATALOG[cid].schema()
    for k, v in overrides.items():
        if k not in schema:
            errors.append(f"{where}: unknown parameter {k!r} for {cid}; valid: {', '.join(sorted(schema))}")
    dim = overrides.get("dim", ndim)
    dim = dim if isinstance(dim, int) else None
    for f in overrides.get("functions") or []:
        _check_expr(str(f), dim, f"{where} functions", errors)
    w = overrides.get("weight")
    if isinstance(w, str) and w not in cfg.weights and w not in WEIGHT_CATALOG:
        _check_expr(w, dim, f"{where} weight", errors)
    res = overrides.get("resolution")
    if res is not None and not (isinstance(res, int) and is_power_of_two(res)):
        errors.append(f"{where}: resolution {res!r} is not a power of two")


# ---------------------------------------------------------------------------
# printing


def _fmt_domain(v) -> str:
    if isinstance(v, list):
        return json.dumps(v)
    return v if isinstance(v, str) else json.dumps(v)


def print_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config(print_config(c)) == c``."""
    lines = []
    if cfg.domain:
        lines.append("[domain]")
        lines += [f"{k} = {_fmt_domain(v)}" for k, v in cfg.domain.items()]
        lines.append("")
    for name, table in (("functions", cfg.functions), ("weights", cfg.weights)):
        if table:
            lines.append(f"[{name}]")
            lines += [f"{k} = {v}" for k, v in table.items()]
            lines.append("")
    if cfg.checks:
        lines.append("[checks]")
        for c in cfg.checks:
            body = "; ".join(f"{k}={format_value(v)}" for k, v in c.overrides.items())
            lines.append(f"{c.name} = {body}".rstrip())
        lines.append("")
    if cfg.sweeps:
        lines.append("[sweeps]")
        lines += [f"{s.check_id}.{s.param} = {json.dumps(s.values)}" for s in cfg.sweeps]
        lines.append("")
    lines.append("[run]")
    lines.append(f"seed = {cfg.seed}")
    lines.append(f"jobs = {cfg.jobs}")
    lines.append(f"pair_budget = {cfg.pair_budget}")
    if cfg.output_dir is not None:
        lines.append(f"output_dir = {cfg.output_dir}")
    return "\n".join(lines) + "\n"


__all__ = ["CheckSpec", "ConfigError", "ExperimentConfig", "SweepSpec", "parse_config", "print_config"]
