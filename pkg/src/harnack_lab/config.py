"""Experiment configuration: INI-style text to a validated :class:`ExperimentConfig`.

The text is read with :mod:`configparser`; every problem found afterwards
(unknown key, missing section, type mismatch, invariant violation) is collected
with its line number and raised together as a :class:`ConfigError`.
"""
from __future__ import annotations

import configparser
import copy
import math
import re
from dataclasses import dataclass, field

from .errors import ConfigError

EXPERIMENTS = ("liyau", "matrix-liyau", "harnack", "cheeger-yau", "ab", "cost-compare", "flow", "volume", "sweep")
FAMILIES = ("zero", "quadratic", "gaussian_bump", "trig", "constant")
INITIAL = ("fund", "heat", "constant", "cosine", "barenblatt")
REQUIRED = object()


@dataclass(frozen=True)
class ConfigIssue:
    line: int | None
    section: str
    key: str | None
    message: str

    def __str__(self):
        where = f"line {self.line}: " if self.line else ""
        what = f"[{self.section}]" + (f" {self.key}" if self.key else "")
        return f"{where}{what}: {self.message}"


@dataclass(frozen=True)
class Key:
    kind: str
    default: object = REQUIRED
    choices: tuple = ()
    low: float | None = None
    high: float | None = None
    strict_low: bool = False
    doc: str = ""


def _potential_keys():
    return {
        "family": Key("choice", "zero", FAMILIES, doc="potential family"),
        "a": Key("float", 0.0, doc="quadratic: U = a|x|^2/2 + <b, x> + c"),
        "b": Key("floats", None),
        "c": Key("float", 0.0),
        "amplitude": Key("float", 0.0, doc="gaussian_bump height"),
        "center": Key("floats", None),
        "width": Key("float", 1.0, low=0.0, strict_low=True),
        "amplitudes": Key("floats", None, doc="trig: sum_j A_j cos(2 pi <m_j, x>/L + phi_j)"),
        "modes": Key("modes", None, doc="integer mode vectors, rows separated by ';'"),
        "period": Key("float", None, low=0.0, strict_low=True, doc="trig period (defaults to the grid extent)"),
        "phases": Key("floats", None),
        "value": Key("float", 0.0, doc="constant potential value"),
        "offset": Key("float", 0.0, doc="constant added to any family"),
    }


SCHEMA = {
    "grid": {
        "dim": Key("int", REQUIRED, low=1, high=3),
        "extent": Key("float", REQUIRED, low=0.0, strict_low=True, doc="side length of the cube"),
        "count": Key("int", REQUIRED, low=8, doc="nodes per axis"),
        "topology": Key("choice", "box", ("box", "periodic")),
    },
    "u1": _potential_keys(),
    "u2": _potential_keys(),
    "solver": {
        "source": Key("choice", "solve", ("solve", "closed_form")),
        "scheme": Key("choice", "imex", ("imex", "explicit")),
        "dt": Key("float", 1e-3, low=0.0, strict_low=True),
        "t_start": Key("float", 0.0, low=0.0),
        "initial": Key("choice", "constant", INITIAL),
        "base": Key("float", 1.0, doc="cosine initial datum: base + sum_j A_j cos(2 pi <m_j, x>/L)"),
        "amplitudes": Key("floats", ()),
        "modes": Key("modes", ()),
        "barenblatt_c": Key("float", 0.5, low=0.0, strict_low=True),
        "sigma0": Key("float", None, low=0.0, strict_low=True, doc="kernel start width (default 4h)"),
        "snapshot_step": Key("float", 0.01, low=0.0, strict_low=True, doc="volume experiment snapshot spacing"),
        "t_end": Key("float", None, low=0.0, strict_low=True),
    },
    "estimate": {
        "experiment": Key("choice", REQUIRED, EXPERIMENTS),
        "name": Key("str", "run"),
        "k": Key("auto_float", "auto", low=0.0, doc="curvature-type constant; 'auto' uses the audited minimum"),
        "k3": Key("auto_float", "auto"),
        "tolerance": Key("float", 5e-3, low=0.0, strict_low=True),
        "expect": Key("choice", "inequality", ("inequality", "equality")),
        "times": Key("floats", ()),
        "derivatives": Key("choices", ("stencil",), ("stencil", "analytic")),
        "s": Key("float", None, low=0.0, strict_low=True),
        "t": Key("float", None, low=0.0, strict_low=True),
        "x0": Key("floats", None),
        "pairs": Key("choice", "random", ("random", "characteristic")),
        "pair_count": Key("int", 20, low=1),
        "pair_seed": Key("int", 0, low=0),
        "pair_spread": Key("float", 0.8, low=0.0, strict_low=True),
        "pair_radius": Key("float", 2.0, low=0.0, strict_low=True),
        "nodes": Key("int", 256, low=8, doc="path nodes for cost minimization"),
        "m": Key("float", 2.0, low=1.0, strict_low=True),
        "band": Key("int", 1, low=0),
        "seed_count": Key("int", 200, low=1),
        "seed_halfwidth": Key("float", 0.5, low=0.0, strict_low=True),
        "seed_rng": Key("int", 0, low=0),
    },
    "flow": {
        "curve": Key("choice", "circle", ("circle", "ellipse")),
        "radius": Key("float", 1.0, low=0.0, strict_low=True),
        "axes": Key("floats", (2.0, 1.0)),
        "center": Key("floats", (0.0, 0.0)),
        "nodes": Key("int", 512, low=64),
        "t_end": Key("float", REQUIRED, low=0.0, strict_low=True),
        "outputs": Key("int", 20, low=1),
        "T": Key("auto_float", "auto", low=0.0, strict_low=True, doc="'auto': circle extinction time"),
        "variant": Key("choice", "weighted", ("sinh", "b", "weighted")),
        "K": Key("auto_float", "auto"),
        "density": Key("choice", "solved", ("solved", "sharp")),
        "dt": Key("float", None, low=0.0, strict_low=True, doc="curve step (default half the CFL limit)"),
        "radius_tolerance": Key("float", 1e-4, low=0.0, strict_low=True),
    },
    "output": {
        "dir": Key("str", None),
        "formats": Key("choices", ("json", "csv", "svg"), ("json", "csv", "svg")),
    },
    "sweep": {
        "experiment": Key("choice", REQUIRED, EXPERIMENTS[:-1]),
        "parameter": Key("str", REQUIRED, doc="section.key to vary"),
        "values": Key("strs", REQUIRED),
    },
}

# sections each experiment reads; [estimate] and [output] are always allowed
NEEDS = {
    "liyau": ("grid", "u1", "u2", "solver"),
    "matrix-liyau": ("grid", "u1", "u2", "solver"),
    "harnack": ("grid", "u1", "u2", "solver"),
    "cheeger-yau": ("grid", "u1", "u2", "solver"),
    "ab": ("grid", "u1", "solver"),
    "cost-compare": ("grid", "u1", "u2"),
    "flow": ("grid", "u1", "flow"),
    "volume": ("grid", "u1", "u2", "solver"),
}
OPTIONAL = {"u1", "u2", "solver", "output"}


@dataclass
class ExperimentConfig:
    """Validated configuration; ``values[section][key]`` holds typed values with defaults filled."""

    experiment: str
    values: dict
    lines: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.values["estimate"]["name"]

    def get(self, section, key):
        return self.values[section][key]

    def echo(self) -> dict:
        return {s: {k: _plain(v) for k, v in kv.items()} for s, kv in self.values.items()}


def _plain(v):
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    return v


# -- text level ------------------------------------------------------------------------------

_SECTION = re.compile(r"^\s*\[([^\]]+)\]")
_KEY = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")


def _line_numbers(text):
    """``{(section, key): line}`` and ``{section: line}`` from a plain scan of the text."""
    keys, sections = {}, {}
    current = None
    for i, line in enumerate(text.splitlines(), 1):
        if line.lstrip().startswith(("#", ";")) or not line.strip():
            continue
        m = _SECTION.match(line)
        if m:
            current = m.group(1).strip()
            sections.setdefault(current, i)
            continue
        m = _KEY.match(line)
        if m and current is not None and not line[0].isspace():
            keys.setdefault((current, m.group(1).strip()), i)
    return keys, sections


def read_raw(text):
    """Parse the text into ``{section: {key: string}}`` plus line maps; syntax errors become a ConfigError."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"), inline_comment_prefixes=("#",),
                                   strict=True, default_section="__defaults__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError([ConfigIssue(exc.lineno, "?", None, "key outside any [section]")]) from None
    except configparser.ParsingError as exc:
        raise ConfigError([ConfigIssue(n, "?", None, f"cannot parse {line.strip()!r}") for n, line in exc.errors]) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError([ConfigIssue(exc.lineno, exc.section, None, "duplicate section")]) from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError([ConfigIssue(exc.lineno, exc.section, exc.option, "duplicate key")]) from None
    raw = {s: dict(cp.items(s)) for s in cp.sections()}
    keys, sections = _line_numbers(text)
    return raw, {"keys": keys, "sections": sections}


# -- typed values ------------------------------------------------------------------------------

def _split(text, sep=","):
    return [p.strip() for p in text.split(sep) if p.strip()]


def _convert(key: Key, text: str):
    kind = key.kind
    if kind == "int":
        return int(text)
    if kind == "float":
        v = float(text)
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v
    if kind == "auto_float":
        return "auto" if text.strip().lower() == "auto" else float(text)
    if kind == "str":
        return text.strip()
    if kind == "strs":
        return tuple(_split(text))
    if kind == "floats":
        return tuple(float(p) for p in _split(text))
    if kind == "modes":
        return tuple(tuple(int(x) for x in row.replace(",", " ").split()) for row in _split(text, ";"))
    if kind == "choice":
        v = text.strip()
        if v not in key.choices:
            raise ValueError(f"must be one of {', '.join(key.choices)}")
        return v
    if kind == "choices":
        vs = tuple(_split(text))
        bad = [v for v in vs if v not in key.choices]
        if bad:
            raise ValueError(f"unknown {', '.join(bad)}; choose from {', '.join(key.choices)}")
        return vs
    raise AssertionError(kind)


def _range_message(key: Key, v, name):
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        return None
    if key.low is not None and (v < key.low or (key.strict_low and v == key.low)):
        return f"{name} must be {'>' if key.strict_low else '≥'} {key.low:g}"
    if key.high is not None and v > key.high:
        return f"{name} must be ≤ {key.high:g}"
    return None


def validate(raw: dict, lines: dict) -> ExperimentConfig:
    """Typed, defaulted and cross-checked configuration, or a ConfigError listing every problem."""
    issues = []
    keyline = lines.get("keys", {})
    secline = lines.get("sections", {})

    def err(section, key, msg):
        line = keyline.get((section, key)) if key else secline.get(section)
        issues.append(ConfigIssue(line, section, key, msg))

    for s in raw:
        if s not in SCHEMA:
            err(s, None, f"unknown section; expected one of {', '.join(SCHEMA)}")
    values = {}
    for s, schema in SCHEMA.items():
        if s not in raw:
            continue
        vals = {}
        for k, text in raw[s].items():
            if k not in schema:
                err(s, k, "unknown key")
                continue
            try:
                v = _convert(schema[k], text)
            except ValueError as exc:
                err(s, k, f"expected {schema[k].kind}: {exc}")
                continue
            msg = _range_message(schema[k], v, k)
            if msg:
                err(s, k, msg)
                continue
            vals[k] = v
        for k, spec in schema.items():
            if k not in vals and not any(k == kk for kk in raw[s]):
                if spec.default is REQUIRED:
                    err(s, None, f"missing required key {k!r}")
                else:
                    vals[k] = spec.default
        values[s] = vals

    if "estimate" not in raw:
        err("estimate", None, "missing section [estimate]")
        raise ConfigError(issues)
    experiment = values["estimate"].get("experiment")
    if experiment == "sweep":
        if "sweep" not in raw:
            err("sweep", None, "missing section [sweep] for experiment = sweep")
        target = values.get("sweep", {}).get("experiment")
    else:
        target = experiment
        if "sweep" in raw:
            err("sweep", None, "a [sweep] section needs experiment = sweep")
    if target in NEEDS:
        for s in NEEDS[target]:
            if s not in raw and s not in OPTIONAL:
                err(s, None, f"missing section [{s}] required by experiment {target}")
        for s in SCHEMA:
            if s not in values and s in NEEDS[target] + ("output",):
                values[s] = {k: spec.default for k, spec in SCHEMA[s].items() if spec.default is not REQUIRED}
    if not issues and target in NEEDS:
        _cross_checks(target, values, err)
    if issues:
        raise ConfigError(issues)
    return ExperimentConfig(experiment, values, lines, raw)


def _cross_checks(exp, v, err):
    g, est = v["grid"], v["estimate"]
    dim = g["dim"]
    for s in ("u1", "u2"):
        if s not in v:
            continue
        u = v[s]
        fam = u["family"]
        if fam == "trig":
            if not u["amplitudes"]:
                err(s, "amplitudes", "trig needs amplitudes")
            elif len(u["modes"] or ()) != len(u["amplitudes"]):
                err(s, "modes", "need one mode row per amplitude")
            elif any(len(r) != dim for r in u["modes"]):
                err(s, "modes", f"each mode row needs {dim} integers")
            if u["phases"] is not None and len(u["phases"]) != len(u["amplitudes"] or ()):
                err(s, "phases", "need one phase per amplitude")
        for key in ("b", "center"):
            if u[key] is not None and len(u[key]) not in (1, dim):
                err(s, key, f"need 1 or {dim} entries")
    if "solver" in v:
        sol = v["solver"]
        if sol["initial"] == "cosine" and len(sol["amplitudes"]) != len(sol["modes"]):
            err("solver", "modes", "need one mode row per amplitude")
        if sol["source"] == "closed_form":
            u1, u2 = v["u1"], v.get("u2", {"family": "zero"})
            if not (u1["family"] == "quadratic" and u1["a"] < 0 and u2["family"] == "zero"):
                err("solver", "source", "closed_form needs u1 quadratic with a < 0 and u2 zero")
            if g["topology"] != "box":
                err("solver", "source", "closed_form needs a box grid")
    if exp in ("liyau", "matrix-liyau", "ab"):
        if not est["times"]:
            err("estimate", "times", f"experiment {exp} needs check times")
        if "analytic" in est["derivatives"] and v["solver"]["source"] != "closed_form":
            err("estimate", "derivatives", "analytic derivatives need solver source = closed_form")
        for t in est["times"]:
            if t <= v["solver"]["t_start"] and v["solver"]["source"] == "solve":
                err("estimate", "times", f"check time {t:g} must exceed t_start")
    if exp == "harnack":
        s, t = est["s"], est["t"]
        if s is None or t is None:
            err("estimate", "t", "harnack needs s and t")
        elif not t > s:
            err("estimate", "s", "need s < t")
        elif v["solver"]["source"] == "solve" and s < v["solver"]["t_start"]:
            err("estimate", "s", "s must not precede t_start")
        if est["pairs"] == "characteristic" and v["u1"]["family"] != "quadratic":
            err("estimate", "pairs", "characteristic pairs need a quadratic u1")
    if exp in ("cheeger-yau", "cost-compare"):
        if est["t"] is None:
            err("estimate", "t", f"{exp} needs t")
        if est["x0"] is not None and len(est["x0"]) != dim:
            err("estimate", "x0", f"need {dim} coordinates")
        if g["topology"] != "box":
            err("grid", "topology", f"{exp} runs on box grids")
    if exp == "flow":
        f = v["flow"]
        if dim != 2:
            err("grid", "dim", "flow runs in the plane (dim = 2)")
        if f["T"] == "auto" and not (f["curve"] == "circle" and v["u1"]["family"] in ("quadratic", "zero")):
            err("flow", "T", "T = auto needs a circle and a quadratic or zero potential")
        if f["density"] == "sharp" and v["u1"]["family"] not in ("quadratic", "zero"):
            err("flow", "density", "sharp density needs a quadratic or zero potential")
        if len(f["center"]) != 2:
            err("flow", "center", "need 2 coordinates")
        if f["curve"] == "ellipse" and len(f["axes"]) != 2:
            err("flow", "axes", "need 2 semi-axes")
    if exp == "volume":
        sol = v["solver"]
        if sol["t_end"] is None or not sol["t_end"] > sol["t_start"]:
            err("solver", "t_end", "volume needs t_end > t_start")
        if sol["source"] == "closed_form" and sol["t_start"] <= 0:
            err("solver", "t_start", "closed_form snapshots need t_start > 0")


def parse_config(text: str) -> ExperimentConfig:
    raw, lines = read_raw(text)
    return validate(raw, lines)


# -- sweeps ------------------------------------------------------------------------------

def _fmt_value(text):
    return re.sub(r"[^A-Za-z0-9_.+-]", "_", text)


def expand_sweep(cfg: ExperimentConfig) -> list:
    """Child configs ``[(label, ExperimentConfig)]``, one per swept value, each with its own output label."""
    if cfg.experiment != "sweep":
        raise ValueError("not a sweep configuration")
    sw = cfg.get("sweep", "parameter")
    line = cfg.lines["keys"].get(("sweep", "parameter"))
    if "." not in sw:
        raise ConfigError([ConfigIssue(line, "sweep", "parameter", "parameter must read section.key")])
    section, key = sw.split(".", 1)
    if section not in SCHEMA or key not in SCHEMA[section] or section == "sweep":
        raise ConfigError([ConfigIssue(line, "sweep", "parameter", f"unknown parameter {sw!r}")])
    children, issues = [], []
    for value in cfg.get("sweep", "values"):
        raw = copy.deepcopy(cfg.raw)
        raw.pop("sweep")
        raw["estimate"]["experiment"] = cfg.get("sweep", "experiment")
        raw.setdefault(section, {})[key] = value
        label = f"{key}={_fmt_value(value)}"
        raw["estimate"]["name"] = f"{cfg.name}/{label}"
        try:
            children.append((label, validate(raw, cfg.lines)))
        except ConfigError as exc:
            vline = cfg.lines["keys"].get(("sweep", "values"))
            issues.extend(ConfigIssue(vline, e.section, e.key, f"for {label}: {e.message}") for e in exc.errors)
    if issues:
        raise ConfigError(issues)
    return children


def defaults_table() -> list:
    """Rows ``(section, key, default, doc)`` for documentation."""
    rows = []
    for s, schema in SCHEMA.items():
        for k, spec in schema.items():
            d = "required" if spec.default is REQUIRED else ("" if spec.default is None else spec.default)
            if isinstance(d, tuple):
                d = ", ".join(map(str, d))
            rows.append((s, k, str(d), spec.doc))
    return rows
