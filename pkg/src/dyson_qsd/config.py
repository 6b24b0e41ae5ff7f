"""Experiment configuration: ``[section]`` headers with ``key = value`` lines.

Example::

    [experiment]
    name = survival

    [model]
    n_particles = 1
    gamma = 0.25
    a = 0.5

    [region]
    kind = box
    lo = -1
    hi = 1

    [run]
    T = 6
    n_paths = 1000
    seed = 7

Lists are comma separated. ``#`` and ``;`` start comments.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DysonQSDError, ParseError, ValidationError
from .integrator import SCHEMES, SchemeConfig
from .model import ModelParams, VSpec
from .qsd.regions import KINDS, Region

EXPERIMENTS = ("simulate", "collide", "survival", "fv", "converge", "oracle", "validate")

# section -> key -> (type, default); None means "required or unset"
SCHEMA = {
    "experiment": {"name": (str, None)},
    "model": {
        "n_particles": (int, None),
        "gamma": (float, None),
        "potential": (str, "quadratic"),
        "a": (float, 0.5),
    },
    "scheme": {
        "scheme": (str, "sorted_tamed_explicit"),
        "dt": (float, 1e-4),
        "taming_cap": (float, 2.0),
        "prox_tol": (float, 1e-9),
        "penalty_n": (int, 100),
    },
    "region": {
        "kind": (str, None),
        "lo": ("floats", None),
        "hi": ("floats", None),
        "L": (float, None),
        "b": (float, None),
    },
    "run": {
        "T": (float, 1.0),
        "n_paths": (int, 100),
        "M": (int, 1000),
        "T_burn": (float, 5.0),
        "T_avg": (float, 20.0),
        "seed": (int, 0),
        "output_dir": (str, "."),
        "x0": ("floats", None),
        "y0": ("floats", None),
        "thin": (int, 1),
        "threshold": (float, 1e-4),
        "bridge": (bool, True),
        "oracle_dt": (float, 1e-3),
        "times": ("floats", None),
        "fit_window": ("floats", None),
        "statistic": (str, "min_gap"),
        "bin_lo": (float, None),
        "bin_hi": (float, None),
        "bin_width": (float, 0.1),
        "grid_size": (int, 2000),
        "moment": (str, "gap"),
    },
}


def _convert(kind, raw: str):
    if kind == "floats":
        parts = [p for p in re.split(r"[,\s]+", raw.strip()) if p]
        return tuple(float(p) for p in parts)
    if kind is bool:
        v = raw.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is int:
        f = float(raw)
        if f != int(f):
            raise ValueError(f"not an integer: {raw!r}")
        return int(f)
    return kind(raw.strip())


@dataclass
class ExperimentConfig:
    experiment: str | None
    model: ModelParams
    scheme: SchemeConfig
    region: Region | None
    run: dict = field(default_factory=dict)

    def echo(self) -> dict:
        """Plain-data copy of every resolved value (for the manifest)."""
        r = None
        if self.region is not None:
            r = {"kind": self.region.kind, "lo": list(self.region.lo), "hi": list(self.region.hi),
                 "L": None if math.isnan(self.region.L) else self.region.L,
                 "b": None if math.isnan(self.region.b) else self.region.b}
        return {
            "experiment": self.experiment,
            "model": {"n_particles": self.model.n_particles, "gamma": self.model.gamma,
                      "potential": self.model.vspec.kind, "a": self.model.vspec.a},
            "scheme": {"scheme": self.scheme.scheme, "dt": self.scheme.dt, "taming_cap": self.scheme.taming_cap,
                       "prox_tol": self.scheme.prox_tol, "penalty_n": self.scheme.penalty_n},
            "region": r,
            "run": {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.run.items()},
        }


def _key_lines(text: str) -> dict:
    """(section, key) -> line number for error messages; key None marks the header."""
    out = {}
    section = None
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s or s[0] in "#;":
            continue
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            out.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:]+?)\s*[=:]", s)
        if m and section is not None:
            out.setdefault((section, m.group(1).strip()), no)
    return out


def raw_values(text: str) -> dict:
    """Parse to ``{section: {key: raw string}}`` checking sections and keys against the schema."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"), strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key outside of any [section]", line=exc.lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ParseError(exc.message.split(":", 1)[-1].strip(), line=exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ParseError(f"cannot parse {line.strip()!r}", line=lineno) from None
    lines = _key_lines(text)
    out = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ParseError(f"unknown section [{sec}]", line=lines.get((sec, None)), key=sec)
        out[sec] = {}
        for key, val in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ParseError(f"unknown key {key!r} in [{sec}]", line=lines.get((sec, key)), key=key)
            out[sec][key] = (val, lines.get((sec, key)))
    return out


def build_config(values: dict, overrides: dict | None = None) -> ExperimentConfig:
    """Resolve defaults, apply ``overrides`` (``{(section, key): raw}``) and validate everything."""
    merged = {sec: {k: v for k, v in keys.items()} for sec, keys in values.items()}
    for (sec, key), raw in (overrides or {}).items():
        if sec not in SCHEMA or key not in SCHEMA[sec]:
            raise ParseError(f"unknown key {key!r}", key=key)
        merged.setdefault(sec, {})[key] = (raw, None)
    resolved = {}
    for sec, keys in SCHEMA.items():
        resolved[sec] = {}
        for key, (kind, default) in keys.items():
            if key in merged.get(sec, {}):
                raw, line = merged[sec][key]
                try:
                    resolved[sec][key] = _convert(kind, raw)
                except ValueError as exc:
                    raise ParseError(f"{key}: {exc}", line=line, key=key) from None
            else:
                resolved[sec][key] = default
    return _validate(resolved, region_given="region" in merged)


def _validate(v: dict, region_given: bool) -> ExperimentConfig:
    name = v["experiment"]["name"]
    if name is not None and name not in EXPERIMENTS:
        raise ValidationError("name", f"experiment must be one of {', '.join(EXPERIMENTS)}")
    m = v["model"]
    if m["n_particles"] is None:
        raise ValidationError("n_particles", "is required")
    if m["n_particles"] < 1:
        raise ValidationError("n_particles", "must be >= 1")
    if m["gamma"] is None:
        raise ValidationError("gamma", "is required")
    if not (m["gamma"] > 0) or not math.isfinite(m["gamma"]):
        raise ValidationError("gamma", "must be positive")
    if m["potential"] not in ("quadratic", "zero"):
        raise ValidationError("potential", "must be quadratic or zero")
    if m["potential"] == "quadratic" and (not m["a"] >= 0 or not math.isfinite(m["a"])):
        raise ValidationError("a", "must be >= 0")
    vspec = VSpec.zero() if m["potential"] == "zero" else VSpec.quadratic(m["a"])
    model = ModelParams(m["n_particles"], m["gamma"], vspec)
    s = v["scheme"]
    if s["scheme"] not in SCHEMES:
        raise ValidationError("scheme", f"must be one of {', '.join(SCHEMES)}")
    for key in ("dt", "taming_cap", "prox_tol"):
        if not (s[key] > 0) or not math.isfinite(s[key]):
            raise ValidationError(key, "must be positive")
    if s["penalty_n"] < 1:
        raise ValidationError("penalty_n", "must be >= 1")
    scheme = SchemeConfig(**s)
    region = None
    r = v["region"]
    if region_given:
        kind = r["kind"]
        if kind not in KINDS:
            raise ValidationError("kind", f"region kind must be one of {', '.join(KINDS)}")
        try:
            if kind == "box":
                if r["lo"] is None or r["hi"] is None:
                    raise ValidationError("lo", "box needs lo and hi")
                region = Region.box(r["lo"], r["hi"])
            elif kind == "gap_cap":
                if r["L"] is None:
                    raise ValidationError("L", "gap_cap needs L")
                region = Region.gap_cap(r["L"])
            else:
                if r["b"] is None:
                    raise ValidationError("b", "half_below needs b")
                region = Region.half_below(r["b"])
            region.validate(model.n_particles)
        except ValidationError:
            raise
        except DysonQSDError as exc:
            raise ValidationError("region", str(exc)) from None
    run = dict(v["run"])
    for key in ("T", "T_avg", "bin_width", "oracle_dt"):
        if not (run[key] > 0) or not math.isfinite(run[key]):
            raise ValidationError(key, "must be positive")
    if not run["T_burn"] >= 0:
        raise ValidationError("T_burn", "must be >= 0")
    for key in ("n_paths", "thin"):
        if run[key] < 1:
            raise ValidationError(key, "must be >= 1")
    if run["M"] < 2:
        raise ValidationError("M", "must be >= 2")
    if not 0 <= run["seed"] < 2**64:
        raise ValidationError("seed", "must fit in 64 unsigned bits")
    if run["threshold"] < 0:
        raise ValidationError("threshold", "must be >= 0")
    if run["grid_size"] < 200:
        raise ValidationError("grid_size", "must be >= 200")
    n = model.n_particles
    for key in ("x0", "y0"):
        x = run[key]
        if x is not None:
            if len(x) != n:
                raise ValidationError(key, f"needs {n} coordinates")
            if np.any(np.diff(x) < 0):
                raise ValidationError(key, "must be weakly increasing")
    if run["fit_window"] is not None and (len(run["fit_window"]) != 2 or run["fit_window"][0] >= run["fit_window"][1]):
        raise ValidationError("fit_window", "needs two increasing times")
    if run["times"] is not None and (min(run["times"]) < 0 or max(run["times"]) > run["T"]):
        raise ValidationError("times", "must lie in [0, T]")
    if name in ("survival", "fv", "converge") and region is None:
        raise ValidationError("region", f"experiment {name} needs a [region]")
    if region is not None:
        for key in ("x0", "y0"):
            if run[key] is not None and not region.contains(run[key]):
                raise ValidationError(key, "must lie in the region")
    return ExperimentConfig(name, model, scheme, region, run)


def parse_config(text: str, overrides: dict | None = None) -> ExperimentConfig:
    return build_config(raw_values(text), overrides)
