"""Scenario files: YAML documents naming a model, two endpoints and solver settings.

A split model::

    name: cos3-wall
    model:
      kind: split            # split | gpw | builtin
      dimension: 3
      delta: "[piecewise(x1 < pi, -cos(x1)^3, 1), 0, 0]"
      beta: "0"
      metric: [["1", "0", "0"], ...]   # optional, identity when absent
      excluded:
        - {lo: [-1, 0], hi: [1, 0]}
    endpoints:
      p: {x: [0, 0, 0], t: 0}
      q: {x: [3*pi/2, 0, 0], t: 0}
    config: {nodes: 32, n_start: 8, k_max: 10, seed: 0}

``kind: builtin`` takes ``name`` (and optionally ``dimension``) from the
catalog.  ``kind: gpw`` takes ``H`` and an optional Riemannian ``metric``;
its endpoints are ``{x: [...], u: .., v: ..}``.  Numbers may be written as
constant expressions such as ``3*pi/2``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .action import EndpointPair
from .connect import ConnectConfig
from .fieldlang import FieldError, constant
from .geometry import BUILTIN_NAMES, Box, GeometryError, builtin_model, make_model
from .gpw import make_gpw

KINDS = ("split", "gpw", "builtin")
SCENARIO_SUFFIX = ".scn"

# config keys accepted in scenario files and on the command line
CONFIG_ALIASES = {"nodes": "m", "n_start": "n0"}


class ScenarioError(ValueError):
    """All problems found in one scenario file, each prefixed by its location."""

    def __init__(self, source, problems):
        self.source = str(source)
        self.problems = list(problems)
        super().__init__(f"{self.source}: " + "; ".join(self.problems))


@dataclass
class Scenario:
    name: str
    kind: str
    model: object
    p: np.ndarray
    q: np.ndarray
    config: ConnectConfig
    source: str = ""
    assumptions: list = field(default_factory=list)

    @property
    def is_gpw(self) -> bool:
        return self.kind == "gpw"

    @property
    def pair(self) -> EndpointPair:
        if self.is_gpw:
            raise ValueError("GPW scenarios use (x, u, v) endpoints")
        d = self.model.dimension
        return EndpointPair(self.p[:d], self.p[d], self.q[:d], self.q[d])


def shipped_scenarios():
    root = resources.files("geoconnect") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(SCENARIO_SUFFIX))


def resolve(path) -> Path:
    """A file path, or the bare name of a shipped scenario."""
    candidate = Path(path)
    if candidate.exists():
        return candidate
    name = candidate.name if candidate.suffix == SCENARIO_SUFFIX else candidate.name + SCENARIO_SUFFIX
    shipped = resources.files("geoconnect") / "scenarios" / name
    if shipped.is_file():
        return Path(str(shipped))
    raise FileNotFoundError(f"no scenario file {path!r} (shipped: {', '.join(shipped_scenarios())})")


class _Collector:
    def __init__(self):
        self.problems = []

    def add(self, where, message):
        self.problems.append(f"{where}: {message}")

    def number(self, value, where):
        if isinstance(value, bool):
            self.add(where, "expected a number")
            return None
        if isinstance(value, (int, float)):
            return float(value)
        if isinstance(value, str):
            try:
                return constant(value)
            except FieldError as exc:
                self.add(where, str(exc))
                return None
        self.add(where, f"expected a number, got {type(value).__name__}")
        return None

    def vector(self, value, where, size=None):
        if not isinstance(value, (list, tuple)):
            self.add(where, "expected a list of numbers")
            return None
        out = [self.number(v, f"{where}[{i}]") for i, v in enumerate(value)]
        if any(v is None for v in out):
            return None
        if size is not None and len(out) != size:
            self.add(where, f"expected {size} entries, got {len(out)}")
            return None
        return np.array(out)

    def text(self, value, where, default=None):
        if value is None:
            if default is None:
                self.add(where, "missing field")
            return default
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return repr(value)
        if not isinstance(value, str):
            self.add(where, "expected an expression string")
            return None
        return value


def _metric_rows(c, raw, d, where):
    if raw is None:
        return None
    if not isinstance(raw, list) or len(raw) != d or any(not isinstance(r, list) or len(r) != d for r in raw):
        c.add(where, f"metric must be a {d} x {d} list of expressions")
        return None
    return [[c.text(e, f"{where}[{i}][{j}]") for j, e in enumerate(row)] for i, row in enumerate(raw)]


def _boxes(c, raw, d):
    boxes = []
    if raw is None:
        return boxes
    if not isinstance(raw, list):
        c.add("model.excluded", "expected a list of {lo, hi} boxes")
        return boxes
    for i, item in enumerate(raw):
        where = f"model.excluded[{i}]"
        if not isinstance(item, dict):
            c.add(where, "expected a mapping with lo and hi")
            continue
        lo = c.vector(item.get("lo"), f"{where}.lo", d)
        hi = c.vector(item.get("hi"), f"{where}.hi", d)
        if lo is None or hi is None:
            continue
        try:
            boxes.append(Box(lo, hi))
        except GeometryError as exc:
            c.add(where, str(exc))
    return boxes


def _build_model(c, spec, default_name="custom"):
    if not isinstance(spec, dict):
        c.add("model", "missing or not a mapping")
        return None, None
    kind = spec.get("kind", "split")
    if kind not in KINDS:
        c.add("model.kind", f"must be one of {', '.join(KINDS)}")
        return None, None
    if kind == "builtin":
        name = spec.get("name")
        if name not in BUILTIN_NAMES:
            c.add("model.name", f"unknown builtin {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
            return kind, None
        dim = spec.get("dimension")
        try:
            return kind, builtin_model(name, dim)
        except (FieldError, GeometryError) as exc:
            c.add("model", str(exc))
            return kind, None
    d = spec.get("dimension")
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        c.add("model.dimension", "expected a positive integer")
        return kind, None
    metric = _metric_rows(c, spec.get("metric"), d, "model.metric")
    name = str(spec.get("name", default_name))
    try:
        if kind == "gpw":
            H = c.text(spec.get("H"), "model.H")
            if H is None:
                return kind, None
            return kind, make_gpw(d, H, metric, name=name)
        delta = c.text(spec.get("delta"), "model.delta")
        beta = c.text(spec.get("beta"), "model.beta", default="0")
        boxes = _boxes(c, spec.get("excluded"), d)
        if delta is None:
            return kind, None
        return kind, make_model(d, delta, beta, metric, boxes, name=name)
    except (FieldError, GeometryError, ValueError) as exc:
        c.add("model", str(exc))
        return kind, None


def _endpoint(c, raw, where, d, gpw):
    if not isinstance(raw, dict):
        c.add(where, "missing or not a mapping")
        return None
    x = c.vector(raw.get("x"), f"{where}.x", d)
    keys = ("u", "v") if gpw else ("t",)
    extra = []
    for key in keys:
        if key not in raw:
            if gpw or key != "t":
                c.add(f"{where}.{key}", "missing field")
            extra.append(0.0)
            continue
        extra.append(c.number(raw[key], f"{where}.{key}"))
    if x is None or any(v is None for v in extra):
        return None
    return np.concatenate([x, extra])


def config_from(c, raw, where="config"):
    cfg = ConnectConfig()
    if raw is None:
        return cfg
    if not isinstance(raw, dict):
        c.add(where, "expected a mapping")
        return cfg
    known = {f.name: f.type for f in fields(ConnectConfig)}
    for key, value in raw.items():
        name = CONFIG_ALIASES.get(str(key).replace("-", "_"), str(key).replace("-", "_"))
        if name not in known:
            c.add(f"{where}.{key}", "unknown setting")
            continue
        number = c.number(value, f"{where}.{key}")
        if number is None:
            continue
        if isinstance(getattr(cfg, name), int):
            if number != int(number):
                c.add(f"{where}.{key}", "expected an integer")
                continue
            number = int(number)
        setattr(cfg, name, number)
    try:
        cfg.validate()
    except ValueError as exc:
        c.add(where, str(exc))
    return cfg


def parse_scenario(doc, source="<scenario>") -> Scenario:
    c = _Collector()
    if not isinstance(doc, dict):
        raise ScenarioError(source, ["top level: expected a mapping"])
    kind, model = _build_model(c, doc.get("model"), str(doc.get("name", Path(str(source)).stem)))
    ends = doc.get("endpoints")
    p = q = None
    if not isinstance(ends, dict):
        c.add("endpoints", "missing or not a mapping")
    elif model is not None:
        gpw = kind == "gpw"
        p = _endpoint(c, ends.get("p"), "endpoints.p", model.dimension, gpw)
        q = _endpoint(c, ends.get("q"), "endpoints.q", model.dimension, gpw)
        if not gpw:
            for label, point in (("p", p), ("q", q)):
                if point is not None and np.any(model.in_excluded(point[None, : model.dimension])):
                    c.add(f"endpoints.{label}", "lies in an excluded region")
    cfg = config_from(c, doc.get("config"))
    assumptions = doc.get("assumptions", [])
    if not isinstance(assumptions, list):
        c.add("assumptions", "expected a list of strings")
        assumptions = []
    if c.problems:
        raise ScenarioError(source, c.problems)
    name = str(doc.get("name", Path(str(source)).stem))
    return Scenario(name, kind, model, p, q, cfg, str(source), [str(a) for a in assumptions])


def load_scenario(path) -> Scenario:
    path = resolve(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(path, [f"not well-formed YAML: {exc}"]) from exc
    return parse_scenario(doc, path)
