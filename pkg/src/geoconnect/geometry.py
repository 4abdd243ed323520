"""Riemannian base data (S, g) with the shift field delta and lapse-like beta.

All coordinates live in a single chart.  Batched helpers take points of
shape (N, d); the single-point operations wrap them.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .fieldlang import FieldExpr, compile_bundle, parse, FieldDomainError

EPS_DOM = 1e-9
MAX_CONDITION = 1e12


class GeometryError(ValueError):
    pass


class ExcludedRegionError(GeometryError):
    pass


class SingularMetricError(GeometryError):
    pass


@dataclass(frozen=True)
class Box:
    """Closed axis-aligned box removed from the chart.

    Degenerate boxes are allowed: ``Box((-1, 0), (1, 0))`` is the slit
    segment from (-1, 0) to (1, 0).
    """

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        if len(lo) != len(hi) or any(a > b for a, b in zip(lo, hi)):
            raise GeometryError(f"invalid box {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, x, margin=EPS_DOM):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo = np.array(self.lo) - margin
        hi = np.array(self.hi) + margin
        return np.all((x >= lo) & (x <= hi), axis=1)

    def hits_segment(self, a, b, margin=EPS_DOM):
        """Vectorised slab test: does segment a[i]-b[i] meet the inflated box?"""
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        lo = np.array(self.lo) - margin
        hi = np.array(self.hi) + margin
        d = b - a
        t0 = np.zeros(a.shape[0])
        t1 = np.ones(a.shape[0])
        with np.errstate(divide="ignore", invalid="ignore"):
            for k in range(a.shape[1]):
                dk = d[:, k]
                flat = dk == 0.0
                outside = flat & ((a[:, k] < lo[k]) | (a[:, k] > hi[k]))
                ta = (lo[k] - a[:, k]) / dk
                tb = (hi[k] - a[:, k]) / dk
                tmin = np.where(flat, -np.inf, np.minimum(ta, tb))
                tmax = np.where(flat, np.inf, np.maximum(ta, tb))
                t0 = np.maximum(t0, tmin)
                t1 = np.minimum(t1, tmax)
                t1 = np.where(outside, -1.0, t1)
        return t0 <= t1

    @property
    def extent(self):
        return np.array(self.hi) - np.array(self.lo)


class Geom(NamedTuple):
    """Field values at a batch of points."""

    g: np.ndarray  # (N, d, d)
    dg: np.ndarray  # (N, d, d, d), dg[n, i, j, k] = d_k g_ij
    delta: np.ndarray  # (N, d)
    ddelta: np.ndarray  # (N, d, d), ddelta[n, i, j] = d_j delta^i
    beta: np.ndarray  # (N,)
    dbeta: np.ndarray  # (N, d)


@dataclass(frozen=True, eq=False)
class MetricModel:
    """Chart data for (S, g, delta, beta).

    ``metric`` is a d x d nested tuple of scalar FieldExprs, or None for the
    identity.  ``delta`` is a vector field, ``beta`` a scalar field >= 0.
    """

    dimension: int
    delta: FieldExpr
    beta: FieldExpr
    metric: tuple | None = None
    excluded: tuple = ()
    name: str = "custom"
    lightlike: bool = False

    def __post_init__(self):
        d = self.dimension
        if self.delta.arity != "vector" or self.delta.dimension != d:
            raise GeometryError("delta must be a vector field of the model dimension")
        if self.beta.arity != "scalar" or self.beta.dimension != d:
            raise GeometryError("beta must be a scalar field of the model dimension")
        if self.metric is not None:
            rows = tuple(tuple(r) for r in self.metric)
            if len(rows) != d or any(len(r) != d for r in rows):
                raise GeometryError("metric must be d x d")
            for i in range(d):
                for j in range(d):
                    if rows[i][j].arity != "scalar":
                        raise GeometryError("metric entries must be scalar fields")
                    if rows[i][j].pretty() != rows[j][i].pretty():
                        raise GeometryError(f"metric entries ({i},{j}) and ({j},{i}) differ")
            object.__setattr__(self, "metric", rows)
        object.__setattr__(self, "excluded", tuple(self.excluded))
        for box in self.excluded:
            if len(box.lo) != d:
                raise GeometryError("excluded region dimension mismatch")
        if self.lightlike and not self.beta.is_zero():
            raise GeometryError("a lightlike model needs beta identically 0")

    # compiled evaluation ---------------------------------------------------

    @property
    def flat(self) -> bool:
        return self.metric is None or all(
            e.is_constant() for row in self.metric for e in row
        )

    @cached_property
    def _bundle(self):
        d = self.dimension
        nodes = []
        if self.metric is not None:
            for i in range(d):
                for j in range(d):
                    nodes.append(self.metric[i][j].ast)
            for i in range(d):
                for j in range(d):
                    for k in range(d):
                        nodes.append(self.metric[i][j].partial(k).ast)
        nodes.extend(self.delta.components)
        for i in range(d):
            for j in range(d):
                nodes.append(self.delta.partial(j).components[i])
        nodes.append(self.beta.ast)
        for k in range(d):
            nodes.append(self.beta.partial(k).ast)
        return compile_bundle(nodes, d)

    def geom(self, x) -> Geom:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        n, d = x.shape
        raw = self._bundle(x)
        if not np.all(np.isfinite(raw)):
            bad = x[np.nonzero(~np.all(np.isfinite(raw), axis=0))[0][0]]
            for f in self.fields():
                f.eval(bad)
            raise FieldDomainError("non-finite model field", None, bad)
        pos = 0
        if self.metric is not None:
            g = raw[pos : pos + d * d].T.reshape(n, d, d)
            pos += d * d
            dg = raw[pos : pos + d**3].T.reshape(n, d, d, d)
            pos += d**3
        else:
            g = np.broadcast_to(np.eye(d), (n, d, d))
            dg = np.zeros((n, d, d, d))
        delta = raw[pos : pos + d].T
        pos += d
        ddelta = raw[pos : pos + d * d].T.reshape(n, d, d)
        pos += d * d
        beta = raw[pos]
        dbeta = raw[pos + 1 : pos + 1 + d].T
        return Geom(g, dg, delta, ddelta, beta, dbeta)

    def fields(self):
        out = [self.delta, self.beta]
        if self.metric is not None:
            out.extend(e for row in self.metric for e in row)
        return out

    @cached_property
    def seam_fields(self):
        """Scalar fields whose zero sets are piecewise seams of the model."""
        trees = []
        for f in self.fields():
            for s in f.seams:
                if s not in trees:
                    trees.append(s)
        return tuple(FieldExpr.from_tree(t, self.dimension) for t in trees)

    # domain ------------------------------------------------------------------

    def in_excluded(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        mask = np.zeros(x.shape[0], dtype=bool)
        for box in self.excluded:
            mask |= box.contains(x)
        return mask

    def segments_blocked(self, a, b):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        b = np.atleast_2d(np.asarray(b, dtype=float))
        mask = np.zeros(a.shape[0], dtype=bool)
        for box in self.excluded:
            mask |= box.hits_segment(a, b)
        return mask

    def check_domain(self, x):
        mask = self.in_excluded(x)
        if np.any(mask):
            bad = np.atleast_2d(x)[np.nonzero(mask)[0][0]]
            raise ExcludedRegionError(f"point {list(bad)} lies in an excluded region")

    # checks ------------------------------------------------------------------

    def validate(self, samples):
        """Check the model invariants on sample points (N, d)."""
        samples = np.atleast_2d(np.asarray(samples, dtype=float))
        samples = samples[~self.in_excluded(samples)]
        geo = self.geom(samples)
        eig = np.linalg.eigvalsh(geo.g)
        if np.any(eig[:, 0] <= 1e-12):
            raise GeometryError("metric is not positive definite on the samples")
        if np.any(geo.beta < 0):
            raise GeometryError("beta is negative on the samples")
        if self.lightlike:
            norms = np.sqrt(np.einsum("ni,nij,nj->n", geo.delta, geo.g, geo.delta))
            if np.any(norms <= 0):
                raise GeometryError("delta vanishes on the samples of a lightlike model")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def inner(model: MetricModel, x, xi, xi2) -> float:
    model.check_domain(x)
    g = model.geom(x).g[0]
    return float(np.asarray(xi, dtype=float) @ g @ np.asarray(xi2, dtype=float))


def christoffel_from(g, dg):
    """Gamma[n, i, j, k] from metric and its derivatives (batched)."""
    cond = np.linalg.cond(g)
    if np.any(cond > MAX_CONDITION):
        raise SingularMetricError(f"metric condition number {np.max(cond):.3g} exceeds {MAX_CONDITION:g}")
    ginv = np.linalg.inv(g)
    # first kind: [l, j, k] = 1/2 (d_j g_lk + d_k g_lj - d_l g_jk)
    first = 0.5 * (
        np.einsum("nlkj->nljk", dg) + np.einsum("nljk->nljk", dg) - np.einsum("njkl->nljk", dg)
    )
    return np.einsum("nil,nljk->nijk", ginv, first)


def christoffel_batch(model: MetricModel, x, geo: Geom | None = None):
    geo = geo or model.geom(x)
    if model.metric is None:
        n, d = geo.delta.shape
        return np.zeros((n, d, d, d))
    return christoffel_from(geo.g, geo.dg)


def christoffel(model: MetricModel, x):
    """Gamma^i_{jk} at a single point, shape (d, d, d)."""
    model.check_domain(x)
    return christoffel_batch(model, np.atleast_2d(x))[0]


def curl_matrix(geo: Geom):
    """A[n, i, j] = d_i w_j - d_j w_i with w = g delta (the 1-form of delta)."""
    # d_k w_j = d_k g_jl delta^l + g_jl d_k delta^l
    dw = np.einsum("njlk,nl->nkj", geo.dg, geo.delta) + np.einsum("njl,nlk->nkj", geo.g, geo.ddelta)
    return dw - np.swapaxes(dw, 1, 2), dw


def curl_operator(model: MetricModel, x, xi):
    """F(x)[xi], defined by <F[xi], xi'> = <delta'[xi], xi'> - <xi, delta'[xi']>."""
    model.check_domain(x)
    geo = model.geom(np.atleast_2d(x))
    A, _ = curl_matrix(geo)
    lowered = np.asarray(xi, dtype=float) @ A[0]
    return np.linalg.solve(geo.g[0], lowered)


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

COS3_LAMBDA = "piecewise(x1 < pi, -cos(x1)^3, 1)"
COS3_DELTA = f"[{COS3_LAMBDA}, 0, 0]"
# positive on the slit plane, vanishing on the slit so that g0 / lambda^2 is complete
SLIT_LAMBDA = (
    "(x2^2 + piecewise(x1 > 1, (x1 - 1)^4, piecewise(x1 < -1, (x1 + 1)^4, 0)))"
    " / (1 + x2^2 + piecewise(x1 > 1, (x1 - 1)^4, piecewise(x1 < -1, (x1 + 1)^4, 0)))"
)


def slit(lo, hi) -> Box:
    return Box(lo, hi)


def make_model(dimension, delta, beta="0", metric=None, excluded=(), name="custom", lightlike=None):
    """Build a MetricModel from fieldlang sources (or FieldExprs)."""
    d = dimension
    delta_e = delta if isinstance(delta, FieldExpr) else parse(delta, d)
    beta_e = beta if isinstance(beta, FieldExpr) else parse(beta, d)
    metric_e = None
    if metric is not None:
        metric_e = tuple(
            tuple(m if isinstance(m, FieldExpr) else parse(str(m), d) for m in row) for row in metric
        )
    if lightlike is None:
        lightlike = beta_e.is_zero()
    return MetricModel(d, delta_e, beta_e, metric_e, tuple(excluded), name, lightlike)


def builtin_model(name: str, dimension: int | None = None, delta=None, beta=None) -> MetricModel:
    """Catalog: flat, flat-lightlike, stationary-flat, slit-plane, cos3-wall."""
    if name == "flat":
        d = dimension or 2
        delta = delta or "[" + ", ".join(["1"] + ["0"] * (d - 1)) + "]"
        return make_model(d, delta, beta or "0", name="flat")
    if name == "flat-lightlike":
        d = dimension or 2
        return make_model(d, "[" + ", ".join(["1"] + ["0"] * (d - 1)) + "]", "0", name=name)
    if name == "stationary-flat":
        d = dimension or 2
        return make_model(d, "[" + ", ".join(["0"] * d) + "]", "1", name=name)
    if name == "cos3-wall":
        d = dimension or 3
        return make_model(d, "[" + ", ".join([COS3_LAMBDA] + ["0"] * (d - 1)) + "]", "0", name=name)
    if name == "slit-plane":
        return make_model(
            2, f"[{SLIT_LAMBDA}, 0]", "0", excluded=(slit((-1.0, 0.0), (1.0, 0.0)),), name=name
        )
    raise KeyError(f"unknown builtin model {name!r}")


BUILTIN_NAMES = ("flat", "flat-lightlike", "stationary-flat", "slit-plane", "cos3-wall")
