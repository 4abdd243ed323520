"""Lorentzian metric on S x R assembled from a MetricModel.

    <z, z'>_L = <xi, xi'> + <delta, xi> tau' + <delta, xi'> tau - beta_eff tau tau'

with beta_eff = beta + 1/n for the stationary perturbation of index n, and
the Killing field fixed to d/dt.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import MetricModel, GeometryError

EPS_NULL = 1e-10
EPS_BETA = 1e-12


class PreconditionError(GeometryError):
    pass


@dataclass(frozen=True, eq=False)
class SpacetimeModel:
    base: MetricModel
    n: int | None = None

    def __post_init__(self):
        if self.n is not None and (int(self.n) != self.n or self.n < 1):
            raise ValueError("perturbation index must be a positive integer or None")

    @property
    def dimension(self):
        return self.base.dimension

    @property
    def shift(self) -> float:
        return 0.0 if self.n is None else 1.0 / self.n

    def perturbed(self, n):
        return SpacetimeModel(self.base, n)

    def beta_eff(self, x):
        return self.base.geom(x).beta + self.shift

    def metric_matrix(self, x):
        """(d+1) x (d+1) matrix of the assembled form at one point."""
        self.base.check_domain(x)
        geo = self.base.geom(np.atleast_2d(x))
        d = self.dimension
        g = geo.g[0]
        w = g @ geo.delta[0]
        out = np.empty((d + 1, d + 1))
        out[:d, :d] = g
        out[:d, d] = w
        out[d, :d] = w
        out[d, d] = -(geo.beta[0] + self.shift)
        return out

    # batched pieces used by the action and ODE layers
    def pieces(self, x):
        """(g, w = g delta, beta_eff) at points (N, d)."""
        geo = self.base.geom(x)
        w = np.einsum("nij,nj->ni", geo.g, geo.delta)
        return geo, w, geo.beta + self.shift


def _split(model, zeta):
    zeta = np.asarray(zeta, dtype=float)
    return zeta[: model.dimension], float(zeta[model.dimension])


def lorentz_inner(model: SpacetimeModel, z, zeta, zeta2) -> float:
    x = np.asarray(z, dtype=float)[: model.dimension]
    G = model.metric_matrix(x)
    return float(np.asarray(zeta, dtype=float) @ G @ np.asarray(zeta2, dtype=float))


def causal_character(model: SpacetimeModel, z, zeta) -> str:
    zeta = np.asarray(zeta, dtype=float)
    if not np.any(zeta):
        return "zero"
    q = lorentz_inner(model, z, zeta, zeta)
    if abs(q) <= EPS_NULL:
        return "lightlike"
    return "timelike" if q < 0 else "spacelike"


def killing_pairing(model: SpacetimeModel, z, zeta) -> float:
    """<zeta, d/dt>_L = <delta, xi> - beta_eff tau."""
    x = np.asarray(z, dtype=float)[: model.dimension]
    G = model.metric_matrix(x)
    return float(np.asarray(zeta, dtype=float) @ G[:, -1])


def killing_pairing_batch(model: SpacetimeModel, x, v, tdot):
    _, w, b = model.pieces(x)
    return np.einsum("ni,ni->n", w, v) - b * tdot


def associated_riemannian_inner(model: SpacetimeModel, z, zeta, zeta2) -> float:
    """<.,.>_L - 2 <., K><., K> / <K, K>; needs <K, K> = -beta_eff < 0."""
    x = np.asarray(z, dtype=float)[: model.dimension]
    G = model.metric_matrix(x)
    kk = G[-1, -1]
    if -kk <= EPS_BETA:
        raise PreconditionError("the Killing field is not timelike here (beta_eff <= 1e-12)")
    zeta = np.asarray(zeta, dtype=float)
    zeta2 = np.asarray(zeta2, dtype=float)
    return float(zeta @ G @ zeta2 - 2.0 * (zeta @ G[:, -1]) * (zeta2 @ G[:, -1]) / kk)
