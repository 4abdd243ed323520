"""Discrete action functionals on endpoint-pinned paths.

Paths are sampled on the uniform grid s_i = i/m.  Every integral uses the
midpoint rule on segments with the piecewise-constant velocity
v_i = (x_{i+1} - x_i) / h, which keeps the time reconstruction and the
Killing constant mutually exact.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import curl_matrix
from .spacetime import SpacetimeModel, EPS_BETA, PreconditionError


@dataclass(frozen=True, eq=False)
class DiscretePath:
    nodes: np.ndarray
    t: np.ndarray | None = None

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        object.__setattr__(self, "nodes", nodes)
        if self.t is not None:
            t = np.array(self.t, dtype=float)
            if t.shape != (nodes.shape[0],):
                raise ValueError("time nodes must match the spatial nodes")
            object.__setattr__(self, "t", t)
        if nodes.shape[0] < 2:
            raise ValueError("a path needs at least two nodes")

    @property
    def m(self) -> int:
        return self.nodes.shape[0] - 1

    @property
    def h(self) -> float:
        return 1.0 / self.m

    @property
    def dimension(self) -> int:
        return self.nodes.shape[1]

    @property
    def s(self):
        return np.linspace(0.0, 1.0, self.m + 1)

    @property
    def velocities(self):
        return np.diff(self.nodes, axis=0) * self.m

    @property
    def midpoints(self):
        return 0.5 * (self.nodes[1:] + self.nodes[:-1])

    @property
    def tdot(self):
        if self.t is None:
            raise ValueError("path has no time nodes")
        return np.diff(self.t) * self.m

    def with_time(self, t):
        return replace(self, t=np.asarray(t, dtype=float))

    @classmethod
    def straight(cls, xp, xq, m, tp=None, tq=None):
        s = np.linspace(0.0, 1.0, m + 1)[:, None]
        xp = np.asarray(xp, dtype=float)
        xq = np.asarray(xq, dtype=float)
        nodes = xp + s * (xq - xp)
        t = None
        if tp is not None:
            t = tp + s[:, 0] * (tq - tp)
        return cls(nodes, t)


@dataclass(frozen=True)
class EndpointPair:
    xp: tuple
    tp: float
    xq: tuple
    tq: float

    def __post_init__(self):
        object.__setattr__(self, "xp", tuple(float(v) for v in np.ravel(self.xp)))
        object.__setattr__(self, "xq", tuple(float(v) for v in np.ravel(self.xq)))
        object.__setattr__(self, "tp", float(self.tp))
        object.__setattr__(self, "tq", float(self.tq))

    @property
    def dt(self) -> float:
        return self.tq - self.tp

    def normalized(self):
        """Swap p and q when t_q < t_p; returns (pair, swapped)."""
        if self.dt < 0:
            return EndpointPair(self.xq, self.tq, self.xp, self.tp), True
        return self, False


def affine_time(tp, dt, m):
    """The affine interpolation t_p + s * dt on the node grid."""
    return tp + dt * np.linspace(0.0, 1.0, m + 1)


@dataclass
class SegmentTerms:
    h: float
    v: np.ndarray  # (m, d)
    g: np.ndarray
    w: np.ndarray  # metric dual of delta at midpoints
    a: np.ndarray  # <delta, v>
    b: np.ndarray  # beta_eff
    vv: np.ndarray  # <v, v>
    geo: object


def segment_terms(model: SpacetimeModel, path: DiscretePath) -> SegmentTerms:
    v = path.velocities
    geo, w, b = model.pieces(path.midpoints)
    a = np.einsum("ni,ni->n", w, v)
    vv = np.einsum("ni,nij,nj->n", v, geo.g, v)
    return SegmentTerms(path.h, v, geo.g, w, a, b, vv, geo)


def _require_beta(st: SegmentTerms):
    if np.any(st.b <= EPS_BETA):
        raise PreconditionError("beta_eff <= 1e-12 on the path; use a perturbed model")


def action_f(model: SpacetimeModel, path: DiscretePath) -> float:
    """1/2 int <z', z'>_L ds for a path with time nodes."""
    st = segment_terms(model, path)
    td = path.tdot
    return float(0.5 * st.h * np.sum(st.vv + 2.0 * st.a * td - st.b * td**2))


def killing_constant(model: SpacetimeModel, path: DiscretePath, dt: float) -> float:
    st = segment_terms(model, path)
    _require_beta(st)
    P = st.h * np.sum(st.a / st.b)
    Q = st.h * np.sum(1.0 / st.b)
    return float((P - dt) / Q)


def reconstruct_time(model: SpacetimeModel, path: DiscretePath, dt: float, tp: float = 0.0) -> DiscretePath:
    """Time nodes with constant Killing pairing, arriving at t_p + dt."""
    st = segment_terms(model, path)
    _require_beta(st)
    P = st.h * np.sum(st.a / st.b)
    Q = st.h * np.sum(1.0 / st.b)
    C = (P - dt) / Q
    tdot = (st.a - C) / st.b
    t = np.empty(path.m + 1)
    t[0] = tp
    t[1:] = tp + np.cumsum(tdot * st.h)
    return path.with_time(t)


def _reduced_parts(st: SegmentTerms, dt: float):
    """(kinetic, spread, time) pieces of J; spread is the centred weighted variance of a."""
    h = st.h
    Q = h * np.sum(1.0 / st.b)
    mean = h * np.sum(st.a / st.b) / Q
    kinetic = 0.5 * h * np.sum(st.vv)
    spread = 0.5 * h * np.sum((st.a - mean) ** 2 / st.b)
    time = -0.5 * dt * dt / Q + dt * mean
    return kinetic, spread, time


def reduced_j(model: SpacetimeModel, path: DiscretePath, dt: float) -> float:
    """Action restricted to constant-Killing-pairing curves, as a function of x.

    1/2 int |x'|^2 + 1/2 [int a^2/b - (int a/b)^2 / int 1/b] - dt (dt - 2 int a/b) / (2 int 1/b)
    with a = <delta, x'> and b = beta_eff; the bracket is evaluated in centred form.
    """
    st = segment_terms(model, path)
    _require_beta(st)
    return float(sum(_reduced_parts(st, dt)))


def reduced_jn(model: SpacetimeModel, path: DiscretePath, dt: float) -> float:
    """J_n of a perturbed model; for a base with beta identically 0 this is

    1/2 int |x'|^2 + n/2 [int a^2 - (int a)^2] - dt (dt/2n - int a),

    which is reduced_j with b = 1/n.  Both brackets are evaluated as centred
    sums to avoid cancellation at large n.
    """
    if model.n is None:
        raise PreconditionError("reduced_jn needs a perturbation index")
    if not model.base.beta.is_zero():
        return reduced_j(model, path, dt)
    n = float(model.n)
    st = segment_terms(model, path)
    h = st.h
    A = h * np.sum(st.a)
    return float(0.5 * h * np.sum(st.vv) + 0.5 * n * h * np.sum((st.a - A) ** 2) - dt * (dt / (2.0 * n) - A))


def lower_bound_check(model: SpacetimeModel, path: DiscretePath, dt: float) -> bool:
    st = segment_terms(model, path)
    _require_beta(st)
    h = st.h
    P = h * np.sum(st.a / st.b)
    Q = h * np.sum(1.0 / st.b)
    bound = h * np.sum(st.vv) - dt * (dt - 2.0 * P) / Q
    return bool(2.0 * reduced_j(model, path, dt) >= bound - 1e-9)


def gradient_j(model: SpacetimeModel, path: DiscretePath, dt: float):
    """Exact gradient of reduced_j with respect to the interior nodes, shape (m-1, d)."""
    st = segment_terms(model, path)
    _require_beta(st)
    h = st.h
    P = h * np.sum(st.a / st.b)
    Q = h * np.sum(1.0 / st.b)
    C = (P - dt) / Q
    td = (st.a - C) / st.b
    _, dw = curl_matrix(st.geo)  # dw[n, l, k] = d_l w_k
    grad_v = h * (np.einsum("nij,nj->ni", st.g, st.v) + td[:, None] * st.w)
    grad_x = (
        0.5 * h * np.einsum("njkl,nj,nk->nl", st.geo.dg, st.v, st.v)
        + h * td[:, None] * np.einsum("nlk,nk->nl", dw, st.v)
        - 0.5 * h * (td**2)[:, None] * st.geo.dbeta
    )
    return (grad_v[:-1] - grad_v[1:]) / h + 0.5 * (grad_x[:-1] + grad_x[1:])


def value_and_gradient(model: SpacetimeModel, path: DiscretePath, dt: float):
    return reduced_j(model, path, dt), gradient_j(model, path, dt)


class LightlikeCheckError(RuntimeError):
    pass


def lightlike_lift(model: SpacetimeModel, path: DiscretePath, tp: float = 0.0):
    """Future-directed lightlike curve over x; returns (path with t, T(x))."""
    st = segment_terms(model, path)
    _require_beta(st)
    if np.all(st.vv == 0.0):
        raise PreconditionError("arrival time needs a non-constant path")
    root = np.sqrt(st.a**2 + st.vv * st.b)
    # stable form of (a + root) / b when a < 0
    with np.errstate(divide="ignore", invalid="ignore"):
        tdot = np.where(st.a >= 0, (st.a + root) / st.b, st.vv / (root - st.a))
    tdot = np.where(st.vv == 0.0, np.where(st.a > 0, 2 * st.a / st.b, 0.0), tdot)
    norms = st.vv + 2.0 * st.a * tdot - st.b * tdot**2
    scale = 1.0 + st.vv + np.abs(st.a * tdot) + st.b * tdot**2
    if np.any(np.abs(norms) > 1e-8 * np.maximum(1.0, scale / 1e4)):
        raise LightlikeCheckError(f"lifted curve is not lightlike: max |<g',g'>| = {np.max(np.abs(norms)):.3g}")
    T = float(st.h * np.sum(st.a / st.b) + st.h * np.sum(root / st.b))
    t = np.empty(path.m + 1)
    t[0] = tp
    t[1:] = tp + np.cumsum(tdot * st.h)
    return path.with_time(t), T


def arrival_time(model: SpacetimeModel, path: DiscretePath) -> float:
    return lightlike_lift(model, path)[1]


def l2_norm(values, h):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    return float(np.sqrt(h * np.sum(values**2)))


def h1_distance(p1: DiscretePath, p2: DiscretePath) -> float:
    """Discrete H1 distance over (x, t): node differences plus velocity differences."""
    dx = p1.nodes - p2.nodes
    dv = p1.velocities - p2.velocities
    total = p1.h * (np.sum(dx**2) + np.sum(dv**2))
    if p1.t is not None and p2.t is not None:
        total += p1.h * (np.sum((p1.t - p2.t) ** 2) + np.sum((p1.tdot - p2.tdot) ** 2))
    return float(np.sqrt(total))
