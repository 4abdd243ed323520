"""Generalized plane waves  M x R^2,  <.,.> + 2 du dv + H(x, u) du^2.

The Euler-Lagrange equations of 1/2 |x'|^2 + u' v' + 1/2 H u'^2 give

    u'' = 0                         (u affine, u' = du)
    D_s x' = 1/2 du^2 grad_x H      (forced geodesic in M)
    v''  = -du (grad_x H . x') - 1/2 H_u du^2

so the connection problem reduces to a shooting problem for x alone; v
follows by quadrature, its free constant fixed by v(1) = v_q.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .connect import (
    ConnectVerdict,
    GEODESIC,
    INCONCLUSIVE,
    classify_pairing,
)
from .action import EndpointPair
from .fieldlang import FieldExpr, compile_bundle, parse
from .geodesic import H_ODE, TOL_BVP, newton, rk4
from .geometry import GeometryError, MetricModel, christoffel_batch, christoffel_from, make_model



@dataclass(frozen=True, eq=False)
class GpwModel:
    """Riemannian factor (identity metric unless given) and the profile H(x, u)."""

    dimension: int
    H: FieldExpr
    metric: tuple | None = None
    name: str = "gpw"

    def __post_init__(self):
        if self.H.arity != "scalar" or self.H.dimension != self.dimension:
            raise GeometryError("H must be a scalar field over x1..xd and u")
        if self.H.is_zero():
            raise GeometryError("the profile H must not be identically zero")

    @cached_property
    def base(self) -> MetricModel:
        """The Riemannian factor as a MetricModel with delta = 0, beta = 0."""
        d = self.dimension
        zero = "[" + ", ".join(["0"] * d) + "]"
        return make_model(d, zero, "0", metric=self.metric, name=self.name + "-base")

    @cached_property
    def _profile_bundle(self):
        d = self.dimension
        nodes = [self.H.ast] + [self.H.partial(k).ast for k in range(d + 1)]
        return compile_bundle(nodes, d)

    def check_profile(self, samples=64, seed=0):
        """H not identically zero on random samples of (x, u)."""
        rng = np.random.default_rng(seed)
        x = rng.uniform(-2, 2, size=(samples, self.dimension))
        u = rng.uniform(-2, 2, size=samples)
        if np.all(self.H(x, u) == 0.0):
            raise GeometryError("the profile H vanishes on all samples")
        return True

    def profile(self, x, u):
        """(H, grad_x H, H_u) at points (N, d) and parameters (N,)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        u = np.broadcast_to(np.asarray(u, dtype=float), (x.shape[0],))
        raw = self._profile_bundle(x, u)
        return raw[0], raw[1 : 1 + self.dimension].T, raw[1 + self.dimension]

    def metric_matrix(self, point):
        """(d+2) x (d+2) matrix in coordinates (x, u, v)."""
        G, _ = full_metric(self, np.atleast_2d(point))
        return G[0]


def make_gpw(dimension, H, metric=None, name="gpw") -> GpwModel:
    H = parse(H, dimension) if isinstance(H, str) else H
    if metric is not None:
        metric = tuple(tuple(parse(e, dimension) if isinstance(e, str) else e for e in row) for row in metric)
    return GpwModel(dimension, H, metric, name)


def oscillator(dimension=2) -> GpwModel:
    """H = -(x1^2 + ... + xd^2): x'' = -du^2 x."""
    H = "-(" + " + ".join(f"x{i + 1}^2" for i in range(dimension)) + ")"
    return make_gpw(dimension, H, name="gpw-oscillator")


def gpw_inner(model: GpwModel, point, zeta, zeta2) -> float:
    """<xi, xi'> + a b' + a' b + H(x, u) a a' for zeta = (xi, a, b)."""
    d = model.dimension
    point = np.asarray(point, dtype=float)
    x, u = point[:d], point[d]
    zeta = np.asarray(zeta, dtype=float)
    zeta2 = np.asarray(zeta2, dtype=float)
    g = model.base.geom(x[None, :]).g[0]
    H = float(model.H.eval(x, u))
    xi, a, b = zeta[:d], zeta[d], zeta[d + 1]
    xi2, a2, b2 = zeta2[:d], zeta2[d], zeta2[d + 1]
    return float(xi @ g @ xi2 + a * b2 + a2 * b + H * a * a2)


def full_metric(model: GpwModel, X):
    """Metric and derivatives dG[n, i, j, k] = d_k G_ij in coordinates (x, u, v)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, D = X.shape
    d = model.dimension
    x, u = X[:, :d], X[:, d]
    geo = model.base.geom(x)
    H, dH, Hu = model.profile(x, u)
    G = np.zeros((n, D, D))
    G[:, :d, :d] = geo.g
    G[:, d, d + 1] = G[:, d + 1, d] = 1.0
    G[:, d, d] = H
    dG = np.zeros((n, D, D, D))
    dG[:, :d, :d, :d] = geo.dg
    dG[:, d, d, :d] = dH
    dG[:, d, d, d] = Hu
    return G, dG


# ---------------------------------------------------------------------------
# Witness curve
# ---------------------------------------------------------------------------


@dataclass
class GpwPath:
    s: np.ndarray
    x: np.ndarray
    u: np.ndarray
    v: np.ndarray
    xdot: np.ndarray
    udot: np.ndarray
    vdot: np.ndarray

    def pairing(self, model: GpwModel):
        """<phi', d/dv> on each segment; the d/dv slot only sees the u-velocity."""
        K = np.zeros(model.dimension + 2)
        K[-1] = 1.0
        out = np.empty(self.xdot.shape[0])
        for i in range(out.size):
            mid = np.concatenate([0.5 * (self.x[i] + self.x[i + 1]), [0.5 * (self.u[i] + self.u[i + 1])]])
            zeta = np.concatenate([self.xdot[i], [self.udot[i], self.vdot[i]]])
            out[i] = gpw_inner(model, mid, zeta, K)
        return out


def witness_curve(model: GpwModel, p, q, x_nodes) -> GpwPath:
    """phi(s) = (x(s), u_p + du s, v_p + dv s) with exact u and v velocities."""
    x_nodes = np.atleast_2d(np.asarray(x_nodes, dtype=float))
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = model.dimension
    if not (np.allclose(x_nodes[0], p[:d]) and np.allclose(x_nodes[-1], q[:d])):
        raise ValueError("x path does not join the endpoint x-parts")
    m = x_nodes.shape[0] - 1
    s = np.linspace(0.0, 1.0, m + 1)
    du = q[d] - p[d]
    dv = q[d + 1] - p[d + 1]
    return GpwPath(
        s,
        x_nodes,
        p[d] + du * s,
        p[d + 1] + dv * s,
        np.diff(x_nodes, axis=0) * m,
        np.full(m, du),
        np.full(m, dv),
    )


def witness_condition(model: GpwModel, path: GpwPath) -> str:
    return classify_pairing(path.pairing(model))


# ---------------------------------------------------------------------------
# Reduced boundary-value problem
# ---------------------------------------------------------------------------


@dataclass
class GpwSolution:
    s: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    u: np.ndarray
    udot: np.ndarray
    v: np.ndarray
    vdot: np.ndarray
    energy: np.ndarray
    killing: np.ndarray
    residual: float = float("nan")
    equation_residual: float = float("nan")
    system: str = "gpw"
    flags: list = field(default_factory=list)

    @property
    def E(self):
        return float(self.energy[0])

    @property
    def C(self):
        return float(self.killing[0])

    @property
    def drift_E(self):
        return float(np.max(np.abs(self.energy - self.energy[0])))

    @property
    def drift_C(self):
        return float(np.max(np.abs(self.killing - self.killing[0])))

    def coordinates(self):
        return np.column_stack([self.x, self.u, self.v])

    def velocities(self):
        return np.column_stack([self.xdot, self.udot, self.vdot])

    def initial_velocity(self):
        return self.velocities()[0]

    def endpoint(self):
        return self.coordinates()[-1]

    def reversed(self):
        return GpwSolution(
            1.0 - self.s[::-1], self.x[::-1].copy(), -self.xdot[::-1], self.u[::-1].copy(), -self.udot[::-1],
            self.v[::-1].copy(), -self.vdot[::-1], self.energy[::-1].copy(), -self.killing[::-1],
            self.residual, self.equation_residual, self.system, list(self.flags),
        )


class _ReducedFlow:
    """State [x, x', w, W] with w' = du grad H . x' + 1/2 H_u du^2 and W' = w."""

    def __init__(self, model: GpwModel, up, du):
        self.model = model
        self.up = up
        self.du = du
        self.d = model.dimension

    def __call__(self, s, y):
        d = self.d
        x, xd = y[:, :d], y[:, d : 2 * d]
        u = np.full(x.shape[0], self.up + self.du * s)
        _, dH, Hu = self.model.profile(x, u)
        base = self.model.base
        force = 0.5 * self.du**2 * dH
        if base.metric is not None:
            geo = base.geom(x)
            gam = christoffel_batch(base, x, geo)
            acc = np.linalg.solve(geo.g, force[..., None])[..., 0] - np.einsum("nijk,nj,nk->ni", gam, xd, xd)
        else:
            acc = force
        wdot = self.du * np.einsum("ni,ni->n", dH, xd) + 0.5 * Hu * self.du**2
        return np.concatenate([xd, acc, wdot[:, None], y[:, 2 * d : 2 * d + 1]], axis=1)


def _reduced_run(model, p, du, xdot0, h):
    d = model.dimension
    xdot0 = np.atleast_2d(xdot0)
    k = xdot0.shape[0]
    y0 = np.concatenate([np.repeat(p[None, :d], k, 0), xdot0, np.zeros((k, 2))], axis=1)
    flow = _ReducedFlow(model, p[d], du)
    return rk4(flow, y0, int(round(1.0 / h)))


def _assemble(model, p, q, xdot0, h):
    d = model.dimension
    du = q[d] - p[d]
    dv = q[d + 1] - p[d + 1]
    s, Y = _reduced_run(model, p, du, xdot0, h)
    Y = Y[:, 0, :]
    x, xd, w, W = Y[:, :d], Y[:, d : 2 * d], Y[:, 2 * d], Y[:, 2 * d + 1]
    c = dv + W[-1]
    u = p[d] + du * s
    v = p[d + 1] + c * s - W
    vd = c - w
    udot = np.full(s.size, du)
    H, _, _ = model.profile(x, u)
    g = model.base.geom(x).g
    E = np.einsum("ni,nij,nj->n", xd, g, xd) + 2 * udot * vd + H * udot**2
    return GpwSolution(s, x, xd, u, udot, v, vd, E, udot.copy())


def full_residual(model: GpwModel, sol) -> float:
    """Richardson second-difference residual of X'' + Gamma(X', X') for the (d+2)-metric.

    ``sol`` is a GpwSolution or an (m+1, d+2) array of (x, u, v) samples with even m.
    """
    X = sol.coordinates() if isinstance(sol, GpwSolution) else np.asarray(sol, dtype=float)
    m = X.shape[0] - 1

    def vectors(nodes, h):
        vel = (nodes[2:] - nodes[:-2]) / (2 * h)
        acc = (nodes[2:] - 2 * nodes[1:-1] + nodes[:-2]) / h**2
        G, dG = full_metric(model, nodes[1:-1])
        gam = christoffel_from(G, dG)
        return acc + np.einsum("nijk,nj,nk->ni", gam, vel, vel)

    fine = vectors(X, 1.0 / m)[1::2]
    coarse = vectors(X[::2], 2.0 / m)
    return float(np.max(np.abs((4 * fine - coarse) / 3)))


def gpw_connect(model: GpwModel, p, q, h=H_ODE, tol=TOL_BVP, max_iter=100) -> ConnectVerdict:
    """Connect p = (x_p, u_p, v_p) to q by a geodesic through the reduced equations."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = model.dimension
    if p.size != d + 2 or q.size != d + 2:
        raise ValueError(f"GPW points need {d + 2} coordinates (x, u, v)")
    du = q[d] - p[d]
    pair = EndpointPair(p[:d], p[d], q[:d], q[d])  # u plays the role of the time slot in reports

    def endpoint_map(U):
        _, Y = _reduced_run(model, p, du, U, h)
        return Y[-1, :, :d] - q[None, :d]

    guess = q[:d] - p[:d]
    # for free motion the endpoint Jacobian is the identity; near resonance it degenerates
    nr = newton(endpoint_map, guess, tol, max_iter, max_condition=1e8, min_singular=1e-8)
    U, err = nr.u, nr.error
    diagnostics = {
        "route": "gpw-reduced",
        "newton_iterations": nr.iterations,
        "jacobian_condition": nr.condition,
        "jacobian_min_singular_value": nr.min_singular,
        "endpoint_error": err,
        "message": nr.message,
    }
    if err > tol:
        return ConnectVerdict(INCONCLUSIVE, pair, diagnostics=diagnostics)
    sol = _assemble(model, p, q, U, h)
    sol.residual = float(np.max(np.abs(sol.endpoint() - q)))
    sol.equation_residual = full_residual(model, sol)
    diagnostics.update(
        equation_residual=sol.equation_residual,
        energy_drift=sol.drift_E,
        killing_drift=sol.drift_C,
        u_affinity=float(np.max(np.abs(sol.udot - du))),
    )
    cond_ii = classify_pairing(sol.killing)
    ok = sol.residual <= max(tol, 1e-7) and sol.equation_residual <= 1e-6 and sol.drift_E <= 1e-7
    if not ok:
        diagnostics["rejected"] = "verification against the full geodesic equations failed"
        return ConnectVerdict(INCONCLUSIVE, pair, diagnostics=diagnostics)
    return ConnectVerdict(GEODESIC, pair, solution=sol, residual=sol.residual, condition=cond_ii,
                          diagnostics=diagnostics)


def oscillator_solution(p, q, s):
    """Closed form for H = -|x|^2: x(s) = x_p cos(w s) + B sin(w s), w = |du|."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    d = p.size - 2
    w = abs(q[d] - p[d])
    s = np.asarray(s, dtype=float)[:, None]
    if w == 0:
        return p[:d] + s * (q[:d] - p[:d])
    B = (q[:d] - p[:d] * np.cos(w)) / np.sin(w)
    return p[:d] * np.cos(w * s) + B * np.sin(w * s)
