"""Geodesic equations of S x R, fixed-step integration and shooting.

Along a curve (x, t) the equations are written as one linear system for
the accelerations,

    [ g    w ] [x'']   [ -g Gamma(x', x') - t' F[x']^flat - 1/2 t'^2 dbeta ]
    [ w^T -b ] [t''] = [ -x' . dw . x' + t' dbeta . x'                     ]

where w = g delta and b = beta_eff (0 for the lightlike system).  The
second row is the derivative of the conserved Killing pairing
<delta, x'> - b t'.  The matrix is the Lorentzian metric itself, so it
is invertible whenever the form is non-degenerate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .action import DiscretePath, EndpointPair
from .geometry import ExcludedRegionError, GeometryError, christoffel_batch, curl_matrix
from .spacetime import SpacetimeModel, EPS_BETA, PreconditionError

log = logging.getLogger(__name__)

SYSTEMS = ("stationary", "lightlike")
H_ODE = 1e-3
TOL_CONS = 1e-7
TOL_BVP = 1e-8
FD_STEP = 1e-4


class SingularSystemError(GeometryError):
    pass


class DomainExitError(ExcludedRegionError):
    pass


def _check_system(system):
    if system not in SYSTEMS:
        raise ValueError(f"system must be one of {SYSTEMS}, got {system!r}")


def _coefficients(model: SpacetimeModel, x, system):
    geo = model.base.geom(x)
    w = np.einsum("nij,nj->ni", geo.g, geo.delta)
    if system == "stationary":
        b = geo.beta + model.shift
        if np.any(b < -EPS_BETA):
            raise PreconditionError("beta_eff is negative")
        db = geo.dbeta
    else:
        norm = np.sqrt(np.einsum("ni,ni->n", w, geo.delta))
        if np.any(norm < 1e-12):
            raise PreconditionError("lightlike system needs |delta| > 0")
        b = np.zeros(x.shape[0])
        db = np.zeros_like(geo.dbeta)
    return geo, w, b, db


def _equation_terms(model, x, v, tdot, system):
    """Matrix M and right-hand side r of  M [x''; t''] = r."""
    geo, w, b, db = _coefficients(model, x, system)
    n, d = x.shape
    gam = christoffel_batch(model.base, x, geo)
    A, dw = curl_matrix(geo)
    r = np.empty((n, d + 1))
    r[:, :d] = (
        -np.einsum("nij,njkl,nk,nl->ni", geo.g, gam, v, v)
        - tdot[:, None] * np.einsum("nlk,nl->nk", A, v)
        - 0.5 * (tdot**2)[:, None] * db
    )
    r[:, d] = -np.einsum("nl,nlk,nk->n", v, dw, v) + tdot * np.einsum("ni,ni->n", db, v)
    M = np.empty((n, d + 1, d + 1))
    M[:, :d, :d] = geo.g
    M[:, :d, d] = w
    M[:, d, :d] = w
    M[:, d, d] = -b
    return M, r, w, b


def accelerations(model: SpacetimeModel, x, v, tdot, system="stationary"):
    """Batched (x'', t'') for states (N, d), (N, d), (N,).

    Eliminating x'' from the block system leaves the scalar equation
    (|delta|^2 + b) t'' = delta . r1 - r2, so only g^-1 r1 is needed.
    """
    _check_system(system)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    tdot = np.atleast_1d(np.asarray(tdot, dtype=float))
    geo, w, b, db = _coefficients(model, x, system)
    dw = np.swapaxes(geo.ddelta, 1, 2)  # d_k w_j for the identity metric
    flat = model.base.metric is None
    if not flat:
        dw = np.einsum("njlk,nl->nkj", geo.dg, geo.delta) + np.einsum("njl,nlk->nkj", geo.g, geo.ddelta)
    # A^T v with A = dw - dw^T
    Atv = np.einsum("nlk,nl->nk", dw, v) - np.einsum("nkl,nl->nk", dw, v)
    r1 = -tdot[:, None] * Atv - 0.5 * (tdot**2)[:, None] * db
    r2 = -np.einsum("nl,nl->n", np.einsum("nlk,nk->nl", dw, v), v) + tdot * np.einsum("ni,ni->n", db, v)
    if flat:
        raised = r1
        dd = np.einsum("ni,ni->n", geo.delta, geo.delta)
        detg = np.ones(x.shape[0])
    else:
        gam = christoffel_batch(model.base, x, geo)
        raised = np.linalg.solve(geo.g, r1[..., None])[..., 0]
        raised -= np.einsum("nijk,nj,nk->ni", gam, v, v)
        dd = np.einsum("ni,ni->n", w, geo.delta)
        detg = np.linalg.det(geo.g)
    schur = dd + b
    if np.any(np.abs(detg * schur) < 1e-14):
        raise SingularSystemError("acceleration system is singular (|det| < 1e-14)")
    lowered = r1 if flat else np.einsum("nij,nj->ni", geo.g, raised)
    tdd = (np.einsum("ni,ni->n", geo.delta, lowered) - r2) / schur
    return raised - geo.delta * tdd[:, None], tdd


def rhs_stationary(model: SpacetimeModel, state):
    """Accelerations (x'', t'') for state = (x, x', t, t') with beta_eff = beta + 1/n."""
    x, v, _, tdot = state
    xdd, tdd = accelerations(model, x, v, tdot, "stationary")
    return xdd[0], float(tdd[0])


def rhs_lightlike(model: SpacetimeModel, state):
    """Accelerations of the beta = 0 system; needs delta != 0."""
    x, v, _, tdot = state
    xdd, tdd = accelerations(model, x, v, tdot, "lightlike")
    return xdd[0], float(tdd[0])


def conserved(model: SpacetimeModel, x, v, tdot, system):
    """(E, C) = (<z', z'>, <z', d/dt>) at a batch of states."""
    geo = model.base.geom(x)
    w = np.einsum("nij,nj->ni", geo.g, geo.delta)
    b = geo.beta + model.shift if system == "stationary" else np.zeros(x.shape[0])
    a = np.einsum("ni,ni->n", w, v)
    vv = np.einsum("ni,nij,nj->n", v, geo.g, v)
    return vv + 2.0 * a * tdot - b * tdot**2, a - b * tdot


# ---------------------------------------------------------------------------
# Fixed-step RK4 with seam splitting
# ---------------------------------------------------------------------------


def _rk4_step(fun, s, y, h):
    k1 = fun(s, y)
    k2 = fun(s + 0.5 * h, y + 0.5 * h * k1)
    k3 = fun(s + 0.5 * h, y + 0.5 * h * k2)
    k4 = fun(s + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4(fun, y0, steps, s0=0.0, s1=1.0, seam=None, post=None, check=None):
    """Classic fourth-order integration of a batch y0 (B, k) on a uniform grid.

    ``seam(y) -> (B, S)`` gives signed distances to seams of the vector
    field; steps crossing one are split exactly at the crossing.  ``post(y,
    rows=None)`` maps states back onto the constraint set after every step
    (``rows`` selects the batch rows when called on a subset), ``check``
    validates each step (y_old, y_new).
    Returns (s, Y) with Y of shape (steps + 1, B, k).
    """
    y = np.array(y0, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    h = (s1 - s0) / steps
    out = np.empty((steps + 1,) + y.shape)
    out[0] = y
    s_grid = s0 + h * np.arange(steps + 1)
    for i in range(steps):
        s = s_grid[i]
        y_new = _rk4_step(fun, s, y, h)
        if seam is not None:
            y_new = _split_at_seams(fun, s, y, y_new, h, seam, post)
        if post is not None:
            y_new = post(y_new)
        if check is not None:
            check(y, y_new)
        y = y_new
        out[i + 1] = y
    return s_grid, out


def _split_at_seams(fun, s, y, y_new, h, seam, post):
    before = seam(y)
    after = seam(y_new)
    crossing = np.any(before * after < 0.0, axis=1)
    if not np.any(crossing):
        return y_new
    y_new = y_new.copy()
    for b in np.nonzero(crossing)[0]:
        row_post = None if post is None else (lambda z, b=b: post(z, rows=[b]))
        y_new[b] = _split_one(fun, s, y[b : b + 1], h, seam, row_post)[0]
    return y_new


def _split_one(fun, s, y, h, seam, post, depth=0):
    before = seam(y)[0]
    full = _rk4_step(fun, s, y, h)
    after = seam(full)[0]
    idx = np.nonzero(before * after < 0.0)[0]
    if idx.size == 0 or depth > 4:
        return full

    def crossing_at(theta, k):
        return seam(_rk4_step(fun, s, y, theta * h))[0][k]

    theta = min(brentq(crossing_at, 0.0, 1.0, args=(k,), xtol=1e-15) for k in idx)
    if theta <= 0.0 or theta >= 1.0:
        return full
    mid = _rk4_step(fun, s, y, theta * h)
    if post is not None:
        mid = post(mid)
    rest = (1.0 - theta) * h
    # nudge past the seam so the remaining sub-step starts on the far side
    return _split_one(fun, s + theta * h, mid, rest, _shifted(seam, mid), post, depth + 1)


def _shifted(seam, y_on):
    """Seam function ignoring seams the state currently sits on."""
    on = np.abs(seam(y_on)[0]) < 1e-12

    def inner(y):
        vals = seam(y)
        vals[:, on] = 1.0
        return vals

    return inner


# ---------------------------------------------------------------------------
# Integration of geodesics
# ---------------------------------------------------------------------------


@dataclass
class GeodesicSolution:
    s: np.ndarray
    x: np.ndarray
    v: np.ndarray
    t: np.ndarray
    tdot: np.ndarray
    energy: np.ndarray
    killing: np.ndarray
    system: str
    steps: int
    halving_change: float = float("nan")
    residual: float = float("nan")
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

    def path(self) -> DiscretePath:
        return DiscretePath(self.x, self.t)

    def endpoint(self):
        return np.concatenate([self.x[-1], [self.t[-1]]])

    def initial_velocity(self):
        return np.concatenate([self.v[0], [self.tdot[0]]])

    def reversed(self) -> "GeodesicSolution":
        return GeodesicSolution(
            1.0 - self.s[::-1],
            self.x[::-1].copy(),
            -self.v[::-1],
            self.t[::-1].copy(),
            -self.tdot[::-1],
            self.energy[::-1].copy(),
            -self.killing[::-1],
            self.system,
            self.steps,
            self.halving_change,
            self.residual,
            list(self.flags),
        )


def _pack(x, v, t, tdot):
    x = np.atleast_2d(x)
    v = np.atleast_2d(v)
    return np.concatenate([x, v, np.atleast_1d(t)[:, None], np.atleast_1d(tdot)[:, None]], axis=1)


class _GeodesicFlow:
    """Vector field, constraint projection and domain checks for a batch."""

    def __init__(self, model: SpacetimeModel, system, y0):
        _check_system(system)
        self.model = model
        self.system = system
        self.d = model.dimension
        x, v, _, td = self.unpack(y0)
        self.C0 = conserved(model, x, v, td, system)[1]

    def unpack(self, y):
        d = self.d
        return y[:, :d], y[:, d : 2 * d], y[:, 2 * d], y[:, 2 * d + 1]

    def __call__(self, s, y):
        x, v, _, td = self.unpack(y)
        xdd, tdd = accelerations(self.model, x, v, td, self.system)
        return np.concatenate([v, xdd, td[:, None], tdd[:, None]], axis=1)

    def project(self, y, rows=None):
        """Restore the Killing pairing by the smallest correction along (delta, -b)."""
        x, v, t, td = self.unpack(y)
        geo = self.model.base.geom(x)
        w = np.einsum("nij,nj->ni", geo.g, geo.delta)
        b = geo.beta + self.model.shift if self.system == "stationary" else np.zeros(x.shape[0])
        C0 = self.C0 if rows is None else self.C0[rows]
        gap = C0 - (np.einsum("ni,ni->n", w, v) - b * td)
        k = gap / (np.einsum("ni,ni->n", w, geo.delta) + b * b)
        y = y.copy()
        d = self.d
        y[:, d : 2 * d] = v + k[:, None] * geo.delta
        y[:, 2 * d + 1] = td - k * b
        return y

    def seam(self, y):
        fields = self.model.base.seam_fields
        x = y[:, : self.d]
        return np.stack([f(x) for f in fields], axis=1)

    def check(self, y_old, y_new):
        base = self.model.base
        if base.excluded:
            a = y_old[:, : self.d]
            b = y_new[:, : self.d]
            if np.any(base.segments_blocked(a, b)):
                raise DomainExitError("trajectory enters an excluded region")


def flow_endpoints(model, y0, system, h=H_ODE):
    """Endpoint states at s=1 for a batch of initial states (no bookkeeping)."""
    flow = _GeodesicFlow(model, system, y0)
    steps = int(round(1.0 / h))
    seam = flow.seam if model.base.seam_fields else None
    _, Y = rk4(flow, y0, steps, seam=seam, post=flow.project, check=flow.check)
    return Y[-1]


def integrate(model: SpacetimeModel, state, system="stationary", h=H_ODE, halving=True) -> GeodesicSolution:
    """Integrate from state = (x, x', t, t') over s in [0, 1]."""
    x0, v0, t0, td0 = state
    y0 = _pack(np.asarray(x0, float), np.asarray(v0, float), float(t0), float(td0))
    flow = _GeodesicFlow(model, system, y0)
    steps = int(round(1.0 / h))
    seam = flow.seam if model.base.seam_fields else None
    s, Y = rk4(flow, y0, steps, seam=seam, post=flow.project, check=flow.check)
    Y = Y[:, 0, :]
    d = model.dimension
    x, v, t, td = Y[:, :d], Y[:, d : 2 * d], Y[:, 2 * d], Y[:, 2 * d + 1]
    E, C = conserved(model, x, v, td, system)
    sol = GeodesicSolution(s, x, v, t, td, E, C, system, steps)
    if halving:
        _, Y2 = rk4(flow, y0, 2 * steps, seam=seam, post=flow.project, check=flow.check)
        sol.halving_change = float(np.max(np.abs(Y2[-1, 0] - Y[-1])))
    if sol.drift_E > TOL_CONS:
        sol.flags.append(f"energy drift {sol.drift_E:.3g} above {TOL_CONS:g}")
    if sol.drift_C > TOL_CONS:
        sol.flags.append(f"Killing-constant drift {sol.drift_C:.3g} above {TOL_CONS:g}")
    return sol


# ---------------------------------------------------------------------------
# Residual of the geodesic equations on sampled paths
# ---------------------------------------------------------------------------


def _residual_vectors(model, nodes, t, h, system):
    xd = (nodes[2:] - nodes[:-2]) / (2 * h)
    xdd = (nodes[2:] - 2 * nodes[1:-1] + nodes[:-2]) / h**2
    td = (t[2:] - t[:-2]) / (2 * h)
    tdd = (t[2:] - 2 * t[1:-1] + t[:-2]) / h**2
    M, r, _, _ = _equation_terms(model, nodes[1:-1], xd, td, system)
    acc = np.concatenate([xdd, tdd[:, None]], axis=1)
    return np.einsum("nij,nj->ni", M, acc) - r


def _smooth_stencils(model, nodes, reach):
    """Mask over interior nodes whose stencil (+-reach nodes) does not cross a seam."""
    m1 = nodes.shape[0]
    ok = np.ones(m1, dtype=bool)
    for f in model.base.seam_fields:
        sign = np.sign(f(nodes))
        change = np.concatenate([[False], sign[1:] != sign[:-1]])  # change between i-1 and i
        cum = np.cumsum(change)
        lo = np.clip(np.arange(m1) - reach, 0, m1 - 1)
        hi = np.clip(np.arange(m1) + reach, 0, m1 - 1)
        ok &= cum[hi] == cum[lo]
    return ok


def residual(model: SpacetimeModel, path: DiscretePath, system="lightlike", richardson=False) -> float:
    """Max-norm of the geodesic equations on a sampled path, by second differences.

    With ``richardson`` the h and 2h residuals are combined as
    (4 R_h - R_2h) / 3 at the shared nodes, removing the O(h^2) stencil
    error.  Stencils that straddle a seam of the model (where the fields
    are only C^1) are skipped.
    """
    _check_system(system)
    if path.t is None:
        raise ValueError("residual needs time nodes")
    if path.m < 8:
        raise ValueError("residual needs at least 8 segments")
    h = path.h
    R = _residual_vectors(model, path.nodes, path.t, h, system)
    if not richardson:
        ok = _smooth_stencils(model, path.nodes, 1)[1:-1]
        return float(np.max(np.abs(R[ok]))) if np.any(ok) else 0.0
    if path.m % 2:
        raise ValueError("Richardson residual needs an even number of segments")
    coarse = _residual_vectors(model, path.nodes[::2], path.t[::2], 2 * h, system)
    fine = R[1::2]  # node indices 2, 4, ..., m - 2
    ok = _smooth_stencils(model, path.nodes, 2)[2:-1:2]
    combined = (4.0 * fine - coarse) / 3.0
    return float(np.max(np.abs(combined[ok]))) if np.any(ok) else 0.0


# ---------------------------------------------------------------------------
# Shooting
# ---------------------------------------------------------------------------


@dataclass
class ShootResult:
    converged: bool
    solution: GeodesicSolution | None
    velocity: np.ndarray
    endpoint_error: float
    iterations: int
    jacobian_condition: float
    message: str = ""


@dataclass
class NewtonResult:
    u: np.ndarray
    error: float
    iterations: int
    condition: float
    min_singular: float
    message: str


def newton(endpoint_map, u0, tol=TOL_BVP, max_iter=100, max_condition=1e12, min_singular=0.0) -> NewtonResult:
    """Damped Newton on a batched residual map F(U) -> (K, n) with central-difference Jacobians.

    Stops as singular when the Jacobian condition exceeds ``max_condition``
    or its smallest singular value drops below ``min_singular``.
    """
    u = np.array(u0, dtype=float)
    try:
        F = endpoint_map(u)[0]
    except (GeometryError, ValueError) as exc:
        return NewtonResult(u, float("inf"), 0, float("nan"), float("nan"), f"initial guess fails: {exc}")
    err = float(np.max(np.abs(F)))
    cond = float("nan")
    smin = float("nan")
    it = 0
    message = "converged"
    while err > tol and it < max_iter:
        it += 1
        # central differences: the endpoint map carries ~1e-13 of integration
        # round-off, so a wide step keeps the Jacobian accurate to ~1e-9
        eps = FD_STEP * np.maximum(1.0, np.abs(u))
        k = u.size
        probes = np.concatenate([u[None, :] + np.diag(eps), u[None, :] - np.diag(eps)])
        try:
            Fp = endpoint_map(probes)
        except (GeometryError, ValueError) as exc:
            message = f"Jacobian evaluation failed: {exc}"
            break
        J = ((Fp[:k] - Fp[k:]) / (2 * eps[:, None])).T
        sv = np.linalg.svd(J, compute_uv=False)
        smin = float(sv[-1])
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else float("inf")
        if not np.isfinite(cond) or cond > max_condition or smin < min_singular:
            message = f"singular endpoint Jacobian (condition {cond:.3g}, smallest singular value {smin:.3g})"
            break
        step = np.linalg.solve(J, -F)
        lam = 1.0
        improved = False
        while lam >= 1.0 / 1024:
            trial = u + lam * step
            try:
                Ft = endpoint_map(trial)[0]
                et = float(np.max(np.abs(Ft)))
            except (GeometryError, ValueError):
                et = float("inf")
            if et < err:
                u, F, err = trial, Ft, et
                improved = True
                break
            lam *= 0.5
        if not improved:
            message = "Newton stagnation"
            break
    if err > tol and message == "converged":
        message = f"no convergence after {it} iterations"
    return NewtonResult(u, err, it, cond, smin, message)


def shoot(
    model: SpacetimeModel,
    pair: EndpointPair,
    system="lightlike",
    guess=None,
    h=H_ODE,
    tol=TOL_BVP,
    max_iter=100,
) -> ShootResult:
    """Damped Newton on the endpoint map of the initial velocity (x'(0), t'(0)).

    The Jacobian is built from finite differences, all columns integrated
    as one batch.  Failure to converge means "inconclusive", nothing more.
    """
    _check_system(system)
    d = model.dimension
    xp = np.array(pair.xp)
    target = np.concatenate([np.array(pair.xq), [pair.tq]])
    if guess is None:
        guess = target - np.concatenate([xp, [pair.tp]])
    u = np.array(guess, dtype=float)

    def states(us):
        us = np.atleast_2d(us)
        k = us.shape[0]
        return _pack(np.repeat(xp[None], k, 0), us[:, :d], np.full(k, pair.tp), us[:, d])

    def endpoint_map(us):
        Y = flow_endpoints(model, states(us), system, h)
        return np.concatenate([Y[:, :d], Y[:, 2 * d : 2 * d + 1]], axis=1) - target

    nr = newton(endpoint_map, u, tol, max_iter)
    u, err, it, cond, message = nr.u, nr.error, nr.iterations, nr.condition, nr.message
    if err > tol:
        log.debug("shoot failed: %s (err %.3g)", message, err)
        return ShootResult(False, None, u, err, it, cond, message)
    state = (xp, u[:d], pair.tp, u[d])
    sol = integrate(model, state, system, h)
    sol.residual = float(np.max(np.abs(sol.endpoint() - target)))
    return ShootResult(sol.residual <= tol, sol, u, sol.residual, it, cond, message)


def one_sided_velocity(path: DiscretePath):
    """Second-order estimate of (x'(0), t'(0)) from the first three nodes."""
    h = path.h
    xv = (-3 * path.nodes[0] + 4 * path.nodes[1] - path.nodes[2]) / (2 * h)
    tv = (-3 * path.t[0] + 4 * path.t[1] - path.t[2]) / (2 * h)
    return np.concatenate([xv, [tv]])
