"""Structural nonexistence certificates for gradient-type delta fields.

When delta is the gradient of a potential L (or has the sign of one), the
pairing <delta(x), x'> along a curve is d/ds L(x(s)), so a curve with
constant-sign or vanishing pairing is a curve along which L is monotone or
constant.  Reachability of q from p under that constraint is decided by a
breadth-first search on a uniform grid; unreachability in all three modes,
reproduced on a grid twice as fine, is the certificate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline

from . import fieldlang as fl
from .action import DiscretePath, EndpointPair
from .connect import classify_pairing, segment_pairing, SIGN_CHANGE
from .geometry import GeometryError, MetricModel
from .spacetime import SpacetimeModel

log = logging.getLogger(__name__)

MODES = ("nondecreasing", "nonincreasing", "level")
NODE_CAP = 4_000_000
WITNESS_NODES = 256
# a grid witness failing the dense sign check is re-searched on grids up to this factor finer
WITNESS_REFINE = 8


class GridTooCoarseError(GeometryError):
    pass


# ---------------------------------------------------------------------------
# Potentials
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class Potential:
    """A scalar L whose monotonicity along curves encodes the sign of <delta, x'>.

    ``kind`` is "exact" (delta = grad L), "sign-equivalent" (delta = lam e_1
    with lam of one sign, L = +-x1) or "none".
    """

    kind: str
    description: str
    func: object = None
    axis_only: bool = False
    reason: str = ""

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.func(x)

    @property
    def available(self):
        return self.kind != "none"


def _to_sympy(node, symbols):
    import sympy as sp

    if isinstance(node, fl.Num):
        return sp.pi if node.value == np.pi else sp.nsimplify(node.value, rational=True)
    if isinstance(node, fl.Var):
        return symbols[node.index]
    if isinstance(node, fl.Neg):
        return -_to_sympy(node.arg, symbols)
    if isinstance(node, fl.Bin):
        a = _to_sympy(node.left, symbols)
        b = _to_sympy(node.right, symbols)
        return {"+": a + b, "-": a - b, "*": a * b, "/": a / b, "^": a**b}[node.op]
    if isinstance(node, fl.Call):
        fn = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp, "sqrt": sp.sqrt, "abs": sp.Abs, "log": sp.log, "sign": sp.sign}
        return fn[node.fn](_to_sympy(node.arg, symbols))
    if isinstance(node, fl.Cmp):
        a = _to_sympy(node.left, symbols)
        b = _to_sympy(node.right, symbols)
        return {"<": sp.Lt, "<=": sp.Le, ">": sp.Gt, ">=": sp.Ge}[node.op](a, b)
    if isinstance(node, fl.Piecewise):
        return sp.Piecewise(
            (_to_sympy(node.then, symbols), _to_sympy(node.cond, symbols)),
            (_to_sympy(node.other, symbols), True),
        )
    raise TypeError(node)


def _symbolic_antiderivative(tree, check_points, integrand):
    """Antiderivative from 0 of a one-variable tree, or None if sympy fails or disagrees."""
    try:
        import sympy as sp
    except ImportError:  # pragma: no cover
        return None
    try:
        s = sp.Symbol("s", real=True)
        expr = _to_sympy(tree, [s])
        X = sp.Symbol("X", real=True)
        anti = sp.piecewise_fold(sp.integrate(expr, (s, 0, X)))
        if anti.has(sp.Integral):
            return None
        func = sp.lambdify(X, anti, modules="numpy")
    except Exception as exc:  # sympy raises a zoo of exception types
        log.debug("symbolic antiderivative failed: %s", exc)
        return None

    def evaluate(v):
        out = np.asarray(func(np.asarray(v, dtype=float)), dtype=float)
        return np.broadcast_to(out, np.shape(v)).astype(float)

    for c in check_points:
        ref = quad(lambda t: float(np.ravel(integrand(t))[0]), 0.0, c, limit=200, points=None)[0]
        if not np.isfinite(evaluate(c)) or abs(evaluate(c) - ref) > 1e-8 * (1 + abs(ref)):
            log.debug("symbolic antiderivative disagrees with quadrature at %g", c)
            return None
    return evaluate, str(anti)


def _numeric_antiderivative(integrand, lo, hi, count=20001):
    """Cumulative table of int_0^x lam on [lo, hi], spline-interpolated."""
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    grid = np.unique(np.concatenate([np.linspace(lo, hi, count), [0.0]]))
    vals = integrand(grid)
    mids = integrand(0.5 * (grid[1:] + grid[:-1]))
    # Simpson on each cell
    cells = (grid[1:] - grid[:-1]) / 6.0 * (vals[:-1] + 4 * mids + vals[1:])
    cum = np.concatenate([[0.0], np.cumsum(cells)])
    cum -= cum[np.searchsorted(grid, 0.0)]
    spline = CubicSpline(grid, cum)

    def evaluate(v):
        v = np.asarray(v, dtype=float)
        if np.any((v < lo - 1e-12) | (v > hi + 1e-12)):
            raise GeometryError("numeric potential evaluated outside its table")
        return spline(v)

    return evaluate


def _closed_on_samples(model: MetricModel, samples):
    from .geometry import curl_matrix

    geo = model.geom(samples)
    A, _ = curl_matrix(geo)
    scale = 1.0 + np.max(np.abs(geo.ddelta))
    return bool(np.max(np.abs(A)) <= 1e-9 * scale)


def _sample_points(model, lo, hi, count=256, seed=0):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(count, model.dimension))
    return pts[~model.in_excluded(pts)]


def potential_of(model: MetricModel, lo=None, hi=None) -> Potential:
    """Potential for delta on the box [lo, hi] (default [-10, 10]^d)."""
    d = model.dimension
    lo = np.full(d, -10.0) if lo is None else np.asarray(lo, dtype=float)
    hi = np.full(d, 10.0) if hi is None else np.asarray(hi, dtype=float)
    if model.metric is not None:
        return Potential("none", "", reason="potentials are only built for the identity metric")
    comps = model.delta.components
    zero = [isinstance(c, fl.Num) and c.value == 0.0 for c in comps]
    consts = [isinstance(c, fl.Num) for c in comps]
    if all(consts):
        w = np.array([c.value for c in comps])
        desc = " + ".join(("" if w[i] == 1 else f"{w[i]:.17g}*") + f"x{i + 1}" for i in range(d) if w[i] != 0.0) or "0"
        return Potential("exact", desc, lambda x: x @ w, axis_only=bool(np.all(w[1:] == 0.0)))
    samples = _sample_points(model, lo, hi)
    if all(zero[1:]):
        lam = comps[0]
        lam_expr = fl.FieldExpr.from_tree(lam, d)
        if lam_expr.variables <= {0}:
            return _axis_potential(lam_expr, lo[0], hi[0])
        vals = model.geom(samples).delta[:, 0]
        if np.all(vals > 0) or np.all(vals < 0):
            sign = 1.0 if vals[0] > 0 else -1.0
            return Potential(
                "sign-equivalent",
                "x1" if sign > 0 else "-x1",
                lambda x, s=sign: s * x[:, 0],
                axis_only=True,
                reason="delta = lam(x) e1 with lam of constant sign on samples",
            )
    if not _closed_on_samples(model, samples):
        return Potential("none", "", reason="delta is not closed (curl differs from 0 on samples)")
    return Potential("none", "", reason="no potential construction for this closed field")


def _axis_potential(lam_expr, lo, hi):
    tree = lam_expr.components[0]

    def integrand(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        x = np.zeros((t.size, lam_expr.dimension))
        x[:, 0] = t
        return lam_expr(x)

    checks = [c for c in (0.5 * lo, 0.5 * hi, hi, lo, 1.0, 3.0) if c != 0.0]
    sym = _symbolic_antiderivative(tree, checks, integrand)
    if sym is not None:
        func, text = sym
        return Potential("exact", text.replace("X", "x1"), lambda x: func(x[:, 0]), axis_only=True)
    func = _numeric_antiderivative(integrand, lo, hi)
    return Potential(
        "exact",
        f"numeric int_0^x1 of {lam_expr.pretty()}",
        lambda x: func(x[:, 0]),
        axis_only=True,
        reason="symbolic antiderivative unavailable; cumulative Simpson table",
    )


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------


@dataclass
class ModeResult:
    applicable: bool
    reachable: bool
    refined_reachable: bool | None = None

    @property
    def stable(self):
        return self.refined_reachable is None or self.refined_reachable == self.reachable


@dataclass(eq=False)
class ObstructionCertificate:
    applicable: bool
    potential_kind: str
    potential: str
    resolution: int
    refined_resolution: int | None
    reduced: bool
    grid_shape: tuple
    modes: dict = field(default_factory=dict)
    witness: DiscretePath | None = None
    witness_mode: str | None = None
    witness_condition: str | None = None
    reason: str = ""

    @property
    def all_unreachable(self):
        return self.applicable and all(not r.reachable for r in self.modes.values())

    @property
    def obstructed(self):
        return self.all_unreachable and all(r.stable for r in self.modes.values()) and (
            self.refined_resolution is not None
        )

    def summary(self):
        return {
            "applicable": self.applicable,
            "obstructed": self.obstructed,
            "potential_kind": self.potential_kind,
            "potential": self.potential,
            "resolution": self.resolution,
            "refined_resolution": self.refined_resolution,
            "reduced_to_x1": self.reduced,
            "grid_shape": list(self.grid_shape),
            "modes": {
                k: {"applicable": v.applicable, "reachable": v.reachable, "refined_reachable": v.refined_reachable}
                for k, v in self.modes.items()
            },
            "witness_mode": self.witness_mode,
            "witness_condition": self.witness_condition,
            "reason": self.reason,
        }


class _Grid:
    """Uniform grid over a box with p on a node and q on, or within half a cell of, a node."""

    def __init__(self, lo, hi, xp, xq, resolution, dims):
        self.dims = list(dims)
        span = np.max((hi - lo)[self.dims])
        target = span / resolution
        self.xp = xp
        self.step = np.empty(len(self.dims))
        self.lo_idx = np.empty(len(self.dims), dtype=int)
        self.shape = []
        for j, k in enumerate(self.dims):
            gap = abs(xq[k] - xp[k])
            # endpoints closer than half a cell share a node along this axis
            h = gap / round(gap / target) if gap >= 0.5 * target else target
            self.step[j] = h
            a = int(np.floor((lo[k] - xp[k]) / h + 1e-9))
            b = int(np.ceil((hi[k] - xp[k]) / h - 1e-9))
            self.lo_idx[j] = a
            self.shape.append(b - a + 1)
        self.shape = tuple(self.shape)
        self.size = int(np.prod(self.shape))

    def coords(self, flat_idx):
        idx = np.array(np.unravel_index(flat_idx, self.shape)).T
        return self.xp[self.dims] + (idx + self.lo_idx) * self.step

    def index_of(self, x):
        idx = np.rint((np.asarray(x)[self.dims] - self.xp[self.dims]) / self.step).astype(int) - self.lo_idx
        return int(np.ravel_multi_index(idx, self.shape))


def _search_box(model: MetricModel, xp, xq):
    margin = 2.0 * float(np.linalg.norm(xq - xp))
    margin = max(margin, 1.0)
    lo = np.minimum(xp, xq) - margin
    hi = np.maximum(xp, xq) + margin
    for box in model.excluded:
        lo = np.minimum(lo, np.array(box.lo) - margin / 4)
        hi = np.maximum(hi, np.array(box.hi) + margin / 4)
    return lo, hi


def _offsets(ndim):
    grids = np.array(np.meshgrid(*[[-1, 0, 1]] * ndim, indexing="ij")).reshape(ndim, -1).T
    return grids[np.any(grids != 0, axis=1)]


def _bfs(grid: _Grid, pot_values, mode, eps, start, goal, full_point, model):
    """Layered BFS over king moves; returns parent array or None if goal not reached."""
    shape = np.array(grid.shape)
    strides = np.array([int(np.prod(shape[i + 1 :])) for i in range(len(shape))])
    offsets = _offsets(len(shape))
    parent = np.full(grid.size, -1, dtype=np.int64)
    visited = np.zeros(grid.size, dtype=bool)
    if model.excluded:
        blocked_nodes = model.in_excluded(full_point(np.arange(grid.size)))
        visited |= blocked_nodes
        if visited[start] or visited[goal]:
            raise GeometryError("endpoint lies in an excluded region")
    visited[start] = True
    parent[start] = start
    base_value = pot_values[start]
    frontier = np.array([start], dtype=np.int64)
    while frontier.size and parent[goal] < 0:
        idx = np.array(np.unravel_index(frontier, grid.shape)).T
        new_nodes = []
        for off in offsets:
            nb = idx + off
            ok = np.all((nb >= 0) & (nb < shape), axis=1)
            src = frontier[ok]
            dst = nb[ok] @ strides
            keep = ~visited[dst]
            src, dst = src[keep], dst[keep]
            if dst.size == 0:
                continue
            a, b = pot_values[src], pot_values[dst]
            if mode == "nondecreasing":
                allowed = b >= a - eps
            elif mode == "nonincreasing":
                allowed = b <= a + eps
            else:
                allowed = np.abs(b - base_value) <= eps
            src, dst = src[allowed], dst[allowed]
            if model.excluded and dst.size:
                hit = model.segments_blocked(full_point(src), full_point(dst))
                src, dst = src[~hit], dst[~hit]
            if dst.size == 0:
                continue
            dst, first = np.unique(dst, return_index=True)
            src = src[first]
            fresh = ~visited[dst]
            dst, src = dst[fresh], src[fresh]
            visited[dst] = True
            parent[dst] = src
            new_nodes.append(dst)
        frontier = np.concatenate(new_nodes) if new_nodes else np.empty(0, dtype=np.int64)
    return parent if parent[goal] >= 0 else None


def _trace(parent, start, goal):
    out = [goal]
    while out[-1] != start:
        out.append(int(parent[out[-1]]))
    return out[::-1]


def monotone_path_search(model: MetricModel, potential: Potential, pair: EndpointPair, resolution=256, reduce=True):
    """Reachability of q from p along grid paths with monotone or constant potential.

    Returns (mode results, witness grid points or None, witness mode, grid, reduced).
    """
    xp, xq = np.array(pair.xp), np.array(pair.xq)
    model.check_domain(np.array([xp, xq]))
    lo, hi = _search_box(model, xp, xq)
    reduced = reduce and potential.axis_only and not model.excluded
    dims = [0] if reduced else list(range(model.dimension))
    grid = _Grid(lo, hi, xp, xq, resolution, dims)
    if grid.size > NODE_CAP:
        raise GeometryError(f"search grid has {grid.size} nodes (cap {NODE_CAP}); lower the resolution")
    cell = float(np.max(grid.step))
    for box in model.excluded:
        if np.max(box.extent) < 4 * cell:
            raise GridTooCoarseError(
                f"excluded region {box.lo}..{box.hi} spans fewer than 4 cells; use a finer grid (cell {cell:.3g})"
            )

    def full_point(flat_idx):
        sub = grid.coords(flat_idx)
        if reduced:
            out = np.repeat(xp[None, :], sub.shape[0], axis=0)
            out[:, 0] = sub[:, 0]
            return out
        return sub

    values = potential(full_point(np.arange(grid.size)))
    scale = float(np.max(np.abs(values)))
    eps = 1e-9 * (1.0 + scale)
    start, goal = grid.index_of(xp), grid.index_of(xq)
    lp, lq = values[start], values[goal]
    results, witness, witness_mode = {}, None, None
    for mode in MODES:
        applicable = {
            "nondecreasing": lq >= lp - eps,
            "nonincreasing": lq <= lp + eps,
            "level": abs(lq - lp) <= eps,
        }[mode]
        parent = _bfs(grid, values, mode, eps, start, goal, full_point, model) if applicable else None
        results[mode] = ModeResult(bool(applicable), parent is not None)
        if parent is not None and witness is None:
            nodes = full_point(np.array(_trace(parent, start, goal)))
            if reduced:
                frac = np.linspace(0.0, 1.0, nodes.shape[0])[:, None]
                nodes[:, 1:] = xp[1:] + frac * (xq[1:] - xp[1:])
            nodes[0], nodes[-1] = xp, xq
            witness, witness_mode = nodes, mode
    return results, witness, witness_mode, grid, reduced


def smooth_witness(points, m=WITNESS_NODES):
    """Centripetal Catmull-Rom spline through grid points, resampled uniformly in arc length."""
    pts = np.asarray(points, dtype=float)
    keep = np.concatenate([[True], np.any(np.diff(pts, axis=0) != 0, axis=1)])
    pts = pts[keep]
    if pts.shape[0] == 1:
        return np.repeat(pts, m + 1, axis=0)
    if pts.shape[0] == 2:
        return pts[0] + np.linspace(0, 1, m + 1)[:, None] * (pts[1] - pts[0])
    # drop interior points on straight runs
    turn = [0]
    for i in range(1, pts.shape[0] - 1):
        if not np.allclose(pts[i + 1] - pts[i], pts[i] - pts[i - 1]):
            turn.append(i)
    turn.append(pts.shape[0] - 1)
    pts = pts[turn]
    ext = np.vstack([2 * pts[0] - pts[1], pts, 2 * pts[-1] - pts[-2]])
    dense = []
    for i in range(1, ext.shape[0] - 2):
        p0, p1, p2, p3 = ext[i - 1 : i + 3]
        t0 = 0.0
        t1 = t0 + np.linalg.norm(p1 - p0) ** 0.5
        t2 = t1 + np.linalg.norm(p2 - p1) ** 0.5
        t3 = t2 + np.linalg.norm(p3 - p2) ** 0.5
        t = np.linspace(t1, t2, 64, endpoint=False)[:, None]
        a1 = (t1 - t) / (t1 - t0) * p0 + (t - t0) / (t1 - t0) * p1
        a2 = (t2 - t) / (t2 - t1) * p1 + (t - t1) / (t2 - t1) * p2
        a3 = (t3 - t) / (t3 - t2) * p2 + (t - t2) / (t3 - t2) * p3
        b1 = (t2 - t) / (t2 - t0) * a1 + (t - t0) / (t2 - t0) * a2
        b2 = (t3 - t) / (t3 - t1) * a2 + (t - t1) / (t3 - t1) * a3
        dense.append((t2 - t) / (t2 - t1) * b1 + (t - t1) / (t2 - t1) * b2)
    dense.append(pts[-1:])
    dense = np.vstack(dense)
    seg = np.linalg.norm(np.diff(dense, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    target = np.linspace(0.0, cum[-1], m + 1)
    out = np.column_stack([np.interp(target, cum, dense[:, i]) for i in range(dense.shape[1])])
    out[0], out[-1] = pts[0], pts[-1]
    return out


def certify(model: MetricModel, pair: EndpointPair, resolution=256, refine=True) -> ObstructionCertificate:
    """Search all modes at the given resolution and, if nothing is reachable, at twice it.

    A grid witness whose smoothed curve still changes sign (the grid stepped
    over a thin dip of the potential) triggers a search on a doubled grid;
    if none verifies, no witness is returned and nothing is certified.
    """
    pair, _ = pair.normalized()
    xp, xq = np.array(pair.xp), np.array(pair.xq)
    if not model.beta.is_zero():
        return ObstructionCertificate(False, "none", "", resolution, None, False, (),
                                      reason="the pairing involves beta t'; only beta = 0 bases are searched")
    lo, hi = _search_box(model, xp, xq)
    pot = potential_of(model, lo - 1.0, hi + 1.0)
    if not pot.available:
        return ObstructionCertificate(False, "none", "", resolution, None, False, (), reason=pot.reason)
    res = resolution
    modes, witness, wmode, grid, reduced = monotone_path_search(model, pot, pair, res)
    while True:
        cert = ObstructionCertificate(True, pot.kind, pot.description, res, None, reduced, grid.shape, modes,
                                      reason=pot.reason)
        if witness is None:
            break
        smooth = smooth_witness(witness)
        path = DiscretePath(smooth, pair.tp + pair.dt * np.linspace(0.0, 1.0, smooth.shape[0]))
        condition = witness_condition(model, path)
        if condition not in (SIGN_CHANGE, "blocked"):
            cert.witness, cert.witness_mode, cert.witness_condition = path, wmode, condition
            return cert
        cert.reason = f"grid witness failed the dense sign check at resolution {res}"
        if 2 * res > WITNESS_REFINE * resolution:
            return cert
        log.info("grid witness at resolution %d fails the sign check (%s); refining", res, condition)
        try:
            modes, witness, wmode, grid, reduced = monotone_path_search(model, pot, pair, 2 * res)
        except GeometryError:
            return cert
        res *= 2
    if refine and cert.all_unreachable:
        fine, _, _, _, _ = monotone_path_search(model, pot, pair, 2 * res)
        for mode, r in fine.items():
            modes[mode].refined_reachable = r.reachable
        cert.refined_resolution = 2 * res
    log.info("potential %s (%s); grid %s; reachable %s; obstructed %s", pot.kind, pot.description, grid.shape,
             {k: v.reachable for k, v in modes.items()}, cert.obstructed)
    return cert


def witness_condition(model: MetricModel, path: DiscretePath) -> str:
    if model.excluded and np.any(model.segments_blocked(path.nodes[:-1], path.nodes[1:])):
        return "blocked"
    return classify_pairing(segment_pairing(SpacetimeModel(model), path))


def sign_conservation_check(model: MetricModel, path: DiscretePath, n=None) -> dict:
    """Min, max and sign pattern of the Killing pairing along a candidate path."""
    if path.m < 64:
        raise ValueError("sign check needs m >= 64")
    if path.t is None:
        path = path.with_time(np.linspace(0.0, 1.0, path.m + 1))
    values = segment_pairing(SpacetimeModel(model, n), path)
    pattern = classify_pairing(values)
    return {
        "min": float(np.min(values)),
        "max": float(np.max(values)),
        "pattern": pattern,
        "flagged": pattern == SIGN_CHANGE,
    }
