"""Connecting geodesics by reduced-action minimization and the 1/n limit scheme.

For a stationary base (beta bounded away from 0) one minimization of J
followed by shooting suffices.  Otherwise J_n is minimized for
n = n0 * 2^k with warm starts; successive minimizers are compared in a
discrete H1 distance and, once they settle, the candidate is polished by
shooting in the limit system and gated by its residual.  Failure falls
back to the obstruction search; nonexistence is never claimed without a
certificate.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from .action import (
    DiscretePath,
    EndpointPair,
    h1_distance,
    l2_norm,
    reconstruct_time,
    reduced_jn,
    segment_terms,
    value_and_gradient,
)
from .fieldlang import FieldError
from .geodesic import GeodesicSolution, residual, shoot, one_sided_velocity
from .geometry import GeometryError, MetricModel
from .spacetime import SpacetimeModel, PreconditionError

log = logging.getLogger(__name__)

EPS_SIGN = 1e-9
STATIONARY_BETA = 1e-3
ARMIJO_C1 = 1e-4
ROUNDOFF = 1e-14
HALVING_TOL = 1e-8

GEODESIC = "Geodesic"
OBSTRUCTED = "Obstructed"
INCONCLUSIVE = "Inconclusive"

CONSTANT_POSITIVE = "ConstantPositive"
CONSTANT_NEGATIVE = "ConstantNegative"
IDENTICALLY_ZERO = "IdenticallyZero"
SIGN_CHANGE = "SignChange"


@dataclass
class ConnectConfig:
    m: int = 32
    n0: int = 8
    k_max: int = 10
    tol_grad: float = 1e-8
    tol_lim: float = 1e-6
    tol_bvp: float = 1e-8
    residual_tol: float = 1e-6
    drift_tol: float = 1e-7
    max_iter: int = 5000
    grid: int = 256
    seed: int = 0
    multistart: int = 4
    h_ode: float = 1e-3
    divergence: float = 1e3

    def validate(self):
        problems = []
        if self.m < 16:
            problems.append("m must be at least 16")
        if self.n0 < 1:
            problems.append("n0 must be positive")
        if not 0 <= self.k_max <= 20:
            problems.append("k_max must lie in [0, 20]")
        for name in ("tol_grad", "tol_lim", "tol_bvp", "residual_tol", "drift_tol", "h_ode"):
            if not 0 < getattr(self, name) < 1:
                problems.append(f"{name} must lie in (0, 1)")
        if self.max_iter < 1:
            problems.append("max_iter must be positive")
        if self.grid < 8:
            problems.append("grid must be at least 8")
        if self.multistart < 0:
            problems.append("multistart must be >= 0")
        if problems:
            raise ValueError("; ".join(problems))
        return self


# ---------------------------------------------------------------------------
# Condition (ii)
# ---------------------------------------------------------------------------


def classify_pairing(values, eps=EPS_SIGN) -> str:
    values = np.asarray(values, dtype=float)
    if np.all(np.abs(values) <= eps):
        return IDENTICALLY_ZERO
    if np.all(values >= eps):
        return CONSTANT_POSITIVE
    if np.all(values <= -eps):
        return CONSTANT_NEGATIVE
    return SIGN_CHANGE


def segment_pairing(model: SpacetimeModel, path: DiscretePath):
    """<delta, x'> - beta_eff t' on each segment (midpoint values)."""
    st = segment_terms(model, path)
    return st.a - st.b * path.tdot


def dense_pairing(model: SpacetimeModel, path: DiscretePath, per_segment=16):
    """Pairing sampled along every straight segment, not only at midpoints."""
    m, d = path.m, path.dimension
    frac = (np.arange(per_segment) + 0.5) / per_segment
    pts = (path.nodes[:-1, None, :] + frac[None, :, None] * np.diff(path.nodes, axis=0)[:, None, :]).reshape(-1, d)
    _, w, b = model.pieces(pts)
    v = np.repeat(path.velocities, per_segment, axis=0)
    td = np.repeat(path.tdot, per_segment)
    return np.einsum("ni,ni->n", w, v) - b * td


def check_condition_ii(model: SpacetimeModel, path: DiscretePath) -> str:
    if path.m < 16:
        raise ValueError("condition check needs m >= 16")
    return classify_pairing(segment_pairing(model, path))


def solution_pairing(model: SpacetimeModel, sol: GeodesicSolution):
    """Killing pairing from the integrated velocities at every sample."""
    geo, w, b = model.pieces(sol.x)
    if sol.system == "lightlike":
        b = np.zeros_like(b)
    return np.einsum("ni,ni->n", w, sol.v) - b * sol.tdot


# ---------------------------------------------------------------------------
# Quasi-Newton descent on J_n
# ---------------------------------------------------------------------------


@dataclass
class MinimizeResult:
    path: DiscretePath
    value: float
    grad_norm: float
    iterations: int
    status: str
    trace: list = field(default_factory=list)

    @property
    def converged(self):
        return self.status == "converged"


def minimize_jn(
    model: SpacetimeModel,
    pair: EndpointPair,
    init: DiscretePath,
    tol_grad=1e-8,
    max_iter=5000,
    memory=10,
) -> MinimizeResult:
    """L-BFGS with Armijo backtracking on the reduced functional over interior nodes.

    Steps that leave the domain are halved; each such rejection costs one
    iteration.  The value trace is nonincreasing up to rounding (1e-14 relative
    once the predicted decrease falls below it).  Stalls are reported in
    ``status`` rather than raised.
    """
    m, d = init.m, init.dimension
    if m < 16:
        raise ValueError("minimization needs m >= 16")
    if not (np.allclose(init.nodes[0], pair.xp) and np.allclose(init.nodes[-1], pair.xq)):
        raise ValueError("initial path does not join the endpoints")
    xp = np.array(pair.xp)
    xq = np.array(pair.xq)
    dt = pair.dt
    base = model.base

    def assemble(z):
        return DiscretePath(np.vstack([xp, z.reshape(m - 1, d), xq]))

    def evaluate(z):
        path = assemble(z)
        if base.excluded and np.any(base.segments_blocked(path.nodes[:-1], path.nodes[1:])):
            return None
        try:
            f, g = value_and_gradient(model, path, dt)
        except (GeometryError, FieldError):
            return None
        if not np.isfinite(f) or not np.all(np.isfinite(g)):
            return None
        return f, g.ravel()

    # inverse of the kinetic Hessian (1/h) tridiag(-1, 2, -1): an H1-type preconditioner
    lap = 2.0 * np.eye(m - 1) - np.eye(m - 1, k=1) - np.eye(m - 1, k=-1)
    smooth = np.linalg.inv(lap) / m

    def precondition(v):
        return (smooth @ v.reshape(m - 1, d)).ravel()

    z = init.nodes[1:-1].ravel().copy()
    first = evaluate(z)
    if first is None:
        raise PreconditionError("initial path leaves the domain")
    f, g = first
    trace = [f]
    S, Y = [], []
    it = 0
    status = "max-iter"
    while True:
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol_grad:
            status = "converged"
            break
        if it >= max_iter:
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s_, y_ in reversed(list(zip(S, Y))):
            rho = 1.0 / (y_ @ s_)
            a = rho * (s_ @ q)
            q -= a * y_
            alphas.append((rho, a))
        r = precondition(q)
        if S:
            r *= (S[-1] @ Y[-1]) / (Y[-1] @ precondition(Y[-1]))
        q = r
        for (s_, y_), (rho, a) in zip(zip(S, Y), reversed(alphas)):
            b = rho * (y_ @ q)
            q += s_ * (a - b)
        direction = -q
        slope = float(g @ direction)
        if slope >= 0:
            S, Y = [], []
            direction = -precondition(g)
            slope = float(g @ direction)
        step = 1.0
        accepted = None
        tried = []
        while it < max_iter:
            it += 1
            trial = z + step * direction
            ev = evaluate(trial)
            if ev is not None:
                ft, gt = ev
                tried.append((step, ft - f, float(gt @ direction), float(np.linalg.norm(gt))))
                if ft <= f + ARMIJO_C1 * step * slope:
                    accepted = (trial, ft, gt)
                    break
                # below rounding the Armijo test is meaningless; accept a smaller gradient
                noise = ROUNDOFF * max(1.0, abs(f))
                if abs(step * slope) < noise and ft <= f + noise and np.linalg.norm(gt) < gnorm:
                    accepted = (trial, ft, gt)
                    break
            step *= 0.5
            if step < 1e-20:
                break
        if accepted is None:
            if S and it < max_iter:
                # curvature pairs from the stiff directions can mis-scale the model; restart once
                log.debug("line search failed with memory; restarting from the preconditioned gradient")
                S, Y = [], []
                continue
            status = "max-iter" if it >= max_iter else "line-search-failure"
            log.debug("line search stopped: f=%.17g |g|=%.3g slope=%.3g trials=%s", f, gnorm, slope, tried[-4:])
            break
        trial, ft, gt = accepted
        s_vec = trial - z
        y_vec = gt - g
        if y_vec @ s_vec > 1e-16 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            S.append(s_vec)
            Y.append(y_vec)
            if len(S) > memory:
                S.pop(0)
                Y.pop(0)
        z, f, g = trial, ft, gt
        trace.append(f)
    return MinimizeResult(assemble(z), float(f), float(np.linalg.norm(g)), it, status, trace)


# ---------------------------------------------------------------------------
# Initial paths
# ---------------------------------------------------------------------------


def _resample(points, m):
    """Piecewise-linear polyline resampled at m+1 points uniform in arc length."""
    points = np.asarray(points, dtype=float)
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    if cum[-1] == 0:
        return np.repeat(points[:1], m + 1, axis=0)
    targets = np.linspace(0.0, cum[-1], m + 1)
    out = np.column_stack([np.interp(targets, cum, points[:, i]) for i in range(points.shape[1])])
    out[0], out[-1] = points[0], points[-1]
    return out


def _blocked(base: MetricModel, nodes):
    if not base.excluded:
        return False
    return bool(np.any(base.segments_blocked(nodes[:-1], nodes[1:])))


def initial_path(base: MetricModel, pair: EndpointPair, m: int) -> DiscretePath:
    """Straight segment, or a two-leg detour around the excluded regions it crosses."""
    path = DiscretePath.straight(pair.xp, pair.xq, m)
    if not _blocked(base, path.nodes):
        return path
    for nodes in _axis_detours(base, pair, m):
        if not _blocked(base, nodes):
            return DiscretePath(nodes)
    raise PreconditionError("no detour around the excluded regions was found")


def _obstacle_frame(base, pair):
    xp, xq = np.array(pair.xp), np.array(pair.xq)
    lo = np.min([b.lo for b in base.excluded], axis=0)
    hi = np.max([b.hi for b in base.excluded], axis=0)
    radius = 0.5 * float(np.max(hi - lo)) + 0.25 * (1.0 + float(np.linalg.norm(xq - xp)))
    return xp, xq, 0.5 * (lo + hi), radius


def _axis_detours(base, pair, m):
    xp, xq, centre, radius = _obstacle_frame(base, pair)
    mid = 0.5 * (xp + xq)
    d = xp.size
    for scale in (1.0, 1.5, 2.5):
        for i in range(d):
            for sign in (1.0, -1.0):
                via = mid.copy()
                via[i] = centre[i] + sign * scale * radius
                yield _resample([xp, via, xq], m)


def random_detours(base: MetricModel, pair: EndpointPair, m: int, count: int, seed: int):
    """Seeded randomized detours (waypoint on a sphere around the obstacles)."""
    rng = np.random.default_rng(seed)
    xp, xq = np.array(pair.xp), np.array(pair.xq)
    if base.excluded:
        _, _, centre, radius = _obstacle_frame(base, pair)
    else:
        centre, radius = 0.5 * (xp + xq), 0.25 * (1.0 + float(np.linalg.norm(xq - xp)))
    out = []
    attempts = 0
    while len(out) < count and attempts < 50 * max(count, 1):
        attempts += 1
        u = rng.normal(size=xp.size)
        u /= np.linalg.norm(u)
        via = centre + rng.uniform(1.0, 2.0) * radius * u
        nodes = _resample([xp, via, xq], m)
        if not _blocked(base, nodes):
            out.append(DiscretePath(nodes))
    return out


def _best(results):
    """Lowest value, ties broken by lexicographic node order."""
    return min(results, key=lambda r: (r.value, tuple(r.path.nodes.ravel())))


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------


@dataclass
class SweepRecord:
    n: int
    Jn: float
    xdot_l2: float
    tdot_l2: float
    h1_gap: float
    residual: float
    pairing_min: float
    pairing_max: float
    extrapolated_gap: float = float("nan")
    extrapolated_gap2: float = float("nan")
    status: str = ""
    iterations: int = 0

    def as_row(self):
        return asdict(self)


@dataclass
class ConnectVerdict:
    tag: str
    pair: EndpointPair
    solution: GeodesicSolution | None = None
    certificate: object | None = None
    path: DiscretePath | None = None
    residual: float = float("nan")
    condition: str = ""
    diagnostics: dict = field(default_factory=dict)
    sweep: list = field(default_factory=list)

    @property
    def exit_code(self):
        return {GEODESIC: 0, OBSTRUCTED: 2, INCONCLUSIVE: 3}[self.tag]

    def summary(self):
        out = {
            "verdict": self.tag,
            "endpoints": {"p": [list(self.pair.xp), self.pair.tp], "q": [list(self.pair.xq), self.pair.tq]},
            "diagnostics": _plain(self.diagnostics),
        }
        if self.solution is not None:
            sol = self.solution
            out["geodesic"] = {
                "system": sol.system,
                "energy": sol.E,
                "killing_constant": sol.C,
                "energy_drift": sol.drift_E,
                "killing_drift": sol.drift_C,
                "endpoint_error": self.residual,
                "condition_ii": self.condition,
                "initial_velocity": [float(v) for v in sol.initial_velocity()],
            }
        if self.certificate is not None:
            out["certificate"] = self.certificate.summary()
        if self.sweep:
            out["sweep"] = [_plain(r.as_row()) for r in self.sweep]
        return out


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _reverse(verdict: ConnectVerdict, pair: EndpointPair) -> ConnectVerdict:
    """Re-express a verdict computed for the swapped endpoints."""
    verdict.pair = pair
    if verdict.solution is not None:
        verdict.solution = verdict.solution.reversed()
    if verdict.path is not None:
        p = verdict.path
        verdict.path = DiscretePath(p.nodes[::-1], None if p.t is None else p.t[::-1])
    verdict.diagnostics["endpoints_swapped"] = True
    return verdict


# ---------------------------------------------------------------------------
# Verification of a candidate
# ---------------------------------------------------------------------------


def limit_system(base: MetricModel) -> str:
    return "lightlike" if base.beta.is_zero() else "stationary"


def verify_candidate(model: SpacetimeModel, pair: EndpointPair, candidate: DiscretePath, system, config: ConnectConfig):
    """Shoot from the candidate's initial velocity and gate the result.

    Returns (solution or None, report dict).
    """
    report = {}
    guess = one_sided_velocity(candidate)
    h = config.h_ode
    res = shoot(model, pair, system, guess, h=h, tol=config.tol_bvp)
    # one deterministic refinement when the step-halving estimate is poor
    if res.converged and res.solution.halving_change > HALVING_TOL:
        h = config.h_ode / 4
        res = shoot(model, pair, system, res.velocity, h=h, tol=config.tol_bvp)
    report["shoot_iterations"] = res.iterations
    report["shoot_message"] = res.message
    report["endpoint_error"] = res.endpoint_error
    report["jacobian_condition"] = res.jacobian_condition
    report["h_ode"] = h
    if not res.converged:
        return None, report
    sol = res.solution
    report["halving_change"] = sol.halving_change
    sol_path = sol.path()
    at_nodes = np.column_stack([np.interp(candidate.s, sol.s, sol.x[:, i]) for i in range(sol.x.shape[1])])
    dev = float(np.max(np.abs(at_nodes - candidate.nodes)))
    span = 1.0 + float(np.max(np.abs(np.array(pair.xq) - np.array(pair.xp))))
    report["candidate_deviation"] = dev
    if dev > 0.05 * span:
        report["rejected"] = "shot geodesic is far from the minimizing candidate"
        return None, report
    r = residual(model, sol_path, system, richardson=True)
    report["equation_residual"] = r
    report["energy_drift"] = sol.drift_E
    report["killing_drift"] = sol.drift_C
    cond = classify_pairing(solution_pairing(model, sol))
    report["condition_ii"] = cond
    if r > config.residual_tol:
        report["rejected"] = f"equation residual {r:.3g} above {config.residual_tol:g}"
        return None, report
    if sol.drift_E > config.drift_tol or sol.drift_C > config.drift_tol:
        report["rejected"] = "conservation drift above tolerance"
        return None, report
    if cond == SIGN_CHANGE:
        report["rejected"] = "Killing pairing changes sign"
        return None, report
    return sol, report


def _geodesic_verdict(pair, sol, candidate, report, model, **extra):
    cond = report["condition_ii"]
    return ConnectVerdict(
        GEODESIC,
        pair,
        solution=sol,
        path=candidate,
        residual=sol.residual,
        condition=cond,
        diagnostics={**report, **extra},
    )


# ---------------------------------------------------------------------------
# Limit scheme
# ---------------------------------------------------------------------------


def _sweep_step(base, pair, n, start, config, previous):
    model = SpacetimeModel(base, n)
    res = minimize_jn(model, pair, start, config.tol_grad, config.max_iter)
    path = reconstruct_time(model, res.path, pair.dt, pair.tp)
    limit_pairing = dense_pairing(SpacetimeModel(base), path)
    rec = SweepRecord(
        n=n,
        Jn=reduced_jn(model, res.path, pair.dt),
        xdot_l2=l2_norm(path.velocities, path.h),
        tdot_l2=l2_norm(path.tdot, path.h),
        h1_gap=float("nan") if previous is None else h1_distance(path, previous),
        residual=residual(model, path, "stationary"),
        pairing_min=float(np.min(limit_pairing)),
        pairing_max=float(np.max(limit_pairing)),
        status=res.status,
        iterations=res.iterations,
    )
    return res, path, rec


def _first_minimizer(base, pair, config):
    model = SpacetimeModel(base, config.n0)
    init = initial_path(base, pair, config.m)
    res = minimize_jn(model, pair, init, config.tol_grad, config.max_iter)
    if res.converged or config.multistart == 0:
        return res.path
    results = [res]
    for start in random_detours(base, pair, config.m, config.multistart, config.seed):
        try:
            results.append(minimize_jn(model, pair, start, config.tol_grad, config.max_iter))
        except PreconditionError:
            continue
    return _best(results).path


class _Richardson:
    """Extrapolation table in n for iterates with an expansion in powers of 1/n.

    Level 1 removes the 1/n term (n and n/2), level 2 the 1/n^2 term.
    """

    def __init__(self):
        self.levels = [[], [], []]

    def push(self, path: DiscretePath):
        lv = self.levels
        lv[0].append(path)
        if len(lv[0]) >= 2:
            f, c = lv[0][-1], lv[0][-2]
            lv[1].append(DiscretePath(2 * f.nodes - c.nodes, 2 * f.t - c.t))
        if len(lv[1]) >= 2:
            f, c = lv[1][-1], lv[1][-2]
            lv[2].append(DiscretePath((4 * f.nodes - c.nodes) / 3, (4 * f.t - c.t) / 3))

    def gaps(self):
        """Latest H1 gap per level (nan where not yet available)."""
        out = []
        for lv in self.levels:
            out.append(h1_distance(lv[-1], lv[-2]) if len(lv) >= 2 else float("nan"))
        return out

    def latest(self, level):
        return self.levels[level][-1]


def _schedule(base, pair, config):
    """Run the n-schedule; yields (k, record, table) after each n."""
    table = _Richardson()
    start = _first_minimizer(base, pair, config)
    previous = None
    for k in range(config.k_max + 1):
        n = config.n0 * 2**k
        res, path, rec = _sweep_step(base, pair, n, start, config, previous)
        table.push(path)
        gaps = table.gaps()
        rec.extrapolated_gap, rec.extrapolated_gap2 = gaps[1], gaps[2]
        log.info("n=%d J=%.12g |x'|=%.6g |t'|=%.6g gaps=%s", n, rec.Jn, rec.xdot_l2, rec.tdot_l2, gaps)
        yield k, rec, table
        start, previous = res.path, path


def sweep(base: MetricModel, pair: EndpointPair, config: ConnectConfig | None = None):
    """Per-n diagnostics over the whole schedule n0 * 2^k, k = 0..k_max.

    Returns (records, time-lifted minimizers).
    """
    config = (config or ConnectConfig()).validate()
    pair, _ = pair.normalized()
    records, paths = [], []
    for _, rec, table in _schedule(base, pair, config):
        records.append(rec)
        paths.append(table.latest(0))
    return records, paths


def limit_scheme(base: MetricModel, pair: EndpointPair, config: ConnectConfig | None = None) -> ConnectVerdict:
    config = (config or ConnectConfig()).validate()
    original = pair
    pair, swapped = pair.normalized()
    system = limit_system(base)
    limit_model = SpacetimeModel(base)
    records, attempts = [], []
    verdict = None
    for k, rec, table in _schedule(base, pair, config):
        records.append(rec)
        gaps = table.gaps()
        ready = sorted((g, level) for level, g in enumerate(gaps) if g <= config.tol_lim)[:1]
        for gap, level in ready:
            cand = table.latest(level)
            sol, report = verify_candidate(limit_model, pair, cand, system, config)
            attempts.append({"n": rec.n, "level": level, "gap": gap, **report})
            if sol is not None:
                verdict = _geodesic_verdict(
                    pair, sol, cand, report, limit_model, n=rec.n, extrapolation_level=level,
                    h1_gap=gap, stopping_rule="heuristic: H1 gap between successive (extrapolated) minimizers",
                )
                break
        if verdict is not None:
            break
        if rec.xdot_l2 > config.divergence * records[0].xdot_l2:
            break
    if verdict is None:
        verdict = _fallback(base, pair, config, records, attempts)
    verdict.sweep = records
    if swapped:
        verdict = _reverse(verdict, original)
    return verdict


def _fallback(base, pair, config, records, attempts):
    from .obstruction import certify

    diagnostics = {
        "J": [r.Jn for r in records],
        "xdot_l2": [r.xdot_l2 for r in records],
        "tdot_l2": [r.tdot_l2 for r in records],
        "h1_gap": [r.h1_gap for r in records],
        "verification_attempts": attempts,
    }
    try:
        cert = certify(base, pair, config.grid)
    except (GeometryError, ValueError) as exc:
        diagnostics["obstruction"] = f"search failed: {exc}"
        return ConnectVerdict(INCONCLUSIVE, pair, diagnostics=diagnostics)
    if cert.obstructed:
        return ConnectVerdict(OBSTRUCTED, pair, certificate=cert, diagnostics=diagnostics)
    diagnostics["obstruction"] = cert.summary()
    return ConnectVerdict(INCONCLUSIVE, pair, certificate=cert, diagnostics=diagnostics)


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def beta_lower_bound(base: MetricModel, pair: EndpointPair, samples=2000, seed=0) -> float:
    """Minimum of beta over random points in a box around the endpoints."""
    if base.beta.is_constant():
        return float(base.beta.eval(np.zeros(base.dimension)))
    xp, xq = np.array(pair.xp), np.array(pair.xq)
    pad = 1.0 + np.linalg.norm(xq - xp)
    lo = np.minimum(xp, xq) - pad
    hi = np.maximum(xp, xq) + pad
    pts = np.random.default_rng(seed).uniform(lo, hi, size=(samples, base.dimension))
    pts = np.vstack([pts, xp, xq])
    pts = pts[~base.in_excluded(pts)]
    return float(np.min(base.geom(pts).beta))


def stationary_connect(base: MetricModel, pair: EndpointPair, config: ConnectConfig) -> ConnectVerdict:
    original = pair
    pair, swapped = pair.normalized()
    model = SpacetimeModel(base)
    init = initial_path(base, pair, config.m)
    res = minimize_jn(model, pair, init, config.tol_grad, config.max_iter)
    path = reconstruct_time(model, res.path, pair.dt, pair.tp)
    sol, report = verify_candidate(model, pair, path, "stationary", config)
    report.update(J=res.value, grad_norm=res.grad_norm, iterations=res.iterations, status=res.status)
    if sol is None:
        verdict = ConnectVerdict(INCONCLUSIVE, pair, path=path, diagnostics=report)
    else:
        verdict = _geodesic_verdict(pair, sol, path, report, model, route="stationary")
    return _reverse(verdict, original) if swapped else verdict


def connect(base: MetricModel, pair: EndpointPair, config: ConnectConfig | None = None) -> ConnectVerdict:
    config = (config or ConnectConfig()).validate()
    base.check_domain(np.array([pair.xp, pair.xq]))
    if not base.lightlike and beta_lower_bound(base, pair, seed=config.seed) > STATIONARY_BETA:
        return stationary_connect(base, pair, config)
    return limit_scheme(base, pair, config)
