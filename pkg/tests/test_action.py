import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from geoconnect.action import (
    DiscretePath,
    EndpointPair,
    LightlikeCheckError,
    action_f,
    affine_time,
    arrival_time,
    gradient_j,
    h1_distance,
    killing_constant,
    lightlike_lift,
    lower_bound_check,
    reconstruct_time,
    reduced_j,
    reduced_jn,
    segment_terms,
)
from geoconnect.geometry import builtin_model, make_model
from geoconnect.spacetime import PreconditionError, SpacetimeModel, killing_pairing_batch

from helpers import random_model, random_path

LINE = make_model(1, "[1]", "0")
STAT = SpacetimeModel(builtin_model("stationary-flat"))
DRIFT = SpacetimeModel(make_model(2, "[1, 0]", "1"))


def straight(a, b, m=16, tp=None, tq=None):
    return DiscretePath.straight(a, b, m, tp, tq)


def test_action_f_examples():
    assert action_f(SpacetimeModel(LINE, 2), straight([0], [3], 16, 0, 2)) == pytest.approx(9.5, abs=1e-12)
    assert action_f(STAT, straight([0, 0], [3, 4], 16, 0, 2)) == pytest.approx(10.5, abs=1e-12)
    const = DiscretePath(np.zeros((17, 2)), affine_time(0.0, 2.0, 16))
    assert action_f(STAT, const) == pytest.approx(-2.0, abs=1e-12)


def test_killing_constant_examples():
    assert killing_constant(STAT, straight([0, 0], [3, 4]), 2.0) == -2.0
    assert killing_constant(DRIFT, straight([0, 0], [3, 0]), 0.0) == 3.0
    assert killing_constant(SpacetimeModel(LINE, 4), straight([0], [1]), 0.0) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(PreconditionError):
        killing_constant(SpacetimeModel(LINE), straight([0], [1]), 0.0)


def test_reconstruct_time_examples():
    path = reconstruct_time(STAT, straight([0, 0], [3, 4]), 2.0, tp=1.0)
    np.testing.assert_allclose(path.t, affine_time(1.0, 2.0, 16), atol=1e-14)
    path = reconstruct_time(DRIFT, straight([0, 0], [3, 0]), 3.0)
    assert killing_constant(DRIFT, path, 3.0) == 0.0
    np.testing.assert_allclose(path.tdot, 3.0, atol=1e-13)


def test_reconstructed_pairing_is_constant_on_random_paths():
    rng = np.random.default_rng(11)
    for _ in range(50):
        model = random_model(rng)
        x = random_path(rng, model.dimension)
        dt = float(rng.uniform(0, 3))
        path = reconstruct_time(model, x, dt, tp=0.5)
        assert path.t[-1] == pytest.approx(0.5 + dt, abs=1e-12)
        C = killing_pairing_batch(model, path.midpoints, path.velocities, path.tdot)
        assert np.max(np.abs(C - killing_constant(model, x, dt))) <= 1e-10


def test_reduced_j_examples():
    assert reduced_j(STAT, straight([0, 0], [3, 4]), 2.0) == pytest.approx(10.5, abs=1e-12)
    assert reduced_j(STAT, DiscretePath(np.zeros((17, 2))), 2.0) == pytest.approx(-2.0, abs=1e-12)
    model = SpacetimeModel(LINE, 4)
    assert reduced_jn(model, straight([0], [3]), 2.0) == pytest.approx(10.0, abs=1e-12)
    assert reduced_j(model, straight([0], [3]), 2.0) == pytest.approx(10.0, abs=1e-12)


def test_reduced_jn_examples():
    zero = make_model(2, "[0, 0]", "0")
    assert reduced_jn(SpacetimeModel(zero, 4), straight([0, 0], [3, 4]), 2.0) == pytest.approx(12.0, abs=1e-12)
    # <delta, x'> = 3 constant, |x'|^2 = 9
    assert reduced_jn(SpacetimeModel(LINE, 2), straight([0], [3]), 2.0) == pytest.approx(9.5, abs=1e-12)
    with pytest.raises(PreconditionError):
        reduced_jn(SpacetimeModel(LINE), straight([0], [3]), 2.0)


def test_reduced_jn_monotone_towards_its_limit():
    path = straight([0], [3])
    values = [reduced_jn(SpacetimeModel(LINE, n), path, 2.0) for n in (1, 10, 100, 10**4, 10**6)]
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(4.5 + 2.0 * 3.0, abs=1e-5)


def test_reduced_jn_matches_display_form():
    """Centred evaluation agrees with the raw bracket where cancellation is harmless."""
    rng = np.random.default_rng(5)
    base = make_model(2, "[1 + 0.3*sin(x2), cos(x1)]", "0")
    for n in (1, 3, 17):
        x = random_path(rng, 2)
        st = segment_terms(SpacetimeModel(base, n), x)
        h = st.h
        A = h * np.sum(st.a)
        raw = 0.5 * h * np.sum(st.vv) + 0.5 * n * (h * np.sum(st.a**2) - A**2) - 1.5 * (1.5 / (2 * n) - A)
        assert reduced_jn(SpacetimeModel(base, n), x, 1.5) == pytest.approx(raw, rel=1e-11)


def test_action_of_reconstruction_equals_reduced_j():
    rng = np.random.default_rng(4)
    for _ in range(60):
        model = random_model(rng, perturbed=rng.random() < 0.5)
        x = random_path(rng, model.dimension)
        dt = float(rng.uniform(0, 3))
        J = reduced_j(model, x, dt)
        f = action_f(model, reconstruct_time(model, x, dt))
        assert f == pytest.approx(J, abs=1e-10 * (1 + abs(J)))


def test_lower_bound():
    assert lower_bound_check(STAT, straight([0, 0], [3, 4]), 2.0)
    rng = np.random.default_rng(9)
    for _ in range(100):
        model = random_model(rng)
        assert lower_bound_check(model, random_path(rng, model.dimension), float(rng.uniform(0, 3)))
    # highly oscillatory path
    m = 400
    s = np.linspace(0, 1, m + 1)
    wiggle = DiscretePath(np.column_stack([s, 0.2 * np.sin(150 * np.pi * s)]))
    model = SpacetimeModel(make_model(2, "[1, x1]", "0.5 + x2^2"))
    assert lower_bound_check(model, wiggle, 1.0)


def test_arrival_time_examples():
    assert arrival_time(STAT, straight([0, 0], [3, 4])) == pytest.approx(5.0, abs=1e-12)
    assert arrival_time(DRIFT, straight([0, 0], [1, 0])) == pytest.approx(1 + math.sqrt(2), abs=1e-12)
    assert arrival_time(SpacetimeModel(LINE, 1), straight([0], [1])) == pytest.approx(1 + math.sqrt(2), abs=1e-12)
    with pytest.raises(PreconditionError):
        arrival_time(STAT, DiscretePath(np.zeros((5, 2))))


def test_lightlike_lift_is_null_per_segment():
    rng = np.random.default_rng(1)
    for _ in range(20):
        model = random_model(rng)
        x = random_path(rng, model.dimension)
        path, T = lightlike_lift(model, x, tp=0.3)
        st = segment_terms(model, path)
        norms = st.vv + 2 * st.a * path.tdot - st.b * path.tdot**2
        assert np.max(np.abs(norms)) <= 1e-8
        assert path.t[-1] == pytest.approx(0.3 + T, abs=1e-12)
        assert np.all(path.tdot > 0)


def test_lightlike_check_error_type():
    assert issubclass(LightlikeCheckError, RuntimeError)


def test_gradient_examples():
    assert np.max(np.abs(gradient_j(STAT, straight([0, 0], [3, 4]), 2.0))) <= 1e-12
    flat = SpacetimeModel(make_model(2, "[0, 0]", "1"))
    path = straight([0, 0], [1, 0], 16)
    nodes = path.nodes.copy()
    nodes[5] += [0.0, 0.1]
    g = gradient_j(flat, DiscretePath(nodes), 1.0)
    assert g[4] @ np.array([0.0, 0.1]) > 0


def fd_gradient(model, path, dt, step=1e-6):
    nodes = path.nodes
    out = np.zeros((nodes.shape[0] - 2, nodes.shape[1]))
    for i in range(1, nodes.shape[0] - 1):
        for k in range(nodes.shape[1]):
            up, dn = nodes.copy(), nodes.copy()
            up[i, k] += step
            dn[i, k] -= step
            out[i - 1, k] = (reduced_j(model, DiscretePath(up), dt) - reduced_j(model, DiscretePath(dn), dt)) / (2 * step)
    return out


def test_gradient_matches_fd_on_random_models():
    rng = np.random.default_rng(21)
    for _ in range(10):
        model = random_model(rng)
        x = random_path(rng, model.dimension, m=16)
        dt = float(rng.uniform(0, 2))
        g = gradient_j(model, x, dt)
        fd = fd_gradient(model, x, dt)
        assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(fd)


def test_refinement_convergence():
    model = SpacetimeModel(make_model(2, "[1 + 0.2*sin(x2), 0.5*x1]", "0.7 + 0.1*x1^2"))

    def curve(m):
        s = np.linspace(0, 1, m + 1)
        return DiscretePath(np.column_stack([2 * s, np.sin(np.pi * s)]))

    errs = []
    ref = reduced_j(model, curve(4096), 1.0)
    for m in (16, 32, 64, 128):
        errs.append(abs(reduced_j(model, curve(m), 1.0) - ref))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 1.0


def test_endpoint_pair_normalization():
    pair = EndpointPair((0, 0), 2.0, (1, 1), -1.0)
    flipped, swapped = pair.normalized()
    assert swapped and flipped.dt == 3.0 and flipped.xp == (1.0, 1.0)
    same, swapped = EndpointPair((0, 0), 0.0, (1, 1), 1.0).normalized()
    assert not swapped


def test_h1_distance():
    a = straight([0, 0], [1, 0], 8, 0, 1)
    assert h1_distance(a, a) == 0.0
    b = DiscretePath(a.nodes + [0.0, 1.0], a.t)
    assert h1_distance(a, b) == pytest.approx(math.sqrt(9 / 8), rel=1e-14)


@given(st.integers(1, 10**6), st.integers(1, 10**6), st.integers(0, 10**6))
def test_jn_monotone_in_n(n1, n2, seed):
    rng = np.random.default_rng(seed)
    base = make_model(2, "[1 + 0.5*sin(x2), 0.3*x1]", "0")
    x = random_path(rng, 2, m=16)
    lo, hi = sorted((n1, n2))
    dt = float(rng.uniform(0, 2))
    assert reduced_jn(SpacetimeModel(base, hi), x, dt) >= reduced_jn(SpacetimeModel(base, lo), x, dt) - 1e-12
