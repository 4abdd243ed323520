import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from geoconnect.geometry import builtin_model, make_model
from geoconnect.spacetime import (
    PreconditionError,
    SpacetimeModel,
    associated_riemannian_inner,
    causal_character,
    killing_pairing,
    lorentz_inner,
)

LINE = SpacetimeModel(make_model(1, "[1]", "0"))
FLAT2 = SpacetimeModel(builtin_model("flat-lightlike"))
STAT = SpacetimeModel(builtin_model("stationary-flat"))


def test_lorentz_inner_examples():
    assert lorentz_inner(LINE, [0.0, 0.0], [0, 1], [0, 1]) == 0.0
    assert lorentz_inner(LINE, [0.0, 0.0], [1, -1], [1, -1]) == -1.0
    assert lorentz_inner(LINE.perturbed(2), [0.0, 0.0], [0, 1], [0, 1]) == -0.5


def test_causal_character_examples():
    z = [0.0, 0.0, 0.0]
    assert causal_character(FLAT2, z, [0, 0, 1]) == "lightlike"
    assert causal_character(FLAT2, z, [1, 0, 0]) == "spacelike"
    assert causal_character(FLAT2, z, [1, 0, -1]) == "timelike"
    assert causal_character(FLAT2, z, [0, 0, 0]) == "zero"


def test_killing_pairing_examples():
    z = [0.0, 0.0, 0.0]
    assert killing_pairing(FLAT2, z, [3, 4, 7]) == 3.0
    assert killing_pairing(FLAT2, z, [0, 0, 0]) == 0.0
    assert killing_pairing(STAT, z, [5, -1, 2]) == -2.0


def test_associated_riemannian_examples():
    z = [0.0, 0.0, 0.0]
    assert associated_riemannian_inner(STAT, z, [0, 0, 1], [0, 0, 1]) == 1.0
    assert associated_riemannian_inner(STAT, z, [1, 0, 0], [1, 0, 0]) == 1.0
    assert associated_riemannian_inner(FLAT2.perturbed(4), z, [0, 0, 1], [0, 0, 1]) == 0.25
    with pytest.raises(PreconditionError):
        associated_riemannian_inner(FLAT2, z, [0, 0, 1], [0, 0, 1])


def _random_model(rng):
    d = int(rng.integers(1, 4))
    a = rng.normal(size=d)
    delta = "[" + ", ".join(f"{a[i]:.6f} * cos(x{i + 1}) + {rng.normal():.6f}" for i in range(d)) + "]"
    beta = f"{abs(rng.normal()):.6f} * x1^2" if rng.random() < 0.5 else "0"
    metric = [["0"] * d for _ in range(d)]
    for i in range(d):
        metric[i][i] = f"1 + {abs(rng.normal()):.6f} * sin(x{i + 1})^2"
    return SpacetimeModel(make_model(d, delta, beta, metric), None if rng.random() < 0.5 else int(rng.integers(1, 50)))


def test_signature_is_lorentzian_on_random_points():
    rng = np.random.default_rng(7)
    checked = 0
    for _ in range(100):
        model = _random_model(rng)
        for x in rng.uniform(-2, 2, size=(10, model.dimension)):
            geo, w, b = model.pieces(x[None, :])
            if b[0] <= 0 and not np.any(geo.delta[0]):
                continue
            eig = np.linalg.eigvalsh(model.metric_matrix(x))
            assert np.sum(eig < 0) == 1
            assert np.sum(eig > 0) == model.dimension
            checked += 1
    assert checked >= 900


@given(st.lists(st.floats(-3, 3), min_size=8, max_size=8), st.integers(1, 1000))
def test_perturbation_consistency(vals, n):
    base = make_model(3, "[sin(x2), x1 * x3, 1]", "x1^2")
    z = np.array(vals[:3])
    zeta = np.array(vals[3:7])
    zeta2 = np.array(vals[4:8])
    plain = lorentz_inner(SpacetimeModel(base), z, zeta, zeta2)
    pert = lorentz_inner(SpacetimeModel(base, n), z, zeta, zeta2)
    assert pert == pytest.approx(plain - zeta[3] * zeta2[3] / n, rel=1e-13, abs=1e-13)


@given(st.floats(0.1, 3), st.integers(1, 100))
def test_norm_decreases_with_smaller_n(tau, n):
    base = builtin_model("flat-lightlike")
    zeta = [0.4, -0.3, tau]
    z = [0.0, 0.0, 0.0]
    assert lorentz_inner(SpacetimeModel(base, n), z, zeta, zeta) < lorentz_inner(SpacetimeModel(base, n + 1), z, zeta, zeta)


def test_invalid_perturbation_index():
    with pytest.raises(ValueError):
        SpacetimeModel(builtin_model("flat"), 0)
    with pytest.raises(ValueError):
        SpacetimeModel(builtin_model("flat"), 2.5)


def test_associated_metric_is_positive_definite():
    model = SpacetimeModel(make_model(2, "[x2, sin(x1)]", "1 + x1^2"))
    rng = np.random.default_rng(2)
    for _ in range(50):
        x = rng.normal(size=2)
        zeta = rng.normal(size=3)
        assert associated_riemannian_inner(model, np.append(x, 0.0), zeta, zeta) > 0
