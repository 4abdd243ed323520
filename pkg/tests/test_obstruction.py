import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from geoconnect.action import DiscretePath, EndpointPair
from geoconnect.connect import SIGN_CHANGE
from geoconnect.geometry import builtin_model, make_model
from geoconnect.obstruction import (
    GridTooCoarseError,
    certify,
    monotone_path_search,
    potential_of,
    sign_conservation_check,
    smooth_witness,
)

COS3 = builtin_model("cos3-wall")
SLIT = builtin_model("slit-plane")
COS3_PAIR = EndpointPair((0.0, 0.0, 0.0), 0.0, (1.5 * np.pi, 0.0, 0.0), 0.0)
SLIT_PAIR = EndpointPair((0.0, -1.0), 0.0, (0.0, 1.0), 0.0)


def cos3_lambda(x1):
    return np.where(x1 < np.pi, -np.cos(x1) ** 3, 1.0)


def test_cos3_potential_values():
    pot = potential_of(COS3)
    assert pot.kind == "exact"
    assert pot([[np.pi / 2, 0, 0]])[0] == pytest.approx(-2.0 / 3.0, abs=1e-12)
    assert pot([[np.pi, 0, 0]])[0] == pytest.approx(0.0, abs=1e-12)
    assert pot([[1.5 * np.pi, 0, 0]])[0] == pytest.approx(np.pi / 2, abs=1e-12)
    # quadrature oracle
    for x1 in (0.3, 1.0, 2.5, 3.0, 4.0, 6.0):
        ref = quad(lambda s: float(cos3_lambda(s)), 0.0, x1, points=[np.pi], limit=200)[0]
        assert pot([[x1, 0.2, -0.1]])[0] == pytest.approx(ref, abs=1e-9)
    closed = -(np.sin(1.0) - np.sin(1.0) ** 3 / 3)
    assert pot([[1.0, 0, 0]])[0] == pytest.approx(closed, abs=1e-12)


def test_constant_and_rotational_fields():
    pot = potential_of(make_model(2, "[1, 0]"))
    pts = np.random.default_rng(0).normal(size=(20, 2))
    np.testing.assert_allclose(pot(pts), pts[:, 0], atol=1e-12)
    assert potential_of(make_model(2, "[-x2, x1]")).kind == "none"


def test_cos3_certificate():
    cert = certify(COS3, COS3_PAIR)
    assert cert.applicable and cert.obstructed
    assert cert.reduced
    assert cert.refined_resolution == 2 * cert.resolution
    for mode in cert.modes.values():
        assert not mode.reachable and mode.stable
    assert cert.witness is None


def test_cos3_reduction_matches_full_grid():
    pot = potential_of(COS3)
    full, *_ = monotone_path_search(COS3, pot, COS3_PAIR, 64, reduce=False)
    reduced, *_ = monotone_path_search(COS3, pot, COS3_PAIR, 512, reduce=True)
    assert {k: v.reachable for k, v in full.items()} == {k: v.reachable for k, v in reduced.items()}
    assert not any(v.reachable for v in full.values())


def test_slit_certificate_stable():
    cert = certify(SLIT, SLIT_PAIR, 256)
    assert cert.potential_kind == "sign-equivalent"
    assert cert.obstructed
    assert all(m.applicable for m in cert.modes.values())
    assert all(m.refined_reachable is False for m in cert.modes.values())


def test_slit_fine_grid():
    assert certify(SLIT, SLIT_PAIR, 512, refine=False).all_unreachable


def test_grid_too_coarse():
    with pytest.raises(GridTooCoarseError):
        certify(SLIT, SLIT_PAIR, 8)


def test_flat_witness_straight():
    flat = make_model(2, "[1, 0]")
    cert = certify(flat, EndpointPair((0.0, 0.0), 0.0, (3.0, 0.0), 1.0), 64)
    assert not cert.obstructed
    assert cert.witness_mode == "nondecreasing"
    assert cert.witness.m == 256
    np.testing.assert_allclose(cert.witness.nodes[:, 1], 0.0, atol=1e-15)
    assert np.all(np.diff(cert.witness.nodes[:, 0]) >= 0)
    assert cert.witness_condition == "ConstantPositive"


def test_beta_positive_not_applicable():
    cert = certify(builtin_model("stationary-flat"), EndpointPair((0, 0), 0, (1, 1), 1))
    assert not cert.applicable and not cert.obstructed


def test_geodesic_pair_is_reachable():
    # a pair that connect resolves as a geodesic must admit a monotone path
    cert = certify(COS3, EndpointPair((3.5, 0, 0), 0, (5, 1, 0), 3), 64)
    assert not cert.obstructed
    assert cert.witness_condition != SIGN_CHANGE


def test_sign_conservation_check():
    straight = DiscretePath.straight(COS3_PAIR.xp, COS3_PAIR.xq, 128)
    report = sign_conservation_check(COS3, straight)
    assert report["min"] < 0 < report["max"] and report["flagged"]
    flat = make_model(2, "[1, 0]")
    report = sign_conservation_check(flat, DiscretePath.straight((0, 0), (3, 4), 64))
    assert report["min"] == pytest.approx(3.0) and report["max"] == pytest.approx(3.0)
    assert not report["flagged"]
    with pytest.raises(ValueError):
        sign_conservation_check(flat, DiscretePath.straight((0, 0), (3, 4), 32))


def test_smooth_witness_endpoints():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [2.0, 1.0]])
    out = smooth_witness(pts, 64)
    assert out.shape == (65, 2)
    np.testing.assert_array_equal(out[0], pts[0])
    np.testing.assert_array_equal(out[-1], pts[-1])


@given(
    st.floats(0.0, 6.0), st.floats(-1.0, 1.0), st.floats(0.0, 6.0), st.floats(-1.0, 1.0),
)
def test_witness_soundness_cos3(a1, a2, b1, b2):
    model = builtin_model("cos3-wall", 2)
    pair = EndpointPair((a1, a2), 0.0, (b1, b2), 1.0)
    cert = certify(model, pair, 64, refine=False)
    if cert.witness is not None:
        assert cert.witness_condition != SIGN_CHANGE


def test_thin_dip_is_not_stepped_over():
    # from x1 = 1.5 the potential first dips until pi/2; a coarse grid jumps the dip
    model = builtin_model("cos3-wall", 2)
    cert = certify(model, EndpointPair((1.5, 0.0), 0.0, (4.0, 0.0), 1.0), 64)
    assert cert.witness is None
    assert cert.obstructed and cert.resolution > 64
