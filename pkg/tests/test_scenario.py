import numpy as np
import pytest
import yaml

from geoconnect.scenario import ScenarioError, load_scenario, parse_scenario, resolve, shipped_scenarios


def test_shipped_list():
    assert {"cos3-wall.scn", "slit-plane.scn", "gpw-oscillator.scn", "flat-lightlike.scn"} <= set(shipped_scenarios())


def test_cos3_scenario():
    sc = load_scenario("cos3-wall")
    assert sc.model.name == "cos3-wall" and sc.model.dimension == 3
    np.testing.assert_array_equal(sc.p, [0, 0, 0, 0])
    np.testing.assert_allclose(sc.q, [1.5 * np.pi, 0, 0, 0], rtol=0, atol=1e-15)
    assert sc.config.m == 32 and sc.config.n0 == 8 and sc.config.k_max == 10
    pair = sc.pair
    assert pair.dt == 0.0


def test_slit_scenario():
    sc = load_scenario("slit-plane.scn")
    assert len(sc.model.excluded) == 1
    lam = sc.model.geom(np.array([[0.0, 0.5], [2.0, 0.0]])).delta[:, 0]
    assert np.all(lam > 0)
    assert sc.model.beta.is_zero()


def test_gpw_scenario():
    sc = load_scenario("gpw-oscillator")
    assert sc.is_gpw
    np.testing.assert_array_equal(sc.p, [1, 0, 0, 0])
    np.testing.assert_array_equal(sc.q, [0, 1, 1, 0])
    assert float(sc.model.H.eval(np.array([1.0, 2.0]), 0.0)) == -5.0
    assert sc.assumptions
    with pytest.raises(ValueError):
        sc.pair


def test_resolve_missing():
    with pytest.raises(FileNotFoundError):
        resolve("no-such-scenario")


def good_doc():
    return {
        "name": "demo",
        "model": {"kind": "split", "dimension": 2, "delta": "[1, x1]", "beta": "0"},
        "endpoints": {"p": {"x": [0, 0], "t": 0}, "q": {"x": ["pi", 1], "t": "1/2"}},
        "config": {"nodes": 24, "k-max": 3},
    }


def test_parse_expressions():
    sc = parse_scenario(good_doc())
    assert sc.q[0] == np.pi and sc.q[2] == 0.5
    assert sc.config.m == 24 and sc.config.k_max == 3


def test_errors_collected():
    doc = good_doc()
    doc["model"]["delta"] = "[1, x3]"
    doc["endpoints"]["q"]["x"] = [1]
    doc["config"]["nodes"] = 4
    doc["config"]["bogus"] = 1
    with pytest.raises(ScenarioError) as info:
        parse_scenario(doc, "demo.scn")
    problems = info.value.problems
    assert any(p.startswith("model") for p in problems)
    assert any("config.bogus" in p for p in problems)
    assert any("m must be at least 16" in p for p in problems)


def test_endpoint_errors_located():
    doc = good_doc()
    doc["endpoints"]["q"]["x"] = [1]
    doc["endpoints"]["p"]["t"] = "1 +"
    with pytest.raises(ScenarioError) as info:
        parse_scenario(doc)
    text = str(info.value)
    assert "endpoints.q.x" in text and "endpoints.p.t" in text


def test_endpoint_in_excluded_region():
    doc = good_doc()
    doc["model"]["excluded"] = [{"lo": [-1, -1], "hi": [1, 1]}]
    with pytest.raises(ScenarioError, match="endpoints.p: lies in an excluded region"):
        parse_scenario(doc)


def test_unknown_builtin_and_kind():
    with pytest.raises(ScenarioError, match="unknown builtin"):
        parse_scenario({"model": {"kind": "builtin", "name": "torus"}, "endpoints": {}})
    with pytest.raises(ScenarioError, match="model.kind"):
        parse_scenario({"model": {"kind": "weird"}, "endpoints": {}})


def test_malformed_yaml(tmp_path):
    bad = tmp_path / "bad.scn"
    bad.write_text("model: [unclosed\n")
    with pytest.raises(ScenarioError, match="not well-formed"):
        load_scenario(bad)


def test_round_trip_file(tmp_path):
    f = tmp_path / "demo.scn"
    f.write_text(yaml.safe_dump(good_doc()))
    sc = load_scenario(f)
    assert sc.name == "demo" and sc.source == str(f)
