import numpy as np
import pytest

from conftest import config_dict, problem_from
from thinjunction.composite import assemble, cross_section_average, evaluate_point, solve_terms


def _point(i, x, r=0.0):
    p = np.zeros(3)
    p[i] = x
    p[(i + 1) % 3] = r
    return p


@pytest.mark.parametrize("fixture", ["worked_terms", "thin_terms", "generic_terms"])
def test_dirichlet_data_reproduced(fixture, request):
    terms = request.getfixturevalue(fixture)
    spec = terms.spec
    for m in range(terms.max_order + 1):
        for eps in (0.1, 0.025):
            ap = assemble(m, eps, terms)
            for i in range(3):
                val = float(cross_section_average(ap, i, np.array([spec.ell[i]]))[0])
                assert val == pytest.approx(spec.q[i], abs=1e-12)


def test_worked_values(worked_terms):
    ap = assemble(2, 0.1, worked_terms)
    assert evaluate_point(ap, _point(1, 0.6, 0.05)) == pytest.approx(2.0, abs=1e-14)
    assert evaluate_point(ap, _point(2, 1.0)) == pytest.approx(3.0, abs=1e-14)
    assert evaluate_point(ap, _point(0, 0.6)) == pytest.approx(1.0, abs=1e-14)


def test_region_errors(worked_terms):
    ap = assemble(0, 0.1, worked_terms)
    with pytest.raises(ValueError, match="outside the junction"):
        ap.region(np.array([0.5, 0.5, 0.0]))
    with pytest.raises(ValueError, match="node terms are not available"):
        ap.node_value(np.zeros((1, 3)))
    with pytest.raises(ValueError):
        assemble(3, 0.1, worked_terms)


def test_node_point(generic_terms):
    ap = assemble(1, 0.05, generic_terms)
    direct = sum(0.05**k * t.evaluate(np.zeros((1, 3)))[0] for k, t in enumerate(generic_terms.node_terms[:2]))
    assert evaluate_point(ap, np.zeros(3)) == pytest.approx(direct, abs=1e-14)


def test_continuity_across_band(generic_terms):
    ap = assemble(2, 0.05, generic_terms)
    lo, hi = ap.cutoffs.node_band
    for i in range(3):
        for x in (lo, hi):
            a = evaluate_point(ap, _point(i, x - 1e-9, 0.005))
            b = evaluate_point(ap, _point(i, x + 1e-9, 0.005))
            assert abs(a - b) <= 1e-6


def test_average_paths_agree(generic_terms):
    """Away from the node band the average is sum eps^k w_k; the raw-field quadrature agrees."""
    ap = assemble(2, 0.05, generic_terms)
    spec = ap.spec
    xs = np.array([0.45, 0.55, 0.65])
    for i in range(2):
        fast = cross_section_average(ap, i, xs)
        slow = cross_section_average(lambda P: np.array([evaluate_point(ap, p) for p in P]), i, xs, eps=0.05, spec=spec)
        w = sum(0.05**k * ap.regs[k].w[i](xs) for k in range(3))
        assert np.allclose(fast, w, atol=1e-10)
        assert np.allclose(slow, fast, atol=1e-5)


def test_linear_in_data():
    data = config_dict("generic")
    t1 = solve_terms(problem_from(data), 1, node=False, rings=8, slices=24)
    data["geometry"]["q"] = [2 * q for q in data["geometry"]["q"]]
    for p in data["sources"]["phi"]:
        p["bump"]["amplitude"] *= 2.0
    t2 = solve_terms(problem_from(data), 1, node=False, rings=8, slices=24)
    a1, a2 = assemble(1, 0.05, t1), assemble(1, 0.05, t2)
    for i in range(3):
        for x in (0.5, 0.62, 0.97):
            p = _point(i, x, 0.008)
            assert evaluate_point(a2, p) == pytest.approx(2 * evaluate_point(a1, p), abs=1e-11)
