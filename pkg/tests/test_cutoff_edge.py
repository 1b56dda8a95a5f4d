import numpy as np
import pytest
from scipy.integrate import trapezoid
from hypothesis import given, settings
from hypothesis import strategies as st

from thinjunction.cutoff import CutoffFamily, node_cutoff, smooth_step
from thinjunction.edge_function import EdgeFunction, jet_mul, jet_reciprocal

unit = st.floats(0.02, 0.98)


@given(unit)
def test_smooth_step_range_and_symmetry(t):
    s = float(smooth_step(np.array([t]))[0])
    assert 0.0 <= s <= 1.0
    assert s + float(smooth_step(np.array([1.0 - t]))[0]) == pytest.approx(1.0, abs=1e-14)


@given(unit)
def test_smooth_step_derivatives_match_differences(t):
    h = 1e-5
    x = np.array([t - h, t, t + h])
    s0, s1, s2 = (smooth_step(x, nu) for nu in range(3))
    assert s1[1] == pytest.approx((s0[2] - s0[0]) / (2 * h), rel=1e-6, abs=1e-8)
    assert s2[1] == pytest.approx((s1[2] - s1[0]) / (2 * h), rel=1e-5, abs=1e-6)


def test_smooth_step_flat_outside():
    x = np.array([-1.0, 0.0, 1.0, 2.0])
    assert np.array_equal(smooth_step(x), [0.0, 0.0, 1.0, 1.0])
    for nu in (1, 2):
        assert np.array_equal(smooth_step(x, nu), np.zeros(4))
    with pytest.raises(ValueError):
        smooth_step(x, 3)


def test_first_derivative_integrates_to_one():
    x = np.linspace(0.0, 1.0, 20001)
    assert trapezoid(smooth_step(x, 1), x) == pytest.approx(1.0, abs=1e-10)
    assert trapezoid(smooth_step(x, 2), x) == pytest.approx(0.0, abs=1e-10)


def test_node_cutoff_band():
    ell0 = 0.3
    assert node_cutoff(np.array([1.3]), ell0)[0] == 0.0
    assert node_cutoff(np.array([2.3]), ell0)[0] == 1.0


def test_cutoff_family_bands():
    c = CutoffFamily(0.1, 0.1, 0.3, (1.0, 1.0, 1.0))
    lo, hi = c.node_band
    assert (lo, hi) == pytest.approx((0.13, 0.23))
    assert c.edge(np.array([lo]))[0] == 0.0 and c.edge(np.array([hi]))[0] == 1.0
    blo, bhi = c.base_band
    assert (blo, bhi) == pytest.approx((0.8, 0.9))
    assert c.base(np.array([blo]))[0] == 0.0 and c.base(np.array([bhi]))[0] == 1.0
    with pytest.raises(ValueError, match="cut-off bands overlap"):
        CutoffFamily(0.1, 0.3, 0.3, (1.0, 1.0, 1.0))


def test_jets():
    f = [2.0, 3.0, 5.0]
    g = [7.0, 11.0, 13.0]
    # (fg)'' = f''g + 2f'g' + fg''
    assert jet_mul(f, g) == [14.0, 2 * 11 + 3 * 7, 5 * 7 + 2 * 3 * 11 + 2 * 13]
    r = jet_reciprocal([2.0, 1.0, 0.0])  # v = 2 + x at x = 0
    assert r == pytest.approx([0.5, -0.25, 0.25])


def test_edge_function_forms():
    c = EdgeFunction.constant(1.0, 3.0)
    assert c(np.array([0.0, 0.5, 1.0])).tolist() == [3.0, 3.0, 3.0]
    assert c(np.array([0.5]), 2)[0] == 0.0
    z = EdgeFunction.zero(1.0)
    assert z.is_zero and z.integral(np.array([1.0]))[0] == 0.0
    q = EdgeFunction.from_callable(lambda x: x**2, 1.0)
    x = np.linspace(0.0, 1.0, 7)
    assert np.allclose(q(x), x**2, atol=1e-12)
    assert np.allclose(q(x, 1), 2 * x, atol=1e-9)
    assert np.allclose(q.integral(x), x**3 / 3, atol=1e-12)
    assert np.allclose(q.scaled(2.0)(x), 2 * x**2, atol=1e-12)


def test_compact_function_vanishes_outside_support():
    f = EdgeFunction.from_callable(lambda x: np.sin(np.pi * (x - 0.2) / 0.4) ** 4, 1.0, (0.2, 0.6), compact=True)
    assert f.support == (0.2, 0.6)
    out = f(np.array([0.0, 0.1, 0.7, 1.0]))
    assert np.array_equal(out, np.zeros(4))
    with pytest.raises(ValueError):
        EdgeFunction(1.0, left=1.0, compact=True)


@settings(max_examples=25, deadline=None)
@given(st.floats(-2.0, 2.0), st.floats(-2.0, 2.0))
def test_edge_function_linearity(a, b):
    f = EdgeFunction.from_callable(np.sin, 1.0)
    g = EdgeFunction.from_callable(np.cos, 1.0)
    h = EdgeFunction.from_callable(lambda x: a * np.sin(x) + b * np.cos(x), 1.0)
    x = np.linspace(0.0, 1.0, 11)
    assert np.allclose(h(x), a * f(x) + b * g(x), atol=1e-12)
