import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thinjunction.boundary_layer import BoundaryLayerTerm, build_layer_terms, eval_layer
from thinjunction.limit_graph import solve_limit
from thinjunction.regular_expansion import regular_terms


def _layers(problem, order=2):
    spec, vel, diff, src = problem
    lim = solve_limit(spec, vel, src)
    return lim, build_layer_terms(lim, regular_terms(lim, spec, vel, diff, order), spec, vel, diff)


def test_worked_layer(worked):
    _, layers = _layers(worked)
    assert layers[0].amplitude == 3.0 and layers[0].decay_rate == 1.0
    assert float(eval_layer(layers[0], np.log(2.0))) == pytest.approx(1.5, abs=1e-15)
    assert all(t.amplitude == 0.0 for t in layers[1:])


def test_base_condition_reproduced(generic):
    spec, vel, diff, src = generic
    lim = solve_limit(spec, vel, src)
    regs = regular_terms(lim, spec, vel, diff, 3)
    layers = build_layer_terms(lim, regs, spec, vel, diff)
    for eps in (0.1, 0.03):
        total = sum(eps**k * (float(r.w[2](spec.ell[2])) + float(eval_layer(t, 0.0))) for k, (r, t) in enumerate(zip(regs, layers)))
        assert total == pytest.approx(spec.q[2], abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(0.1, 5.0), st.floats(-3, 3), st.floats(0.0, 10.0))
def test_layer_ode(v, a, amp, s):
    term = BoundaryLayerTerm(0, amp, v / a)
    res = a * eval_layer(term, s, 2) + v * eval_layer(term, s, 1)
    assert abs(res) <= 1e-12 * max(1.0, abs(amp) * (v / a) ** 2 * a)


def test_invalid_inputs():
    with pytest.raises(ValueError):
        BoundaryLayerTerm(0, 1.0, 0.0)
    with pytest.raises(ValueError):
        eval_layer(BoundaryLayerTerm(0, 1.0, 1.0), -0.5)
