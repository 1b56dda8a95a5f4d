import numpy as np
import pytest
from numpy.polynomial import Polynomial

from conftest import config_dict, problem_from
from thinjunction.limit_graph import kirchhoff_residual, limit_table, solve_limit


def test_worked_limit(worked):
    spec, vel, _, src = worked
    lim = solve_limit(spec, vel, src)
    assert lim.C == pytest.approx((1.0, -1.0, 0.0), abs=1e-15)
    x = np.linspace(0.0, 1.0, 9)
    for w, val in zip(lim.w0, (1.0, 2.0, 0.0)):
        assert np.allclose(w(x), val, atol=1e-15)


def _poly_phi_config(total=0.1, support=(0.3, 0.7)):
    """phi_1 = c (x - a)^2 (b - x)^2 with integral `total`; returns config, density polynomial in (x - a)."""
    a, b = support
    c = 30.0 * total / (b - a) ** 5
    L = b - a
    # (t)^2 (L - t)^2 with t = x - a
    p = c * Polynomial([0.0, 0.0, L * L, -2.0 * L, 1.0])
    data = config_dict("worked")
    data["sources"]["phi"][0] = {"polynomial": {"coefficients": p.coef.tolist(), "support": [a, b]}}
    return data, p, a, b


def test_polynomial_density_matches_hand_integral():
    data, p, a, b = _poly_phi_config()
    spec, vel, _, src = problem_from(data)
    lim = solve_limit(spec, vel, src)
    P = p.integ()  # exact antiderivative, zero at t = 0
    total = P(b - a)
    assert total == pytest.approx(0.1, abs=1e-14)
    h, v, q = spec.h[0], -2.0, spec.q[0]
    C1 = -h * v * q / 2.0 - total
    assert lim.C[0] == pytest.approx(C1, abs=1e-12)
    assert lim.C[0] == pytest.approx(0.9, abs=1e-12)
    x = np.linspace(0.0, 1.0, 401)
    F = np.where(x < a, 0.0, np.where(x > b, total, P(np.clip(x, a, b) - a)))
    exact = -(2.0 / (h * v)) * (F + C1)
    assert np.max(np.abs(lim.w0[0](x) - exact)) <= 1e-12
    assert float(lim.w0[0](0.0)) == pytest.approx(0.9, abs=1e-12)
    assert float(lim.w0[0](1.0)) == pytest.approx(1.0, abs=1e-12)


def test_limit_ode_pointwise(generic):
    spec, vel, _, src = generic
    lim = solve_limit(spec, vel, src)
    x = np.linspace(0.05, 0.95, 181)
    for j in range(3):
        v = vel.axial[j].derivs(x, 1)
        w = lim.w0[j].derivs(x, 1)
        lhs = -spec.h[j] ** 2 * (v[1] * w[0] + v[0] * w[1])
        assert np.allclose(lhs, 2.0 * spec.h[j] * src.phi[j](x), atol=1e-9)


@pytest.mark.parametrize("name", ["worked", "worked_thin", "generic"])
def test_dirichlet_and_kirchhoff(name):
    spec, vel, _, src = problem_from(config_dict(name))
    lim = solve_limit(spec, vel, src)
    for j in range(2):
        assert float(lim.w0[j](spec.ell[j])) - spec.q[j] == pytest.approx(0.0, abs=1e-12)
    assert abs(kirchhoff_residual([float(w(0.0)) for w in lim.w0], spec, vel)) <= 1e-12
    assert sum(h * c for h, c in zip(spec.h, lim.C)) == pytest.approx(0.0, abs=1e-14)


def test_kirchhoff_examples(worked):
    spec, vel, _, _ = worked
    for w in ((1.0, 2.0, 0.0), (1.0, 1.0, 1.0), (0.0, 0.0, 0.0)):
        assert kirchhoff_residual(w, spec, vel) == 0.0
    assert kirchhoff_residual((1.0, 0.0, 0.0), spec, vel) == -2.0


def test_vanishing_velocity_rejected():
    data = config_dict("worked")
    data["velocity"]["axial"][1] = {"polynomial": {"coefficients": [-0.5, 1.0], "support": [0.0, 1.0]}}
    data["velocity"]["node_constants"] = [-2.0, -0.5, 2.5]
    data["velocity"]["axial"][2] = 2.5
    data["velocity"]["constant_near_origin"][1] = [0.0, 0.0]
    spec, vel, _, src = problem_from(data)
    with pytest.raises(ZeroDivisionError, match="edge 2"):
        solve_limit(spec, vel, src)


def test_limit_table(worked):
    spec, vel, _, src = worked
    rows = limit_table(solve_limit(spec, vel, src), spec, density=4)
    assert len(rows) == 15 and rows[0] == (1, 0.0, 1.0) and rows[-1] == (3, 1.0, 0.0)
