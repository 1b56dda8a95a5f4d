import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thinjunction.cross_section_solver import (
    DiskMesh,
    NeumannSolver,
    isotropic_oracle,
    solve_neumann_mean_zero,
)


def _oracle_error(rings, h=1.0, a=1.0, phi=1.0):
    mesh = DiskMesh(h, rings)
    sol = solve_neumann_mean_zero(mesh, a * np.eye(2), 2.0 / h * phi, phi)
    exact = isotropic_oracle(h, a, phi)(np.hypot(*mesh.vertices.T))
    return mesh, sol, mesh.l2_norm(sol.values - exact) / mesh.l2_norm(exact)


def test_mesh_geometry():
    mesh = DiskMesh(0.7, 12)
    assert mesh.n_triangles == 6 * 12**2
    r = np.hypot(*mesh.vertices[mesh.boundary_nodes].T)
    assert np.allclose(r, 0.7, atol=1e-12, rtol=0)
    assert mesh.weights.sum() == pytest.approx(np.pi * 0.49, rel=1e-14)
    assert mesh.boundary_weights.sum() == pytest.approx(2 * np.pi * 0.7, rel=1e-14)
    assert np.all(mesh.tri_area > 0)


def test_zero_data_zero_solution():
    mesh = DiskMesh(1.0, 8)
    sol = solve_neumann_mean_zero(mesh, np.eye(2), 0.0, 0.0)
    assert np.array_equal(sol.values, np.zeros(mesh.n_nodes))


def test_isotropic_oracle_at_1e4_triangles():
    mesh, sol, err = _oracle_error(41)
    assert 9000 <= mesh.n_triangles <= 11000
    assert err <= 1e-3
    assert abs(sol.mean) <= 1e-10
    assert sol.residual <= 1e-10


def test_second_order_convergence():
    errs = [_oracle_error(n)[2] for n in (10, 20, 40)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 1.8), orders


def test_oracle_examples():
    assert np.all(isotropic_oracle(1.0, 1.0, 0.0)(np.linspace(0, 1, 5)) == 0.0)
    assert isotropic_oracle(1.0, 1.0, 0.5)(0.0) == pytest.approx(0.125)
    assert isotropic_oracle(1.0, 1.0, 0.5)(1.0) == pytest.approx(-0.125)
    # -a u'(h) = phi with u' = -(phi/(a h)) r
    h, a, phi = 2.0, 1.0, 1.0
    du = -(phi / (a * h)) * h
    assert -a * du == pytest.approx(1.0)
    r = np.linspace(0.0, 1.0, 20001)
    assert np.trapezoid(isotropic_oracle(1.0, 1.0, 1.0)(r) * 2 * np.pi * r, r) == pytest.approx(0.0, abs=1e-7)
    with pytest.raises(ValueError):
        isotropic_oracle(1.0, 0.0, 1.0)


def test_compatibility_violation():
    mesh = DiskMesh(1.0, 6)
    with pytest.raises(ValueError, match="Neumann compatibility violated"):
        solve_neumann_mean_zero(mesh, np.eye(2), 1.0, 0.0)


def test_rotation_equivariance():
    mesh = DiskMesh(1.0, 20)
    D = np.array([[1.5, 0.4], [0.4, 0.8]])
    th = 0.7
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    f = lambda p: p[:, 0] + 0.5 * p[:, 0] * p[:, 1]  # noqa: E731  mean zero on the disk
    base = solve_neumann_mean_zero(mesh, D, f, 0.0).values
    rot = solve_neumann_mean_zero(mesh, R @ D @ R.T, lambda p: f(p @ R), 0.0).values
    # u_rot(p) = u(R^T p)
    back = mesh.interpolate(base, mesh.vertices @ R)
    assert np.max(np.abs(rot - back)) <= 2e-2 * np.max(np.abs(base))


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(alpha, beta):
    mesh = DiskMesh(0.5, 6)
    solver = NeumannSolver(mesh, np.eye(2))
    s1 = lambda p: p[:, 0]  # noqa: E731
    u1 = solve_neumann_mean_zero(mesh, None, s1, 0.0, solver=solver).values
    u2 = solve_neumann_mean_zero(mesh, None, 4.0, 1.0, solver=solver).values
    u = solve_neumann_mean_zero(mesh, None, lambda p: alpha * s1(p) + 4.0 * beta, beta, solver=solver).values
    assert np.allclose(u, alpha * u1 + beta * u2, atol=1e-12)


def test_galerkin_orthogonality_to_constants():
    mesh = DiskMesh(1.0, 10)
    solver = NeumannSolver(mesh, np.diag([2.0, 0.5]))
    sol = solve_neumann_mean_zero(mesh, None, lambda p: 2.0 + p[:, 0], lambda p: np.ones(len(p)), solver=solver)
    assert abs((solver.K @ sol.values).sum()) <= 1e-12
