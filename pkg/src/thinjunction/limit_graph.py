"""Limit problem on the graph: first-order transport on each edge plus a Kirchhoff vertex condition."""

from dataclasses import dataclass

import numpy as np

from .edge_function import FormulaFunction, jet_mul, jet_reciprocal


@dataclass(frozen=True)
class LimitSolution:
    w0: tuple
    C: tuple


def _check_nonvanishing(velocity):
    for j, v in enumerate(velocity.axial):
        vals = v.samples
        if np.any(vals == 0.0) or np.any(np.sign(vals) != np.sign(vals[0])):
            raise ZeroDivisionError(f"axial velocity vanishes on edge {j + 1}")


def _w0_function(h, v, phi, C):
    def jet(x, n):
        dv = v.derivs(x, n)
        dphi = phi.derivs(x, max(n - 1, 0))
        g = [phi.integral(x) + C] + dphi[:n]
        return [(-2.0 / h) * d for d in jet_mul(g, jet_reciprocal(dv))]

    return FormulaFunction(v.length, jet)


def solve_limit(spec, velocity, source):
    """Explicit solution w0_j = -(2 / (h_j v_j)) (int_0^x phi_j + C_j)."""
    _check_nonvanishing(velocity)
    C = []
    for j in range(2):
        lj = spec.ell[j]
        vl = float(velocity.axial[j](lj))
        C.append(-spec.h[j] * vl * spec.q[j] / 2.0 - float(source.phi[j].integral(lj)))
    C.append(-(spec.h[0] * C[0] + spec.h[1] * C[1]) / spec.h[2])
    w0 = tuple(_w0_function(spec.h[j], velocity.axial[j], source.phi[j], C[j]) for j in range(3))
    return LimitSolution(w0, tuple(C))


def kirchhoff_residual(values, spec, velocity):
    """sum_j v_j h_j^2 w_j with the node constants v_j."""
    return float(sum(v * h * h * w for v, h, w in zip(velocity.node_constants, spec.h, values)))


def limit_table(limit, spec, density=64):
    """Rows (edge, x, w0) on a uniform grid of every edge."""
    rows = []
    for j in range(3):
        x = np.linspace(0.0, spec.ell[j], int(round(density * spec.ell[j])) + 1)
        for xi, wi in zip(x, limit.w0[j](x)):
            rows.append((j + 1, float(xi), float(wi)))
    return rows
