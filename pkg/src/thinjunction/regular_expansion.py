"""Regular part of the expansion: the w_k recurrence on the edges and the cross-section correctors u_k."""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import make_interp_spline

from .cross_section_solver import COMPAT_TOL, DiskMesh, NeumannSolver, solve_neumann_mean_zero
from .edge_function import SPLINE_DEGREE, FormulaFunction, jet_mul, jet_reciprocal

DEFAULT_SLICES = 64
DEFAULT_RINGS = 20


@dataclass(frozen=True)
class RegularEdgeTerm:
    """w_k on the three edges together with the constants c_k (zero for k = 0)."""

    order: int
    w: tuple
    c: tuple

    def values_at_node(self):
        return tuple(float(wj(0.0)) for wj in self.w)

    def values_at_base(self, spec):
        return tuple(float(wj(lj)) for wj, lj in zip(self.w, spec.ell))


def first_term(limit):
    return RegularEdgeTerm(0, tuple(limit.w0), (0.0, 0.0, 0.0))


def _wk_function(prev, v, a, c):
    def jet(x, n):
        dp = prev.derivs(x, n + 1)
        g = [a * dp[i + 1] for i in range(n + 1)]
        g[0] = g[0] + c
        return jet_mul(g, jet_reciprocal(v.derivs(x, n)))

    return FormulaFunction(prev.length, jet)


def next_w(prev, spec, velocity, diffusion):
    """w_k = (a_jj w_{k-1}' + c_k) / v_j with c_k fixed by the Dirichlet ends and the Kirchhoff sum."""
    a = diffusion.axial_constants
    c = [-a[j] * float(prev.w[j](spec.ell[j], 1)) for j in range(2)]
    h = spec.h
    c.append(-(h[0] ** 2 * c[0] + h[1] ** 2 * c[1]) / h[2] ** 2)
    for j, vj in enumerate(velocity.axial):
        if np.any(vj.samples == 0.0):
            raise ZeroDivisionError(f"axial velocity vanishes on edge {j + 1}")
    w = tuple(_wk_function(prev.w[j], velocity.axial[j], a[j], c[j]) for j in range(3))
    return RegularEdgeTerm(prev.order + 1, w, tuple(c))


def regular_terms(limit, spec, velocity, diffusion, order):
    terms = [first_term(limit)]
    for _ in range(order):
        terms.append(next_w(terms[-1], spec, velocity, diffusion))
    return terms


# ---------------------------------------------------------------- correctors


class SliceFamily:
    """u(x, xi) on one edge: mean-zero disk solutions on axial slices, splined in x."""

    def __init__(self, mesh, xs=None, values=None, compat=0.0, means=None):
        self.mesh = mesh
        self.xs = xs
        self.values = values
        self.compat = compat
        self.means = means
        self.spline = None
        if values is not None and np.any(values != 0.0):
            self.spline = make_interp_spline(xs, values, k=SPLINE_DEGREE, axis=0)

    @property
    def is_zero(self):
        return self.spline is None

    @property
    def support(self):
        return None if self.xs is None else (float(self.xs[0]), float(self.xs[-1]))

    def field(self, x, nu=0):
        """Nodal values of d^nu u / dx^nu at the axial points x, shape (len(x), n_nodes)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.zeros((x.size, self.mesh.n_nodes))
        if self.spline is None:
            return out
        a, b = self.support
        inside = (x >= a) & (x <= b)
        if np.any(inside):
            out[inside] = self.spline(x[inside], nu)
        return out


@dataclass
class CrossSectionCorrector:
    order: int
    families: tuple

    def field(self, edge, x, nu=0):
        return self.families[edge].field(x, nu)


def corrector_x_derivative(corr, edge, x, nu):
    """Axial derivative (nu <= 2) of the corrector at slice x; zero outside its support."""
    if nu > 2:
        raise ValueError("derivative order must be at most 2")
    return corr.field(edge, x, nu)[0]


def corrector_support(edge, spec, velocity, source):
    """Hull of the axial supports of phi and the transverse velocity, or None."""
    parts = []
    phi = source.phi[edge]
    if not phi.is_zero:
        parts.append(phi.support)
    tf = velocity.transverse[edge]
    if tf is not None and not tf.profile.is_zero:
        parts.append(tf.support)
    if not parts:
        return None
    return min(p[0] for p in parts), max(p[1] for p in parts)


def _drift(mesh, tf, x, q_nodal):
    """Flux q V at the quadrature points of one slice."""
    if tf is None or tf.profile.is_zero:
        return None
    V = tf(np.full(mesh.qp.shape[:2], x), mesh.qp)
    return mesh.at_qp(q_nodal)[..., None] * V


def corrector(order, x, edge, w, prev, prev2, velocity, diffusion, source, mesh, solver=None):
    """Solve for u_order at the slice x.

    order 1 uses the lateral source; order k >= 2 uses u_{k-1} (prev) and u_{k-2} (prev2)
    through S = a u_{k-2}'' - (v u_{k-1})' and the drift (w_{k-1} + u_{k-1}) V.
    """
    a = diffusion.axial_constants[edge]
    h = mesh.radius
    tf = velocity.transverse[edge]
    n = mesh.n_nodes
    if order == 1:
        ph = float(source.phi[edge](x))
        S = np.full(n, 2.0 / h * ph)
        g = ph
        q = np.full(n, float(w(x)))
    else:
        v = velocity.axial[edge].derivs(x, 1)
        u = prev.field(x, 0)[0]
        du = prev.field(x, 1)[0]
        S = a * prev2.field(x, 2)[0] - (float(v[1]) * u + float(v[0]) * du)
        g = 0.0
        q = float(w(x)) + u
    return solve_neumann_mean_zero(
        mesh, diffusion.cross_matrices[edge], S, g, drift=_drift(mesh, tf, x, q), solver=solver
    )


def build_correctors(terms, spec, velocity, diffusion, source, order, rings=DEFAULT_RINGS, slices=DEFAULT_SLICES):
    """Correctors u_0 = 0, u_1, ..., u_order on all edges."""
    meshes = [DiskMesh(spec.h[j], rings) for j in range(3)]
    solvers = [NeumannSolver(meshes[j], diffusion.cross_matrices[j]) for j in range(3)]
    zero = CrossSectionCorrector(0, tuple(SliceFamily(m) for m in meshes))
    out = [zero]
    for k in range(1, order + 1):
        fams = []
        for j in range(3):
            hull = corrector_support(j, spec, velocity, source)
            if hull is None:
                fams.append(SliceFamily(meshes[j]))
                continue
            xs = np.linspace(hull[0], hull[1], slices)
            prev = out[k - 1].families[j]
            prev2 = out[k - 2].families[j] if k >= 2 else None
            vals, compat, means = [], 0.0, []
            for x in xs:
                sol = corrector(k, x, j, terms[k - 1].w[j], prev, prev2, velocity, diffusion, source, meshes[j], solvers[j])
                vals.append(sol.values)
                compat = max(compat, abs(sol.compatibility))
                means.append(sol.mean)
            fams.append(SliceFamily(meshes[j], xs, np.array(vals), compat, np.array(means)))
        out.append(CrossSectionCorrector(k, tuple(fams)))
    return out


def check_compatibility(family, tol=COMPAT_TOL):
    return family.compat <= tol
