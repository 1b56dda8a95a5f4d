"""Composite approximation U^(m): regular, node and layer parts glued by cut-offs."""

import time
from dataclasses import dataclass, field

import numpy as np

from .boundary_layer import build_layer_terms, eval_layer
from .cross_section_solver import DiskMesh
from .cutoff import CutoffFamily
from .limit_graph import solve_limit
from .node_solver import (
    DEFAULT_RESOLUTION,
    NodeDomain,
    NodeSolver,
    solve_node_potential,
    solve_node_term,
)
from .regular_expansion import DEFAULT_RINGS, DEFAULT_SLICES, build_correctors, regular_terms

_TRANSVERSE = ((1, 2), (0, 2), (0, 1))
AVG_RINGS = 12


VERIFY_TRUNCATION = 16.0


@dataclass
class SolvedTerms:
    """Every eps-independent ingredient of the expansion up to some order."""

    spec: object
    velocity: object
    diffusion: object
    source: object
    limit: object
    regs: list  # RegularEdgeTerm, k = 0..m
    correctors: list  # CrossSectionCorrector, k = 0..m
    layers: list  # BoundaryLayerTerm, k = 0..m
    node_terms: list = None  # NodeTerm, k = 0..m
    timings: dict = field(default_factory=dict)

    @property
    def max_order(self):
        return len(self.regs) - 1


def solve_terms(problem, order, node=True, resolution=DEFAULT_RESOLUTION, trunc=VERIFY_TRUNCATION,
                rings=DEFAULT_RINGS, slices=DEFAULT_SLICES, strict_node=False):
    """Limit, regular terms, correctors, layers and (optionally) node terms up to `order`.

    Node terms of order k are solved after w_k, whose node values feed the solvability check.
    strict_node=False keeps node terms whose outflow outlets do not stabilize; their cap
    mismatch stays recorded on the term.
    """
    spec, velocity, diffusion, source = problem
    t = {}
    t0 = time.perf_counter()
    limit = solve_limit(spec, velocity, source)
    regs = regular_terms(limit, spec, velocity, diffusion, order)
    t["regular"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    corr = build_correctors(regs, spec, velocity, diffusion, source, order, rings=rings, slices=slices)
    t["correctors"] = time.perf_counter() - t0
    layers = build_layer_terms(limit, regs, spec, velocity, diffusion)
    nodes = None
    if node:
        t0 = time.perf_counter()
        dom = NodeDomain(spec.ell0, spec.h, resolution, trunc)
        pot = solve_node_potential(dom, velocity.node_constants)
        solver = NodeSolver(dom, diffusion, pot)
        nodes = [
            solve_node_term(k, regs[k].values_at_node(), dom, diffusion, pot, spec=spec, solver=solver, strict=strict_node)
            for k in range(order + 1)
        ]
        t["node"] = time.perf_counter() - t0
    return SolvedTerms(spec, velocity, diffusion, source, limit, regs, corr, layers, nodes, t)


@dataclass
class CompositeApproximation:
    order: int
    eps: float
    terms: SolvedTerms
    cutoffs: CutoffFamily

    spec = property(lambda self: self.terms.spec)
    velocity = property(lambda self: self.terms.velocity)
    diffusion = property(lambda self: self.terms.diffusion)
    source = property(lambda self: self.terms.source)
    regs = property(lambda self: self.terms.regs)
    correctors = property(lambda self: self.terms.correctors)
    layers = property(lambda self: self.terms.layers)
    node_terms = property(lambda self: self.terms.node_terms)

    def region(self, x):
        """0 for the node, i + 1 for cylinder i; raises outside the junction."""
        x = np.asarray(x, dtype=float)
        e, s = self.eps, self.spec
        tol = 1e-12
        if np.all(np.abs(x) <= e * s.ell0 + tol):
            return 0
        for i in range(3):
            rest = x[list(_TRANSVERSE[i])]
            if e * s.ell0 - tol <= x[i] <= s.ell[i] + tol and np.hypot(*rest) <= e * s.h[i] * (1 + 1e-12):
                return i + 1
        raise ValueError(f"point {x.tolist()} lies outside the junction at eps = {e}")

    def node_value(self, xi):
        if self.node_terms is None:
            raise ValueError("node terms are not available for this configuration")
        xi = np.atleast_2d(xi)
        return sum(self.eps**k * t.evaluate(xi) for k, t in enumerate(self.node_terms[: self.order + 1]))

    def regular_value(self, i, x, xi_bar):
        """sum_k eps^k (w_k + u_k) at axial x and stretched transverse points xi_bar (P, 2)."""
        val = np.zeros(len(xi_bar))
        for k in range(self.order + 1):
            w = float(self.regs[k].w[i](x))
            fam = self.correctors[k].families[i]
            u = 0.0
            if not fam.is_zero:
                u = fam.mesh.interpolate(fam.field(x, 0)[0], xi_bar)
            val = val + self.eps**k * (w + u)
        return val

    def layer_value(self, x):
        s = (self.spec.ell[2] - np.asarray(x, dtype=float)) / self.eps
        s = np.maximum(s, 0.0)
        return sum(self.eps**k * eval_layer(t, s) for k, t in enumerate(self.layers[: self.order + 1]))


def assemble(order, eps, terms, delta=None):
    """U^(m) for one eps from solved terms; checks that the cut-off bands fit on every edge."""
    spec = terms.spec
    cut = CutoffFamily(eps, spec.delta if delta is None else delta, spec.ell0, spec.ell)
    for name, seq in (("regular", terms.regs), ("corrector", terms.correctors), ("layer", terms.layers)):
        if len(seq) < order + 1:
            raise ValueError(f"{name} terms up to order {order} are required")
    if terms.node_terms is not None and len(terms.node_terms) < order + 1:
        raise ValueError(f"node terms up to order {order} are required")
    return CompositeApproximation(order, float(eps), terms, cut)


def evaluate_point(approx, x):
    """U^(m)(x) for a physical point x of the junction."""
    x = np.asarray(x, dtype=float)
    reg = approx.region(x)
    e = approx.eps
    if reg == 0:
        return float(approx.node_value(x / e)[0])
    i = reg - 1
    xi_bar = (x[list(_TRANSVERSE[i])] / e)[None, :]
    chi = float(approx.cutoffs.edge(x[i]))
    val = 0.0
    if chi > 0.0:
        val += chi * float(approx.regular_value(i, x[i], xi_bar)[0])
    if chi < 1.0:
        val += (1.0 - chi) * float(approx.node_value(x / e)[0])
    if i == 2:
        chi3 = float(approx.cutoffs.base(x[i]))
        if chi3 > 0.0:
            val += chi3 * float(approx.layer_value(x[i]))
    return val


def _avg_mesh(approx, i):
    cache = approx.__dict__.setdefault("_avg_meshes", {})
    if i not in cache:
        cache[i] = DiskMesh(approx.spec.h[i], AVG_RINGS)
    return cache[i]


def cross_section_average(approx, i, x, eps=None, spec=None):
    """(1 / (pi eps^2 h^2)) times the integral of the field over the cross-section of cylinder i at x_i = x.

    approx is a CompositeApproximation or a callable taking physical points (P, 3).
    x may be an array; returns an array of the same shape.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if callable(approx) and not isinstance(approx, CompositeApproximation):
        if eps is None or spec is None:
            raise ValueError("eps and spec are required for a raw field")
        mesh = DiskMesh(spec.h[i], AVG_RINGS)
        out = np.empty(xs.size)
        for n, xv in enumerate(xs):
            pts = np.zeros((mesh.n_nodes, 3))
            pts[:, i] = xv
            pts[:, list(_TRANSVERSE[i])] = eps * mesh.vertices
            out[n] = mesh.integrate(np.asarray(approx(pts), dtype=float)) / (np.pi * spec.h[i] ** 2)
        return out.reshape(np.shape(x))
    a = approx
    e = a.eps
    chi = a.cutoffs.edge(xs)
    reg = np.zeros(xs.size)
    for k in range(a.order + 1):
        w = a.regs[k].w[i](xs)
        fam = a.correctors[k].families[i]
        mean_u = 0.0
        if not fam.is_zero:
            mean_u = fam.field(xs, 0) @ fam.mesh.weights / (np.pi * a.spec.h[i] ** 2)
        reg = reg + e**k * (w + mean_u)
    out = chi * reg
    need_node = chi < 1.0
    if np.any(need_node):
        mesh = _avg_mesh(a, i)
        for n in np.flatnonzero(need_node):
            xi = np.zeros((mesh.n_nodes, 3))
            xi[:, i] = xs[n] / e
            xi[:, list(_TRANSVERSE[i])] = mesh.vertices
            avg = mesh.integrate(a.node_value(xi)) / (np.pi * a.spec.h[i] ** 2)
            out[n] += (1.0 - chi[n]) * avg
    if i == 2:
        out = out + a.cutoffs.base(xs) * a.layer_value(xs)
    return out.reshape(np.shape(x))
