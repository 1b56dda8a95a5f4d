"""P1 finite elements on a disk for anisotropic Neumann problems with a mean-zero constraint."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.spatial import cKDTree

COMPAT_TOL = 1e-10

# edge-midpoint rule, exact for quadratics on a triangle
_QP_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
_QP_W = np.array([1.0, 1.0, 1.0]) / 3.0


class DiskMesh:
    """Concentric-ring triangulation: ring j carries 6j vertices, 6 n^2 triangles in all.

    Mass matrices are rescaled so that constants integrate to the exact area
    pi h^2 and the exact perimeter 2 pi h.
    """

    def __init__(self, radius, rings):
        self.radius = float(radius)
        self.rings = int(rings)
        self.vertices, self.triangles = _ring_mesh(self.radius, self.rings)
        n = self.rings
        first = 1 + 3 * (n - 1) * n
        self.boundary_nodes = np.arange(first, first + 6 * n)
        nb = self.boundary_nodes
        self.boundary_edges = np.stack([nb, np.roll(nb, -1)], axis=1)
        self._geometry()

    @property
    def n_nodes(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def _geometry(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        self.tri_area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        if np.any(self.tri_area <= 0):
            raise RuntimeError("mesh has inverted triangles")
        # gradients of the three barycentric hat functions, per triangle
        rot = np.stack([p[:, [1, 2, 0]] - p[:, [2, 0, 1]]], axis=0)[0]
        grads = np.stack([rot[..., 1], -rot[..., 0]], axis=-1) / (2.0 * self.tri_area[:, None, None])
        self.grads = grads  # (n_tri, 3, 2)
        self.area_scale = np.pi * self.radius**2 / self.tri_area.sum()
        e = self.vertices[self.boundary_edges]
        self.edge_len = np.linalg.norm(e[:, 1] - e[:, 0], axis=1)
        self.perimeter_scale = 2.0 * np.pi * self.radius / self.edge_len.sum()
        self.qp = np.einsum("qk,tkd->tqd", _QP_BARY, p)  # (n_tri, 3, 2)
        self.mass = self._mass()
        self.boundary_mass = self._boundary_mass()
        self.weights = np.asarray(self.mass.sum(axis=0)).ravel()
        self.boundary_weights = np.asarray(self.boundary_mass.sum(axis=0)).ravel()

    def _mass(self):
        local = (np.ones((3, 3)) + np.eye(3)) / 12.0
        vals = (self.tri_area[:, None, None] * local[None]) * self.area_scale
        return _assemble(self.triangles, vals, self.n_nodes)

    def _boundary_mass(self):
        local = (np.ones((2, 2)) + np.eye(2)) / 6.0
        vals = self.edge_len[:, None, None] * local[None] * self.perimeter_scale
        return _assemble(self.boundary_edges, vals, self.n_nodes)

    def stiffness(self, matrix):
        """Stiffness for -div(D grad u); D evaluated at triangle centroids."""
        cent = self.vertices[self.triangles].mean(axis=1)
        D = matrix(cent) if callable(matrix) else np.broadcast_to(np.asarray(matrix, float), (len(cent), 2, 2))
        vals = np.einsum("tad,tde,tbe->tab", self.grads, D, self.grads) * (self.tri_area * self.area_scale)[:, None, None]
        return _assemble(self.triangles, vals, self.n_nodes)

    def drift_load(self, flux_qp):
        """Load b_a = int F . grad(psi_a) for a vector field F given at quadrature points (n_tri, 3, 2)."""
        fbar = np.einsum("q,tqd->td", _QP_W, flux_qp)
        vals = np.einsum("td,tad->ta", fbar, self.grads) * (self.tri_area * self.area_scale)[:, None]
        return np.bincount(self.triangles.ravel(), vals.ravel(), minlength=self.n_nodes)

    def at_qp(self, nodal):
        """P1 interpolation of nodal values (..., n_nodes) to quadrature points (..., n_tri, 3)."""
        return np.einsum("qk,...tk->...tq", _QP_BARY, nodal[..., self.triangles])

    def integrate(self, nodal):
        return nodal @ self.weights

    def l2_norm(self, nodal):
        return float(np.sqrt(max(nodal @ (self.mass @ nodal), 0.0)))

    def locator(self):
        if not hasattr(self, "_tree"):
            self._tree = cKDTree(self.vertices[self.triangles].mean(axis=1))
        return self._tree

    def interpolate(self, nodal, points):
        """P1 evaluation at arbitrary points in the disk (points outside are projected onto the rim)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.hypot(points[:, 0], points[:, 1])
        scale = np.where(r > self.radius, self.radius / np.maximum(r, 1e-300) * (1 - 1e-12), 1.0)
        pts = points * scale[:, None]
        _, cand = self.locator().query(pts, k=min(12, self.n_triangles))
        out = np.empty(pts.shape[:1] + np.shape(nodal)[:-1])
        nodal = np.asarray(nodal)
        for i, p in enumerate(pts):
            for t in np.atleast_1d(cand[i]):
                bary = self._bary(t, p)
                if bary.min() >= -1e-10:
                    break
            out[i] = nodal[..., self.triangles[t]] @ bary
        return out

    def _bary(self, t, p):
        a, b, c = self.vertices[self.triangles[t]]
        m = np.array([[b[0] - a[0], c[0] - a[0]], [b[1] - a[1], c[1] - a[1]]])
        l1, l2 = np.linalg.solve(m, p - a)
        return np.array([1.0 - l1 - l2, l1, l2])


def _assemble(cells, vals, n):
    k = cells.shape[1]
    rows = np.repeat(cells, k, axis=1).ravel()
    cols = np.tile(cells, (1, k)).ravel()
    return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(n, n))


def _ring_mesh(radius, n):
    verts = [np.zeros(2)]
    rings = [np.array([0])]
    count = 1
    for j in range(1, n + 1):
        m = 6 * j
        th = 2.0 * np.pi * np.arange(m) / m
        r = radius * j / n
        pts = np.stack([r * np.cos(th), r * np.sin(th)], axis=1)
        if j == n:
            pts = radius * pts / np.linalg.norm(pts, axis=1)[:, None]
        verts.append(pts)
        rings.append(np.arange(count, count + m))
        count += m
    verts = np.concatenate([v.reshape(-1, 2) for v in verts])
    tris = []
    for j in range(1, n + 1):
        inner, outer = rings[j - 1], rings[j]
        if j == 1:
            for k in range(6):
                tris.append((0, outer[k], outer[(k + 1) % 6]))
            continue
        mi, mo = len(inner), len(outer)
        a = b = 0
        # zipper by angle; ties broken towards the outer ring
        while a < mi or b < mo:
            ang_i = 2 * np.pi * (a + 1) / mi
            ang_o = 2 * np.pi * (b + 1) / mo
            if b < mo and (a >= mi or ang_o <= ang_i + 1e-12):
                tris.append((inner[a % mi], outer[b], outer[(b + 1) % mo]))
                b += 1
            else:
                tris.append((inner[a % mi], outer[b % mo], inner[(a + 1) % mi]))
                a += 1
    tris = np.array(tris)
    p = verts[tris]
    area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = area < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return verts, tris


@dataclass
class NeumannSolution:
    values: np.ndarray
    residual: float
    mean: float
    compatibility: float


class NeumannSolver:
    """Factorized saddle system [[K, m], [m^T, 0]] for one mesh and one matrix field."""

    def __init__(self, mesh, matrix):
        self.mesh = mesh
        self.K = mesh.stiffness(matrix)
        m = mesh.weights
        n = mesh.n_nodes
        A = sp.bmat([[self.K, sp.csr_matrix(m[:, None])], [sp.csr_matrix(m[None, :]), None]], format="csc")
        self.A = A
        self.lu = splu(A)

    def solve(self, load, tol=COMPAT_TOL, scale=None):
        """Solve K u = load with int u = 0; the multiplier absorbs nothing beyond tolerance."""
        load = np.asarray(load, dtype=float)
        total = float(load.sum())
        ref = scale if scale is not None else max(float(np.abs(load).sum()), 1.0)
        if abs(total) > tol * ref:
            raise ValueError(f"Neumann compatibility violated: net load {total:.3e}")
        rhs = np.concatenate([load, [0.0]])
        sol = self.lu.solve(rhs)
        u = sol[:-1]
        res = float(np.linalg.norm(self.A @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300))
        mean = float(self.mesh.integrate(u) / (np.pi * self.mesh.radius**2))
        return NeumannSolution(u, res, mean, total)


def _nodal(field, mesh):
    if callable(field):
        return np.asarray(field(mesh.vertices), dtype=float)
    arr = np.asarray(field, dtype=float)
    return np.broadcast_to(arr, (mesh.n_nodes,)).copy() if arr.ndim == 0 else arr


def solve_neumann_mean_zero(mesh, matrix, volume_source, boundary_flux, drift=None, solver=None):
    """Mean-zero P1 solution of -div(D grad u - F) = S in the disk, -(D grad u - F).nu = g on the rim.

    volume_source and boundary_flux are constants, callables of points or nodal
    arrays; drift F is an optional vector field at quadrature points (n_tri, 3, 2).
    """
    solver = solver or NeumannSolver(mesh, matrix)
    S = _nodal(volume_source, mesh)
    g = _nodal(boundary_flux, mesh)
    load = mesh.mass @ S - mesh.boundary_mass @ g
    if drift is not None:
        load = load - mesh.drift_load(drift)
    scale = float(np.abs(mesh.weights @ np.abs(S)) + np.abs(mesh.boundary_weights @ np.abs(g)))
    return solver.solve(load, scale=max(scale, 1e-300) if scale > 0 else 1.0)


def isotropic_oracle(h, a, phi_value):
    """Exact mean-zero radial solution r -> (phi / (a h)) (h^2/4 - r^2/2) for D = a I."""
    if a <= 0:
        raise ValueError("a must be positive")
    c = phi_value / (a * h)
    return lambda r: c * (h * h / 4.0 - np.asarray(r, dtype=float) ** 2 / 2.0)
