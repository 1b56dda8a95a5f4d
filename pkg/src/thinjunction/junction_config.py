"""Problem data for the three-cylinder junction: geometry, fields, sources, checks."""

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .cutoff import smooth_step
from .edge_function import EdgeFunction

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

TOL = 1e-12
ELLIPTICITY_GRID = 64
DEFAULT_EPS_MAX = 0.2


class ConfigError(ValueError):
    """Invalid configuration; `field` names the offending entry."""

    def __init__(self, message, field=None, assumption=None):
        super().__init__(message)
        self.field = field
        self.assumption = assumption


@dataclass(frozen=True)
class JunctionSpec:
    ell0: float
    h: tuple
    ell: tuple
    q: tuple
    delta: float
    eps_max: float = DEFAULT_EPS_MAX

    def __post_init__(self):
        if not 0.0 < self.ell0 < 1.0 / 3.0:
            raise ConfigError("ell0 must lie in (0, 1/3)", "geometry.ell0")
        if len(self.h) != 3 or min(self.h) <= 0.0:
            raise ConfigError("radii h_i must be three positive numbers", "geometry.h")
        if len(self.ell) != 3 or min(self.ell) < 1.0:
            raise ConfigError("lengths ell_i must be three numbers >= 1", "geometry.ell")
        if len(self.q) != 3 or min(self.q) <= 0.0:
            raise ConfigError("Dirichlet values q_i must be three positive numbers", "geometry.q")
        if self.delta <= 0.0:
            raise ConfigError("delta must be positive", "geometry.delta")
        for i, li in enumerate(self.ell):
            if not self.eps_max * self.ell0 + 2 * self.delta < li - 2 * self.delta:
                raise ConfigError(
                    f"delta too large for edge {i + 1}: eps*ell0 + 2 delta >= ell - 2 delta "
                    f"at eps = {self.eps_max}",
                    "geometry.delta",
                )

    @property
    def node_fits(self):
        return all(hi < self.ell0 for hi in self.h)


@dataclass(frozen=True)
class TransverseField:
    """V(x, xi) = g(x) (B xi + b) on one edge; g has compact support."""

    profile: EdgeFunction
    matrix: np.ndarray
    offset: np.ndarray

    def __call__(self, x, xi):
        xi = np.asarray(xi, dtype=float)
        g = np.asarray(self.profile(x), dtype=float)
        return g[..., None] * (xi @ self.matrix.T + self.offset)

    def divergence(self, x):
        return self.profile(x) * float(np.trace(self.matrix))

    def sup_norm(self, radius):
        theta = np.linspace(0.0, 2 * np.pi, 721)
        rim = radius * np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        # |B xi + b| is convex in xi, so its max over the disk sits on the rim
        gmax = np.max(np.abs(self.profile.samples))
        return gmax * float(np.max(np.linalg.norm(rim @ self.matrix.T + self.offset, axis=-1)))

    @property
    def support(self):
        return self.profile.support


@dataclass(frozen=True)
class VelocityField:
    axial: tuple
    node_constants: tuple
    transverse: tuple
    constant_near_origin: tuple
    constant_near_ell3: tuple
    node_potential: object = None

    def with_potential(self, potential):
        return replace(self, node_potential=potential)


class MatrixField:
    """Symmetric matrix-valued field: constant, affine in the coordinates, or gridded (2D)."""

    def __init__(self, base, slopes=None, grid=None):
        self.base = np.asarray(base, dtype=float)
        self.dim = self.base.shape[0]
        self.slopes = None if slopes is None else [np.asarray(s, dtype=float) for s in slopes]
        self.grid = grid
        self._interp = None
        if grid is not None:
            axes, values = grid
            self._interp = RegularGridInterpolator(
                axes, np.asarray(values, dtype=float), bounds_error=False, fill_value=None
            )

    @property
    def is_constant(self):
        return self.slopes is None and self.grid is None

    def __call__(self, points):
        points = np.asarray(points, dtype=float)
        shape = points.shape[:-1]
        if self._interp is not None:
            return self._interp(points.reshape(-1, self.dim)).reshape(shape + (self.dim, self.dim))
        out = np.broadcast_to(self.base, shape + (self.dim, self.dim)).copy()
        if self.slopes is not None:
            for k, s in enumerate(self.slopes):
                out += points[..., k, None, None] * s
        return out


@dataclass(frozen=True)
class DiffusionSpec:
    axial_constants: tuple
    cross_matrices: tuple
    node_matrix: MatrixField
    radii: tuple = field(default=(1.0, 1.0, 1.0))
    node_half_width: float = 1.0

    def ellipticity(self, i):
        """(kappa0, kappa1) for region i: 0 is the node, 1..3 the cylinders."""
        n = ELLIPTICITY_GRID
        if i == 0:
            s = np.linspace(-self.node_half_width, self.node_half_width, 16)
            pts = np.stack(np.meshgrid(s, s, s, indexing="ij"), axis=-1).reshape(-1, 3)
            eig = np.linalg.eigvalsh(_sym(self.node_matrix(pts)))
            return float(eig.min()), float(eig.max())
        r = self.radii[i - 1]
        s = np.linspace(-r, r, n)
        pts = np.stack(np.meshgrid(s, s, indexing="ij"), axis=-1).reshape(-1, 2)
        pts = pts[np.hypot(pts[:, 0], pts[:, 1]) <= r]
        eig = np.linalg.eigvalsh(_sym(self.cross_matrices[i - 1](pts)))
        a = self.axial_constants[i - 1]
        return float(min(eig.min(), a)), float(max(eig.max(), a))

    def symmetric(self, i):
        if i == 0:
            m = self.node_matrix(np.zeros((1, 3)))
            samples = [m] + ([] if self.node_matrix.slopes is None else [s[None] for s in self.node_matrix.slopes])
        else:
            f = self.cross_matrices[i - 1]
            r = self.radii[i - 1]
            pts = np.array([[0.0, 0.0], [r, 0.0], [0.0, r], [-r / 2, r / 3]])
            samples = [f(pts)]
        return all(np.allclose(s, np.swapaxes(s, -1, -2), atol=TOL, rtol=0.0) for s in samples)


def _sym(m):
    return 0.5 * (m + np.swapaxes(m, -1, -2))


@dataclass(frozen=True)
class LateralSource:
    phi: tuple


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    detail: str
    witness: float = float("nan")


@dataclass
class ValidationReport:
    checks: list

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]

    def by_name(self, name):
        return [c for c in self.checks if c.name == name]

    def to_dict(self):
        return {
            "passed": bool(self.passed),
            "checks": [
                {"name": c.name, "passed": bool(c.passed), "detail": c.detail, "witness": _json_num(c.witness)}
                for c in self.checks
            ],
        }


def _json_num(v):
    return None if v is None or not np.isfinite(v) else float(v)


# ---------------------------------------------------------------- parsing


def _edge_form(entry, length, compact, name):
    """Build an EdgeFunction from one of the named config forms."""
    if entry is None:
        if compact:
            return EdgeFunction.zero(length)
        raise ConfigError(f"{name}: missing entry", name)
    if isinstance(entry, (int, float)):
        if compact:
            if entry != 0:
                raise ConfigError(f"{name}: a compact function cannot be a nonzero constant", name)
            return EdgeFunction.zero(length)
        return EdgeFunction.constant(length, float(entry))
    if not isinstance(entry, dict) or len(entry) != 1:
        raise ConfigError(f"{name}: expected a single named form", name)
    (kind, body), = entry.items()
    if kind == "zero":
        return EdgeFunction.zero(length)
    if kind == "constant":
        if compact:
            raise ConfigError(f"{name}: a compact function cannot be constant", name)
        return EdgeFunction.constant(length, float(body))
    if kind == "smooth_step":
        v0, v1 = float(body["from"]), float(body["to"])
        a, b = body["interval"]
        # the ramp may run past the end of the edge; it is then cut at x = length
        return EdgeFunction.from_callable(
            lambda x: v0 + (v1 - v0) * smooth_step((x - a) / (b - a)), length, (a, min(b, length))
        )
    if kind == "bump":
        amp = float(body["amplitude"])
        a, b = body["support"]
        return EdgeFunction.from_callable(lambda x: amp * bump((2 * x - a - b) / (b - a)), length, (a, b), compact=True)
    if kind == "polynomial":
        coef = np.asarray(body["coefficients"], dtype=float)
        a, b = body["support"]
        poly = np.polynomial.Polynomial(coef)
        return EdgeFunction.from_callable(lambda x: poly(x - a), length, (a, b), compact=compact)
    if kind == "samples":
        interval = body.get("interval", body.get("support"))
        return EdgeFunction.from_samples(body["values"], length, interval, compact=compact)
    raise ConfigError(f"{name}: unknown form '{kind}'", name)


def bump(s):
    """C-infinity bump on (-1, 1) with peak value 1 at s = 0."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - s[inside] ** 2))
    return out


def _matrix_form(entry, dim, name):
    if isinstance(entry, dict):
        (kind, body), = entry.items()
        if kind == "constant":
            return MatrixField(body)
        if kind == "affine":
            keys = [f"xi{k + 1}" for k in range(dim)]
            return MatrixField(body["base"], [body.get(k, np.zeros((dim, dim))) for k in keys])
        if kind == "grid" and dim == 2:
            axes = (np.asarray(body["xi1"], float), np.asarray(body["xi2"], float))
            return MatrixField(np.asarray(body["values"], float)[0, 0], grid=(axes, body["values"]))
        raise ConfigError(f"{name}: unknown matrix form '{kind}'", name)
    m = np.asarray(entry, dtype=float)
    if m.shape != (dim, dim):
        raise ConfigError(f"{name}: expected a {dim}x{dim} matrix", name)
    return MatrixField(m)


def spec_from_dict(data):
    """Build and check all problem data from a parsed config mapping."""
    try:
        g = data["geometry"]
        v = data["velocity"]
        d = data["diffusion"]
    except KeyError as exc:
        raise ConfigError(f"missing top-level key {exc}", str(exc)) from None
    ell = tuple(float(x) for x in g["ell"])
    spec = JunctionSpec(
        ell0=float(g["ell0"]),
        h=tuple(float(x) for x in g["h"]),
        ell=ell,
        q=tuple(float(x) for x in g["q"]),
        delta=float(g.get("delta", min(ell) / 10.0)),
        eps_max=float(g.get("eps_max", DEFAULT_EPS_MAX)),
    )
    axial = tuple(_edge_form(v["axial"][i], ell[i], False, f"velocity.axial[{i}]") for i in range(3))
    node_constants = tuple(float(x) for x in v.get("node_constants", [a(0.0) for a in axial]))
    transverse = []
    for i, entry in enumerate(v.get("transverse") or [None] * 3):
        if entry is None:
            transverse.append(None)
            continue
        transverse.append(
            TransverseField(
                _edge_form(entry["profile"], ell[i], True, f"velocity.transverse[{i}].profile"),
                np.asarray(entry.get("matrix", np.zeros((2, 2))), dtype=float),
                np.asarray(entry.get("offset", np.zeros(2)), dtype=float),
            )
        )
    near0 = tuple(tuple(float(t) for t in iv) for iv in v.get("constant_near_origin", [[0.0, 0.0]] * 3))
    near3 = tuple(float(t) for t in v.get("constant_near_ell3", [ell[2], ell[2]]))
    velocity = VelocityField(axial, node_constants, tuple(transverse), near0, near3)

    cross = tuple(_matrix_form(m, 2, f"diffusion.cross_matrices[{i}]") for i, m in enumerate(d["cross_matrices"]))
    diffusion = DiffusionSpec(
        tuple(float(a) for a in d["axial_constants"]),
        cross,
        _matrix_form(d.get("node_matrix", np.eye(3)), 3, "diffusion.node_matrix"),
        radii=spec.h,
        node_half_width=spec.ell0,
    )
    phis = (data.get("sources") or {}).get("phi") or [None] * 3
    source = LateralSource(tuple(_edge_form(phis[i], ell[i], True, f"sources.phi[{i}]") for i in range(3)))
    check_invariants(spec, velocity, diffusion, source)
    return spec, velocity, diffusion, source


def load_spec(path):
    """Read a JSON or TOML config and return (spec, velocity, diffusion, source)."""
    path = Path(path)
    text = path.read_text()
    try:
        if path.suffix.lower() == ".toml":
            data = tomllib.loads(text)
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"parse error in {path}: {exc}") from None
    try:
        return spec_from_dict(data)
    except (KeyError, TypeError, IndexError) as exc:
        raise ConfigError(f"malformed config {path}: {exc!r}") from None


def check_invariants(spec, velocity, diffusion, source, tol=TOL):
    """Type invariants enforced at load time; raises ConfigError on the first violation."""
    h2v = sum(h * h * v for h, v in zip(spec.h, velocity.node_constants))
    if abs(h2v) > tol:
        raise ConfigError(
            f"node flux compatibility violated: sum h^2 v = {h2v:.6g}",
            "velocity.node_constants",
            "cond_1",
        )
    for i in range(3):
        a, b = velocity.constant_near_origin[i]
        x = np.linspace(a, b, 65)
        dev = np.max(np.abs(velocity.axial[i](x) - velocity.node_constants[i]))
        if dev > tol:
            raise ConfigError(
                f"axial velocity on edge {i + 1} is not equal to its node constant on [{a}, {b}] "
                f"(deviation {dev:.3g})",
                f"velocity.constant_near_origin[{i}]",
            )
    a, b = velocity.constant_near_ell3
    x = np.linspace(a, b, 65)
    v3 = velocity.axial[2]
    dev = np.max(np.abs(v3(x) - v3(spec.ell[2])))
    if dev > tol or b < spec.ell[2]:
        raise ConfigError(
            "axial velocity on edge 3 must be constant on a declared neighbourhood of ell_3",
            "velocity.constant_near_ell3",
        )
    for i in range(4):
        if not diffusion.symmetric(i):
            raise ConfigError(f"diffusion matrix of region {i} is not symmetric", "diffusion")
        k0, _ = diffusion.ellipticity(i)
        if k0 <= 0.0:
            raise ConfigError(f"diffusion matrix of region {i} is not elliptic (kappa0 = {k0:.3g})", "diffusion")
    for i, phi in enumerate(source.phi):
        if not phi.compact:
            raise ConfigError(f"phi on edge {i + 1} must have compact support", f"sources.phi[{i}]")
        if not phi.is_zero:
            a, b = phi.support
            if not 0.0 < a < b < spec.ell[i]:
                raise ConfigError(f"support of phi on edge {i + 1} must lie inside (0, ell)", f"sources.phi[{i}]")
        if not np.all(np.isfinite(phi.samples)):
            raise ConfigError(f"phi on edge {i + 1} has non-finite values", f"sources.phi[{i}]")
    for i, tf in enumerate(velocity.transverse):
        if tf is not None and not tf.profile.is_zero:
            a, b = tf.support
            if not 0.0 < a < b < spec.ell[i]:
                raise ConfigError(
                    f"transverse velocity on edge {i + 1} needs compact axial support inside (0, ell)",
                    f"velocity.transverse[{i}]",
                )


# ---------------------------------------------------------------- checks


def validate_assumptions(spec, velocity, diffusion, tol=TOL):
    """Per-assumption pass/fail report; never raises."""
    checks = []
    for i in range(3):
        v = velocity.axial[i]
        x = v.grid()
        dv = v(x, 1)
        worst = float(dv.min())
        checks.append(AssumptionCheck(f"assum_1[{i + 1}]", worst >= -tol, "min dv/dx over the edge", worst))
    for i in range(3):
        k0, _ = diffusion.ellipticity(i + 1)
        tf = velocity.transverse[i]
        d = 0.0 if tf is None else tf.sup_norm(spec.h[i])
        margin = k0 - d * spec.ell[i]
        checks.append(
            AssumptionCheck(f"assum_2[{i + 1}]", margin > 0.0, f"kappa0 - d*ell with kappa0={k0:.4g}, d={d:.4g}", margin)
        )
    h2v = sum(h * h * v for h, v in zip(spec.h, velocity.node_constants))
    checks.append(AssumptionCheck("cond_1", abs(h2v) <= tol, "sum h^2 v over the node faces", h2v))
    signs = (-1.0, 1.0, 1.0)
    for i in range(3):
        vals = velocity.axial[i].samples * signs[i]
        checks.append(
            AssumptionCheck(f"sign_pattern[{i + 1}]", bool(vals.min() > 0.0), "signed axial velocity min", float(vals.min()))
        )
    for i in range(4):
        k0, k1 = diffusion.ellipticity(i)
        checks.append(
            AssumptionCheck(f"n1[{i}]", k0 > 0.0 and diffusion.symmetric(i), f"kappa0={k0:.4g}, kappa1={k1:.4g}", k0)
        )
    for i in range(3):
        a, b = velocity.constant_near_origin[i]
        x = np.linspace(a, b, 65)
        dev = float(np.max(np.abs(velocity.axial[i](x) - velocity.node_constants[i])))
        checks.append(AssumptionCheck(f"constant_near_origin[{i + 1}]", dev <= tol, f"on [{a}, {b}]", dev))
    checks.append(
        AssumptionCheck(
            "node_geometry",
            spec.node_fits,
            "outlet disks must fit on the node faces (h_i < ell0)",
            max(spec.h) - spec.ell0,
        )
    )
    return ValidationReport(checks)


def velocity_at(velocity, region, point, eps, spec=None):
    """Structured velocity field at a physical point of the junction at scale eps.

    region 0 is the node, 1..3 the cylinders.  Node values come from the
    gradient of the solved potential at xi = x/eps.
    """
    point = np.asarray(point, dtype=float)
    if region == 0:
        xi = point / eps
        if spec is not None and np.max(np.abs(xi)) > spec.ell0 * (1 + 1e-12):
            raise ValueError("point outside the node")
        for i in range(3):
            if spec is not None and np.isclose(xi[i], spec.ell0, rtol=0, atol=1e-12):
                rest = np.delete(xi, i)
                if np.hypot(*rest) <= spec.h[i]:
                    out = np.zeros(3)
                    out[i] = velocity.node_constants[i]
                    return out
        if velocity.node_potential is None:
            raise ValueError("node potential not solved; run node_solver.solve_node_potential first")
        return velocity.node_potential.gradient(xi[None, :])[0]
    i = region - 1
    x = point[i]
    xbar = np.delete(point, i)
    if spec is not None:
        if not (eps * spec.ell0 - 1e-12 <= x <= spec.ell[i] + 1e-12) or np.hypot(*xbar) > eps * spec.h[i] * (1 + 1e-12):
            raise ValueError(f"point outside cylinder {region}")
    out = np.zeros(3)
    out[i] = velocity.axial[i](x)
    tf = velocity.transverse[i]
    if tf is not None:
        out[[k for k in range(3) if k != i]] = eps * tf(x, xbar / eps)
    return out
