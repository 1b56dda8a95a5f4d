# Limit problem on the graph and the first cross-section correctors.
#
# Run from the repository root:  python3 demos/01_limit_and_correctors.py

# %%
from pathlib import Path

import numpy as np

from thinjunction.cross_section_solver import DiskMesh, isotropic_oracle, solve_neumann_mean_zero
from thinjunction.junction_config import load_spec
from thinjunction.limit_graph import kirchhoff_residual, solve_limit
from thinjunction.regular_expansion import build_correctors, regular_terms

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
spec, vel, diff, src = load_spec(CONFIGS / "generic.json")

# %% [markdown]
# Edge 1 carries the inflow (v < 0 towards the node), edges 2 and 3 carry it away.
# The limit w0 solves a first order transport equation on each edge and the three
# node values are tied together by the flux balance at the vertex.

# %%
lim = solve_limit(spec, vel, src)
x = np.linspace(0.0, 1.0, 6)
for j, w in enumerate(lim.w0):
    print(f"edge {j + 1}: w0 =", np.round(w(x), 5))
print("C =", np.round(lim.C, 6))
print("flux balance at the node:", kirchhoff_residual([w(0.0) for w in lim.w0], spec, vel))

# %% [markdown]
# Higher terms w_k come from the recurrence v w_k = a w_{k-1}' + c_k.  They vanish at the
# Dirichlet ends of edges 1 and 2 and keep the vertex balance.

# %%
terms = regular_terms(lim, spec, vel, diff, 3)
for t in terms[1:]:
    print(f"k={t.order}: c = {np.round(t.c, 5)}, w_k(0) = {np.round(t.values_at_node(), 5)}")

# %% [markdown]
# The 2D Neumann solver against the radial closed form for D = I, then the real correctors.

# %%
for rings in (10, 20, 40):
    mesh = DiskMesh(1.0, rings)
    u = solve_neumann_mean_zero(mesh, np.eye(2), 2.0, 1.0).values
    exact = isotropic_oracle(1.0, 1.0, 1.0)(np.hypot(*mesh.vertices.T))
    print(f"{mesh.n_triangles:6d} triangles: rel. L2 error {mesh.l2_norm(u - exact) / mesh.l2_norm(exact):.3e}")

corr = build_correctors(terms, spec, vel, diff, src, 2)
for k, c in enumerate(corr[1:], start=1):
    for j, fam in enumerate(c.families):
        if fam.is_zero:
            continue
        peak = np.abs(fam.values).max()
        print(f"u_{k} on edge {j + 1}: support {np.round(fam.support, 3)}, max |u| {peak:.4f}, max |mean| {np.abs(fam.means).max():.1e}")
