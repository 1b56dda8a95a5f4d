# The node problem on the stretched junction and what its outlets do.

# %%
from pathlib import Path

import numpy as np

from thinjunction.junction_config import load_spec
from thinjunction.limit_graph import solve_limit
from thinjunction.node_solver import NodeDomain, solve_node_potential, solve_node_term

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
spec, vel, diff, src = load_spec(CONFIGS / "worked_thin.json")
w0 = tuple(float(w(0.0)) for w in solve_limit(spec, vel, src).w0)
print("far-field constants w0(0):", w0)

# %% [markdown]
# Cube of half width ell0 plus three outlet columns of radius h, truncated at xi = L.
# The potential carries flux v_j through disk j.

# %%
for L in (8.0, 16.0):
    dom = NodeDomain(spec.ell0, spec.h, 16, L)
    pot = solve_node_potential(dom, vel.node_constants)
    N0 = solve_node_term(0, w0, dom, diff, pot, spec=spec, strict=False)
    print(f"\nL = {L}: potential residual {pot.residual:.1e}, cap mismatch {np.round(N0.cap_mismatch, 4)}")
    for j in range(3):
        xi, avg, rms = N0.profile(j)
        pick = np.searchsorted(xi, [2.0, 4.0, L / 2, L - 1.0, L - 0.1])
        print(f"  outlet {j + 1}: averages", np.round(avg[np.minimum(pick, len(xi) - 1)], 4))

# %% [markdown]
# Outlet 1 (flow into the node) settles on w0 immediately.  Outlets 2 and 3 carry the
# mixed value downstream and only meet their prescribed constants in a thin layer at the cap,
# and that layer moves with L.  This is why the matching residual on edges 2 and 3 is not
# exponentially small.
