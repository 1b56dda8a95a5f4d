# Cross-check on edge 3: a 1D exponentially fitted solve of the averaged equation
# against the cross-section average of the composite approximation.

# %%
from pathlib import Path

import numpy as np

from thinjunction.composite import assemble, cross_section_average, solve_terms
from thinjunction.junction_config import load_spec
from thinjunction.verification import DEFAULT_EPS, compare_edge_reference, fit_exponential, fit_rate, reference_for

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

# %%
terms = solve_terms(load_spec(CONFIGS / "generic.json"), 1)
gaps = []
for e in DEFAULT_EPS:
    ap = assemble(1, e, terms)
    ref = reference_for(ap)
    gaps.append((e, compare_edge_reference(ref, ap)))
    x = np.array([0.5, 0.9, 1.0 - 2 * e, 1.0])
    print(f"eps={e}: ref", np.round(np.interp(x, ref.x, ref.values), 4), " composite", np.round(cross_section_average(ap, 2, x), 4))
f = fit_rate(gaps, 1.8)
print("sup gaps:", [f"{g:.3e}" for _, g in gaps], f"slope {f.slope:.2f}")

# %% [markdown]
# With phi = 0 and constant coefficients the composite is exact up to the cut-off tails.

# %%
trivial = solve_terms(load_spec(CONFIGS / "worked.json"), 1, node=False)
gaps = [(e, compare_edge_reference(reference_for(assemble(1, e, trivial)), assemble(1, e, trivial))) for e in DEFAULT_EPS]
f = fit_exponential(gaps)
print("trivial gaps:", [f"{g:.3e}" for _, g in gaps], f"log-slope in 1/eps {f.slope:.3f} (correlation {f.correlation:.4f})")
