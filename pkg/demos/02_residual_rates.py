# Substitute the composite approximation into the equation and watch the residuals shrink.
#
# About a minute on one core.

# %%
from pathlib import Path

from thinjunction.composite import assemble, solve_terms
from thinjunction.junction_config import load_spec
from thinjunction.verification import DEFAULT_EPS, compute_residual_norms, fit_exponential, fit_rate

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
terms = solve_terms(load_spec(CONFIGS / "generic.json"), 2)
print("solve times:", {k: round(v, 2) for k, v in terms.timings.items()})

# %%
reports = {(m, e): compute_residual_norms(assemble(m, e, terms)) for m in range(3) for e in DEFAULT_EPS}

print(f"{'m':>2} {'eps':>6} " + " ".join(f"{n:>10}" for n in ("R1[1]", "R1[2]", "R1[3]", "R4[3]", "R2[1]", "R3")))
for (m, e), r in reports.items():
    vals = (*r.R1, r.R4[2], r.R2[0], r.R3)
    print(f"{m:2d} {e:6.3f} " + " ".join(f"{v:10.3e}" for v in vals))

# %% [markdown]
# Interior residual: slope m + 1 expected.  Lateral residual: m + 1.5.
# R3 lives in the layer cut-off band and should look like exp(-c / eps).

# %%
for m in range(3):
    for i in range(3):
        f1 = fit_rate([(e, reports[(m, e)].R1[i]) for e in DEFAULT_EPS], m + 1)
        f4 = fit_rate([(e, reports[(m, e)].R4[i]) for e in DEFAULT_EPS], m + 1.5)
        print(f"m={m} edge={i + 1}: R1 slope {f1.slope:.2f} ({f1.verdict}), R4 slope {f4.slope:.2f} ({f4.verdict})")
    f3 = fit_exponential([(e, reports[(m, e)].R3) for e in DEFAULT_EPS])
    print(f"m={m}: R3 log-slope in 1/eps {f3.slope:.3f}, correlation {f3.correlation:.4f}")

# %% [markdown]
# The matching residual on edges 2 and 3 does not decay exponentially: the node problem's
# outflow outlets cannot be forced to the constants w_k(0).  Edge 1 is fine.

# %%
for i in range(3):
    f = fit_exponential([(e, reports[(0, e)].R2[i]) for e in DEFAULT_EPS])
    print(f"R2 edge {i + 1}: slope {f.slope:.3f}, correlation {f.correlation:.4f} -> {f.verdict}")
