# %% [markdown]
# # Sweeps, regret and the theoretical bound
#
# A sweep reruns the learner on shared disturbance realizations while one
# parameter changes. Here we use two seeds and short grids to keep it quick;
# the command line runs the full default grids.

# %%
from oco_s2.config import Config
from oco_s2.experiments import aggregate, run_sweep, summary_table

cfg = Config.from_dict({"learner": {"seeds": 2}})

for kind, grid in (("K", (1, 10, 200)), ("H", (1, 16, 104)), ("participation", (1, 5, 10))):
    records, diags = run_sweep(cfg.plan(kind, grid))
    rows = aggregate(records)
    reg, bnd = summary_table(rows, "final_regret"), summary_table(rows, "bound")
    for s in reg:
        print(f"{s:18s} regret {reg[s][0]:8.3f} +- {reg[s][1]:6.3f}   bound {bnd[s][0]:12.1f}")
    print("comparators converged:", all(dg.success for _, dg in diags))

# %% [markdown]
# Longer blocks cut communication but cost regret. With K close to sqrt(T)
# the number of exchanged scalars per sqrt(T) stays near 2 m n_u.

# %%
from oco_s2.experiments import comm_envelope

for T in (200, 400, 800, 1600):
    v, up = comm_envelope(T, 5, 10)
    print(f"T={T:5d}  comm/sqrtT {v:7.3f}  ceiling {up:7.3f}")
