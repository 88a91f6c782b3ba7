# %% [markdown]
# # The plant and its memory-truncated surrogate
#
# Ten decoupled stable modes driven by inputs in the unit box and by a
# sinusoidal disturbance with shifts and clipped noise. We simulate a constant
# input, then compare the true state with the finite-window reconstruction.

# %%
import numpy as np

from oco_s2.costs import CostConfig, Surrogate, box_radius_diameter
from oco_s2.lti import default_model, finite_window_state, generate_disturbances, simulate, state_bound, window

model = default_model()
d = generate_disturbances(200, model.n_d, seed=0)
print("disturbance range", d.d.min().round(3), d.d.max().round(3), "sup norm", round(d.D_d, 3))

# %%
U = np.full((200, 10), 0.5)
tr = simulate(model, U, d, CostConfig())
print("final state", tr.chi[-1].round(3))
print("total cost", tr.stage_costs.sum().round(3))

# %% [markdown]
# Truncating the convolution to the last H rounds leaves exactly the
# propagated old state A^H chi_{t-H}, which decays like rho^H.

# %%
R, _ = box_radius_diameter(10)
D_chi = state_bound(model, R, d.D_d)
for H in (1, 5, 20, 60):
    gaps = [
        np.linalg.norm(tr.chi[t - 1] - finite_window_state(model, window(U, t, H), window(d.d, t, H)))
        for t in range(1, 201)
    ]
    print(f"H={H:3d}  max gap {max(gaps):.3e}  bound {model.C_A * model.rho**H * D_chi:.3e}")

# %% [markdown]
# The learner never sees the true state. It optimizes the surrogate cost in
# which the whole window holds the current input, and each client only sees
# its own coordinate scaled so the client average is the surrogate.

# %%
sur = Surrogate(model, CostConfig(), 104, d.d)
u = np.random.default_rng(1).uniform(size=10)
t = 50
locals_ = [sur.local_cost(i, t, u) for i in range(10)]
print("mean local", np.mean(locals_), "surrogate", sur.cost(t, u))
print("local gradients are one-hot:", (np.count_nonzero(sur.local_gradients(t, u), axis=1) <= 1).all())
