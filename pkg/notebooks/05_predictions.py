# %% [markdown]
# # Optimistic steps with gradient predictions
#
# The prediction variant keeps an anchor q and deploys Pi(q - eta M) for a
# predicted block gradient M. Zero predictions recover the plain learner
# exactly; oracle predictions make the mismatch vanish; noisy ones degrade
# gracefully.

# %%
from oco_s2.costs import CostConfig
from oco_s2.learner import LearnerConfig, ZeroPredictions, prediction_source, run_ogd, run_ogd_p
from oco_s2.lti import default_model, generate_disturbances

model, cost = default_model(), CostConfig()
d = generate_disturbances(200, 10, seed=0)
cfg = LearnerConfig()
plain = run_ogd(model, d, cost, cfg, 0)
zero = run_ogd_p(model, d, cost, cfg, ZeroPredictions(), 0)
print("zero predictions identical:", plain.trajectory.u.tobytes() == zero.trajectory.u.tobytes())

# %%
for spec in ("oracle", "prev", "noisy:0.5", "noisy:2", "noisy:5"):
    r = run_ogd_p(model, d, cost, cfg, prediction_source(spec, 0), 0, G_P=60.0)
    print(f"{spec:10s} mismatch {r.pred_mismatch:12.3f}  cost {r.J_T:8.3f}")
