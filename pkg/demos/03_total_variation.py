# Total variation as a change-point prior: TV-penalized denoising of a step signal.
# Run: python demos/03_total_variation.py

import numpy as np

from tvepi.objective import quadratic_variation, total_variation
from tvepi.optimizer import IteratedConfig, Level, NelderMeadConfig, multilevel_nelder_mead

# a staircase is cheap under TV, a ramp with the same rise costs the same
step = np.r_[np.zeros(10), np.ones(10)]
ramp = np.linspace(0, 1, 20)
print("TV   step %.3f  ramp %.3f" % (total_variation(step), total_variation(ramp)))
print("QV   step %.3f  ramp %.3f" % (quadratic_variation(step), quadratic_variation(ramp)))

# a wiggle costs twice its height
print("TV of 0,1,0:", total_variation([0, 1, 0]))

rng = np.random.default_rng(3)
truth = np.r_[np.full(12, 1.0), np.full(12, 3.0), np.full(12, 2.0)]
y = truth + rng.normal(scale=0.4, size=truth.size)


def loss(lam):
    return lambda x: 0.5 * np.sum((x - y) ** 2) + lam * total_variation(x)


# coarse blocks first, then every point on its own
levels = [Level(np.arange(y.size) // b, IteratedConfig(inner=NelderMeadConfig(max_evals=20000))) for b in (12, 6, 3)]
cfg = IteratedConfig(max_restarts=10, inner=NelderMeadConfig(max_evals=40000, x_tol=1e-8, f_tol=1e-10))

for lam in (0.0, 0.5, 2.0, 50.0):
    x = multilevel_nelder_mead(loss(lam), y, levels, cfg).x
    print(f"lambda={lam:5.1f}  TV={total_variation(x):6.3f}  fit:", " ".join(f"{v:.2f}" for v in x[::4]))
print("truth                    :", " ".join(f"{v:.2f}" for v in truth[::4]))
