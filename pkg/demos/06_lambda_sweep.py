"""Choosing the TV weight for a time-varying transmission rate.

Beta steps up at day 30 and partly back down at day 50; gamma is constant.
Each weight is fitted from the same starts.  The weight kept is the largest one
whose deviance still fits within the noise (deviance <= number of observations).
Below it the path chases noise, above it the steps are flattened.

Budget is reduced here so the demo finishes in a few minutes; the full
experiment is ``tvepi reproduce tv-sir``.

Run: python demos/06_lambda_sweep.py
"""
import numpy as np

from tvepi.inference import FitSettings, lambda_sweep, scenario_objective
from tvepi.recovery import score_path

bundle, obj = scenario_objective("tv-sir", seed=0)
sweep = lambda_sweep(obj, [0.0, 3.0, 30.0, 1e4], FitSettings(starts=2, max_restarts=3))

# with no penalty, beta between surveys is free and wanders off to huge values
print(" lambda      loss         TV   deviance  regime")
for r in sweep.rows:
    print(f"{r.lam:7g} {r.loss:9.2f} {r.tv:10.3g} {r.deviance:9.2f}  {r.regime}")

x = sweep.estimates[sweep.selected]
beta = obj.encoding.natural(x)["beta"]
print()
print("selected lambda:", sweep.selected_lambda)
print("beta every 10 days:", np.round(beta[::10], 3))
print("truth             :", np.round(bundle.truth["beta"].values[::10], 3))
print(score_path(beta, bundle.truth["beta"].values))
