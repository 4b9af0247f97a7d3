"""Why restart the simplex?

A one-dimensional "staircase": a shallow local basin at 5 next to the global
minimum at 0.  A small simplex started at 4 rolls into the local basin and
stays.  Restarting from the optimum on a big fresh simplex lets it see across.

Run: python demos/04_simplex_restarts.py
"""
from tvepi.optimizer import IteratedConfig, NelderMeadConfig, iterated_nelder_mead, nelder_mead


def stair(x):
    return min(x[0] ** 2, (x[0] - 5.0) ** 2 + 0.5)


small = NelderMeadConfig(initial_step=0.1)
one = nelder_mead(stair, [4.0], small)
print(f"single run:     x={one.x[0]:+.5f}  f={one.fun:.5f}  evals={one.evals}")

for scale in (2.0, 5.0):
    res = iterated_nelder_mead(stair, [4.0], IteratedConfig(inner=small, restart_step=scale))
    print(f"restart step {scale}: x={res.x[0]:+.5f}  f={res.fun:.5f}  restarts={res.restarts}")

# With step 2 the restart simplex from 5 probes 3 and 7, which score the same,
# so the search has no reason to move left.  Step 5 probes 0 directly.

# Rosenbrock's valley, the classic slow case
rosen = lambda x: (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
res = nelder_mead(rosen, [-1.2, 1.0], NelderMeadConfig(x_tol=1e-10, f_tol=1e-14))
print("rosenbrock:", res.x, res.evals, "evaluations")
