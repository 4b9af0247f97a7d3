# Forward simulation of an SIRQ outbreak with a lockdown-style drop in beta.
# Run: python demos/01_outbreak.py

import numpy as np

from tvepi.dynamics import ModelKind, StateVector, TimeGrid, basic_reproduction_number, integrate

grid = TimeGrid(t0=0.0, horizon=100.0, n_steps=100, substeps_per_step=10)
t = np.arange(grid.n_steps)

beta = np.where(t < 40, 0.3, 0.12)
gamma = np.full(grid.n_steps, 0.03)
delta = np.where((t >= 20) & (t < 40), 0.25, 0.07)

init = StateVector.initial(ModelKind.SIRQ, population=1e5, infectious=100)
traj = integrate(ModelKind.SIRQ, init, {"beta": beta, "gamma": gamma, "delta": delta}, grid)

print("day       S          I          R          Q")
for day in (0, 20, 40, 60, 80, 100):
    s, i, r, q = traj.values[day]
    print(f"{day:3d} {s:10.1f} {i:10.1f} {r:10.1f} {q:10.1f}")

# people are moved around, never created
print("max drift of S+I+R+Q:", np.abs(traj.values.sum(axis=1) - 1e5).max())

# reproduction numbers, without and with quarantine removal
for day in (0, 25, 45):
    free = basic_reproduction_number(ModelKind.SIRQ, beta[day], gamma[day])
    ctl = basic_reproduction_number(ModelKind.SIRQ, beta[day], gamma[day], delta[day], controlled=True)
    print(f"day {day}: R0 = {free:.3f}, controlled {ctl:.3f}")

# forward Euler is first order: errors against a 4x finer run go as 3 : 1
# for substep counts 10 and 20
fine = integrate(ModelKind.SIRQ, init, {"beta": beta, "gamma": gamma, "delta": delta}, grid.with_substeps(20))
finer = integrate(ModelKind.SIRQ, init, {"beta": beta, "gamma": gamma, "delta": delta}, grid.with_substeps(40))
e1 = np.abs(traj.values - finer.values).max()
e2 = np.abs(fine.values - finer.values).max()
print(f"refinement ratio ~ {e1 / e2:.2f}")
