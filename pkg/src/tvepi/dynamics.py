"""Deterministic SIR / SIRQ compartmental dynamics.

Parameters are piecewise constant over the steps of a :class:`TimeGrid`; within
one step the ODE is advanced with forward Euler using ``substeps_per_step``
equal sub-intervals. The update is written in flow form (each transfer is
subtracted from one compartment and added to another) so that the total
population is conserved to rounding.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

import numba
import numpy as np

__all__ = [
    "ModelKind",
    "StateVector",
    "TimeGrid",
    "ParameterPath",
    "Trajectory",
    "ArityError",
    "IntegrationOverflowError",
    "derivative",
    "integrate",
    "integrate_array",
    "basic_reproduction_number",
    "write_trajectory_csv",
    "read_trajectory_csv",
]


class ArityError(ValueError):
    """Parameter tuple does not match the model."""


class IntegrationOverflowError(ArithmeticError):
    def __init__(self, step: int):
        super().__init__(f"non-finite state produced at grid step {step}")
        self.step = step


class ModelKind(str, enum.Enum):
    SIR = "SIR"
    SIRQ = "SIRQ"

    @property
    def compartments(self) -> tuple[str, ...]:
        return ("S", "I", "R") if self is ModelKind.SIR else ("S", "I", "R", "Q")

    @property
    def parameters(self) -> tuple[str, ...]:
        return ("beta", "gamma") if self is ModelKind.SIR else ("beta", "gamma", "delta")

    @classmethod
    def parse(cls, value: Union[str, "ModelKind"]) -> "ModelKind":
        if isinstance(value, cls):
            return value
        return cls(str(value).upper())


@dataclass(frozen=True)
class StateVector:
    s: float
    i: float
    r: float
    q: float | None = None

    def __post_init__(self):
        for name in ("s", "i", "r", "q"):
            v = getattr(self, name)
            if v is not None and not (v >= 0.0 and math.isfinite(v)):
                raise ValueError(f"compartment {name} must be finite and >= 0, got {v}")

    @property
    def kind(self) -> ModelKind:
        return ModelKind.SIR if self.q is None else ModelKind.SIRQ

    @property
    def population(self) -> float:
        return float(self.as_array().sum())

    def as_array(self) -> np.ndarray:
        vals = [self.s, self.i, self.r] if self.q is None else [self.s, self.i, self.r, self.q]
        return np.array(vals, dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "StateVector":
        values = [float(v) for v in values]
        if len(values) == 3:
            return cls(*values)
        if len(values) == 4:
            return cls(*values)
        raise ArityError(f"state must have 3 or 4 compartments, got {len(values)}")

    @classmethod
    def initial(cls, kind: ModelKind | str, population: float, infectious: float) -> "StateVector":
        """Outbreak start: ``infectious`` cases, everyone else susceptible."""
        kind = ModelKind.parse(kind)
        if not 0 <= infectious <= population:
            raise ValueError("need 0 <= infectious <= population")
        q = 0.0 if kind is ModelKind.SIRQ else None
        return cls(float(population - infectious), float(infectious), 0.0, q)


@dataclass(frozen=True)
class TimeGrid:
    t0: float = 0.0
    horizon: float = 100.0
    n_steps: int = 100
    substeps_per_step: int = 10

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError("n_steps must be a positive integer")
        if int(self.substeps_per_step) != self.substeps_per_step or self.substeps_per_step < 1:
            raise ValueError("substeps_per_step must be a positive integer")
        if not self.horizon > self.t0:
            raise ValueError("horizon must exceed t0")

    @property
    def step(self) -> float:
        return (self.horizon - self.t0) / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return self.t0 + self.step * np.arange(self.n_steps + 1)

    def snap(self, t: float) -> int:
        """Index of the grid node nearest to ``t``; ties go to the earlier node."""
        if not (self.t0 - 1e-9 * self.step <= t <= self.horizon + 1e-9 * self.step):
            raise ValueError(f"time {t} outside [{self.t0}, {self.horizon}]")
        u = (t - self.t0) / self.step
        return int(min(max(math.ceil(u - 0.5), 0), self.n_steps))

    def with_substeps(self, substeps: int) -> "TimeGrid":
        return TimeGrid(self.t0, self.horizon, self.n_steps, substeps)

    def to_dict(self) -> dict:
        return {
            "t0": self.t0,
            "horizon": self.horizon,
            "n_steps": self.n_steps,
            "substeps_per_step": self.substeps_per_step,
        }


@dataclass(frozen=True)
class ParameterPath:
    """Values of one dynamic parameter: length 1 (constant) or one per grid step."""

    name: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size == 0:
            raise ValueError(f"path {self.name!r} is empty")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0):
            raise ValueError(f"path {self.name!r} must be finite and non-negative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def is_constant(self) -> bool:
        return self.values.size == 1

    def expand(self, n_steps: int) -> np.ndarray:
        if self.values.size == 1:
            return np.full(n_steps, self.values[0])
        if self.values.size != n_steps:
            raise ValueError(
                f"path {self.name!r} has {self.values.size} values, expected 1 or {n_steps}"
            )
        return np.asarray(self.values)


PathsLike = Union[Mapping[str, Union[float, Sequence[float], np.ndarray]], Iterable[ParameterPath]]


def _normalize_paths(kind: ModelKind, paths: PathsLike) -> dict[str, ParameterPath]:
    if isinstance(paths, Mapping):
        out = {k: v if isinstance(v, ParameterPath) else ParameterPath(k, v) for k, v in paths.items()}
    else:
        out = {p.name: p for p in paths}
    missing = [p for p in kind.parameters if p not in out]
    extra = [p for p in out if p not in kind.parameters]
    if missing or extra:
        raise ArityError(f"{kind.value} expects {kind.parameters}; missing {missing}, unexpected {extra}")
    return {p: out[p] for p in kind.parameters}


@dataclass(frozen=True)
class Trajectory:
    kind: ModelKind
    grid: TimeGrid
    values: np.ndarray = field(repr=False)  # shape (n_steps + 1, n_compartments)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def population(self) -> float:
        return float(self.values[0].sum())

    @property
    def times(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def states(self) -> list[StateVector]:
        return [StateVector.from_array(row) for row in self.values]

    def compartment(self, name: str) -> np.ndarray:
        return self.values[:, self.kind.compartments.index(name)]

    def at(self, t: float) -> StateVector:
        return StateVector.from_array(self.values[self.grid.snap(t)])


def derivative(kind: ModelKind | str, state: StateVector | Sequence[float], params: Sequence[float]) -> np.ndarray:
    """Right-hand side ``(dS, dI, dR[, dQ])`` of the ODE at one instant."""
    kind = ModelKind.parse(kind)
    y = state.as_array() if isinstance(state, StateVector) else np.asarray(state, dtype=float)
    if y.size != len(kind.compartments):
        raise ArityError(f"{kind.value} state has {len(kind.compartments)} compartments, got {y.size}")
    if len(params) != len(kind.parameters):
        raise ArityError(f"{kind.value} takes {len(kind.parameters)} parameters, got {len(params)}")
    n = y.sum()
    beta, gamma = float(params[0]), float(params[1])
    infection = beta * y[0] * y[1] / n if n > 0 else 0.0
    removal = gamma * y[1]
    if kind is ModelKind.SIR:
        return np.array([-infection, infection - removal, removal])
    quarantine = float(params[2]) * y[1]
    return np.array([-infection, infection - removal - quarantine, removal, quarantine])


@numba.njit(cache=True)
def _euler_kernel(y0, rates, h, substeps, out):
    """Fill ``out`` with the trajectory; return the first bad step or -1."""
    ncomp = y0.shape[0]
    n_steps = rates.shape[1]
    sirq = ncomp == 4
    dt = h / substeps
    s = y0[0]
    i = y0[1]
    r = y0[2]
    q = y0[3] if sirq else 0.0
    n = s + i + r + q
    for c in range(ncomp):
        out[0, c] = y0[c]
    for k in range(n_steps):
        beta = rates[0, k]
        gamma = rates[1, k]
        delta = rates[2, k] if sirq else 0.0
        for _ in range(substeps):
            inf_flow = beta * s * i / n * dt if n > 0.0 else 0.0
            if inf_flow > s:
                inf_flow = s
            rem_flow = gamma * i * dt
            quar_flow = delta * i * dt
            avail = i + inf_flow
            out_flow = rem_flow + quar_flow
            if out_flow > avail:
                scale = avail / out_flow
                rem_flow *= scale
                quar_flow = avail - rem_flow
                i = 0.0
            else:
                i = avail - out_flow
            s -= inf_flow
            r += rem_flow
            q += quar_flow
        if not (np.isfinite(s) and np.isfinite(i) and np.isfinite(r) and np.isfinite(q)):
            return k
        out[k + 1, 0] = s
        out[k + 1, 1] = i
        out[k + 1, 2] = r
        if sirq:
            out[k + 1, 3] = q
    return -1


def integrate_array(y0: np.ndarray, rates: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """Array-level integrator used on hot paths.

    ``rates`` has shape ``(n_params, n_steps)`` in model parameter order.
    Raises :class:`IntegrationOverflowError` on a non-finite state.
    """
    y0 = np.ascontiguousarray(y0, dtype=np.float64)
    rates = np.ascontiguousarray(rates, dtype=np.float64)
    out = np.empty((grid.n_steps + 1, y0.size))
    bad = _euler_kernel(y0, rates, grid.step, grid.substeps_per_step, out)
    if bad >= 0:
        raise IntegrationOverflowError(int(bad))
    return out


def integrate(kind: ModelKind | str, init: StateVector, paths: PathsLike, grid: TimeGrid) -> Trajectory:
    """Forward-Euler trajectory with per-step constant parameters.

    A compartment that a substep would drive negative is emptied exactly; the
    outgoing flows are scaled down proportionally so that conservation holds.
    """
    kind = ModelKind.parse(kind)
    if init.kind is not kind:
        raise ArityError(f"initial state is {init.kind.value}, model is {kind.value}")
    norm = _normalize_paths(kind, paths)
    rates = np.vstack([norm[p].expand(grid.n_steps) for p in kind.parameters])
    return Trajectory(kind, grid, integrate_array(init.as_array(), rates, grid))


def basic_reproduction_number(
    kind: ModelKind | str,
    beta: float,
    gamma: float,
    delta: float | None = None,
    controlled: bool = False,
) -> float:
    """``beta / gamma``, or ``beta / (gamma + delta)`` for controlled SIRQ."""
    kind = ModelKind.parse(kind)
    if controlled and kind is ModelKind.SIRQ:
        if delta is None:
            raise ArityError("controlled SIRQ reproduction number needs delta")
        denom = gamma + delta
    else:
        denom = gamma
    if denom <= 0:
        raise ZeroDivisionError("reproduction number denominator must be positive")
    return beta / denom


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t",) + traj.kind.compartments)
        for t, row in zip(traj.times, traj.values):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_trajectory_csv(path: str | Path, substeps_per_step: int = 10) -> Trajectory:
    """Parse a trajectory CSV; the grid is rebuilt from the time column."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    kind = ModelKind.SIR if header[1:] == ["S", "I", "R"] else ModelKind.SIRQ
    if header[1:] != list(kind.compartments):
        raise ValueError(f"unexpected trajectory header {header}")
    data = np.array([[float(x) for x in row] for row in body])
    grid = TimeGrid(data[0, 0], data[-1, 0], len(body) - 1, substeps_per_step)
    return Trajectory(kind, grid, data[:, 1:])
