"""Ground-truth scenarios and synthetic evidence.

The three built-in scenarios mirror the classic experiments: a constant SIRQ
town outbreak, a city SIR outbreak with a time-varying transmission rate, and a
city SIRQ outbreak where both transmission and quarantine rates jump.  The
time-varying truth paths are *reconstructions*: step functions chosen to match
the qualitative story (a rise then a drop in transmission; a lockdown drop; a
temporary quarantine surge), not published values.

Every record is drawn from its own Philox stream keyed by ``(seed, record
index)``, so a dataset is reproducible regardless of generation order.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .dynamics import (
    ModelKind,
    ParameterPath,
    StateVector,
    TimeGrid,
    Trajectory,
    integrate,
    write_trajectory_csv,
)
from .observation import (
    Dataset,
    EvidenceKind,
    EvidenceRecord,
    write_dataset_csv,
)

__all__ = [
    "ScenarioName",
    "EvidencePlan",
    "ScenarioSpec",
    "SyntheticBundle",
    "builtin_scenario",
    "synthesize",
    "record_rng",
    "write_bundle",
    "write_paths_csv",
    "read_paths_csv",
    "TV_SIR_BETA",
    "TV_SIRQ_BETA",
    "TV_SIRQ_DELTA",
]


class ScenarioName(str, enum.Enum):
    CONSTANT_SIRQ = "constant-sirq"
    TV_SIR = "tv-sir"
    TV_SIRQ = "tv-sirq"

    @classmethod
    def parse(cls, name: str) -> "ScenarioName":
        aliases = {
            "constantsirq": cls.CONSTANT_SIRQ,
            "timevaryingsir": cls.TV_SIR,
            "timevaryingsirq": cls.TV_SIRQ,
        }
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        try:
            return cls(key)
        except ValueError:
            pass
        compact = key.replace("-", "").replace("_", "")
        if compact in aliases:
            return aliases[compact]
        raise ValueError(f"unknown scenario {name!r}; choose from {[s.value for s in cls]}")


# Reconstructed step paths: (start day, level) pieces on a 100-day horizon.
TV_SIR_BETA = ((0, 0.16), (30, 0.32), (50, 0.208))
TV_SIR_GAMMA = 0.1
TV_SIRQ_BETA = ((0, 0.3), (40, 0.12))
TV_SIRQ_GAMMA = 0.03
TV_SIRQ_DELTA = ((0, 0.07), (20, 0.25), (40, 0.07))


def step_path(pieces, grid: TimeGrid) -> np.ndarray:
    """Per-step values of a step function given as ``(start time, level)`` pieces."""
    starts = grid.nodes[:-1]
    out = np.empty(grid.n_steps)
    for t_start, level in pieces:
        out[starts >= t_start - 1e-12] = level
    return out


@dataclass(frozen=True)
class EvidencePlan:
    kind: EvidenceKind
    t: float
    m: int | None = None


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    kind: ModelKind
    population: int
    initial_infectious: int
    grid: TimeGrid
    truth: Mapping[str, tuple[float, ...]]
    plan: tuple[EvidencePlan, ...]
    seed: int = 0
    time_varying: tuple[str, ...] = ()

    def __post_init__(self):
        if not 0 <= self.initial_infectious <= self.population:
            raise ValueError("initial infectious must lie in [0, N]")
        for p in self.plan:
            if not self.grid.t0 <= p.t <= self.grid.horizon:
                raise ValueError(f"evidence time {p.t} outside the grid")

    @property
    def initial_state(self) -> StateVector:
        return StateVector.initial(self.kind, self.population, self.initial_infectious)

    def truth_paths(self) -> dict[str, ParameterPath]:
        return {name: ParameterPath(name, vals) for name, vals in self.truth.items()}

    def with_seed(self, seed: int) -> "ScenarioSpec":
        return ScenarioSpec(
            self.name, self.kind, self.population, self.initial_infectious, self.grid,
            self.truth, self.plan, int(seed), self.time_varying,
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "model": self.kind.value,
            "population": self.population,
            "initial_infectious": self.initial_infectious,
            "grid": self.grid.to_dict(),
            "truth": {k: [float(v) for v in vals] for k, vals in self.truth.items()},
            "plan": [{"kind": p.kind.value, "t": p.t, "m": p.m} for p in self.plan],
            "seed": self.seed,
            "time_varying": list(self.time_varying),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def _plan(kind: EvidenceKind, fractions, horizon: float, m: int | None = None) -> list[EvidencePlan]:
    return [EvidencePlan(kind, round(f * horizon, 10), m) for f in fractions]


_NINE = [0.1 * j for j in range(1, 10)]
_EIGHT = [0.1 * j for j in range(1, 9)]


def builtin_scenario(name: str | ScenarioName, seed: int = 0) -> ScenarioSpec:
    name = ScenarioName.parse(name)
    if name is ScenarioName.CONSTANT_SIRQ:
        grid = TimeGrid(0.0, 60.0, 60, 10)
        plan = _plan(EvidenceKind.VIRULENCE, _NINE, grid.horizon, 10)
        plan += _plan(EvidenceKind.SURVEILLANCE, _EIGHT, grid.horizon)
        return ScenarioSpec(
            name.value, ModelKind.SIRQ, 1000, 10, grid,
            {"beta": (0.3,), "gamma": (0.03,), "delta": (0.07,)},
            tuple(plan), seed,
        )
    grid = TimeGrid(0.0, 100.0, 100, 10)
    if name is ScenarioName.TV_SIR:
        plan = _plan(EvidenceKind.VIRULENCE, _NINE, grid.horizon, 1000)
        truth = {"beta": tuple(step_path(TV_SIR_BETA, grid)), "gamma": (TV_SIR_GAMMA,)}
        return ScenarioSpec(name.value, ModelKind.SIR, 100_000, 100, grid, truth, tuple(plan), seed, ("beta",))
    plan = _plan(EvidenceKind.VIRULENCE, _NINE, grid.horizon, 1000)
    plan += _plan(EvidenceKind.SURVEILLANCE, _NINE, grid.horizon)
    plan += _plan(EvidenceKind.SEROLOGY, _NINE, grid.horizon, 1000)
    truth = {
        "beta": tuple(step_path(TV_SIRQ_BETA, grid)),
        "gamma": (TV_SIRQ_GAMMA,),
        "delta": tuple(step_path(TV_SIRQ_DELTA, grid)),
    }
    return ScenarioSpec(
        name.value, ModelKind.SIRQ, 100_000, 100, grid, truth, tuple(plan), seed, ("beta", "delta")
    )


def record_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream for one record."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))


def draw_record(plan: EvidencePlan, traj: Trajectory, rng: np.random.Generator) -> EvidenceRecord:
    row = traj.values[traj.grid.snap(plan.t)]
    n = row.sum()
    if plan.kind is EvidenceKind.VIRULENCE:
        p = min(max(row[1] / n, 0.0), 1.0)
        return EvidenceRecord(plan.kind, plan.t, int(rng.binomial(plan.m, p)), plan.m)
    if plan.kind is EvidenceKind.SEROLOGY:
        p = min(max(row[2] / n, 0.0), 1.0)
        return EvidenceRecord(plan.kind, plan.t, int(rng.binomial(plan.m, p)), plan.m)
    level = row[3] if traj.kind is ModelKind.SIRQ else row[2]
    return EvidenceRecord(plan.kind, plan.t, int(rng.poisson(max(level, 0.0))))


@dataclass(frozen=True)
class SyntheticBundle:
    spec: ScenarioSpec
    truth: dict[str, ParameterPath]
    trajectory: Trajectory
    dataset: Dataset
    provenance: dict = field(default_factory=dict)


def synthesize(spec: ScenarioSpec) -> SyntheticBundle:
    truth = spec.truth_paths()
    traj = integrate(spec.kind, spec.initial_state, truth, spec.grid)
    records = tuple(draw_record(p, traj, record_rng(spec.seed, i)) for i, p in enumerate(spec.plan))
    provenance = {"seed": spec.seed, "spec_sha256": spec.digest(), "spec": spec.to_dict()}
    return SyntheticBundle(spec, truth, traj, Dataset(spec.kind, records), provenance)


def write_paths_csv(paths: Mapping[str, ParameterPath | np.ndarray], grid: TimeGrid, path: str | Path,
                    names: tuple[str, ...] | None = None) -> None:
    """One row per grid step: ``t`` is the step's start time."""
    names = names or tuple(paths)
    cols = []
    for name in names:
        p = paths[name]
        p = p if isinstance(p, ParameterPath) else ParameterPath(name, p)
        cols.append(p.expand(grid.n_steps))
    with open(path, "w", newline="") as fh:
        fh.write(",".join(("t",) + names) + "\n")
        for j, t in enumerate(grid.nodes[:-1]):
            fh.write(",".join([repr(float(t))] + [repr(float(c[j])) for c in cols]) + "\n")


def read_paths_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.array([[float(x) for x in line.split(",")] for line in fh if line.strip()])
    return {name: data[:, j] for j, name in enumerate(header)}


def write_bundle(bundle: SyntheticBundle, out_dir: str | Path) -> list[Path]:
    """Dataset, truth paths, trajectory and a provenance sidecar."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "dataset.csv", out / "truth_paths.csv", out / "trajectory.csv", out / "provenance.json"]
    write_dataset_csv(bundle.dataset, files[0])
    write_paths_csv(bundle.truth, bundle.spec.grid, files[1], bundle.spec.kind.parameters)
    write_trajectory_csv(bundle.trajectory, files[2])
    files[3].write_text(json.dumps(bundle.provenance, indent=2, sort_keys=True) + "\n")
    return files
