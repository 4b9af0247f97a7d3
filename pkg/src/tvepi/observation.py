"""Evidence records and their log-likelihood given a latent trajectory.

Three evidence kinds are supported:

* virulence: ``k`` positives in a random sample of ``m`` people, informs ``I/N``;
* surveillance: confirmed-case count ``k``, informs ``Q`` (SIRQ) or ``R`` (SIR);
* serology: ``k`` antibody positives among ``m`` sampled, informs ``R/N`` (SIRQ only).

Impossible observations score :data:`IMPOSSIBLE_LOGLIK` rather than ``-inf`` so
that downstream simplex arithmetic stays finite.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .dynamics import ModelKind, TimeGrid, Trajectory

__all__ = [
    "IMPOSSIBLE_LOGLIK",
    "EvidenceKind",
    "VirulenceFamily",
    "SurveillanceFamily",
    "EvidenceRecord",
    "ObservationConfig",
    "Dataset",
    "ConfigurationError",
    "binomial_loglik",
    "poisson_loglik",
    "gaussian_loglik",
    "record_loglik",
    "dataset_loglik",
    "saturated_loglik",
    "CompiledDataset",
    "write_dataset_csv",
    "read_dataset_csv",
]

IMPOSSIBLE_LOGLIK = -1e12
_LOG_2PI = math.log(2.0 * math.pi)


class ConfigurationError(ValueError):
    """Evidence is incompatible with the model it is paired with."""


class EvidenceKind(str, enum.Enum):
    VIRULENCE = "virulence"
    SURVEILLANCE = "surveillance"
    SEROLOGY = "serology"


class VirulenceFamily(str, enum.Enum):
    BINOMIAL = "binomial"
    POISSON = "poisson"


class SurveillanceFamily(str, enum.Enum):
    POISSON = "poisson"
    GAUSSIAN = "gaussian"


def binomial_loglik(k: int, m: int, p: float) -> float:
    """log Bin(k; m, p), with the boundary cases p in {0, 1} handled exactly."""
    if k < 0 or m < 0 or k > m:
        raise ValueError(f"binomial needs 0 <= k <= m, got k={k}, m={m}")
    p = min(max(float(p), 0.0), 1.0)
    if p == 0.0:
        return 0.0 if k == 0 else IMPOSSIBLE_LOGLIK
    if p == 1.0:
        return 0.0 if k == m else IMPOSSIBLE_LOGLIK
    log_choose = math.lgamma(m + 1) - math.lgamma(k + 1) - math.lgamma(m - k + 1)
    return log_choose + k * math.log(p) + (m - k) * math.log1p(-p)


def poisson_loglik(k: int, lam: float) -> float:
    if k < 0:
        raise ValueError(f"poisson count must be >= 0, got {k}")
    if lam < 0:
        raise ValueError(f"poisson mean must be >= 0, got {lam}")
    if lam == 0.0:
        return 0.0 if k == 0 else IMPOSSIBLE_LOGLIK
    return k * math.log(lam) - lam - math.lgamma(k + 1)


def gaussian_loglik(y: float, mu: float, var: float) -> float:
    if not var > 0:
        raise ValueError(f"gaussian variance must be > 0, got {var}")
    return -0.5 * (_LOG_2PI + math.log(var)) - (y - mu) ** 2 / (2.0 * var)


@dataclass(frozen=True)
class EvidenceRecord:
    kind: EvidenceKind
    t: float
    k: int
    m: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", EvidenceKind(self.kind))
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"count must be a non-negative integer, got {self.k}")
        object.__setattr__(self, "k", int(self.k))
        if self.kind is EvidenceKind.SURVEILLANCE:
            if self.m is not None:
                raise ValueError("surveillance records carry no sample size")
        else:
            if self.m is None or int(self.m) != self.m or self.m < 1:
                raise ValueError(f"{self.kind.value} needs a positive integer sample size")
            object.__setattr__(self, "m", int(self.m))
            if self.k > self.m:
                raise ValueError(f"count {self.k} exceeds sample size {self.m}")


@dataclass(frozen=True)
class ObservationConfig:
    virulence_family: VirulenceFamily = VirulenceFamily.BINOMIAL
    surveillance_family: SurveillanceFamily = SurveillanceFamily.POISSON
    variance_floor: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "virulence_family", VirulenceFamily(self.virulence_family))
        object.__setattr__(self, "surveillance_family", SurveillanceFamily(self.surveillance_family))
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be positive")

    def to_dict(self) -> dict:
        return {
            "virulence_family": self.virulence_family.value,
            "surveillance_family": self.surveillance_family.value,
            "variance_floor": self.variance_floor,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObservationConfig":
        return cls(**d)


@dataclass(frozen=True)
class Dataset:
    model: ModelKind
    records: tuple[EvidenceRecord, ...] = field(default=())

    def __post_init__(self):
        model = ModelKind.parse(self.model)
        object.__setattr__(self, "model", model)
        recs = tuple(sorted(self.records, key=lambda r: r.t))
        object.__setattr__(self, "records", recs)
        if model is ModelKind.SIR and any(r.kind is EvidenceKind.SEROLOGY for r in recs):
            raise ConfigurationError("serology evidence requires the SIRQ model")

    def __len__(self) -> int:
        return len(self.records)

    def __add__(self, other: "Dataset") -> "Dataset":
        if other.model is not self.model:
            raise ConfigurationError("cannot combine datasets for different models")
        return Dataset(self.model, self.records + other.records)

    def of_kind(self, kind: EvidenceKind) -> list[EvidenceRecord]:
        return [r for r in self.records if r.kind is kind]


def _compartment_for(rec: EvidenceRecord, model: ModelKind) -> int:
    if rec.kind is EvidenceKind.VIRULENCE:
        return 1
    if rec.kind is EvidenceKind.SEROLOGY:
        if model is not ModelKind.SIRQ:
            raise ConfigurationError("serology evidence requires the SIRQ model")
        return 2
    return 3 if model is ModelKind.SIRQ else 2


def record_loglik(rec: EvidenceRecord, traj: Trajectory, cfg: ObservationConfig = ObservationConfig()) -> float:
    """Log-density of one record given the trajectory at its (snapped) time."""
    row = traj.values[traj.grid.snap(rec.t)]
    level = float(row[_compartment_for(rec, traj.kind)])
    n = float(row.sum())
    if rec.kind is EvidenceKind.SURVEILLANCE:
        if cfg.surveillance_family is SurveillanceFamily.POISSON:
            return poisson_loglik(rec.k, level)
        return gaussian_loglik(rec.k, level, max(level, cfg.variance_floor))
    frac = level / n
    if rec.kind is EvidenceKind.VIRULENCE and cfg.virulence_family is VirulenceFamily.POISSON:
        return poisson_loglik(rec.k, rec.m * frac)
    return binomial_loglik(rec.k, rec.m, frac)


def dataset_loglik(data: Dataset, traj: Trajectory, cfg: ObservationConfig = ObservationConfig()) -> float:
    total = 0.0
    for rec in data.records:
        total += record_loglik(rec, traj, cfg)
    return total


def saturated_loglik(data: Dataset, cfg: ObservationConfig = ObservationConfig()) -> float:
    """Log-likelihood when every record's mean matches its own count exactly.

    Twice the gap between this and a model's log-likelihood is the deviance.
    """
    total = 0.0
    for rec in data.records:
        if rec.kind is EvidenceKind.SURVEILLANCE:
            if cfg.surveillance_family is SurveillanceFamily.POISSON:
                total += poisson_loglik(rec.k, rec.k)
            else:
                total += gaussian_loglik(rec.k, rec.k, max(rec.k, cfg.variance_floor))
        elif rec.kind is EvidenceKind.VIRULENCE and cfg.virulence_family is VirulenceFamily.POISSON:
            total += poisson_loglik(rec.k, rec.k)
        else:
            total += binomial_loglik(rec.k, rec.m, rec.k / rec.m)
    return total


# Family codes for the compiled kernel.
_BINOMIAL, _POISSON_RATE, _POISSON_LEVEL, _GAUSSIAN_LEVEL = 0, 1, 2, 3


@numba.njit(cache=True)
def _compiled_loglik(states, node, comp, family, k, m, const, var_floor, impossible):
    total = 0.0
    for j in range(node.shape[0]):
        row = node[j]
        n = 0.0
        for c in range(states.shape[1]):
            n += states[row, c]
        level = states[row, comp[j]]
        fam = family[j]
        kj = k[j]
        if fam == _BINOMIAL:
            p = level / n
            if p < 0.0:
                p = 0.0
            elif p > 1.0:
                p = 1.0
            if p == 0.0:
                val = 0.0 if kj == 0.0 else impossible
            elif p == 1.0:
                val = 0.0 if kj == m[j] else impossible
            else:
                val = const[j] + kj * math.log(p) + (m[j] - kj) * math.log1p(-p)
        elif fam == _GAUSSIAN_LEVEL:
            var = level if level > var_floor else var_floor
            val = -0.5 * (math.log(2.0 * math.pi) + math.log(var)) - (kj - level) ** 2 / (2.0 * var)
        else:
            lam = level if fam == _POISSON_LEVEL else m[j] * (level / n)
            if lam <= 0.0:
                val = 0.0 if kj == 0.0 else impossible
            else:
                val = kj * math.log(lam) - lam - const[j]
        total += val
    return total


class CompiledDataset:
    """A dataset pre-bound to a grid for fast repeated evaluation.

    Gives the same value as :func:`dataset_loglik` (same per-record formulas and
    summation order) without rebuilding Python objects per call.
    """

    def __init__(self, data: Dataset, grid: TimeGrid, cfg: ObservationConfig = ObservationConfig()):
        n = len(data.records)
        self.node = np.empty(n, dtype=np.int64)
        self.comp = np.empty(n, dtype=np.int64)
        self.family = np.empty(n, dtype=np.int64)
        self.k = np.empty(n)
        self.m = np.zeros(n)
        self.const = np.zeros(n)
        self.var_floor = float(cfg.variance_floor)
        for j, rec in enumerate(data.records):
            self.node[j] = grid.snap(rec.t)
            self.comp[j] = _compartment_for(rec, data.model)
            self.k[j] = rec.k
            if rec.kind is EvidenceKind.SURVEILLANCE:
                if cfg.surveillance_family is SurveillanceFamily.POISSON:
                    self.family[j] = _POISSON_LEVEL
                    self.const[j] = math.lgamma(rec.k + 1)
                else:
                    self.family[j] = _GAUSSIAN_LEVEL
                continue
            self.m[j] = rec.m
            if rec.kind is EvidenceKind.VIRULENCE and cfg.virulence_family is VirulenceFamily.POISSON:
                self.family[j] = _POISSON_RATE
                self.const[j] = math.lgamma(rec.k + 1)
            else:
                self.family[j] = _BINOMIAL
                self.const[j] = math.lgamma(rec.m + 1) - math.lgamma(rec.k + 1) - math.lgamma(rec.m - rec.k + 1)

    def __call__(self, states: np.ndarray) -> float:
        return float(
            _compiled_loglik(
                states, self.node, self.comp, self.family, self.k, self.m, self.const,
                self.var_floor, IMPOSSIBLE_LOGLIK,
            )
        )


def write_dataset_csv(data: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("kind", "t", "m", "k"))
        for rec in data.records:
            w.writerow((rec.kind.value, repr(float(rec.t)), "" if rec.m is None else rec.m, rec.k))


def read_dataset_csv(path: str | Path, model: ModelKind | str) -> Dataset:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["kind", "t", "m", "k"]:
            raise ValueError(f"dataset header must be kind,t,m,k; got {reader.fieldnames}")
        for row in reader:
            m = row["m"].strip()
            records.append(
                EvidenceRecord(
                    EvidenceKind(row["kind"].strip().lower()),
                    float(row["t"]),
                    int(row["k"]),
                    int(m) if m else None,
                )
            )
    return Dataset(model, tuple(records))

