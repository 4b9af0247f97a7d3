"""Parameter encoding, path penalties and the regularized negative log-posterior.

The optimizer sees a flat real vector.  :class:`ParameterEncoding` maps it to
one :class:`~tvepi.dynamics.ParameterPath` per model parameter (optionally
through ``exp`` so rates stay positive), the trajectory is integrated
deterministically, and the loss is

    -loglik(data | trajectory) + sum_p weight_p * penalty_p(path_p)

with penalties taken on the natural-scale path.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numba
import numpy as np

from .dynamics import (
    ModelKind,
    ParameterPath,
    StateVector,
    TimeGrid,
    _euler_kernel,
    integrate_array,
)
from .observation import (
    IMPOSSIBLE_LOGLIK,
    CompiledDataset,
    Dataset,
    ObservationConfig,
    _compiled_loglik,
    read_dataset_csv,
)

__all__ = [
    "SENTINEL_LOSS",
    "Transform",
    "PenaltyKind",
    "EncodingError",
    "ParamSpec",
    "ParameterEncoding",
    "Penalty",
    "RegularizerSpec",
    "Objective",
    "total_variation",
    "quadratic_variation",
    "encode",
    "decode",
    "neg_log_posterior",
    "load_objective_config",
    "dump_objective_config",
]

SENTINEL_LOSS = 1e12


class EncodingError(ValueError):
    pass


class Transform(str, enum.Enum):
    IDENTITY = "identity"
    LOG = "log"


class PenaltyKind(str, enum.Enum):
    NONE = "none"
    TV = "tv"
    QV = "qv"


def total_variation(values: Sequence[float]) -> float:
    """Sum of absolute successive differences (0 for a single value).

    The result is the correctly rounded value of the exact sum: each difference
    is split into its rounded part and rounding error (Knuth's two-sum) and
    everything is accumulated with ``math.fsum``.
    """
    v = np.asarray(values, dtype=float)
    a, c = v[1:], -v[:-1]
    s = a + c
    z = s - a
    err = (a - (s - z)) + (c - z)
    sign = np.sign(s)
    return math.fsum(np.concatenate((sign * s, sign * err)))


def quadratic_variation(values: Sequence[float]) -> float:
    v = np.asarray(values, dtype=float)
    return math.fsum(np.square(np.diff(v)))


@numba.njit(cache=True)
def _evaluate(x, y0, h, substeps, n_steps, start, size, use_log, pen_kind, pen_weight,
              node, comp, family, k, m, const, var_floor, impossible):
    """Decode, penalize, integrate and score in one pass: ``(ok, nll, penalty)``."""
    n_par = start.shape[0]
    rates = np.empty((n_par, n_steps))
    pen = 0.0
    for p in range(n_par):
        for j in range(n_steps):
            v = x[start[p] + (j if size[p] > 1 else 0)]
            if use_log[p]:
                v = math.exp(v)
            if not (v >= 0.0 and v < np.inf):
                return False, 0.0, 0.0
            rates[p, j] = v
        if pen_kind[p] != 0 and pen_weight[p] != 0.0:
            acc = 0.0
            for j in range(1, size[p]):
                d = rates[p, j] - rates[p, j - 1]
                acc += abs(d) if pen_kind[p] == 1 else d * d
            pen += pen_weight[p] * acc
    states = np.empty((n_steps + 1, y0.shape[0]))
    if _euler_kernel(y0, rates, h, substeps, states) >= 0:
        return False, 0.0, 0.0
    nll = -_compiled_loglik(states, node, comp, family, k, m, const, var_floor, impossible)
    return True, nll, pen


@dataclass(frozen=True)
class ParamSpec:
    name: str
    time_varying: bool = False
    transform: Transform = Transform.LOG

    def __post_init__(self):
        object.__setattr__(self, "transform", Transform(self.transform))


class ParameterEncoding:
    """Layout of the flat optimization vector.

    Parameters are concatenated in the declared order; a time-varying
    parameter contributes ``n_steps`` entries, a constant one a single entry.
    """

    def __init__(self, specs: Sequence[ParamSpec], n_steps: int):
        self.specs = tuple(specs)
        self.n_steps = int(n_steps)
        self.slices: dict[str, slice] = {}
        start = 0
        for spec in self.specs:
            size = self.n_steps if spec.time_varying else 1
            self.slices[spec.name] = slice(start, start + size)
            start += size
        self.dim = start

    @classmethod
    def for_model(
        cls,
        kind: ModelKind | str,
        n_steps: int,
        time_varying: Sequence[str] = (),
        transform: Transform | str = Transform.LOG,
    ) -> "ParameterEncoding":
        kind = ModelKind.parse(kind)
        unknown = set(time_varying) - set(kind.parameters)
        if unknown:
            raise EncodingError(f"unknown parameters {sorted(unknown)} for {kind.value}")
        return cls([ParamSpec(p, p in time_varying, Transform(transform)) for p in kind.parameters], n_steps)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.specs)

    def spec(self, name: str) -> ParamSpec:
        return next(s for s in self.specs if s.name == name)

    def encode(self, paths: Mapping[str, ParameterPath | Sequence[float] | float]) -> np.ndarray:
        x = np.empty(self.dim)
        for spec in self.specs:
            if spec.name not in paths:
                raise EncodingError(f"missing path for {spec.name!r}")
            raw = paths[spec.name]
            vals = raw.values if isinstance(raw, ParameterPath) else np.atleast_1d(np.asarray(raw, dtype=float))
            sl = self.slices[spec.name]
            size = sl.stop - sl.start
            if vals.size == 1 and size > 1:
                vals = np.full(size, vals[0])
            if vals.size != size:
                raise EncodingError(f"{spec.name!r} needs {size} values, got {vals.size}")
            if spec.transform is Transform.LOG:
                if np.any(vals <= 0):
                    raise EncodingError(f"log transform needs positive values for {spec.name!r}")
                vals = np.log(vals)
            x[sl] = vals
        return x

    def natural(self, x: np.ndarray) -> dict[str, np.ndarray]:
        """Natural-scale values per parameter, without validation."""
        out = {}
        for spec in self.specs:
            v = x[self.slices[spec.name]]
            # math.exp (libm), not np.exp, so decoding agrees bit-for-bit with the kernel
            out[spec.name] = np.array([math.exp(u) for u in v]) if spec.transform is Transform.LOG else np.array(v)
        return out

    def decode(self, x: Sequence[float]) -> dict[str, ParameterPath]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise EncodingError(f"expected a vector of length {self.dim}, got shape {x.shape}")
        return {name: ParameterPath(name, v) for name, v in self.natural(x).items()}

    def to_dict(self) -> list[dict]:
        return [
            {"name": s.name, "time_varying": s.time_varying, "transform": s.transform.value}
            for s in self.specs
        ]


def encode(paths, enc: ParameterEncoding) -> np.ndarray:
    return enc.encode(paths)


def decode(x, enc: ParameterEncoding) -> dict[str, ParameterPath]:
    return enc.decode(x)


@dataclass(frozen=True)
class Penalty:
    kind: PenaltyKind = PenaltyKind.NONE
    weight: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", PenaltyKind(self.kind))
        if not (self.weight >= 0 and math.isfinite(self.weight)):
            raise ValueError("regularization weight must be finite and >= 0")


class RegularizerSpec(dict):
    """``{parameter name: Penalty}``; parameters not listed are unpenalized."""

    @classmethod
    def tv(cls, weights: Mapping[str, float]) -> "RegularizerSpec":
        return cls({name: Penalty(PenaltyKind.TV, w) for name, w in weights.items()})

    def validate(self, enc: ParameterEncoding) -> None:
        for name, pen in self.items():
            if name not in enc.names:
                raise EncodingError(f"regularizer names unknown parameter {name!r}")
            if pen.kind is not PenaltyKind.NONE and not enc.spec(name).time_varying:
                raise EncodingError(f"constant parameter {name!r} cannot carry a {pen.kind.value} penalty")

    def scaled(self, factor: float) -> "RegularizerSpec":
        return RegularizerSpec({k: Penalty(p.kind, p.weight * factor) for k, p in self.items()})

    def to_dict(self) -> dict:
        return {k: {"kind": p.kind.value, "weight": p.weight} for k, p in self.items()}


class Objective:
    """Regularized negative log-posterior over the encoded parameter vector.

    Instances are immutable after construction and calling one is reentrant.
    """

    def __init__(
        self,
        kind: ModelKind | str,
        init: StateVector,
        grid: TimeGrid,
        data: Dataset,
        encoding: ParameterEncoding,
        regularizer: RegularizerSpec | None = None,
        obs_config: ObservationConfig = ObservationConfig(),
    ):
        self.kind = ModelKind.parse(kind)
        if init.kind is not self.kind:
            raise ValueError(f"initial state is {init.kind.value}, model is {self.kind.value}")
        if data.model is not self.kind:
            raise ValueError(f"dataset targets {data.model.value}, model is {self.kind.value}")
        if encoding.names != self.kind.parameters:
            raise EncodingError(f"encoding must list {self.kind.parameters} in order")
        if encoding.n_steps != grid.n_steps:
            raise EncodingError("encoding and grid disagree on n_steps")
        self.init = init
        self.grid = grid
        self.data = data
        self.encoding = encoding
        self.regularizer = RegularizerSpec(regularizer or {})
        self.regularizer.validate(encoding)
        self.obs_config = obs_config
        self._y0 = init.as_array()
        self._compiled = CompiledDataset(data, grid, obs_config)
        names = encoding.names
        self._start = np.array([encoding.slices[n].start for n in names], dtype=np.int64)
        self._size = np.array([encoding.slices[n].stop - encoding.slices[n].start for n in names], dtype=np.int64)
        self._log = np.array([encoding.spec(n).transform is Transform.LOG for n in names])
        codes = {PenaltyKind.NONE: 0, PenaltyKind.TV: 1, PenaltyKind.QV: 2}
        self._pen_kind = np.array([codes[self.regularizer.get(n, Penalty()).kind] for n in names], dtype=np.int64)
        self._pen_weight = np.array([self.regularizer.get(n, Penalty()).weight for n in names])

    @property
    def dim(self) -> int:
        return self.encoding.dim

    def with_regularizer(self, regularizer: RegularizerSpec) -> "Objective":
        return Objective(self.kind, self.init, self.grid, self.data, self.encoding, regularizer, self.obs_config)

    def _rates(self, nat: dict[str, np.ndarray]) -> np.ndarray:
        rates = np.empty((len(nat), self.grid.n_steps))
        for row, name in enumerate(self.kind.parameters):
            rates[row] = nat[name]
        return rates

    def states(self, x: Sequence[float]) -> np.ndarray:
        nat = self.encoding.natural(np.asarray(x, dtype=float))
        return integrate_array(self._y0, self._rates(nat), self.grid)

    def breakdown(self, x: Sequence[float]) -> tuple[float, float]:
        """``(negative log-likelihood, penalty)`` at ``x``.

        Undecodable points (non-finite rates, integration overflow) give
        ``(SENTINEL_LOSS, 0)``.
        """
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise EncodingError(f"expected a vector of length {self.dim}, got shape {x.shape}")
        c = self._compiled
        ok, nll, pen = _evaluate(
            x, self._y0, self.grid.step, self.grid.substeps_per_step, self.grid.n_steps,
            self._start, self._size, self._log, self._pen_kind, self._pen_weight,
            c.node, c.comp, c.family, c.k, c.m, c.const, c.var_floor, IMPOSSIBLE_LOGLIK,
        )
        if not ok:
            return SENTINEL_LOSS, 0.0
        return nll, pen

    def penalty(self, x: Sequence[float]) -> float:
        return self.breakdown(x)[1]

    def __call__(self, x: Sequence[float]) -> float:
        nll, pen = self.breakdown(x)
        total = nll + pen
        return total if math.isfinite(total) and total < SENTINEL_LOSS else SENTINEL_LOSS

    def to_config(self, dataset_path: str) -> dict:
        return {
            "model": self.kind.value,
            "initial_state": self.init.as_array().tolist(),
            "grid": self.grid.to_dict(),
            "encoding": self.encoding.to_dict(),
            "regularizer": self.regularizer.to_dict(),
            "observation": self.obs_config.to_dict(),
            "dataset": dataset_path,
        }


def neg_log_posterior(x: Sequence[float], obj: Objective) -> float:
    return obj(x)


def load_objective_config(path: str | Path) -> Objective:
    """Build an :class:`Objective` from a JSON config.

    The ``dataset`` entry is resolved relative to the config file.  The initial
    state is given either as ``initial_state`` (compartment list) or as
    ``population`` plus ``initial_infectious``.
    """
    path = Path(path)
    cfg = json.loads(path.read_text())
    return objective_from_dict(cfg, base_dir=path.parent)


def objective_from_dict(cfg: dict, base_dir: str | Path = ".") -> Objective:
    try:
        kind = ModelKind.parse(cfg["model"])
        if "initial_state" in cfg:
            init = StateVector.from_array(cfg["initial_state"])
        else:
            init = StateVector.initial(kind, cfg["population"], cfg["initial_infectious"])
        grid = TimeGrid(**cfg.get("grid", {}))
        enc_cfg = cfg.get("encoding")
        if enc_cfg is None:
            enc = ParameterEncoding.for_model(kind, grid.n_steps)
        else:
            enc = ParameterEncoding([ParamSpec(**e) for e in enc_cfg], grid.n_steps)
        reg = RegularizerSpec(
            {name: Penalty(p.get("kind", "tv"), p.get("weight", 0.0)) for name, p in cfg.get("regularizer", {}).items()}
        )
        obs = ObservationConfig.from_dict(cfg.get("observation", {}))
        data_path = Path(cfg["dataset"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed objective config: {exc!r}") from exc
    if not data_path.is_absolute():
        data_path = Path(base_dir) / data_path
    data = read_dataset_csv(data_path, kind)
    return Objective(kind, init, grid, data, enc, reg, obs)


def dump_objective_config(obj: Objective, path: str | Path, dataset_path: str) -> None:
    Path(path).write_text(json.dumps(obj.to_config(dataset_path), indent=2) + "\n")
