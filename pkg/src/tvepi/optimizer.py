"""Nelder-Mead simplex search and its iterated (restarting) variant.

``nelder_mead`` is a plain downhill simplex with reflection, expansion,
inside/outside contraction and shrink.  ``iterated_nelder_mead`` reruns it
from each local optimum on a freshly inflated simplex until a restart stops
paying off; ``multi_start`` runs that from several seeds and keeps the best.
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "SENTINEL",
    "Termination",
    "NelderMeadConfig",
    "IteratedConfig",
    "Simplex",
    "OptResult",
    "nelder_mead",
    "iterated_nelder_mead",
    "multi_start",
    "Level",
    "multilevel_nelder_mead",
    "write_trace_csv",
]

SENTINEL = 1e12

Objective = Callable[[np.ndarray], float]


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    MAX_RESTARTS = "max_restarts"
    MAX_EVALS = "max_evals"


@dataclass(frozen=True)
class NelderMeadConfig:
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    max_evals: int = 10_000
    x_tol: float = 1e-8
    f_tol: float = 1e-10
    initial_step: float | Sequence[float] = 0.1

    def __post_init__(self):
        if not self.reflection > 0:
            raise ValueError("reflection must be > 0")
        if not self.expansion > max(1.0, self.reflection):
            raise ValueError("expansion must exceed max(1, reflection)")
        if not 0 < self.contraction < 1:
            raise ValueError("contraction must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if self.max_evals < 1 or self.x_tol <= 0 or self.f_tol <= 0:
            raise ValueError("max_evals, x_tol and f_tol must be positive")
        if np.any(np.asarray(self.initial_step, dtype=float) <= 0):
            raise ValueError("initial_step must be positive")

    @classmethod
    def adaptive(cls, dim: int, **kwargs) -> "NelderMeadConfig":
        """Dimension-dependent coefficients (Gao & Han, 2012) for large simplices."""
        n = max(int(dim), 2)
        return cls(
            reflection=1.0,
            expansion=1.0 + 2.0 / n,
            contraction=0.75 - 1.0 / (2.0 * n),
            shrink=1.0 - 1.0 / n,
            **kwargs,
        )

    def steps(self, dim: int) -> np.ndarray:
        step = np.asarray(self.initial_step, dtype=float)
        if step.ndim == 0:
            return np.full(dim, float(step))
        if step.shape != (dim,):
            raise ValueError(f"initial_step has length {step.size}, problem has dimension {dim}")
        return step


@dataclass(frozen=True)
class IteratedConfig:
    max_restarts: int = 10
    restart_improvement_tol: float = 1e-6
    inner: NelderMeadConfig = field(default_factory=NelderMeadConfig)
    # Simplex size used from the second run on; None reuses inner.initial_step.
    restart_step: float | Sequence[float] | None = None
    max_total_evals: int | None = None

    def __post_init__(self):
        if self.max_restarts < 1:
            raise ValueError("max_restarts must be >= 1")
        if not self.restart_improvement_tol > 0:
            raise ValueError("restart_improvement_tol must be positive")


@dataclass
class Simplex:
    """Vertices with their values; ``ordered`` sorts best-to-worst, older first on ties."""

    points: np.ndarray  # (D + 1, D)
    values: np.ndarray  # (D + 1,)
    ages: np.ndarray  # (D + 1,) insertion stamps, smaller is older

    def order(self) -> np.ndarray:
        return np.lexsort((self.ages, self.values))

    def ordered(self) -> "Simplex":
        idx = self.order()
        return Simplex(self.points[idx].copy(), self.values[idx].copy(), self.ages[idx].copy())

    def diameter(self) -> float:
        best = self.points[self.order()[0]]
        return float(np.max(np.abs(self.points - best)))


@dataclass
class OptResult:
    x: np.ndarray
    fun: float
    evals: int
    restarts: int
    termination: Termination
    trace: list[tuple[int, float]] = field(default_factory=list)
    history: list[tuple[int, int, float]] = field(default_factory=list)
    initial_simplices: list[np.ndarray] = field(default_factory=list, repr=False)
    starts: list["OptResult"] = field(default_factory=list, repr=False)
    # How each inner Nelder-Mead run ended, in run order.
    inner_terminations: list[Termination] = field(default_factory=list)


def _safe(f: Objective) -> Callable[[np.ndarray], float]:
    def g(x):
        v = f(x)
        try:
            v = float(v)
        except (TypeError, ValueError):
            return SENTINEL
        if not math.isfinite(v) or v > SENTINEL:
            return SENTINEL
        return v

    return g


def _initial_simplex(x0: np.ndarray, steps: np.ndarray) -> np.ndarray:
    pts = np.tile(x0, (x0.size + 1, 1))
    pts[1:] += np.diag(steps)
    return pts


def nelder_mead(
    f: Objective,
    x0: Sequence[float],
    cfg: NelderMeadConfig = NelderMeadConfig(),
    *,
    f0: float | None = None,
    _restart: int = 0,
    _step: np.ndarray | None = None,
) -> OptResult:
    """Minimize ``f`` from ``x0``.

    The initial simplex is axis aligned: vertex ``j`` is ``x0 + step[j] e_j``.
    Stops once the simplex's max-norm spread around its best vertex is below
    ``x_tol`` and the value spread is below ``f_tol``, or after ``max_evals``
    evaluations (a shrink may overshoot by at most D evaluations).  NaN and
    infinite values count as the sentinel ``1e12``.
    """
    fs = _safe(f)
    x0 = np.array(x0, dtype=float).reshape(-1)
    if x0.size < 1 or not np.all(np.isfinite(x0)):
        raise ValueError("x0 must be a finite, non-empty vector")
    dim = x0.size
    steps = cfg.steps(dim) if _step is None else _step
    pts = _initial_simplex(x0, steps)
    vals = np.empty(dim + 1)
    evals = 0
    if f0 is None:
        vals[0] = fs(pts[0])
        evals += 1
    else:
        vals[0] = f0
    for j in range(1, dim + 1):
        vals[j] = fs(pts[j])
        evals += 1
    simplex = Simplex(pts, vals, np.arange(dim + 1))
    initial = pts.copy()
    stamp = dim + 1

    rho, chi, psi, sigma = cfg.reflection, cfg.expansion, cfg.contraction, cfg.shrink
    order = simplex.order()
    best_val = vals[order[0]]
    history = [(_restart, evals, float(best_val))]
    total = pts.sum(axis=0)
    since_resum = 0
    termination = Termination.MAX_EVALS

    while evals < cfg.max_evals:
        b, w, sw = order[0], order[-1], order[-2]
        if vals[w] - vals[b] <= cfg.f_tol and np.max(np.abs(pts - pts[b])) <= cfg.x_tol:
            termination = Termination.CONVERGED
            break
        xw = pts[w]
        centroid = (total - xw) / dim
        xr = centroid + rho * (centroid - xw)
        fr = fs(xr)
        evals += 1
        new_x = None
        if fr < vals[b]:
            xe = centroid + rho * chi * (centroid - xw)
            fe = fs(xe)
            evals += 1
            new_x, new_f = (xe, fe) if fe < fr else (xr, fr)
        elif fr < vals[sw]:
            new_x, new_f = xr, fr
        elif fr < vals[w]:
            xc = centroid + psi * (xr - centroid)
            fc = fs(xc)
            evals += 1
            if fc <= fr:
                new_x, new_f = xc, fc
        else:
            xcc = centroid + psi * (xw - centroid)
            fcc = fs(xcc)
            evals += 1
            if fcc < vals[w]:
                new_x, new_f = xcc, fcc

        if new_x is not None:
            total += new_x - xw
            pts[w] = new_x
            vals[w] = new_f
            simplex.ages[w] = stamp
            stamp += 1
            since_resum += 1
            if since_resum > dim:
                total = pts.sum(axis=0)
                since_resum = 0
        else:
            xb = pts[b].copy()
            for j in order[1:]:
                pts[j] = xb + sigma * (pts[j] - xb)
                vals[j] = fs(pts[j])
                simplex.ages[j] = stamp
                stamp += 1
                evals += 1
            total = pts.sum(axis=0)
            since_resum = 0
        order = simplex.order()
        if vals[order[0]] < best_val:
            best_val = vals[order[0]]
            history.append((_restart, evals, float(best_val)))

    b = order[0]
    return OptResult(
        x=pts[b].copy(),
        fun=float(vals[b]),
        evals=evals,
        restarts=1,
        termination=termination,
        trace=[(_restart, float(vals[b]))],
        history=history,
        initial_simplices=[initial],
        inner_terminations=[termination],
    )


def iterated_nelder_mead(f: Objective, x0: Sequence[float], cfg: IteratedConfig = IteratedConfig()) -> OptResult:
    """Rerun Nelder-Mead from each local optimum on a fresh full-size simplex.

    Stops when a restart improves on the previous one by less than
    ``restart_improvement_tol`` or after ``max_restarts`` runs.
    """
    x = np.array(x0, dtype=float).reshape(-1)
    dim = x.size
    restart_step = None if cfg.restart_step is None else NelderMeadConfig(initial_step=cfg.restart_step).steps(dim)
    trace, history, simplices, inner_ends = [], [], [], []
    evals = 0
    best_x, best_f = x, None
    termination = Termination.MAX_RESTARTS
    f_prev = None
    for r in range(cfg.max_restarts):
        inner = cfg.inner
        if cfg.max_total_evals is not None:
            left = cfg.max_total_evals - evals
            if left <= dim + 1:
                termination = Termination.MAX_EVALS
                break
            inner = replace(inner, max_evals=min(inner.max_evals, left))
        step = restart_step if (r > 0 and restart_step is not None) else None
        res = nelder_mead(f, best_x, inner, f0=best_f, _restart=r, _step=step)
        evals += res.evals
        history.extend(res.history)
        simplices.extend(res.initial_simplices)
        inner_ends.append(res.termination)
        if best_f is None or res.fun < best_f:
            best_x, best_f = res.x, res.fun
        trace.append((r, best_f))
        if f_prev is not None and f_prev - best_f < cfg.restart_improvement_tol:
            termination = Termination.CONVERGED
            break
        f_prev = best_f
    return OptResult(
        x=best_x.copy(),
        fun=float(best_f),
        evals=evals,
        restarts=len(trace),
        termination=termination,
        trace=trace,
        history=history,
        initial_simplices=simplices,
        inner_terminations=inner_ends,
    )


@dataclass(frozen=True)
class Level:
    """A coarse parametrization: fine coordinate ``i`` takes coarse value ``index[i]``."""

    index: np.ndarray
    cfg: IteratedConfig

    @property
    def dim(self) -> int:
        return int(self.index.max()) + 1

    def restrict(self, x: np.ndarray) -> np.ndarray:
        # group means; an empty group cannot occur for a surjective index
        return np.bincount(self.index, weights=x) / np.bincount(self.index)


def multilevel_nelder_mead(
    f: Objective, x0: Sequence[float], levels: Sequence[Level], cfg: IteratedConfig = IteratedConfig()
) -> OptResult:
    """Iterated Nelder-Mead on successively finer parametrizations of ``f``.

    Each level optimizes ``z -> f(z[index])`` starting from the group means of
    the current point, and hands its optimum, expanded, to the next level.  A
    final full-resolution run with ``cfg`` follows.  The result never has a
    higher value than ``f(x0)``: a level whose optimum is worse than the
    incoming point is discarded.
    """
    x = np.array(x0, dtype=float).reshape(-1)
    fx = float(_safe(f)(x))
    evals, restarts = 1, 0
    history, simplices, inner_ends = [], [], []
    for lv in levels:
        idx = np.asarray(lv.index)
        res = iterated_nelder_mead(lambda z, idx=idx: f(z[idx]), lv.restrict(x), lv.cfg)
        evals += res.evals
        history += [(r + restarts, e, v) for r, e, v in res.history]
        simplices += res.initial_simplices
        inner_ends += res.inner_terminations
        restarts += res.restarts
        if res.fun <= fx:
            x, fx = res.x[idx], res.fun
    res = iterated_nelder_mead(f, x, cfg)
    return replace(
        res,
        evals=evals + res.evals,
        history=history + [(r + restarts, e, v) for r, e, v in res.history],
        initial_simplices=simplices + res.initial_simplices,
        inner_terminations=inner_ends + res.inner_terminations,
    )


def multi_start(
    f: Objective,
    starts: Sequence[Sequence[float]],
    cfg: IteratedConfig = IteratedConfig(),
    seed: int = 0,
    *,
    jitter: float = 0.0,
    workers: int = 1,
    levels: Sequence[Level] = (),
) -> OptResult:
    """Best of ``iterated_nelder_mead`` over several starting points.

    With ``levels`` each start goes through :func:`multilevel_nelder_mead`
    instead.

    With ``jitter > 0`` each start is displaced by Gaussian noise drawn from a
    stream keyed by ``(seed, start index)``.  Runs are independent, so
    ``workers > 1`` evaluates them in threads; the merge (min value, ties to
    the lower start index) does not depend on completion order.
    """
    if len(starts) < 1:
        raise ValueError("need at least one start")
    points = []
    for i, s in enumerate(starts):
        x = np.array(s, dtype=float).reshape(-1)
        if jitter > 0:
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, i])))
            x = x + jitter * rng.standard_normal(x.size)
        points.append(x)

    def run(x):
        if levels:
            return multilevel_nelder_mead(f, x, levels, cfg)
        return iterated_nelder_mead(f, x, cfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, points))
    else:
        results = [run(x) for x in points]
    best_i = min(range(len(results)), key=lambda i: (results[i].fun, i))
    best = results[best_i]
    ends = [t for r in results for t in r.inner_terminations]
    return replace(best, evals=sum(r.evals for r in results), starts=results, inner_terminations=ends)


def write_trace_csv(result: OptResult, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("restart", "eval", "best_value"))
        for restart, ev, val in result.history:
            w.writerow((restart, ev, repr(float(val))))
