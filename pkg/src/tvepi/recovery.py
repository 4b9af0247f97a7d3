"""Scores for how well an estimated step path matches a known step path.

Two numbers summarize recovery of a piecewise-constant truth:

* change-point location error, in grid steps: the estimate is segmented into
  the same number of pieces as the truth by exact least-squares dynamic
  programming, and each fitted break is compared with the true break;
* plateau-level relative error: the median of the estimate over each true
  plateau (away from its edges) against the true level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["change_points", "segment", "PathRecovery", "score_path"]


def change_points(values) -> list[int]:
    """Indices ``j`` where ``values[j] != values[j - 1]``."""
    v = np.asarray(values, dtype=float)
    return [int(j) for j in np.flatnonzero(np.diff(v) != 0) + 1]


def segment(values, n_breaks: int) -> list[int]:
    """Break indices of the best ``n_breaks + 1``-piece constant L2 fit."""
    y = np.asarray(values, dtype=float)
    n = y.size
    if n_breaks == 0:
        return []
    c1 = np.concatenate(([0.0], np.cumsum(y)))
    c2 = np.concatenate(([0.0], np.cumsum(y * y)))

    def cost(i, j):  # squared error of y[i:j] about its mean
        s = c1[j] - c1[i]
        return c2[j] - c2[i] - s * s / (j - i)

    k_max = n_breaks + 1
    best = np.full((k_max + 1, n + 1), np.inf)
    arg = np.zeros((k_max + 1, n + 1), dtype=int)
    best[0, 0] = 0.0
    for k in range(1, k_max + 1):
        for j in range(k, n + 1):
            cands = [best[k - 1, i] + cost(i, j) for i in range(k - 1, j)]
            i_best = int(np.argmin(cands))
            best[k, j] = cands[i_best]
            arg[k, j] = i_best + k - 1
    breaks, j = [], n
    for k in range(k_max, 1, -1):
        j = arg[k, j]
        breaks.append(int(j))
    return sorted(breaks)


@dataclass
class PathRecovery:
    true_breaks: list[int]
    fitted_breaks: list[int]
    location_errors: list[int]
    true_levels: list[float]
    fitted_levels: list[float]
    level_errors: list[float]

    @property
    def max_location_error(self) -> int:
        return max(self.location_errors, default=0)

    @property
    def max_level_error(self) -> float:
        return max(self.level_errors, default=0.0)

    def passes(self, location_tol: int, level_tol: float) -> bool:
        return self.max_location_error <= location_tol and self.max_level_error <= level_tol

    def to_dict(self) -> dict:
        return {
            "true_breaks": self.true_breaks,
            "fitted_breaks": self.fitted_breaks,
            "location_errors": self.location_errors,
            "true_levels": self.true_levels,
            "fitted_levels": self.fitted_levels,
            "level_errors": self.level_errors,
        }


def score_path(estimate, truth, margin: int = 3) -> PathRecovery:
    """Compare an estimated path with a step-function truth of equal length.

    ``margin`` steps at each end of a true plateau are ignored when reading
    off the fitted level, so a slightly misplaced jump does not bias it.
    """
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError("estimate and truth must have the same length")
    tb = change_points(tru)
    fb = segment(est, len(tb))
    loc = [abs(a - b) for a, b in zip(tb, fb)]
    edges = [0] + tb + [tru.size]
    t_lv, f_lv, errs = [], [], []
    for a, b in zip(edges[:-1], edges[1:]):
        lo, hi = a + (margin if a > 0 else 0), b - (margin if b < tru.size else 0)
        if hi <= lo:
            lo, hi = a, b
        level = float(tru[a])
        fitted = float(np.median(est[lo:hi]))
        t_lv.append(level)
        f_lv.append(fitted)
        errs.append(abs(fitted - level) / abs(level))
    return PathRecovery(tb, fb, loc, t_lv, f_lv, errs)
