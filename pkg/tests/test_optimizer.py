import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tvepi.optimizer import (
    SENTINEL,
    IteratedConfig,
    Level,
    NelderMeadConfig,
    Simplex,
    Termination,
    iterated_nelder_mead,
    multi_start,
    multilevel_nelder_mead,
    nelder_mead,
    write_trace_csv,
)


def staircase(x):
    return min(x[0] ** 2, (x[0] - 5.0) ** 2 + 0.5)


def rosenbrock(x):
    return (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2


TIGHT = NelderMeadConfig(x_tol=1e-10, f_tol=1e-14)


def test_parabola():
    res = nelder_mead(lambda x: (x[0] - 1) ** 2, [0.0], TIGHT)
    assert abs(res.x[0] - 1) < 1e-6
    assert res.termination is Termination.CONVERGED


def test_rosenbrock():
    res = nelder_mead(rosenbrock, [-1.2, 1.0], TIGHT)
    assert np.max(np.abs(res.x - 1)) < 1e-4


def test_start_at_minimum_does_not_worsen():
    f = lambda x: float(np.sum((x - 2) ** 2))
    x0 = np.full(3, 2.0)
    for res in (nelder_mead(f, x0), iterated_nelder_mead(f, x0), multi_start(f, [x0])):
        assert res.fun <= f(x0)


def test_nan_is_sentinel():
    res = nelder_mead(lambda x: float("nan") if x[0] > 0.05 else (x[0] + 1) ** 2, [0.0])
    assert res.fun < SENTINEL
    assert abs(res.x[0] + 1) < 1e-4


def test_config_invariants():
    with pytest.raises(ValueError):
        NelderMeadConfig(expansion=0.9)
    with pytest.raises(ValueError):
        NelderMeadConfig(contraction=1.0)
    with pytest.raises(ValueError):
        NelderMeadConfig(shrink=0.0)
    with pytest.raises(ValueError):
        IteratedConfig(max_restarts=0)
    adaptive = NelderMeadConfig.adaptive(10)
    assert (adaptive.expansion, adaptive.contraction, adaptive.shrink) == (1.2, 0.7, 0.9)


def test_convex_quadratic_stops_after_two_restarts():
    f = lambda x: float(np.sum((x - np.array([1.0, -2.0, 0.5])) ** 2))
    res = iterated_nelder_mead(f, np.zeros(3), IteratedConfig(inner=TIGHT))
    assert res.restarts == 2
    assert res.termination is Termination.CONVERGED
    assert res.trace[0][1] - res.trace[1][1] < 1e-6


def test_trace_monotone():
    res = iterated_nelder_mead(rosenbrock, [-1.2, 1.0], IteratedConfig(inner=NelderMeadConfig(max_evals=60)))
    values = [v for _, v in res.trace]
    assert all(b <= a for a, b in zip(values, values[1:]))


def test_staircase_plain_run_stays_local():
    res = nelder_mead(staircase, [4.0], NelderMeadConfig(initial_step=0.1))
    assert res.x[0] == pytest.approx(5.0, abs=1e-4)


def test_staircase_restart_escapes():
    cfg = IteratedConfig(inner=NelderMeadConfig(initial_step=0.1), restart_step=5.0)
    res = iterated_nelder_mead(staircase, [4.0], cfg)
    assert res.x[0] == pytest.approx(0.0, abs=1e-4)
    assert res.fun < 1e-8


def test_staircase_scale_two_restart_is_blind():
    # From 5, a scale-2 simplex is {5, 7}; the reflection lands on 3 where f(3) == f(7),
    # so no move is accepted outside the local basin.
    assert staircase([3.0]) == staircase([7.0])
    cfg = IteratedConfig(inner=NelderMeadConfig(initial_step=0.1), restart_step=2.0)
    assert iterated_nelder_mead(staircase, [4.0], cfg).x[0] == pytest.approx(5.0, abs=1e-4)


def test_multi_start_finds_global_basin():
    res = multi_start(staircase, [[-1.0], [6.0]], IteratedConfig(inner=NelderMeadConfig(initial_step=0.1)))
    assert abs(res.x[0]) < 1e-4
    assert res.fun <= min(s.fun for s in res.starts)
    assert res.evals == sum(s.evals for s in res.starts)


def test_single_start_equals_iterated():
    cfg = IteratedConfig(inner=NelderMeadConfig(max_evals=500))
    a = multi_start(rosenbrock, [[-1.2, 1.0]], cfg)
    b = iterated_nelder_mead(rosenbrock, [-1.2, 1.0], cfg)
    assert np.array_equal(a.x, b.x) and a.fun == b.fun and a.evals == b.evals


def test_multi_start_threads_match_serial():
    starts = [[-1.2, 1.0], [2.0, 2.0], [0.0, -1.0]]
    cfg = IteratedConfig(inner=NelderMeadConfig(max_evals=300))
    a = multi_start(rosenbrock, starts, cfg, seed=4, jitter=0.3)
    b = multi_start(rosenbrock, starts, cfg, seed=4, jitter=0.3, workers=3)
    assert np.array_equal(a.x, b.x) and a.fun == b.fun


def test_restart_simplices_are_full_size():
    step = np.array([0.3, 0.7])
    cfg = IteratedConfig(max_restarts=4, restart_improvement_tol=1e-300, inner=NelderMeadConfig(initial_step=step))
    res = iterated_nelder_mead(rosenbrock, [-1.2, 1.0], cfg)
    assert len(res.initial_simplices) == res.restarts > 1
    for simplex in res.initial_simplices:
        np.testing.assert_allclose(simplex[1:] - simplex[0], np.diag(step), rtol=0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.integers(20, 400))
def test_budget_respected(dim, restarts, max_evals):
    cfg = IteratedConfig(max_restarts=restarts, restart_improvement_tol=1e-300,
                         inner=NelderMeadConfig(max_evals=max_evals))
    f = lambda x: float(np.sum(np.abs(x - 0.37)) + np.sum(x**2))
    res = iterated_nelder_mead(f, np.ones(dim), cfg)
    assert res.evals <= restarts * max_evals + restarts * (dim + 1)


@st.composite
def random_objective(draw):
    dim = draw(st.integers(1, 5))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    a = rng.standard_normal((dim, dim))
    h = a @ a.T + 0.1 * np.eye(dim)
    centre = rng.standard_normal(dim) * 3
    wiggle = rng.uniform(0, 2)

    def f(x):
        d = x - centre
        return float(d @ h @ d + wiggle * np.sum(np.sin(3 * x)))

    return f, rng.standard_normal(dim) * 3


@settings(max_examples=100, deadline=None)
@given(random_objective())
def test_no_worsening(problem):
    f, x0 = problem
    cfg = IteratedConfig(max_restarts=3, inner=NelderMeadConfig(max_evals=300))
    assert nelder_mead(f, x0, cfg.inner).fun <= f(x0)
    assert iterated_nelder_mead(f, x0, cfg).fun <= f(x0)
    assert multi_start(f, [x0, x0 + 1], cfg).fun <= f(x0)


@settings(max_examples=30, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_translation_equivariance(c1, c2):
    c = np.array([c1, c2])
    res = nelder_mead(lambda x: rosenbrock(x - c), np.array([-1.2, 1.0]) + c, TIGHT)
    np.testing.assert_allclose(res.x, c + 1, atol=1e-4)


@given(st.permutations(range(5)))
def test_ordering_ignores_input_order_of_ties(perm):
    pts = np.arange(10.0).reshape(5, 2)
    vals = np.array([1.0, 0.0, 1.0, 1.0, 2.0])
    ages = np.arange(5)
    base = Simplex(pts, vals, ages).ordered()
    p = np.array(perm)
    shuffled = Simplex(pts[p], vals[p], ages[p]).ordered()
    np.testing.assert_array_equal(base.points, shuffled.points)
    assert base.ages.tolist() == [1, 0, 2, 3, 4]


def test_trace_csv(tmp_path):
    res = iterated_nelder_mead(rosenbrock, [-1.2, 1.0], IteratedConfig(max_restarts=2))
    write_trace_csv(res, tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "restart,eval,best_value"
    best = [float(line.split(",")[2]) for line in lines[1:]]
    assert best[-1] == res.fun


SMALL = IteratedConfig(max_restarts=3, inner=NelderMeadConfig(max_evals=400))


def test_level_restrict_is_group_mean():
    lv = Level(np.array([0, 0, 1, 1, 1, 2]), SMALL)
    assert lv.dim == 3
    np.testing.assert_allclose(lv.restrict(np.array([1.0, 3.0, 0.0, 3.0, 6.0, -2.0])), [2.0, 3.0, -2.0])


def test_multilevel_recovers_blocky_minimum():
    target = np.repeat([1.0, -2.0, 0.5], 4)
    f = lambda x: float(np.sum((x - target) ** 2))
    levels = [Level(np.arange(12) // 4, SMALL)]
    res = multilevel_nelder_mead(f, np.zeros(12), levels, IteratedConfig(inner=NelderMeadConfig(max_evals=20000)))
    np.testing.assert_allclose(res.x, target, atol=1e-3)
    assert len(res.inner_terminations) >= 2
    restarts = [r for r, _, _ in res.history]
    assert restarts == sorted(restarts)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 8))
def test_multilevel_never_worsens(seed, n):
    rng = np.random.default_rng(seed)
    c = rng.normal(size=n) * 3
    f = lambda x: float(np.sum(np.abs(x - c)) + np.sin(5 * x).sum())
    x0 = rng.normal(size=n)
    levels = [Level(np.arange(n) // 2, SMALL), Level(np.arange(n) * 0, SMALL)]
    assert multilevel_nelder_mead(f, x0, levels, SMALL).fun <= f(x0)


def test_multi_start_with_levels_is_deterministic():
    f = lambda x: float(np.sum((x - np.arange(6)) ** 2) + np.abs(np.diff(x)).sum())
    levels = [Level(np.arange(6) // 3, SMALL)]
    a = multi_start(f, [np.zeros(6), np.ones(6)], SMALL, levels=levels)
    b = multi_start(f, [np.zeros(6), np.ones(6)], SMALL, levels=levels)
    np.testing.assert_array_equal(a.x, b.x)
    assert a.fun == b.fun and a.evals == b.evals and len(a.starts) == 2
