import math

import numpy as np
import pytest

from gp_autotune.benchfn import (
    GridFunctionSource,
    MeasurementError,
    ResponseSource,
    make_grid_source,
)
from gp_autotune.space import ConfigPoint, linear_index, point_at
from gp_autotune.tuner import (
    BASELINES,
    BudgetConfig,
    RunTrace,
    default_design_size,
    run_baseline,
    run_bo4co,
)

from helpers import grid_space


def quadratic_1d_source():
    # deterministic 1D quadratic over 21 grid points, minimum at x = 3
    return make_grid_source(lambda v: (v[0] - 3.0) ** 2, ((-5.0, 5.0),), (21,))


def small_2d_source(noise=0.0, seed=None):
    return make_grid_source(
        lambda v: math.sin(v[0]) + 0.5 * v[1] ** 2,
        ((0.0, 6.0), (-2.0, 2.0)),
        (9, 7),
        noise_sigma=noise,
        seed=seed,
    )


def _assert_trace_shape(trace: RunTrace, space, budget):
    assert trace.n_evals == min(budget.n_max, space.size)
    best = -math.inf
    seen_t = 0
    for rec in trace.records:
        seen_t += 1
        assert rec.t == seen_t
        space.validate(rec.point)
    bests = trace.best_so_far()
    assert all(b <= a for a, b in zip(bests, bests[1:]))
    assert trace.best_y == bests[-1]


def test_budget_validation():
    sp = grid_space(4, 4)
    with pytest.raises(ValueError):
        BudgetConfig(n_max=20, n_init=3).validate(sp)
    with pytest.raises(ValueError):
        BudgetConfig(n_max=10, n_init=0).validate(sp)
    with pytest.raises(ValueError):
        BudgetConfig(n_max=10, n_init=11).validate(sp)
    BudgetConfig(n_max=10, n_init=10).validate(sp)  # all budget in design is fine


def test_default_design_size():
    assert default_design_size(grid_space(4, 4, 4)) == 9
    assert default_design_size(grid_space(2, 2)) == 3


def test_bo4co_full_enumeration_finds_exhaustive_minimum():
    space, src = small_2d_source()
    budget = BudgetConfig(n_max=space.size, n_init=5, seed=1)
    trace = run_bo4co(space, src, budget)
    _assert_trace_shape(trace, space, budget)
    assert trace.best_y == pytest.approx(src.ground_truth.value, abs=1e-12)
    assert len({r.point for r in trace.records}) == space.size


def test_bo4co_quadratic_reaches_grid_minimum():
    space, src = quadratic_1d_source()
    budget = BudgetConfig(n_max=10, n_init=3, seed=7)
    trace = run_bo4co(space, src, budget)
    _assert_trace_shape(trace, space, budget)
    # oracle: exhaustive enumeration of the 21 grid values
    exhaustive = min(src.measure(pt) for pt in space.iter_points())
    assert trace.best_y == pytest.approx(exhaustive, abs=1e-12)


def test_bo4co_never_measures_twice_and_records_kappa():
    space, src = small_2d_source()
    budget = BudgetConfig(n_max=20, n_init=6, seed=3)
    trace = run_bo4co(space, src, budget)
    points = [r.point for r in trace.records]
    assert len(set(points)) == len(points)
    for rec in trace.records:
        assert (rec.kappa is None) == (rec.t <= budget.n_init)
    kappas = [r.kappa for r in trace.records if r.kappa is not None]
    assert all(b > a for a, b in zip(kappas, kappas[1:]))  # adaptive default grows


def _decisions(trace: RunTrace):
    # wall-clock overhead is measurement metadata, not part of the
    # reproducibility contract
    return [(r.t, r.point, r.y, r.kappa, r.best_y) for r in trace.records]


def test_bo4co_reproducible_for_fixed_seed():
    space, src_a = small_2d_source(noise=0.1, seed=11)
    _, src_b = small_2d_source(noise=0.1, seed=11)
    budget = BudgetConfig(n_max=18, n_init=5, seed=42)
    ta = run_bo4co(space, src_a, budget)
    tb = run_bo4co(space, src_b, budget)
    assert _decisions(ta) == _decisions(tb)
    assert ta.best_point == tb.best_point


def test_bo4co_all_budget_in_design():
    space, src = small_2d_source()
    budget = BudgetConfig(n_max=7, n_init=7, seed=5)
    trace = run_bo4co(space, src, budget)
    assert trace.n_evals == 7
    assert all(r.kappa is None for r in trace.records)
    assert trace.best_y == min(r.y for r in trace.records)


class FlakySource(ResponseSource):
    """Fails permanently on one configured point, succeeds elsewhere."""

    def __init__(self, inner, bad_index):
        super().__init__(inner.space)
        self.inner = inner
        self.bad_index = bad_index
        self.ground_truth = inner.ground_truth

    def measure(self, point):
        if linear_index(self.space, point) == self.bad_index:
            raise MeasurementError("synthetic failure")
        return self.inner.measure(point)


def test_bo4co_failed_measurement_becomes_inf_and_run_continues():
    space, src = small_2d_source()
    bad = linear_index(space, src.ground_truth.point)
    flaky = FlakySource(src, bad)
    budget = BudgetConfig(n_max=space.size, n_init=5, seed=13)
    trace = run_bo4co(space, flaky, budget)
    assert trace.n_evals == space.size
    inf_records = [r for r in trace.records if math.isinf(r.y)]
    assert len(inf_records) == 1
    assert linear_index(space, inf_records[0].point) == bad
    # best over the remaining points: second-smallest grid value
    values = sorted(
        src.measure(pt) for pt in space.iter_points() if linear_index(space, pt) != bad
    )
    assert trace.best_y == pytest.approx(values[0], abs=1e-12)


# -------------------------------------------------------------- baselines


def test_unknown_baseline():
    space, src = small_2d_source()
    with pytest.raises(KeyError):
        run_baseline("ga", space, src, BudgetConfig(n_max=10, n_init=1))


@pytest.mark.parametrize("kind", sorted(BASELINES))
def test_baseline_consumes_exact_budget(kind):
    space, src = small_2d_source()
    budget = BudgetConfig(n_max=25, n_init=1, seed=3)
    trace = run_baseline(kind, space, src, budget)
    _assert_trace_shape(trace, space, budget)
    points = [r.point for r in trace.records]
    assert len(set(points)) == len(points)  # budget spent on distinct points only


@pytest.mark.parametrize("kind", sorted(BASELINES))
def test_baseline_full_budget_finds_minimum(kind):
    space, src = small_2d_source()
    budget = BudgetConfig(n_max=space.size, n_init=1, seed=9)
    trace = run_baseline(kind, space, src, budget)
    assert trace.n_evals == space.size
    assert trace.best_y == pytest.approx(src.ground_truth.value, abs=1e-12)


@pytest.mark.parametrize("kind", sorted(BASELINES))
def test_baseline_reproducibility(kind):
    space, src = small_2d_source()
    budget = BudgetConfig(n_max=30, n_init=1, seed=21)
    ta = run_baseline(kind, space, src, budget)
    tb = run_baseline(kind, space, src, budget)
    assert _decisions(ta) == _decisions(tb)


def test_hill_descends_unimodal_1d():
    space, src = quadratic_1d_source()
    for seed in range(10):
        budget = BudgetConfig(n_max=space.size, n_init=1, seed=seed)
        trace = run_baseline("hill", space, src, budget)
        # steepest descent reaches the grid minimum well before exhaustion
        first_hit = next(
            r.t for r in trace.records if r.y == pytest.approx(src.ground_truth.value)
        )
        assert first_hit <= 2 * space.size
        assert trace.best_y == pytest.approx(src.ground_truth.value)
