"""The sequential tuning loop and the classical search baselines.

One run: measure a Latin-hypercube design, fit the GP surrogate, then loop
"relearn (every N_l-th evaluation) -> select by LCB -> measure -> refit" until
the budget is spent. Evaluation indices t count from 1 over *all*
measurements, so with n initial points the loop runs t = n+1 .. N_max and the
hyperparameters are relearned whenever t is a multiple of the learning cycle.
The adaptive exploration weight is evaluated at the same global t.

Failed measurements are retried once, then recorded as +inf: they consume
budget and stay in the trace, but never enter the GP training set. If an
incremental refit hits a conditioning failure the previous model is kept and
the next point is chosen by pure variance maximization.

Baselines consume exactly the same budget and produce the same trace shape.
Revisiting an already-measured configuration replays the cached value without
consuming budget; a stall guard force-measures a random unmeasured point when
a baseline keeps proposing only cached ones.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from gp_autotune.acquisition import (
    EncodedGrid,
    KappaSchedule,
    SpaceExhaustedError,
    kappa_at,
    select_next,
)
from gp_autotune.benchfn import MeasurementError, ResponseSource
from gp_autotune.design import lhd_sample
from gp_autotune.gp import (
    ConditioningError,
    GpModel,
    Hyperparams,
    LearningError,
    MeanSpec,
    ObservationSet,
    fit,
    kernel_spec_for_space,
    learn_hyperparams,
    linear_mean,
    refit_with,
)
from gp_autotune.space import ConfigPoint, ConfigSpace, linear_index, neighborhood, point_at

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BudgetConfig:
    """Evaluation budget and bookkeeping knobs for one run."""

    n_max: int
    n_init: int
    learn_cycle: int = 10
    restarts: int = 3
    seed: int = 0

    def validate(self, space: ConfigSpace) -> None:
        # n_init == n_max is allowed: all budget in the design, loop never runs
        if not 1 <= self.n_init <= self.n_max:
            raise ValueError("need 1 <= n_init <= n_max")
        if self.n_max > space.size:
            raise ValueError(f"budget {self.n_max} exceeds space size {space.size}")
        if self.learn_cycle < 1:
            raise ValueError("learn_cycle must be >= 1")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


def default_design_size(space: ConfigSpace) -> int:
    return min(max(space.dim + 1, 9), max(space.size - 1, 1))


@dataclass(frozen=True)
class TraceRecord:
    t: int
    point: ConfigPoint
    y: float
    kappa: float | None
    best_y: float
    overhead_ms: float


@dataclass
class RunTrace:
    """Per-iteration log of one run plus its final answer."""

    algorithm: str
    seed: int
    records: list[TraceRecord] = field(default_factory=list)
    best_point: ConfigPoint | None = None
    best_y: float = math.inf
    hyperparams: Hyperparams | None = None

    @property
    def n_evals(self) -> int:
        return len(self.records)

    def best_so_far(self) -> list[float]:
        return [r.best_y for r in self.records]

    def record(self, point: ConfigPoint, y: float, kappa: float | None, overhead_ms: float) -> None:
        if y < self.best_y:
            self.best_y = y
            self.best_point = point
        self.records.append(
            TraceRecord(len(self.records) + 1, point, y, kappa, self.best_y, overhead_ms)
        )


def _measure_with_retry(source: ResponseSource, point: ConfigPoint) -> float:
    try:
        return float(source.measure(point))
    except MeasurementError as exc:
        logger.warning("measurement failed at %s (%s); retrying once", point.coords, exc)
    try:
        return float(source.measure(point))
    except MeasurementError as exc:
        logger.warning("retry failed at %s (%s); recording +inf", point.coords, exc)
        return math.inf


def run_bo4co(
    space: ConfigSpace,
    source: ResponseSource,
    budget: BudgetConfig,
    kernel_family: str = "matern12",
    mean_form: str = "constant",
    kappa: KappaSchedule | None = None,
    noise_var: float | None = None,
    explore_only: bool = False,
) -> RunTrace:
    """One GP-guided tuning run.

    ``noise_var`` fixes the observation-noise variance (e.g. estimated from
    historical replicates); None lets the learner treat it as a hyperparameter.
    ``explore_only`` drops the posterior mean from the selection criterion
    (sensitivity study only).
    """
    budget.validate(space)
    if kappa is None:
        kappa = KappaSchedule.adaptive(space.size)
    rng = np.random.default_rng(budget.seed)
    trace = RunTrace(algorithm="bo4co", seed=budget.seed)

    design = lhd_sample(space, budget.n_init, rng)
    points: list[ConfigPoint] = []
    responses: list[float] = []
    observed: set[ConfigPoint] = set()
    for x in design.points:
        y = _measure_with_retry(source, x)
        observed.add(x)
        trace.record(x, y, None, 0.0)
        if math.isfinite(y):
            points.append(x)
            responses.append(y)

    learn_noise = noise_var is None
    hyper = _initial_hyper(space, kernel_family, mean_form, responses, noise_var)
    obs = ObservationSet(space, tuple(points), tuple(responses))
    model = fit(obs, hyper)
    grid = EncodedGrid.build(space, model.encoder)
    trace.hyperparams = hyper

    force_explore = False
    for t in range(budget.n_init + 1, budget.n_max + 1):
        tick = time.perf_counter()
        if t % budget.learn_cycle == 0 and len(model.train) >= 2:
            try:
                hyper = learn_hyperparams(
                    model.train,
                    model.hyper,
                    restarts=budget.restarts,
                    rng=rng,
                    learn_noise=learn_noise,
                )
                model = fit(model.train, hyper)
                trace.hyperparams = hyper
            except (LearningError, ConditioningError) as exc:
                logger.warning("t=%d: hyperparameter learning failed (%s); keeping previous", t, exc)
        kappa_t = kappa_at(kappa, t)
        try:
            x_t = select_next(
                model, space, observed, kappa_t, grid,
                explore_only=explore_only or force_explore,
            )
        except SpaceExhaustedError:
            logger.info("t=%d: space exhausted; stopping early", t)
            break
        force_explore = False
        select_ms = (time.perf_counter() - tick) * 1000.0

        y_t = _measure_with_retry(source, x_t)
        observed.add(x_t)

        tick = time.perf_counter()
        if math.isfinite(y_t):
            try:
                model = refit_with(model, x_t, y_t)
            except ConditioningError as exc:
                logger.warning(
                    "t=%d: refit conditioning failure (%s); keeping previous model "
                    "and switching to pure exploration",
                    t,
                    exc,
                )
                force_explore = True
        refit_ms = (time.perf_counter() - tick) * 1000.0
        trace.record(x_t, y_t, kappa_t, select_ms + refit_ms)

    trace.hyperparams = model.hyper
    return trace


def _initial_hyper(
    space: ConfigSpace,
    kernel_family: str,
    mean_form: str,
    responses: list[float],
    noise_var: float | None,
) -> Hyperparams:
    finite = [y for y in responses if math.isfinite(y)]
    spread = float(np.std(finite)) if len(finite) >= 2 else 1.0
    amplitude = max(spread, 1e-3)
    kernel = kernel_spec_for_space(space, kernel_family, amplitude)
    mean = linear_mean(space.dim) if mean_form == "linear" else MeanSpec("constant", 0.0)
    if noise_var is None:
        noise_var = max(1e-4 * spread**2, 1e-8)
    return Hyperparams(kernel=kernel, mean=mean, noise_var=noise_var)


# --------------------------------------------------------------- baselines


@dataclass(frozen=True)
class BaselineKnobs:
    """Auditable constants of the classical baselines."""

    sa_cooling: float = 0.95
    sa_target_accept: float = 0.8
    sa_calibration_steps: int = 5
    ps_initial_step: int | None = None  # None: largest dimension // 4
    drift_rate: float = 0.5
    drift_window: int | None = None  # None: per-dimension max(1, m // 4)
    stall_cap: int = 200


class _BudgetDone(Exception):
    pass


class _Harness:
    """Budget accounting shared by all baselines.

    ``ask`` returns the response for a proposal: cached values replay for
    free, new points consume budget. Once the budget (or the grid) is
    exhausted it raises to unwind the strategy.
    """

    def __init__(self, space, source, budget, trace, rng, knobs):
        self.space = space
        self.source = source
        self.budget = budget
        self.trace = trace
        self.rng = rng
        self.knobs = knobs
        self.cache: dict[ConfigPoint, float] = {}
        self._replays = 0

    def ask(self, point: ConfigPoint) -> float:
        if point in self.cache:
            self._replays += 1
            if self._replays > self.knobs.stall_cap:
                self._force_unmeasured()
                self._replays = 0
            return self.cache[point]
        self._replays = 0
        self._check_budget()
        y = _measure_with_retry(self.source, point)
        self.cache[point] = y
        self.trace.record(point, y, None, 0.0)
        return y

    def random_unmeasured(self) -> ConfigPoint:
        if len(self.cache) >= self.space.size:
            raise _BudgetDone
        for _ in range(10_000):
            pt = point_at(self.space, int(self.rng.integers(self.space.size)))
            if pt not in self.cache:
                return pt
        free = [i for i in range(self.space.size) if point_at(self.space, i) not in self.cache]
        return point_at(self.space, int(self.rng.choice(free)))

    def _force_unmeasured(self) -> None:
        # stall guard: budget must keep moving even if a strategy cycles
        # through cached points forever
        self.ask(self.random_unmeasured())

    def _check_budget(self) -> None:
        if self.trace.n_evals >= self.budget.n_max or len(self.cache) >= self.space.size:
            raise _BudgetDone


def _sorted_neighbors(space: ConfigSpace, point: ConfigPoint, radius: int = 1) -> list[ConfigPoint]:
    return sorted(neighborhood(space, point, radius), key=lambda p: linear_index(space, p))


def _baseline_random(h: _Harness) -> None:
    order = h.rng.permutation(h.space.size)
    for idx in order:
        h.ask(point_at(h.space, int(idx)))
    raise _BudgetDone


def _baseline_hill(h: _Harness) -> None:
    cur = h.random_unmeasured()
    cur_y = h.ask(cur)
    while True:
        best, best_y = None, cur_y
        for nb in _sorted_neighbors(h.space, cur):
            y = h.ask(nb)
            if y < best_y:
                best, best_y = nb, y
        if best is None:  # local minimum: random restart
            cur = h.random_unmeasured()
            cur_y = h.ask(cur)
        else:
            cur, cur_y = best, best_y


def _baseline_sa(h: _Harness) -> None:
    knobs = h.knobs
    cur = h.random_unmeasured()
    cur_y = h.ask(cur)
    uphill: list[float] = []
    # calibration: accept everything, collect uphill deltas to set T0 near the
    # target initial acceptance probability
    for _ in range(knobs.sa_calibration_steps):
        nbs = _sorted_neighbors(h.space, cur)
        nxt = nbs[int(h.rng.integers(len(nbs)))]
        y = h.ask(nxt)
        if math.isfinite(y) and math.isfinite(cur_y) and y > cur_y:
            uphill.append(y - cur_y)
        cur, cur_y = nxt, y
    mean_up = float(np.mean(uphill)) if uphill else 1.0
    t0 = max(mean_up / -math.log(knobs.sa_target_accept), 1e-9)
    k = 0
    while True:
        temp = max(t0 * knobs.sa_cooling**k, 1e-12)
        nbs = _sorted_neighbors(h.space, cur)
        nxt = nbs[int(h.rng.integers(len(nbs)))]
        y = h.ask(nxt)
        delta = y - cur_y
        if delta < 0 or (math.isfinite(delta) and h.rng.random() < math.exp(-delta / temp)):
            cur, cur_y = nxt, y
        k += 1


def _baseline_ps(h: _Harness) -> None:
    sizes = [len(p) for p in h.space.params]
    init_step = h.knobs.ps_initial_step or max(1, max(sizes) // 4)
    cur = h.random_unmeasured()
    cur_y = h.ask(cur)
    step = init_step
    while True:
        improved = False
        for dim in range(h.space.dim):
            for direction in (1, -1):
                c = list(cur.coords)
                c[dim] += direction * step
                if not 0 <= c[dim] < sizes[dim]:
                    continue
                cand = ConfigPoint(tuple(c))
                y = h.ask(cand)
                if y < cur_y:
                    cur, cur_y = cand, y
                    improved = True
                    break
            if improved:
                break
        if not improved:
            step //= 2
            if step < 1:  # pattern exhausted: restart elsewhere
                cur = h.random_unmeasured()
                cur_y = h.ask(cur)
                step = init_step


def _baseline_drift(h: _Harness) -> None:
    sizes = np.array([len(p) for p in h.space.params])
    windows = (
        np.full(h.space.dim, h.knobs.drift_window)
        if h.knobs.drift_window
        else np.maximum(1, sizes // 4)
    )
    center = np.array(h.random_unmeasured().coords, dtype=float)
    incumbent = ConfigPoint(tuple(int(c) for c in center))
    incumbent_y = h.ask(incumbent)
    while True:
        offset = np.array([h.rng.integers(-w, w + 1) for w in windows])
        coords = np.clip(np.rint(center) + offset, 0, sizes - 1).astype(int)
        cand = ConfigPoint(tuple(coords))
        y = h.ask(cand)
        if y < incumbent_y:
            incumbent, incumbent_y = cand, y
        center = center + h.knobs.drift_rate * (np.array(incumbent.coords) - center)


BASELINES = {
    "random": _baseline_random,
    "hill": _baseline_hill,
    "sa": _baseline_sa,
    "ps": _baseline_ps,
    "drift": _baseline_drift,
    # "ga" intentionally absent; register a strategy here to add one
}


def run_baseline(
    kind: str,
    space: ConfigSpace,
    source: ResponseSource,
    budget: BudgetConfig,
    rng: np.random.Generator | None = None,
    knobs: BaselineKnobs | None = None,
) -> RunTrace:
    """Run one classical baseline under the same budget accounting as bo4co."""
    strategy = BASELINES.get(kind)
    if strategy is None:
        raise KeyError(f"unknown baseline {kind!r}; choices: {sorted(BASELINES)}")
    budget.validate(space)
    rng = rng if rng is not None else np.random.default_rng(budget.seed)
    trace = RunTrace(algorithm=kind, seed=budget.seed)
    harness = _Harness(space, source, budget, trace, rng, knobs or BaselineKnobs())
    try:
        strategy(harness)
    except _BudgetDone:
        pass
    return trace
