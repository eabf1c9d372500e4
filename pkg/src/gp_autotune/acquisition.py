"""Selection of the next configuration: LCB scores over the unobserved grid.

The exploration weight follows the schedule
``kappa_t = sqrt(2 log(|X| zeta(r) t^r / eps))`` in adaptive mode, which grows
without bound in t so later iterations lean toward exploration. Selection
scans the whole finite grid (spaces here are at most a few thousand points),
which makes the argmin exact and the tie-break deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gp_autotune.gp import GpModel, SpaceEncoder, predict_batch
from gp_autotune.space import ConfigPoint, ConfigSpace, linear_index, point_at

_ZETA_TERMS = 1000


class ScheduleError(ValueError):
    """The adaptive schedule's log argument left its valid range."""


class SpaceExhaustedError(RuntimeError):
    """Every grid point has already been measured."""


def riemann_zeta(r: int) -> float:
    """zeta(r) by direct summation with an Euler-Maclaurin tail.

    Absolute error well below 1e-12 for every integer r >= 2.
    """
    if r < 2:
        raise ValueError("zeta series requires r >= 2")
    n = _ZETA_TERMS
    head = sum(k ** (-float(r)) for k in range(1, n))
    tail = (
        n ** (1.0 - r) / (r - 1.0)
        + 0.5 * n ** (-float(r))
        + r / 12.0 * n ** (-(r + 1.0))
        - r * (r + 1) * (r + 2) / 720.0 * n ** (-(r + 3.0))
    )
    return head + tail


@dataclass(frozen=True)
class KappaSchedule:
    """Exploration weight: a constant, or the adaptive sqrt-log growth curve."""

    mode: str
    kappa: float = 0.0
    epsilon: float = 0.1
    r: int = 2
    space_size: int = 2

    def __post_init__(self):
        if self.mode not in ("constant", "adaptive"):
            raise ValueError(f"unknown kappa mode {self.mode!r}")
        if self.mode == "constant" and self.kappa < 0:
            raise ValueError("constant kappa must be nonnegative")
        if self.mode == "adaptive":
            if not 0 < self.epsilon < 1:
                raise ValueError("epsilon must lie in (0, 1)")
            if self.r < 2:
                raise ValueError("r must be an integer >= 2")
            if self.space_size < 1:
                raise ValueError("space size must be positive")

    @staticmethod
    def constant(kappa: float) -> "KappaSchedule":
        return KappaSchedule(mode="constant", kappa=kappa)

    @staticmethod
    def adaptive(space_size: int, epsilon: float = 0.1, r: int = 2) -> "KappaSchedule":
        return KappaSchedule(mode="adaptive", epsilon=epsilon, r=r, space_size=space_size)


def kappa_at(schedule: KappaSchedule, t: int) -> float:
    """Exploration weight for evaluation index ``t`` (1-based)."""
    if t < 1:
        raise ValueError("t must be >= 1")
    if schedule.mode == "constant":
        return schedule.kappa
    arg = schedule.space_size * riemann_zeta(schedule.r) * t**schedule.r / schedule.epsilon
    if arg <= 1.0:
        raise ScheduleError(f"log argument {arg} <= 1; schedule undefined")
    return math.sqrt(2.0 * math.log(arg))


def lcb(mean: float, stddev: float, kappa: float) -> float:
    """Lower confidence bound mean - kappa * stddev (lower is more promising)."""
    if stddev < 0:
        raise ValueError("stddev must be nonnegative")
    return mean - kappa * stddev


@dataclass(frozen=True)
class EncodedGrid:
    """The whole grid pre-encoded for batch prediction, in linear-index order."""

    space: ConfigSpace
    features: np.ndarray

    @staticmethod
    def build(space: ConfigSpace, encoder: SpaceEncoder) -> "EncodedGrid":
        sizes = [len(p) for p in space.params]
        coords = np.stack(
            [g.ravel() for g in np.meshgrid(*[np.arange(m) for m in sizes], indexing="ij")],
            axis=1,
        )
        return EncodedGrid(space=space, features=encoder.encode_index_matrix(coords))


def grid_scores(
    model: GpModel,
    space: ConfigSpace,
    kappa: float,
    grid: EncodedGrid | None = None,
    explore_only: bool = False,
) -> np.ndarray:
    """LCB value of every grid point, in linear-index order."""
    if grid is None:
        grid = EncodedGrid.build(space, model.encoder)
    means, variances = predict_batch(model, grid.features)
    stddev = np.sqrt(variances)
    if explore_only:
        return -kappa * stddev
    return means - kappa * stddev


def select_next(
    model: GpModel,
    space: ConfigSpace,
    observed: set[ConfigPoint],
    kappa: float,
    grid: EncodedGrid | None = None,
    explore_only: bool = False,
) -> ConfigPoint:
    """Unobserved grid point minimizing the LCB; ties broken by linear index.

    ``explore_only`` drops the posterior mean from the criterion, leaving pure
    variance maximization (used by the sensitivity study and as a fallback
    after conditioning failures).
    """
    if len(observed) >= space.size:
        raise SpaceExhaustedError("all configurations have been measured")
    scores = grid_scores(model, space, kappa, grid, explore_only)
    for pt in observed:
        scores[linear_index(space, pt)] = np.inf
    best = int(np.argmin(scores))  # first minimum = smallest linear index
    if not np.isfinite(scores[best]):
        raise SpaceExhaustedError("all configurations have been measured")
    return point_at(space, best)
