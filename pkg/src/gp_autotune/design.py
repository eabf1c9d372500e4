"""Latin hypercube initial designs on discrete option grids.

Strata are defined on option *indices*, not raw values, so logarithmically
spaced grids are stratified by position. For a dimension with m options and a
design of size n:

* m >= n: the index range [0, m) is split into n equal-width strata
  [j*m/n, (j+1)*m/n); each stratum contributes exactly one sample.
* m < n: options are reused as evenly as possible (counts differ by at most 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gp_autotune.space import ConfigPoint, ConfigSpace, linear_index, point_at

_REPERMUTE_TRIES = 100
_REJECTION_TRIES = 10_000


class InfeasibleDesignError(ValueError):
    """Requested more design points than the space holds."""


@dataclass(frozen=True)
class InitialDesign:
    """A set of distinct starting configurations."""

    points: tuple[ConfigPoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        if len(set(self.points)) != len(self.points):
            raise ValueError("design points must be distinct")
        if not self.points:
            raise ValueError("design must contain at least one point")

    @property
    def n(self) -> int:
        return len(self.points)


def stratum_of(index: int, n_options: int, n_samples: int) -> int:
    """Which of the ``n_samples`` equal-width index strata ``index`` falls in."""
    return index * n_samples // n_options


def _sample_column(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """One dimension's index assignments for an n-point design."""
    if m >= n:
        # integers inside stratum j = [j*m/n, (j+1)*m/n); width >= 1 so never empty
        lo = [-(-j * m // n) for j in range(n)]  # ceil(j*m/n)
        hi = [-(-(j + 1) * m // n) for j in range(n)]
        col = np.array([rng.integers(a, b) for a, b in zip(lo, hi)])
    else:
        base, extra = divmod(n, m)
        counts = np.full(m, base)
        counts[rng.choice(m, size=extra, replace=False)] += 1
        col = np.repeat(np.arange(m), counts)
    return rng.permutation(col)


def lhd_sample(space: ConfigSpace, n: int, rng: np.random.Generator) -> InitialDesign:
    """Draw an n-point Latin hypercube design over ``space``.

    Deterministic for a given generator state. Row collisions are resolved by
    re-permuting columns a bounded number of times, then by replacing the
    clashing rows with uniformly drawn unused points.
    """
    if n < 1:
        raise InfeasibleDesignError("design size must be >= 1")
    if n > space.size:
        raise InfeasibleDesignError(f"design size {n} exceeds space size {space.size}")

    sizes = [len(p) for p in space.params]
    cols = [_sample_column(m, n, rng) for m in sizes]
    for _ in range(_REPERMUTE_TRIES):
        rows = [tuple(int(cols[d][i]) for d in range(space.dim)) for i in range(n)]
        if len(set(rows)) == n:
            return InitialDesign(tuple(ConfigPoint(r) for r in rows))
        dim = int(rng.integers(space.dim))
        cols[dim] = rng.permutation(cols[dim])

    # fallback: keep first occurrences, fill the rest uniformly without replacement
    chosen: dict[tuple[int, ...], None] = {}
    for r in rows:
        chosen.setdefault(r, None)
    taken = {linear_index(space, ConfigPoint(r)) for r in chosen}
    while len(chosen) < n:
        idx = None
        for _ in range(_REJECTION_TRIES):
            cand = int(rng.integers(space.size))
            if cand not in taken:
                idx = cand
                break
        if idx is None:  # tiny space: enumerate the complement
            free = sorted(set(range(space.size)) - taken)
            idx = int(rng.choice(free))
        taken.add(idx)
        chosen[point_at(space, idx).coords] = None
    return InitialDesign(tuple(ConfigPoint(r) for r in chosen))
