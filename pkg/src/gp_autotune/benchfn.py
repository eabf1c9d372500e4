"""Response sources: analytic test functions on discrete grids, tabular
dataset playback, and a per-evaluation external command hook.

Lower responses are always better; a maximization problem should be negated
at the source boundary. Noisy sources own their RNG, so independent
replications must construct independent sources.
"""

from __future__ import annotations

import math
import shlex
import subprocess
from dataclasses import dataclass

import numpy as np

from gp_autotune.space import (
    INTEGER_GRID,
    ConfigPoint,
    ConfigSpace,
    ParameterDef,
    TabularDataset,
    linear_index,
    point_at,
)


class DomainError(ValueError):
    """Input lies outside a benchmark function's standard domain."""


class CoverageError(ValueError):
    """A playback dataset does not cover its whole configuration space."""


class MeasurementError(RuntimeError):
    """One measurement failed; the caller may retry."""


class SourceUnavailableError(RuntimeError):
    """The measurement backend itself is broken (no point retrying)."""


def _check_domain(name, x, bounds):
    x = np.asarray(x, dtype=float)
    if x.shape != (len(bounds),):
        raise DomainError(f"{name} expects {len(bounds)} coordinates, got {x.shape}")
    for v, (lo, hi) in zip(x, bounds):
        if not lo <= v <= hi:
            raise DomainError(f"{name}: coordinate {v} outside [{lo}, {hi}]")
    return x


BRANIN_BOUNDS = ((-5.0, 10.0), (0.0, 15.0))
DIXON2_BOUNDS = ((-10.0, 10.0), (-10.0, 10.0))
HARTMANN3_BOUNDS = ((0.0, 1.0),) * 3
ROSENBROCK5_BOUNDS = ((-5.0, 10.0),) * 5


def branin(x1: float, x2: float) -> float:
    """Branin-Hoo on [-5, 10] x [0, 15]; three equal global minima ~0.397887."""
    _check_domain("branin", (x1, x2), BRANIN_BOUNDS)
    a = 1.0
    b = 5.1 / (4 * math.pi**2)
    c = 5 / math.pi
    r = 6.0
    s = 10.0
    t = 1 / (8 * math.pi)
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1 - t) * math.cos(x1) + s


BRANIN_MINIMIZERS = ((-math.pi, 12.275), (math.pi, 2.275), (9.42478, 2.475))

_H3_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H3_A = np.array(
    [
        [3.0, 10.0, 30.0],
        [0.1, 10.0, 35.0],
        [3.0, 10.0, 30.0],
        [0.1, 10.0, 35.0],
    ]
)
_H3_P = 1e-4 * np.array(
    [
        [3689, 1170, 2673],
        [4699, 4387, 7470],
        [1091, 8732, 5547],
        [381, 5743, 8828],
    ]
)


def hartmann3(x) -> float:
    """Hartmann 3D on [0, 1]^3; global minimum ~ -3.86278."""
    x = _check_domain("hartmann3", x, HARTMANN3_BOUNDS)
    inner = (_H3_A * (x[None, :] - _H3_P) ** 2).sum(axis=1)
    return float(-(_H3_ALPHA * np.exp(-inner)).sum())


def rosenbrock(x) -> float:
    """Rosenbrock valley on [-5, 10]^d (d >= 2); global minimum 0 at (1, ..., 1)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise DomainError("rosenbrock expects a vector of dimension >= 2")
    _check_domain("rosenbrock", x, ((-5.0, 10.0),) * x.size)
    return float(np.sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def dixon2(x1: float, x2: float) -> float:
    """Dixon-Price restricted to 2D on [-10, 10]^2; minimum 0 at (1, 2^-1/2)."""
    _check_domain("dixon2", (x1, x2), DIXON2_BOUNDS)
    return (x1 - 1.0) ** 2 + 2.0 * (2.0 * x2**2 - x1) ** 2


@dataclass(frozen=True)
class BenchmarkFn:
    name: str
    fn: object
    bounds: tuple[tuple[float, float], ...]
    default_grid: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.bounds)


# default grid sizes keep |X| near the tabular datasets' 756..3840 range so
# the exhaustive acquisition scan stays cheap
BENCHMARKS = {
    "branin": BenchmarkFn("branin", lambda x: branin(x[0], x[1]), BRANIN_BOUNDS, (51, 51)),
    "dixon2": BenchmarkFn("dixon2", lambda x: dixon2(x[0], x[1]), DIXON2_BOUNDS, (51, 51)),
    "hartmann3": BenchmarkFn("hartmann3", hartmann3, HARTMANN3_BOUNDS, (16, 16, 16)),
    "rosenbrock5": BenchmarkFn("rosenbrock5", rosenbrock, ROSENBROCK5_BOUNDS, (6,) * 5),
}


@dataclass(frozen=True)
class GroundTruth:
    value: float
    point: ConfigPoint
    raw_values: tuple


class ResponseSource:
    """Measurement backend defined over one configuration space."""

    kind = "abstract"

    def __init__(self, space: ConfigSpace):
        self.space = space
        self.ground_truth: GroundTruth | None = None

    def measure(self, point: ConfigPoint) -> float:
        raise NotImplementedError


class GridFunctionSource(ResponseSource):
    """Analytic function sampled on a uniform grid, plus optional Gaussian noise.

    All grid values are evaluated once up front; the exhaustive optimum becomes
    the attached ground truth.
    """

    kind = "analytic"

    def __init__(
        self,
        space: ConfigSpace,
        values: np.ndarray,
        noise_sigma: float = 0.0,
        seed: int | None = None,
    ):
        super().__init__(space)
        if values.shape != (space.size,):
            raise ValueError("values must cover the grid in linear-index order")
        self.values = values
        self.noise_sigma = float(noise_sigma)
        self.rng = np.random.default_rng(seed)
        best = int(np.argmin(values))
        best_pt = point_at(space, best)
        self.ground_truth = GroundTruth(float(values[best]), best_pt, space.values_at(best_pt))

    def measure(self, point: ConfigPoint) -> float:
        y = float(self.values[linear_index(self.space, point)])
        if self.noise_sigma > 0:
            y += float(self.rng.normal(0.0, self.noise_sigma))
        return y


def make_grid_source(
    fn,
    bounds: tuple[tuple[float, float], ...],
    grid_sizes: tuple[int, ...],
    noise_sigma: float = 0.0,
    seed: int | None = None,
    names: tuple[str, ...] | None = None,
) -> tuple[ConfigSpace, GridFunctionSource]:
    """Discretize ``fn`` onto a uniform grid and wrap it as a response source."""
    if len(grid_sizes) != len(bounds):
        raise ValueError("one grid size per dimension required")
    if any(m < 2 for m in grid_sizes):
        raise ValueError("grid sizes must be >= 2")
    if names is None:
        names = tuple(f"x{i + 1}" for i in range(len(bounds)))
    params = tuple(
        ParameterDef(name, INTEGER_GRID, tuple(np.linspace(lo, hi, m)))
        for name, (lo, hi), m in zip(names, bounds, grid_sizes)
    )
    space = ConfigSpace(params)
    axes = [np.asarray(p.options, dtype=float) for p in space.params]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([g.ravel() for g in mesh], axis=1)
    values = np.array([fn(row) for row in coords])
    return space, GridFunctionSource(space, values, noise_sigma, seed)


def benchmark_source(
    name: str,
    grid_sizes: tuple[int, ...] | None = None,
    noise_sigma: float = 0.0,
    seed: int | None = None,
) -> tuple[ConfigSpace, GridFunctionSource]:
    bench = BENCHMARKS.get(name)
    if bench is None:
        raise KeyError(f"unknown benchmark {name!r}; choices: {sorted(BENCHMARKS)}")
    sizes = tuple(grid_sizes) if grid_sizes else bench.default_grid
    return make_grid_source(bench.fn, bench.bounds, sizes, noise_sigma, seed)


class PlaybackSource(ResponseSource):
    """Replays a measured dataset, optionally re-noised.

    ``noise`` is 0 for exact playback, a float sigma for homoscedastic noise,
    or ``"replicates"`` to draw per-configuration sigma from the stored raw
    samples (configurations without replicates replay exactly).
    """

    kind = "tabular"

    def __init__(self, dataset: TabularDataset, noise: float | str = 0.0, seed: int | None = None):
        super().__init__(dataset.space)
        if not dataset.is_total():
            missing = dataset.space.size - len(dataset)
            raise CoverageError(f"dataset misses {missing} of {dataset.space.size} configurations")
        self.dataset = dataset
        self.rng = np.random.default_rng(seed)
        if noise == "replicates":
            self.sigma_by_point = {
                pt: float(np.std(vals, ddof=1))
                for pt, vals in dataset.replicates.items()
                if len(vals) >= 2
            }
            self.noise_sigma = None
        else:
            self.noise_sigma = float(noise)
            self.sigma_by_point = {}
        values = np.empty(dataset.space.size)
        for pt, y in dataset.rows.items():
            values[linear_index(dataset.space, pt)] = y
        best = int(np.argmin(values))
        best_pt = point_at(dataset.space, best)
        self.ground_truth = GroundTruth(float(values[best]), best_pt, dataset.space.values_at(best_pt))

    def measure(self, point: ConfigPoint) -> float:
        y = self.dataset.rows[point]
        sigma = self.noise_sigma if self.noise_sigma is not None else self.sigma_by_point.get(point, 0.0)
        if sigma > 0:
            y += float(self.rng.normal(0.0, sigma))
        return y


def playback(dataset: TabularDataset, noise: float | str = 0.0, seed: int | None = None) -> PlaybackSource:
    return PlaybackSource(dataset, noise, seed)


class ExternalCommandSource(ResponseSource):
    """Runs a command per evaluation with ``name=value`` arguments.

    The command must print one real number (the latency in ms) on stdout;
    a nonzero exit status is a (retryable) measurement failure. Ground truth
    is unknown for external sources.
    """

    kind = "external"

    def __init__(self, space: ConfigSpace, command: str | list[str], timeout: float = 300.0):
        super().__init__(space)
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        if not self.argv:
            raise ValueError("external command must not be empty")
        self.timeout = timeout

    def measure(self, point: ConfigPoint) -> float:
        args = [
            f"{name}={value}"
            for name, value in zip(self.space.names, self.space.values_at(point))
        ]
        try:
            proc = subprocess.run(
                self.argv + args,
                capture_output=True,
                text=True,
                timeout=self.timeout,
            )
        except OSError as exc:
            raise SourceUnavailableError(f"cannot run {self.argv[0]!r}: {exc}") from exc
        except subprocess.TimeoutExpired as exc:
            raise MeasurementError(f"measurement timed out after {self.timeout}s") from exc
        if proc.returncode != 0:
            raise MeasurementError(
                f"command exited {proc.returncode}: {proc.stderr.strip()[:200]}"
            )
        try:
            return float(proc.stdout.strip().split()[-1])
        except (ValueError, IndexError):
            raise MeasurementError(f"unparseable measurement output {proc.stdout!r}") from None
