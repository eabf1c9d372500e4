"""Dataset screening and run aggregation.

The merit heuristic scores a parameter subset by
``n * r_lp / sqrt(n + n (n-1) * r_pp)`` where ``r_lp`` is the mean absolute
parameter-response Pearson correlation and ``r_pp`` the mean absolute
pairwise inter-correlation of the subset (correlation-based feature-subset
selection). Correlations use absolute values throughout; a zero-variance
column contributes 0 and is flagged.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.stats as sstats

from gp_autotune.gp import GpModel, predict_batch
from gp_autotune.space import TabularDataset
from gp_autotune.tuner import RunTrace

logger = logging.getLogger(__name__)

_EXHAUSTIVE_DIM_CAP = 12
_BEAM_WIDTH = 50


@dataclass(frozen=True)
class MeritReport:
    subset: tuple[int, ...]
    merit: float
    response_correlations: tuple[float, ...]  # |corr(param, latency)| per member
    inter_correlation: float  # mean |corr| over member pairs
    zero_variance: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return len(self.subset)


def _columns(dataset: TabularDataset) -> tuple[np.ndarray, np.ndarray]:
    """Numeric design matrix (raw values; categorical -> option index) and response."""
    pts = sorted(dataset.rows, key=lambda p: p.coords)
    X = np.empty((len(pts), dataset.space.dim))
    for i, pt in enumerate(pts):
        for l, (param, c) in enumerate(zip(dataset.space.params, pt.coords)):
            X[i, l] = float(c) if param.is_categorical else float(param.options[c])
    y = np.array([dataset.rows[pt] for pt in pts])
    return X, y


def _abs_corr(a: np.ndarray, b: np.ndarray) -> tuple[float, bool]:
    """|Pearson correlation|; zero-variance columns yield (0, flagged)."""
    sa, sb = a.std(), b.std()
    if sa == 0 or sb == 0:
        return 0.0, True
    cov = ((a - a.mean()) * (b - b.mean())).mean()
    return abs(cov / (sa * sb)), False


def merit(dataset: TabularDataset, subset: tuple[int, ...]) -> MeritReport:
    """Merit of one parameter subset against the response column."""
    if not subset:
        raise ValueError("subset must be non-empty")
    if len(dataset) < 3:
        raise ValueError("merit needs at least 3 dataset rows")
    subset = tuple(sorted(set(subset)))
    if subset[0] < 0 or subset[-1] >= dataset.space.dim:
        raise ValueError(f"subset {subset} out of range for {dataset.space.dim} parameters")
    X, y = _columns(dataset)
    flagged = []
    r_lp = []
    for l in subset:
        c, flag = _abs_corr(X[:, l], y)
        r_lp.append(c)
        if flag:
            flagged.append(l)
    n = len(subset)
    if n > 1:
        pair_cs = []
        for a, b in itertools.combinations(subset, 2):
            c, flag = _abs_corr(X[:, a], X[:, b])
            pair_cs.append(c)
        r_pp = float(np.mean(pair_cs))
    else:
        r_pp = 0.0
    mean_r_lp = float(np.mean(r_lp))
    m = n * mean_r_lp / math.sqrt(n + n * (n - 1) * r_pp)
    return MeritReport(
        subset=subset,
        merit=m,
        response_correlations=tuple(r_lp),
        inter_correlation=r_pp,
        zero_variance=tuple(flagged),
    )


def rank_subsets(dataset: TabularDataset, max_subset_size: int) -> list[MeritReport]:
    """All parameter subsets up to the size cap, best merit first.

    Exhaustive for d <= 12; a best-first beam (width 50) extends larger
    spaces, which none of the shipped datasets need.
    """
    d = dataset.space.dim
    if not 1 <= max_subset_size <= d:
        raise ValueError("max_subset_size must be in [1, d]")
    reports: list[MeritReport] = []
    if d <= _EXHAUSTIVE_DIM_CAP:
        for size in range(1, max_subset_size + 1):
            for subset in itertools.combinations(range(d), size):
                reports.append(merit(dataset, subset))
    else:
        frontier = [merit(dataset, (l,)) for l in range(d)]
        reports.extend(frontier)
        for _ in range(1, max_subset_size):
            frontier = sorted(frontier, key=_rank_key)[:_BEAM_WIDTH]
            seen = {r.subset for r in reports}
            nxt = []
            for rep in frontier:
                for l in range(d):
                    cand = tuple(sorted(set(rep.subset) | {l}))
                    if len(cand) == rep.n + 1 and cand not in seen:
                        seen.add(cand)
                        nxt.append(merit(dataset, cand))
            reports.extend(nxt)
            frontier = nxt
    return sorted(reports, key=_rank_key)


def _rank_key(r: MeritReport):
    return (-r.merit, r.n, r.subset)


@dataclass(frozen=True)
class SnrRow:
    label: str
    mean: float
    std: float
    ratio: float
    n: int
    mean_ci: tuple[float, float]
    std_ci: tuple[float, float]


def snr(families: dict[str, list[float]], confidence: float = 0.95) -> list[SnrRow]:
    """Signal-to-noise (mean / sample std) per replicate family.

    Families with fewer than 2 samples are skipped with a warning. Confidence
    intervals are normal-theory (t for the mean, chi-square for the std).
    """
    rows = []
    alpha = 1.0 - confidence
    for label, samples in families.items():
        k = len(samples)
        if k < 2:
            logger.warning("family %r has %d replicate(s); skipped", label, k)
            continue
        arr = np.asarray(samples, dtype=float)
        mu = float(arr.mean())
        sd = float(arr.std(ddof=1))
        ratio = mu / sd if sd > 0 else math.inf
        t_crit = float(sstats.t.ppf(1 - alpha / 2, k - 1))
        mu_ci = (mu - t_crit * sd / math.sqrt(k), mu + t_crit * sd / math.sqrt(k))
        chi_lo = float(sstats.chi2.ppf(alpha / 2, k - 1))
        chi_hi = float(sstats.chi2.ppf(1 - alpha / 2, k - 1))
        sd_ci = (sd * math.sqrt((k - 1) / chi_hi), sd * math.sqrt((k - 1) / chi_lo))
        rows.append(SnrRow(label, mu, sd, ratio, k, mu_ci, sd_ci))
    return rows


def snr_from_dataset(dataset: TabularDataset) -> list[SnrRow]:
    """Per-configuration SNR from a dataset's stored replicates."""
    families = {
        "/".join(str(v) for v in dataset.space.values_at(pt)): list(vals)
        for pt, vals in dataset.replicates.items()
        if len(vals) >= 2
    }
    return snr(families)


def estimate_noise_variance(dataset: TabularDataset) -> float:
    """Observation-noise variance as the mean per-configuration sample variance."""
    variances = [
        float(np.var(vals, ddof=1))
        for vals in dataset.replicates.values()
        if len(vals) >= 2
    ]
    if not variances:
        raise ValueError("dataset has no replicated configurations")
    return float(np.mean(variances))


@dataclass(frozen=True)
class AggregateReport:
    """Per-iteration distance-to-optimum statistics across replications."""

    algorithm: str
    n_replications: int
    iterations: tuple[int, ...]
    mean: tuple[float, ...]
    median: tuple[float, ...]
    q25: tuple[float, ...]
    q75: tuple[float, ...]

    def rows(self):
        """Long-format (iteration, statistic, value) rows for CSV emission."""
        for stat in ("mean", "median", "q25", "q75"):
            values = getattr(self, stat)
            for t, v in zip(self.iterations, values):
                yield t, stat, v


def distance_curve(traces: list[RunTrace], ground_truth_min: float, algorithm: str | None = None) -> AggregateReport:
    """|best-so-far - ground truth| statistics per iteration across traces."""
    if not traces:
        raise ValueError("need at least one trace")
    lengths = {t.n_evals for t in traces}
    horizon = min(lengths)
    if len(lengths) > 1:
        logger.warning("traces have unequal lengths %s; aligning to %d", sorted(lengths), horizon)
    D = np.array(
        [[abs(b - ground_truth_min) for b in t.best_so_far()[:horizon]] for t in traces]
    )
    return AggregateReport(
        algorithm=algorithm or traces[0].algorithm,
        n_replications=len(traces),
        iterations=tuple(range(1, horizon + 1)),
        mean=tuple(D.mean(axis=0)),
        median=tuple(np.median(D, axis=0)),
        q25=tuple(np.quantile(D, 0.25, axis=0)),
        q75=tuple(np.quantile(D, 0.75, axis=0)),
    )


@dataclass(frozen=True)
class HoldoutAccuracy:
    rmse: float
    absolute_percentage_errors: tuple[float, ...]
    n_heldout: int
    n_excluded_zero_response: int = 0

    @property
    def mean_ape(self) -> float:
        if not self.absolute_percentage_errors:
            return math.nan
        return float(np.mean(self.absolute_percentage_errors))


def holdout_accuracy(model: GpModel, dataset: TabularDataset) -> HoldoutAccuracy:
    """Posterior-mean accuracy over dataset points absent from training.

    When the training set already covers the whole dataset this degenerates to
    training-set accuracy (exact interpolation at zero noise).
    """
    trained = set(model.train.points)
    held = [pt for pt in sorted(dataset.rows, key=lambda p: p.coords) if pt not in trained]
    if not held:
        logger.debug("no held-out points; reporting training-set accuracy")
        held = sorted(dataset.rows, key=lambda p: p.coords)
    feats = model.encoder.encode_many(held)
    pred, _ = predict_batch(model, feats)
    truth = np.array([dataset.rows[pt] for pt in held])
    rmse = float(np.sqrt(np.mean((pred - truth) ** 2)))
    nonzero = truth != 0
    apes = tuple(np.abs(pred[nonzero] - truth[nonzero]) / np.abs(truth[nonzero]))
    return HoldoutAccuracy(
        rmse=rmse,
        absolute_percentage_errors=apes,
        n_heldout=len(held),
        n_excluded_zero_response=int((~nonzero).sum()),
    )
