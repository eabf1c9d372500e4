"""Gaussian-process surrogate over discrete configuration grids.

Covariance is an amplitude times a product of per-dimension factors:
exponential (Matern nu=1/2) factors ``exp(-r)`` with ARD length-scales on
numeric dimensions, and equality factors ``exp(-theta_l * [x_i != x_j])`` on
categorical ones. The prior mean is constant or linear in the encoded
features. Exact inference is done through a cached Cholesky factor of
``K + sigma^2 I`` (plus a small escalating jitter), which can be extended by
one observation at a time in O(t^2).

Encoding conventions: numeric dimensions feed the kernel their raw option
values min-max scaled to [0, 1]; categorical dimensions feed their option
index (only equality matters). Responses are centered by their training mean
before fitting and un-centered on prediction, so the model's effective prior
mean is ``mean(y) + mu_spec(x)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla
import scipy.optimize as sopt

from gp_autotune.space import ConfigPoint, ConfigSpace

logger = logging.getLogger(__name__)

MATERN12 = "matern12"
CATEGORICAL_ARD = "categorical-ard"
PRODUCT_MIXED = "product-mixed"

_FAMILIES = (MATERN12, CATEGORICAL_ARD, PRODUCT_MIXED)

JITTER_START = 1e-10  # times amplitude^2, escalated x10 per retry
JITTER_MAX = 1e-4
NOISE_FLOOR = 1e-8

_LOG_BOUNDS = {
    "amplitude": (np.log(1e-6), np.log(1e6)),
    "numeric_scale": (np.log(1e-3), np.log(1e3)),
    "categorical_scale": (np.log(1e-4), np.log(1e4)),
    "noise": (np.log(NOISE_FLOOR), np.log(1e12)),
}


class ConditioningError(ArithmeticError):
    """Kernel matrix is not positive definite even after maximum jitter."""


class DuplicatePointError(ValueError):
    """An observation set may hold at most one response per configuration."""


class LearningError(RuntimeError):
    """No hyperparameter restart produced a finite marginal likelihood."""


@dataclass(frozen=True)
class KernelSpec:
    """Covariance family, amplitude and per-dimension ARD scales.

    ``categorical_mask[l]`` selects the equality factor for dimension l;
    the mask is derived from the family and the space's parameter kinds.
    """

    family: str
    amplitude: float
    scales: tuple[float, ...]
    categorical_mask: tuple[bool, ...]

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.amplitude <= 0:
            raise ValueError("amplitude must be positive")
        if any(s <= 0 for s in self.scales):
            raise ValueError("ARD scales must be positive")
        if len(self.scales) != len(self.categorical_mask):
            raise ValueError("scales and categorical mask must have equal length")

    @property
    def dim(self) -> int:
        return len(self.scales)


def kernel_spec_for_space(
    space: ConfigSpace,
    family: str = MATERN12,
    amplitude: float = 1.0,
    scales: tuple[float, ...] | None = None,
) -> KernelSpec:
    """Build a kernel spec whose categorical mask matches ``space`` and ``family``."""
    if scales is None:
        scales = (1.0,) * space.dim
    if family == MATERN12:
        mask = (False,) * space.dim
    elif family == CATEGORICAL_ARD:
        mask = (True,) * space.dim
    elif family == PRODUCT_MIXED:
        mask = tuple(p.is_categorical for p in space.params)
    else:
        raise ValueError(f"unknown kernel family {family!r}")
    return KernelSpec(family=family, amplitude=amplitude, scales=tuple(scales), categorical_mask=mask)


@dataclass(frozen=True)
class MeanSpec:
    """Prior mean: a constant offset, optionally plus per-dimension slopes."""

    form: str = "constant"
    offset: float = 0.0
    slopes: tuple[float, ...] = ()

    def __post_init__(self):
        if self.form not in ("constant", "linear"):
            raise ValueError(f"unknown mean form {self.form!r}")
        if self.form == "constant" and self.slopes:
            raise ValueError("constant mean takes no slopes")

    def __call__(self, features: np.ndarray) -> np.ndarray:
        """Evaluate on encoded features, shape (t, d) or (d,)."""
        features = np.atleast_2d(features)
        if self.form == "linear":
            return self.offset + features @ np.asarray(self.slopes)
        return np.full(features.shape[0], self.offset)


def linear_mean(dim: int, offset: float = 0.0, slopes: tuple[float, ...] | None = None) -> MeanSpec:
    if slopes is None:
        slopes = (0.0,) * dim
    return MeanSpec(form="linear", offset=offset, slopes=tuple(slopes))


@dataclass(frozen=True)
class Hyperparams:
    kernel: KernelSpec
    mean: MeanSpec
    noise_var: float = 0.0

    def __post_init__(self):
        if self.noise_var < 0:
            raise ValueError("noise variance must be nonnegative")
        if self.mean.form == "linear" and len(self.mean.slopes) != self.kernel.dim:
            raise ValueError("linear mean slopes must match kernel dimension")


@dataclass(frozen=True)
class ObservationSet:
    """Accumulated (configuration, response) pairs; one response per point."""

    space: ConfigSpace
    points: tuple[ConfigPoint, ...]
    responses: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        object.__setattr__(self, "responses", tuple(float(y) for y in self.responses))
        if len(self.points) != len(self.responses):
            raise ValueError("points and responses must have equal length")
        if len(set(self.points)) != len(self.points):
            raise DuplicatePointError("observation set contains a repeated configuration")
        for pt in self.points:
            self.space.validate(pt)

    def __len__(self) -> int:
        return len(self.points)

    def extended(self, point: ConfigPoint, response: float) -> "ObservationSet":
        if point in self.points:
            raise DuplicatePointError(f"point {point.coords} already observed")
        return ObservationSet(self.space, self.points + (point,), self.responses + (float(response),))


class SpaceEncoder:
    """Maps grid points to the feature vectors the kernel and mean consume."""

    def __init__(self, space: ConfigSpace, categorical_mask: tuple[bool, ...]):
        if len(categorical_mask) != space.dim:
            raise ValueError("mask length must equal space dimension")
        self.space = space
        self.categorical_mask = tuple(categorical_mask)
        self._tables = []
        for param, is_cat in zip(space.params, categorical_mask):
            if is_cat:
                self._tables.append(np.arange(len(param), dtype=float))
            else:
                if param.is_categorical:
                    vals = np.arange(len(param), dtype=float)
                else:
                    vals = np.array([float(v) for v in param.options])
                lo, hi = vals[0], vals[-1]
                self._tables.append((vals - lo) / (hi - lo) if hi > lo else np.zeros_like(vals))

    def encode(self, point: ConfigPoint) -> np.ndarray:
        self.space.validate(point)
        return np.array([t[c] for t, c in zip(self._tables, point.coords)])

    def encode_many(self, points) -> np.ndarray:
        if len(points) == 0:
            return np.zeros((0, self.space.dim))
        return np.stack([self.encode(p) for p in points])

    def encode_index_matrix(self, coords: np.ndarray) -> np.ndarray:
        """Vectorized encoding for an (n, d) integer coordinate matrix."""
        out = np.empty(coords.shape, dtype=float)
        for d, table in enumerate(self._tables):
            out[:, d] = table[coords[:, d]]
        return out


def kernel_value(spec: KernelSpec, v1: np.ndarray, v2: np.ndarray) -> float:
    """Covariance between two encoded feature vectors."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if v1.shape != (spec.dim,) or v2.shape != (spec.dim,):
        raise ValueError("feature vectors must match kernel dimension")
    mask = np.asarray(spec.categorical_mask)
    scales = np.asarray(spec.scales)
    r2 = 0.0
    cat_sum = 0.0
    for l in range(spec.dim):
        if mask[l]:
            cat_sum += scales[l] * (v1[l] != v2[l])
        else:
            r2 += ((v1[l] - v2[l]) / scales[l]) ** 2
    return spec.amplitude**2 * np.exp(-np.sqrt(r2)) * np.exp(-cat_sum)


def kernel_eval(spec: KernelSpec, space: ConfigSpace, x1: ConfigPoint, x2: ConfigPoint) -> float:
    """Covariance between two grid points (convenience over :func:`kernel_value`)."""
    enc = SpaceEncoder(space, spec.categorical_mask)
    return kernel_value(spec, enc.encode(x1), enc.encode(x2))


def _cross_kernel(spec: KernelSpec, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    """Dense covariance between feature matrices, shapes (n, d) and (m, d)."""
    n, m = X1.shape[0], X2.shape[0]
    mask = np.asarray(spec.categorical_mask)
    scales = np.asarray(spec.scales)
    r2 = np.zeros((n, m))
    cat = np.zeros((n, m))
    for l in range(X1.shape[1]):
        diff = X1[:, l : l + 1] - X2[None, :, l]
        if mask[l]:
            cat += scales[l] * (diff != 0.0)
        else:
            r2 += (diff / scales[l]) ** 2
    return spec.amplitude**2 * np.exp(-np.sqrt(r2) - cat)


@dataclass(frozen=True)
class GpModel:
    """Fitted surrogate with cached factorization.

    ``chol`` is the lower Cholesky factor of ``K + noise_var*I + jitter*I`` and
    ``alpha`` solves that matrix against the centered residuals. Models are
    immutable; refits produce new values.
    """

    hyper: Hyperparams
    train: ObservationSet
    encoder: SpaceEncoder
    features: np.ndarray
    chol: np.ndarray
    alpha: np.ndarray
    y_center: float
    jitter: float

    @property
    def t(self) -> int:
        return len(self.train)


def _factorize(K: np.ndarray, noise_var: float, amplitude: float) -> tuple[np.ndarray, float]:
    """Cholesky of K + noise*I with escalating diagonal jitter."""
    t = K.shape[0]
    A = K + noise_var * np.eye(t)
    jitter = JITTER_START * amplitude**2
    last_exc = None
    while jitter <= JITTER_MAX * amplitude**2 * (1 + 1e-12):
        try:
            L = np.linalg.cholesky(A + jitter * np.eye(t))
            return L, jitter
        except np.linalg.LinAlgError as exc:
            last_exc = exc
            jitter *= 10
    eigmin = float(np.linalg.eigvalsh(A)[0]) if t else 0.0
    raise ConditioningError(
        f"kernel matrix not positive definite after max jitter "
        f"{JITTER_MAX * amplitude**2:.3e} (smallest eigenvalue ~ {eigmin:.3e})"
    ) from last_exc


def _residuals(obs: ObservationSet, hyper: Hyperparams, features: np.ndarray) -> tuple[np.ndarray, float]:
    y = np.asarray(obs.responses)
    y_center = float(y.mean()) if len(obs) else 0.0
    return (y - y_center) - hyper.mean(features), y_center


def fit(obs: ObservationSet, hyper: Hyperparams) -> GpModel:
    """Exact GP fit; O(t^3) in the number of observations.

    An empty observation set yields a prior-only model (the base case for
    incremental refits).
    """
    encoder = SpaceEncoder(obs.space, hyper.kernel.categorical_mask)
    X = encoder.encode_many(obs.points)
    resid, y_center = _residuals(obs, hyper, X)
    if len(obs) == 0:
        return GpModel(hyper, obs, encoder, X, np.zeros((0, 0)), np.zeros(0), 0.0,
                       JITTER_START * hyper.kernel.amplitude**2)
    K = _cross_kernel(hyper.kernel, X, X)
    L, jitter = _factorize(K, hyper.noise_var, hyper.kernel.amplitude)
    alpha = sla.cho_solve((L, True), resid)
    return GpModel(hyper, obs, encoder, X, L, alpha, y_center, jitter)


def refit_with(model: GpModel, new_point: ConfigPoint, new_y: float) -> GpModel:
    """Add one observation by rank-1 extension of the Cholesky factor; O(t^2).

    Equivalent to a full refit with the same hyperparameters as long as the
    extension stays numerically positive definite at the model's jitter level.
    """
    obs = model.train.extended(new_point, new_y)
    v = model.encoder.encode(new_point)
    spec = model.hyper.kernel
    k_vec = _cross_kernel(spec, model.features, v[None, :])[:, 0] if model.t else np.zeros(0)
    k_ss = spec.amplitude**2 + model.hyper.noise_var + model.jitter
    L = _extend_cholesky(model.chol, k_vec, k_ss)
    X = np.vstack([model.features, v[None, :]]) if model.t else v[None, :]
    resid, y_center = _residuals(obs, model.hyper, X)
    alpha = sla.cho_solve((L, True), resid)
    return GpModel(model.hyper, obs, model.encoder, X, L, alpha, y_center, model.jitter)


def _extend_cholesky(L: np.ndarray, k_vec: np.ndarray, k_ss: float) -> np.ndarray:
    """Grow a lower Cholesky factor by one row/column."""
    t = L.shape[0]
    if t == 0:
        if k_ss <= 0:
            raise ConditioningError("non-positive diagonal for singleton factor")
        return np.array([[np.sqrt(k_ss)]])
    ell = sla.solve_triangular(L, k_vec, lower=True)
    pivot_sq = k_ss - float(ell @ ell)
    if pivot_sq <= 0:
        raise ConditioningError(
            f"singular rank-1 extension (pivot^2 = {pivot_sq:.3e}); "
            "the new point duplicates existing kernel information"
        )
    out = np.zeros((t + 1, t + 1))
    out[:t, :t] = L
    out[t, :t] = ell
    out[t, t] = np.sqrt(pivot_sq)
    return out


def predict(model: GpModel, x: ConfigPoint) -> tuple[float, float]:
    """Posterior mean and predictive variance at one grid point."""
    mean, var = predict_batch(model, model.encoder.encode(x)[None, :])
    return float(mean[0]), float(var[0])


def predict_batch(model: GpModel, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized posterior over pre-encoded feature rows."""
    spec = model.hyper.kernel
    prior_mean = model.y_center + model.hyper.mean(features)
    prior_var = spec.amplitude**2 + model.hyper.noise_var
    if model.t == 0:
        return prior_mean, np.full(features.shape[0], prior_var)
    C = _cross_kernel(spec, model.features, features)  # (t, m)
    mean = prior_mean + C.T @ model.alpha
    V = sla.solve_triangular(model.chol, C, lower=True)
    var = prior_var - np.einsum("ij,ij->j", V, V)
    neg = var < -1e-6 * prior_var
    if neg.any():
        logger.debug("clamping %d strongly negative predictive variances", int(neg.sum()))
    return mean, np.maximum(var, 0.0)


def log_marginal_likelihood(obs: ObservationSet, hyper: Hyperparams) -> float:
    """Gaussian evidence of the observations under the prior."""
    lml, _ = _lml_and_grad(obs, hyper, learn_noise=False, want_grad=False)
    return lml


def _pack(hyper: Hyperparams, learn_noise: bool) -> np.ndarray:
    parts = [np.log(hyper.kernel.amplitude), *np.log(hyper.kernel.scales)]
    if hyper.mean.form == "linear":
        parts += [hyper.mean.offset, *hyper.mean.slopes]
    else:
        parts.append(hyper.mean.offset)
    if learn_noise:
        parts.append(np.log(max(hyper.noise_var, NOISE_FLOOR)))
    return np.array(parts, dtype=float)


def _unpack(vec: np.ndarray, template: Hyperparams, learn_noise: bool) -> Hyperparams:
    d = template.kernel.dim
    kernel = replace(
        template.kernel,
        amplitude=float(np.exp(vec[0])),
        scales=tuple(np.exp(vec[1 : 1 + d])),
    )
    i = 1 + d
    if template.mean.form == "linear":
        mean = MeanSpec("linear", float(vec[i]), tuple(vec[i + 1 : i + 1 + d]))
        i += 1 + d
    else:
        mean = MeanSpec("constant", float(vec[i]))
        i += 1
    noise = float(np.exp(vec[i])) if learn_noise else template.noise_var
    return Hyperparams(kernel=kernel, mean=mean, noise_var=noise)


def _bounds(template: Hyperparams, learn_noise: bool) -> list[tuple[float | None, float | None]]:
    b: list[tuple[float | None, float | None]] = [_LOG_BOUNDS["amplitude"]]
    for is_cat in template.kernel.categorical_mask:
        b.append(_LOG_BOUNDS["categorical_scale" if is_cat else "numeric_scale"])
    n_mean = 1 + (template.kernel.dim if template.mean.form == "linear" else 0)
    b += [(None, None)] * n_mean
    if learn_noise:
        b.append(_LOG_BOUNDS["noise"])
    return b


def _lml_and_grad(
    obs: ObservationSet,
    hyper: Hyperparams,
    learn_noise: bool,
    want_grad: bool = True,
    features: np.ndarray | None = None,
) -> tuple[float, np.ndarray | None]:
    """Evidence and its gradient w.r.t. the packed parameter vector.

    Positive parameters are treated in log space, so e.g. the amplitude
    component is d LML / d log(theta0). The jitter tracks the amplitude and is
    included in the amplitude derivative.
    """
    spec = hyper.kernel
    if features is None:
        encoder = SpaceEncoder(obs.space, spec.categorical_mask)
        features = encoder.encode_many(obs.points)
    X = features
    resid, _ = _residuals(obs, hyper, X)
    t = len(obs)
    K = _cross_kernel(spec, X, X)
    L, jitter = _factorize(K, hyper.noise_var, spec.amplitude)
    alpha = sla.cho_solve((L, True), resid)
    lml = float(-0.5 * resid @ alpha - np.log(np.diag(L)).sum() - 0.5 * t * np.log(2 * np.pi))
    if not want_grad:
        return lml, None

    A_inv = sla.cho_solve((L, True), np.eye(t))
    B = np.outer(alpha, alpha) - A_inv  # d lml / d A = 0.5 * B

    mask = np.asarray(spec.categorical_mask)
    scales = np.asarray(spec.scales)
    # per-dimension squared scaled differences / mismatch indicators
    r2 = np.zeros((t, t))
    S = []
    for l in range(spec.dim):
        diff = X[:, l : l + 1] - X[None, :, l]
        if mask[l]:
            S.append((diff != 0.0).astype(float))
        else:
            s = (diff / scales[l]) ** 2
            S.append(s)
            r2 += s
    r = np.sqrt(r2)

    grads = []
    # amplitude: A = theta0^2 * C + jitter(theta0) * I + noise * I
    dA = 2.0 * (K + jitter * np.eye(t))
    grads.append(0.5 * float(np.sum(B * dA)))
    inv_r = np.zeros_like(r)
    np.divide(1.0, r, out=inv_r, where=r > 0)
    for l in range(spec.dim):
        if mask[l]:
            dK = K * (-scales[l] * S[l])
        else:
            dK = K * (S[l] * inv_r)
        grads.append(0.5 * float(np.sum(B * dK)))
    grads.append(float(alpha.sum()))  # mean offset
    if hyper.mean.form == "linear":
        grads.extend((X * alpha[:, None]).sum(axis=0).tolist())
    if learn_noise:
        grads.append(0.5 * hyper.noise_var * float(np.trace(B)))
    return lml, np.array(grads)


def learn_hyperparams(
    obs: ObservationSet,
    init: Hyperparams,
    restarts: int = 3,
    rng: np.random.Generator | None = None,
    learn_noise: bool = True,
    max_iter: int = 100,
) -> Hyperparams:
    """Maximize the marginal likelihood with multi-started L-BFGS in log space.

    Returns the best hyperparameters found across restarts; never worse than
    ``init``. Raises :class:`LearningError` if no start (including ``init``
    itself) yields a finite likelihood.
    """
    if len(obs) < 2:
        raise ValueError("hyperparameter learning needs at least 2 observations")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    bounds = _bounds(init, learn_noise)
    lo_b = [lo if lo is not None else -np.inf for lo, _ in bounds]
    hi_b = [hi if hi is not None else np.inf for _, hi in bounds]
    x0 = np.clip(_pack(init, learn_noise), lo_b, hi_b)
    X = SpaceEncoder(obs.space, init.kernel.categorical_mask).encode_many(obs.points)

    def objective(vec: np.ndarray) -> tuple[float, np.ndarray]:
        try:
            lml, grad = _lml_and_grad(obs, _unpack(vec, init, learn_noise), learn_noise,
                                      features=X)
        except ConditioningError:
            return 1e25, np.zeros_like(vec)
        if not np.isfinite(lml):
            return 1e25, np.zeros_like(vec)
        return -lml, -grad

    best_vec, best_lml = None, -np.inf
    try:
        base_lml, _ = _lml_and_grad(obs, _unpack(x0, init, learn_noise), learn_noise,
                                    want_grad=False, features=X)
        if np.isfinite(base_lml):
            best_vec, best_lml = x0, base_lml
    except ConditioningError:
        pass

    for k in range(restarts):
        start = x0 if k == 0 else np.clip(x0 + rng.normal(0.0, 0.5, size=x0.shape), lo_b, hi_b)
        res = sopt.minimize(objective, start, jac=True, method="L-BFGS-B",
                            bounds=bounds, options={"maxiter": max_iter})
        if np.isfinite(res.fun) and -res.fun > best_lml:
            best_vec, best_lml = res.x, -res.fun
    if best_vec is None:
        raise LearningError("all restarts produced non-finite marginal likelihood")
    return _unpack(best_vec, init, learn_noise)


def ard_relevance(spec: KernelSpec) -> tuple[float, ...]:
    """Per-dimension relevance scores: 1/scale on numeric, scale on categorical.

    Small values flag dimensions the learned kernel treats as irrelevant.
    """
    return tuple(
        s if is_cat else 1.0 / s
        for s, is_cat in zip(spec.scales, spec.categorical_mask)
    )
