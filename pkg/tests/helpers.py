"""Shared generators and brute-force oracles for the test suite.

The oracles here deliberately re-derive everything from scalar formulas
(double loops, explicit inverses) so they stay independent of the vectorized
library paths they check.
"""

from __future__ import annotations

import math

import numpy as np

from gp_autotune.gp import (
    MATERN12,
    PRODUCT_MIXED,
    Hyperparams,
    KernelSpec,
    MeanSpec,
    ObservationSet,
    kernel_spec_for_space,
)
from gp_autotune.space import (
    CATEGORICAL,
    INTEGER_GRID,
    ConfigPoint,
    ConfigSpace,
    ParameterDef,
    point_at,
)


def grid_space(*sizes: int) -> ConfigSpace:
    return ConfigSpace(
        tuple(
            ParameterDef(f"p{i}", INTEGER_GRID, tuple(range(m)))
            for i, m in enumerate(sizes)
        )
    )


def random_space(rng: np.random.Generator, max_dim: int = 4, allow_cat: bool = True) -> ConfigSpace:
    dim = int(rng.integers(1, max_dim + 1))
    params = []
    for i in range(dim):
        m = int(rng.integers(2, 9))
        if allow_cat and rng.random() < 0.35:
            params.append(ParameterDef(f"c{i}", CATEGORICAL, tuple(f"v{j}" for j in range(m))))
        else:
            params.append(ParameterDef(f"n{i}", INTEGER_GRID, tuple(range(m))))
    return ConfigSpace(tuple(params))


def random_hyper(
    rng: np.random.Generator,
    space: ConfigSpace,
    noise_var: float | None = None,
    mean_form: str = "constant",
) -> Hyperparams:
    # scale ranges keep kernel matrices comfortably away from singularity
    scales = tuple(float(rng.uniform(0.2, 2.0)) for _ in range(space.dim))
    amplitude = float(rng.uniform(0.5, 2.0))
    family = PRODUCT_MIXED if any(p.is_categorical for p in space.params) else MATERN12
    kernel = kernel_spec_for_space(space, family, amplitude, scales)
    if mean_form == "linear":
        mean = MeanSpec("linear", float(rng.normal(0, 0.5)),
                        tuple(float(v) for v in rng.normal(0, 0.5, space.dim)))
    else:
        mean = MeanSpec("constant", float(rng.normal(0, 0.5)))
    if noise_var is None:
        noise_var = float(rng.uniform(0.01, 0.3))
    return Hyperparams(kernel=kernel, mean=mean, noise_var=noise_var)


def random_observations(
    rng: np.random.Generator, space: ConfigSpace, t: int
) -> ObservationSet:
    t = min(t, space.size)
    idx = rng.choice(space.size, size=t, replace=False)
    points = tuple(point_at(space, int(i)) for i in idx)
    responses = tuple(float(v) for v in rng.normal(0.0, 1.0, t))
    return ObservationSet(space, points, responses)


def brute_force_kernel(spec: KernelSpec, space: ConfigSpace, p1: ConfigPoint, p2: ConfigPoint) -> float:
    """Scalar re-derivation of the covariance from raw definitions."""
    r2 = 0.0
    cat_sum = 0.0
    for l, (param, is_cat) in enumerate(zip(space.params, spec.categorical_mask)):
        if is_cat:
            cat_sum += spec.scales[l] * (p1.coords[l] != p2.coords[l])
        else:
            vals = [float(v) if not param.is_categorical else float(j)
                    for j, v in enumerate(param.options)]
            lo, hi = vals[0], vals[-1]
            width = hi - lo if hi > lo else 1.0
            a = (vals[p1.coords[l]] - lo) / width
            b = (vals[p2.coords[l]] - lo) / width
            r2 += ((a - b) / spec.scales[l]) ** 2
    return spec.amplitude**2 * math.exp(-math.sqrt(r2)) * math.exp(-cat_sum)


def brute_force_posterior(
    obs: ObservationSet, hyper: Hyperparams, query: ConfigPoint
) -> tuple[float, float]:
    """Dense posterior via explicit inverse, independent of the library path."""
    t = len(obs)
    K = np.empty((t, t))
    for i in range(t):
        for j in range(t):
            K[i, j] = brute_force_kernel(hyper.kernel, obs.space, obs.points[i], obs.points[j])
    A = K + hyper.noise_var * np.eye(t)
    A_inv = np.linalg.inv(A)
    y = np.asarray(obs.responses)
    y_center = y.mean()
    feats = _encode_like_library(obs, hyper)
    resid = (y - y_center) - _mean_eval(hyper.mean, feats)
    k_vec = np.array(
        [brute_force_kernel(hyper.kernel, obs.space, p, query) for p in obs.points]
    )
    qf = _encode_like_library_point(obs.space, hyper, query)
    prior_mean = y_center + _mean_eval(hyper.mean, qf[None, :])[0]
    mean = prior_mean + k_vec @ A_inv @ resid
    var = hyper.kernel.amplitude**2 + hyper.noise_var - k_vec @ A_inv @ k_vec
    return float(mean), float(var)


def _encode_like_library_point(space: ConfigSpace, hyper: Hyperparams, point: ConfigPoint) -> np.ndarray:
    out = []
    for l, (param, is_cat) in enumerate(zip(space.params, hyper.kernel.categorical_mask)):
        if is_cat:
            out.append(float(point.coords[l]))
        else:
            vals = [float(v) if not param.is_categorical else float(j)
                    for j, v in enumerate(param.options)]
            lo, hi = vals[0], vals[-1]
            width = hi - lo if hi > lo else 1.0
            out.append((vals[point.coords[l]] - lo) / width if hi > lo else 0.0)
    return np.array(out)


def _encode_like_library(obs: ObservationSet, hyper: Hyperparams) -> np.ndarray:
    return np.stack([_encode_like_library_point(obs.space, hyper, p) for p in obs.points])


def _mean_eval(mean: MeanSpec, feats: np.ndarray) -> np.ndarray:
    if mean.form == "linear":
        return mean.offset + feats @ np.asarray(mean.slopes)
    return np.full(feats.shape[0], mean.offset)
