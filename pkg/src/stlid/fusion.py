"""Bayesian spatial fusion of s-LID fields.

Each point's previous-step s-LID values over its k nearest physical-space
neighbors are pooled into a Gamma prior: Gaussian-kernel weights (closer
neighbors count more) give a weighted mean and variance, which map to shape
``alpha_p = mu^2 / var`` and rate ``beta_p = mu / var``. The current step
contributes an observation in the same conjugate family from the query's
kinematic neighbor distances::

    alpha_o = k,   beta_o = sum(ln(d_k / d_i))  >= 0

so the posterior mean ``(alpha_p + alpha_o) / (beta_p + beta_o)`` is the fused
s-LID. Note beta_o equals the log-sum in the MLE estimator, so with a flat
prior the fused value reduces to the raw estimate; a confident prior from a
homogeneous neighborhood (tiny variance, huge beta_p) pins the posterior to
the neighborhood mean, which is what suppresses isolated noisy spikes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .data import MonitoringDataset
from .errors import ConfigError
from .lid import LidConfig, LidField, _fill_sentinel, knn_kinematic_distances, s_lid_all

DEFAULT_K = 8


@dataclass(frozen=True)
class GammaParams:
    """Shape/rate parameters. Priors have beta > 0; observations allow beta = 0
    (all neighbor distances equal carries shape information only)."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not (np.isfinite(self.alpha) and np.isfinite(self.beta)):
            raise ValueError("Gamma parameters must be finite")
        if self.alpha <= 0 or self.beta < 0:
            raise ValueError(f"need alpha > 0 and beta >= 0, got ({self.alpha}, {self.beta})")

    @property
    def mean(self) -> float:
        if self.beta == 0:
            raise ValueError("mean undefined for beta = 0")
        return self.alpha / self.beta


@dataclass
class FusionConfig:
    """Spatial pooling configuration.

    ``bandwidth`` is either the string "median" (per-query median distance to
    its k neighbors, adaptive and scale-free across site geometries) or a
    fixed positive kernel width. ``obs_k`` is the kinematic neighborhood of
    the observation; None uses the s-LID neighborhood size, making the
    observation exactly the estimator's evidence. ``weight_space`` selects
    physical-coordinate distances (default) or per-step kinematic distances
    for the kernel weights.
    """

    k: int = DEFAULT_K
    obs_k: int | None = None
    bandwidth: float | str = "median"
    variance_floor: float = 1e-6
    weight_space: str = "physical"

    def validate(self) -> None:
        if self.k < 1:
            raise ConfigError(f"spatial neighborhood size k must be >= 1, got {self.k}")
        if self.obs_k is not None and self.obs_k < 1:
            raise ConfigError(f"observation neighborhood size must be >= 1, got {self.obs_k}")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "median":
                raise ConfigError(f"bandwidth must be 'median' or a positive number, got {self.bandwidth!r}")
        elif self.bandwidth <= 0:
            raise ConfigError("fixed bandwidth must be positive")
        if self.variance_floor <= 0:
            raise ConfigError("variance_floor must be positive")
        if self.weight_space not in ("physical", "kinematic"):
            raise ConfigError(f"weight_space must be 'physical' or 'kinematic', got {self.weight_space!r}")

    def effective_obs_k(self, lid_config) -> int:
        return lid_config.s if self.obs_k is None else self.obs_k


def gaussian_weights(query_coord, neighbor_coords, bandwidth: float) -> np.ndarray:
    """Normalized Gaussian-kernel weights from distances to the query.

    Positive, sum to one, monotone non-increasing in distance.
    """
    if bandwidth <= 0:
        raise ConfigError("bandwidth must be positive")
    q = np.asarray(query_coord, dtype=np.float64)
    nb = np.atleast_2d(np.asarray(neighbor_coords, dtype=np.float64))
    if nb.shape[0] < 1:
        raise ConfigError("need at least one neighbor")
    d2 = ((nb - q) ** 2).sum(axis=1)
    return _weights_from_sq_distances(d2, bandwidth)


def _weights_from_sq_distances(d2: np.ndarray, bandwidth) -> np.ndarray:
    # factor out the smallest exponent so extreme distance/bandwidth ratios
    # cannot underflow every weight; a tiny floor keeps the rest positive
    z = d2 / (2.0 * np.asarray(bandwidth, dtype=np.float64) ** 2)
    z = z - z.min(axis=-1, keepdims=True)
    w = np.maximum(np.exp(-z), 1e-300)
    return w / w.sum(axis=-1, keepdims=True)


def prior_from_neighbors(
    neighbor_slids, weights, variance_floor: float = 1e-6
) -> GammaParams:
    """Gamma prior from the weighted mean and variance of neighbor s-LIDs.

    The variance is floored at ``variance_floor`` so identical neighbors give
    a sharply concentrated (but finite) prior at their common value.
    """
    s = np.asarray(neighbor_slids, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    if s.shape != w.shape or s.ndim != 1:
        raise ValueError("neighbor s-LIDs and weights must be 1-D and aligned")
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise ValueError("neighbor s-LIDs must be finite and strictly positive")
    mu = float(np.dot(w, s))
    var = float(np.dot(w, (s - mu) ** 2))
    var = max(var, variance_floor)
    return GammaParams(alpha=mu * mu / var, beta=mu / var)


def observation_params(distances) -> GammaParams:
    """Observation evidence from sorted, strictly positive kinematic distances."""
    d = np.asarray(distances, dtype=np.float64)
    if d.ndim != 1 or d.size < 1:
        raise ValueError("need at least one neighbor distance")
    if np.any(d <= 0) or not np.all(np.isfinite(d)):
        raise ValueError("observation distances must be finite and strictly positive")
    if np.any(np.diff(d) < 0):
        raise ValueError("distances must be sorted ascending")
    k = d.size
    beta = float(k * np.log(d[-1]) - np.log(d).sum())
    return GammaParams(alpha=float(k), beta=max(beta, 0.0))


def fused_slid(prior: GammaParams, obs: GammaParams) -> float:
    """Posterior-mean s-LID of the conjugate update."""
    denom = prior.beta + obs.beta
    if denom <= 0:
        raise ValueError("posterior rate must be positive")
    return (prior.alpha + obs.alpha) / denom


def spatial_neighbors(coords: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Indices and distances of each point's k nearest physical neighbors."""
    n = coords.shape[0]
    if n <= k:
        raise ConfigError(f"spatial k={k} needs more than k points, got {n}")
    tree = cKDTree(coords)
    dist, idx = tree.query(coords, k=k + 1)
    return idx[:, 1:], dist[:, 1:]


def fuse_rows(
    prev_neighbor_slids: np.ndarray,
    weights: np.ndarray,
    obs_distances: np.ndarray,
    variance_floor: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized fusion for a block of points.

    ``prev_neighbor_slids`` and ``weights`` are (m, k); ``obs_distances`` is
    (m, k_obs) sorted ascending per row (zero entries are dropped from the
    observation). Returns (values, valid); rows whose observation collapses
    entirely to zero distance are invalid.
    """
    s = np.ascontiguousarray(prev_neighbor_slids, dtype=np.float64)
    w = np.ascontiguousarray(weights, dtype=np.float64)
    mu = (w * s).sum(axis=1)
    var = (w * (s - mu[:, None]) ** 2).sum(axis=1)
    var = np.maximum(var, variance_floor)
    alpha_p = mu * mu / var
    beta_p = mu / var

    d = np.ascontiguousarray(obs_distances, dtype=np.float64)
    pos = d > 0.0
    count = pos.sum(axis=1)
    dmax = d.max(axis=1)
    logs = np.log(d, out=np.zeros_like(d), where=pos)
    beta_o = count * np.log(np.where(dmax > 0, dmax, 1.0)) - logs.sum(axis=1)
    beta_o = np.maximum(beta_o, 0.0)

    valid = (mu > 0) & (count >= 1)
    denom = beta_p + beta_o
    values = np.full(s.shape[0], np.nan)
    np.divide(alpha_p + count, denom, out=values, where=valid & (denom > 0))
    valid &= np.isfinite(values)
    return values, valid


def fuse_all(
    dataset: MonitoringDataset,
    prev_slids: np.ndarray,
    step: int,
    config: FusionConfig | None = None,
    lid_config: LidConfig | None = None,
) -> LidField:
    """Fused s-LID field at ``step`` from the previous step's s-LID values.

    At the bootstrap step (the first step with a defined velocity) there is no
    previous field, so the raw s-LID field is returned unchanged.
    """
    config = config or FusionConfig()
    lid_config = lid_config or LidConfig()
    config.validate()
    lid_config.validate()
    c = dataset.column(step)
    if c == 1:
        return s_lid_all(dataset, step, lid_config)
    if c < 1:
        raise ConfigError(f"fusion needs velocity; first valid step is {dataset.start_step + 1}")
    prev = np.asarray(prev_slids, dtype=np.float64)
    if prev.shape != (dataset.num_points,):
        raise ConfigError("prev_slids must hold one value per point")
    if np.any(prev <= 0) or not np.all(np.isfinite(prev)):
        raise ValueError("prev_slids must be finite and strictly positive")

    nbr_idx, nbr_dist = spatial_neighbors(dataset.coords, config.k)
    samples = dataset.samples_at(step)
    obs = knn_kinematic_distances(samples, config.effective_obs_k(lid_config))
    if config.weight_space == "kinematic":
        diff = samples[nbr_idx] - samples[:, None, :]
        dist_w = np.sqrt((diff**2).sum(axis=2))
    else:
        dist_w = nbr_dist
    if config.bandwidth == "median":
        bw = np.median(dist_w, axis=1)
        bw = np.maximum(bw, 1e-12)[:, None]
    else:
        bw = float(config.bandwidth)
    weights = _weights_from_sq_distances(dist_w**2, bw)
    values, valid = fuse_rows(prev[nbr_idx], weights, obs, config.variance_floor)
    return LidField(step, _fill_sentinel(values, valid), valid)
