"""Fuzzy c-means baseline on brain intensities.

Plain 1-D FCM with fuzziness m: memberships u_ic minimize
sum u_ic^m (v_i - c_c)^2 subject to rows summing to one, alternating

    u_ic = (1 / d_ic^2)^(1/(m-1)) / sum_k (1 / d_ik^2)^(1/(m-1))
    c_c  = sum_i u_ic^m v_i / sum_i u_ic^m

from deterministic quantile-seeded centers. Clusters whose final center
exceeds a threshold are called hemorrhage; the union of their argmax voxels
is cleaned with a morphological opening.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigError, DataError
from .morphology import ball, opening
from .postprocess import SegmentationResult
from .preprocess import BrainExtract
from .volume import mask_from_linear

_TINY = np.finfo(np.float64).tiny


@dataclass(frozen=True)
class FcmConfig:
    n_clusters: int = 4
    fuzziness: float = 2.0
    threshold_hu: float = 45.0
    max_iters: int = 100
    tol: float = 1e-5
    open_radius: int = 1
    init: str = "quantile"

    def __post_init__(self):
        if self.n_clusters < 2:
            raise ConfigError(f"n_clusters must be >= 2, got {self.n_clusters}")
        if self.fuzziness <= 1.0:
            raise ConfigError(f"fuzziness must be > 1, got {self.fuzziness}")
        if self.max_iters < 1 or self.tol <= 0:
            raise ConfigError("max_iters must be >= 1 and tol positive")
        if self.open_radius < 0:
            raise ConfigError("open_radius must be >= 0")
        if self.init != "quantile":
            raise ConfigError(f"unknown init scheme {self.init!r}")


@dataclass(frozen=True, eq=False)
class FcmResult:
    """Converged centers (ascending) with matching membership columns."""

    centers: np.ndarray
    memberships: np.ndarray
    n_iter: int
    objective: float


def _memberships(values: np.ndarray, centers: np.ndarray, m: float) -> np.ndarray:
    d2 = (values[:, None] - centers[None, :]) ** 2
    with np.errstate(divide="ignore"):
        inv = d2 ** (-1.0 / (m - 1.0))
    u = np.empty_like(inv)
    exact = np.isinf(inv)
    exact_rows = exact.any(axis=1)
    if exact_rows.any():
        hits = exact[exact_rows]
        u[exact_rows] = hits / hits.sum(axis=1, keepdims=True)
    normal = ~exact_rows
    u[normal] = inv[normal] / inv[normal].sum(axis=1, keepdims=True)
    return u


def fcm_fit(values: np.ndarray, config: FcmConfig = FcmConfig()) -> FcmResult:
    """Run FCM on a 1-D sample; centers are returned sorted ascending."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size < config.n_clusters:
        raise DataError(f"need at least {config.n_clusters} samples, got {values.size}")
    if np.unique(values).size < config.n_clusters:
        raise DataError(f"need at least {config.n_clusters} distinct values for "
                        f"{config.n_clusters} clusters")

    k = config.n_clusters
    centers = np.quantile(values, (2 * np.arange(k) + 1) / (2 * k))
    u = _memberships(values, centers, config.fuzziness)
    n_iter = 0
    for n_iter in range(1, config.max_iters + 1):
        um = u ** config.fuzziness
        mass = um.sum(axis=0)
        new_centers = np.where(mass > 0, um.T @ values / np.maximum(mass, _TINY), centers)
        u = _memberships(values, new_centers, config.fuzziness)
        shift = np.abs(new_centers - centers).max()
        centers = new_centers
        if shift < config.tol:
            break

    order = np.argsort(centers, kind="stable")
    centers = centers[order]
    u = u[:, order]
    d2 = (values[:, None] - centers[None, :]) ** 2
    objective = float(((u ** config.fuzziness) * d2).sum())
    return FcmResult(centers=centers, memberships=u, n_iter=n_iter, objective=objective)


def fcm_report(result: FcmResult, config: FcmConfig) -> str:
    flagged = result.centers > config.threshold_hu
    lines = [
        f"fcm clusters={len(result.centers)} fuzziness={config.fuzziness:g} "
        f"threshold_hu={config.threshold_hu:g} iterations={result.n_iter} "
        f"objective={result.objective:.6f}",
        "idx center    hemorrhage",
    ]
    for idx, (center, hot) in enumerate(zip(result.centers, flagged)):
        lines.append(f"{idx:<3d} {center:<9.3f} {'yes' if hot else 'no'}")
    return "\n".join(lines) + "\n"


def fcm_segment(brain: BrainExtract, config: FcmConfig = FcmConfig()) -> SegmentationResult:
    """Cluster brain intensities and mask the above-threshold clusters.

    Voxels are hard-assigned to their top-membership cluster; clusters with
    centers above threshold_hu form the hemorrhage mask, cleaned by an
    opening of the configured radius (0 disables it).
    """
    flat = np.flatnonzero(brain.brain_mask.data.ravel(order="F"))
    values = brain.volume.data.ravel(order="F")[flat].astype(np.float64)
    result = fcm_fit(values, config)

    assign = result.memberships.argmax(axis=1)
    hot = np.flatnonzero(result.centers > config.threshold_hu)
    hem = np.isin(assign, hot)
    mask = mask_from_linear(brain.volume.dims, flat[hem])
    if config.open_radius >= 1:
        mask = opening(mask, ball(config.open_radius))

    # cluster indices (ascending-center order, 1-based) on the final mask
    kept = mask.data.ravel(order="F")[flat] != 0
    cmap = mask_from_linear(brain.volume.dims, flat[kept],
                            (assign[kept] + 1).astype(np.int32))
    return SegmentationResult(hemorrhage_mask=mask, cluster_map=cmap,
                              state=None, report=fcm_report(result, config))


class FuzzyCMeans(BaseEstimator):
    """Estimator wrapper around 1-D FCM.

    fit(X) takes a flat sample array; cluster_centers_ are sorted ascending
    and predict(X) returns top-membership cluster indices for new samples.
    """

    def __init__(self, n_clusters=4, fuzziness=2.0, max_iters=100, tol=1e-5):
        self.n_clusters = n_clusters
        self.fuzziness = fuzziness
        self.max_iters = max_iters
        self.tol = tol

    def _config(self) -> FcmConfig:
        return FcmConfig(n_clusters=self.n_clusters, fuzziness=self.fuzziness,
                         max_iters=self.max_iters, tol=self.tol)

    def fit(self, X, y=None):
        result = fcm_fit(np.asarray(X, dtype=np.float64).ravel(), self._config())
        self.cluster_centers_ = result.centers
        self.memberships_ = result.memberships
        self.labels_ = result.memberships.argmax(axis=1)
        self.n_iter_ = result.n_iter
        self.objective_ = result.objective
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "cluster_centers_"):
            raise ConfigError("FuzzyCMeans.predict called before fit")
        values = np.asarray(X, dtype=np.float64).ravel()
        u = _memberships(values, self.cluster_centers_, self.fuzziness)
        return u.argmax(axis=1)

    def fit_predict(self, X, y=None) -> np.ndarray:
        return self.fit(X).labels_
