"""Adaptive location-intensity mixture model fitted with EM.

Each brain voxel i carries an intensity v_i and a position x_i; the joint
density factors per cluster c as

    p(v, x | c) = N(v; mu_c, sigma_c^2) * p_loc(x | c)

where the location term is uniform over the brain voxel set for the healthy
cluster (p_loc = 1 / n_bv) and a trivariate Gaussian N(x; m_c, S_c) for each
hemorrhage cluster. With mixing weights pi_c the E-step responsibilities are

    gamma_ic = pi_c p(v_i, x_i | c) / sum_k pi_k p(v_i, x_i | k)

and the M-step re-estimates weighted population moments

    N_c = sum_i gamma_ic          pi_c    = N_c / n_bv
    mu_c = weighted intensity mean,  sigma_c^2 = weighted intensity variance
    m_c = weighted coordinate mean,  S_c = weighted coordinate covariance

with sigma_c^2 floored at var_floor and the eigenvalues of S_c floored at
cov_floor. Hemorrhage clusters whose effective support N_c drops below one
voxel are pruned (the healthy cluster never is) and weights renormalized.

Model fitting alternates converged EM runs with a growth pass that finds
bright connected regions the current clusters fail to claim and seeds one
new cluster per sufficiently large region, stopping at the first pass that
adds nothing.

All densities are evaluated in log space; responsibilities come from a
log-sum-exp softmax, so extreme covariances degrade gracefully.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ConfigError, InternalError
from .morphology import connected_components
from .preprocess import BrainExtract
from .volume import LabelMask, coords_of_indices, mask_from_linear

log = logging.getLogger("hemoseg.mixture")

_LOG_2PI = math.log(2.0 * math.pi)

HEALTHY = "healthy"
HEMORRHAGE = "hemorrhage"


@dataclass(frozen=True)
class EmConfig:
    """Knobs for initialization, EM iteration and cluster growth."""

    healthy_seed_hu: float = 40.0
    hemorrhage_seed_hu: float = 50.0
    min_region_voxels: int = 100
    max_em_iters: int = 100
    rel_ll_tol: float = 1e-6
    var_floor: float = 1e-4
    cov_floor: float = 1e-4
    max_clusters: int = 16
    connectivity: int = 26
    spacing_scaled: bool = False

    def __post_init__(self):
        numeric = {
            "min_region_voxels": self.min_region_voxels,
            "max_em_iters": self.max_em_iters,
            "rel_ll_tol": self.rel_ll_tol,
            "var_floor": self.var_floor,
            "cov_floor": self.cov_floor,
        }
        for name, value in numeric.items():
            if value <= 0:
                raise ConfigError(f"{name} must be positive, got {value!r}")
        if not self.healthy_seed_hu < self.hemorrhage_seed_hu:
            raise ConfigError("healthy_seed_hu must be below hemorrhage_seed_hu")
        if self.max_clusters < 2:
            raise ConfigError(f"max_clusters must be >= 2, got {self.max_clusters}")
        if self.connectivity not in (6, 26):
            raise ConfigError(f"connectivity must be 6 or 26, got {self.connectivity}")


@dataclass(frozen=True)
class ClusterParams:
    """Parameters of one mixture component."""

    kind: str
    weight: float
    intensity_mean: float
    intensity_var: float
    location_mean: np.ndarray | None = None
    location_cov: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in (HEALTHY, HEMORRHAGE):
            raise InternalError(f"unknown cluster kind {self.kind!r}")
        if not (0.0 <= self.weight <= 1.0 + 1e-12):
            raise InternalError(f"cluster weight {self.weight} outside [0, 1]")
        if not (math.isfinite(self.intensity_mean) and self.intensity_var > 0):
            raise InternalError("cluster intensity parameters must be finite and positive")
        if self.kind == HEALTHY:
            if self.location_mean is not None or self.location_cov is not None:
                raise InternalError("healthy cluster carries no location Gaussian")
        else:
            mean = np.asarray(self.location_mean, dtype=np.float64)
            cov = np.asarray(self.location_cov, dtype=np.float64)
            if mean.shape != (3,) or cov.shape != (3, 3):
                raise InternalError("hemorrhage cluster needs a (3,) mean and (3,3) covariance")
            if not np.allclose(cov, cov.T, atol=1e-8):
                raise InternalError("location covariance must be symmetric")
            if np.linalg.eigvalsh(cov).min() <= 0:
                raise InternalError("location covariance must be positive definite")
            object.__setattr__(self, "location_mean", mean)
            object.__setattr__(self, "location_cov", cov)

    @property
    def intensity_std(self) -> float:
        return math.sqrt(self.intensity_var)


@dataclass(frozen=True)
class MixtureState:
    """Full model state: cluster 0 is always the healthy cluster."""

    clusters: tuple[ClusterParams, ...]
    n_bv: int
    log_likelihood: float = -math.inf
    iteration: int = 0
    converged: bool = False

    def __post_init__(self):
        if not self.clusters or self.clusters[0].kind != HEALTHY:
            raise InternalError("cluster 0 must be the healthy cluster")
        if any(c.kind != HEMORRHAGE for c in self.clusters[1:]):
            raise InternalError("clusters 1.. must be hemorrhage clusters")
        if self.n_bv <= 0:
            raise InternalError("n_bv must be positive")
        total = sum(c.weight for c in self.clusters)
        if abs(total - 1.0) > 1e-9:
            raise InternalError(f"cluster weights sum to {total!r}, expected 1")

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def n_hemorrhage(self) -> int:
        return len(self.clusters) - 1


@dataclass(frozen=True, eq=False)
class Responsibilities:
    """Per-brain-voxel soft assignments; rows sum to one."""

    gamma: np.ndarray

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=np.float64)
        if gamma.ndim != 2 or gamma.shape[0] < 1 or gamma.shape[1] < 1:
            raise InternalError(f"responsibilities must be (n, K), got {gamma.shape}")
        if not np.all(np.isfinite(gamma)) or gamma.min() < 0:
            raise InternalError("responsibilities must be finite and non-negative")
        err = np.abs(gamma.sum(axis=1) - 1.0).max()
        if err > 1e-9:
            raise InternalError(f"responsibility rows deviate from 1 by {err:.3e}")
        object.__setattr__(self, "gamma", gamma)

    @property
    def n_voxels(self) -> int:
        return self.gamma.shape[0]

    @property
    def n_clusters(self) -> int:
        return self.gamma.shape[1]

    def hemorrhage_probability(self) -> np.ndarray:
        return self.gamma[:, 1:].sum(axis=1)


@dataclass(frozen=True, eq=False)
class _VoxelData:
    """Brain voxels flattened for model math (order: ascending linear index)."""

    flat: np.ndarray       # (n,) linear indices into the volume
    coords: np.ndarray     # (n, 3) float positions
    intensities: np.ndarray  # (n,) float
    dims: tuple[int, int, int]


def _voxel_data(brain: BrainExtract, config: EmConfig | None) -> _VoxelData:
    dims = brain.volume.dims
    flat = np.flatnonzero(brain.brain_mask.data.ravel(order="F"))
    coords = coords_of_indices(flat, dims).astype(np.float64)
    if config is not None and config.spacing_scaled:
        coords = coords * np.asarray(brain.volume.spacing, dtype=np.float64)
    intensities = brain.volume.data.ravel(order="F")[flat].astype(np.float64)
    return _VoxelData(flat=flat, coords=coords, intensities=intensities, dims=dims)


def _log_gauss_1d(x: np.ndarray, mean: float, var: float) -> np.ndarray:
    return -0.5 * (_LOG_2PI + math.log(var)) - (x - mean) ** 2 / (2.0 * var)


def _log_gauss_3d(coords: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    chol = np.linalg.cholesky(cov)
    z = np.linalg.solve(chol, (coords - mean).T)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (3.0 * _LOG_2PI + logdet + (z ** 2).sum(axis=0))


def _log_weights(state: MixtureState, vd: _VoxelData) -> np.ndarray:
    """(n, K) matrix of log(pi_c) + log p(v_i, x_i | c)."""
    n = vd.intensities.shape[0]
    logw = np.empty((n, state.n_clusters), dtype=np.float64)
    log_uniform = -math.log(state.n_bv)
    for c, cl in enumerate(state.clusters):
        lw = math.log(cl.weight) if cl.weight > 0 else -math.inf
        part = _log_gauss_1d(vd.intensities, cl.intensity_mean, cl.intensity_var)
        if cl.kind == HEALTHY:
            part = part + log_uniform
        else:
            part = part + _log_gauss_3d(vd.coords, cl.location_mean, cl.location_cov)
        logw[:, c] = lw + part
    return logw


def _softmax_rows(logw: np.ndarray) -> tuple[np.ndarray, float]:
    """Row-normalized exp(logw) plus the summed log normalizer."""
    peak = logw.max(axis=1, keepdims=True)
    shifted = np.exp(logw - peak)
    norm = shifted.sum(axis=1, keepdims=True)
    gamma = shifted / norm
    total = float((np.log(norm) + peak).sum())
    return gamma, total


def e_step(state: MixtureState, brain: BrainExtract,
           config: EmConfig | None = None) -> Responsibilities:
    """Posterior cluster responsibilities for every brain voxel."""
    vd = _voxel_data(brain, config)
    gamma, _ = _softmax_rows(_log_weights(state, vd))
    return Responsibilities(gamma)


def log_likelihood(state: MixtureState, brain: BrainExtract,
                   config: EmConfig | None = None) -> float:
    """Total log-likelihood of the brain voxels under the state."""
    vd = _voxel_data(brain, config)
    _, total = _softmax_rows(_log_weights(state, vd))
    return total


def _floor_cov(cov: np.ndarray, floor: float) -> np.ndarray:
    cov = (cov + cov.T) / 2.0
    vals, vecs = np.linalg.eigh(cov)
    vals = np.maximum(vals, floor)
    out = (vecs * vals) @ vecs.T
    return (out + out.T) / 2.0


def _estimate_clusters(gamma: np.ndarray, vd: _VoxelData, kinds, old,
                       config: EmConfig) -> list[ClusterParams]:
    """Weighted-moment updates with floors and pruning."""
    n_bv = gamma.shape[0]
    counts = gamma.sum(axis=0)
    params: list[ClusterParams] = []
    for c, kind in enumerate(kinds):
        n_c = float(counts[c])
        weight = n_c / n_bv
        if kind == HEMORRHAGE and n_c < 1.0:
            log.debug("pruning cluster %d with effective support %.4f", c, n_c)
            continue
        if n_c <= 0.0:
            # a weightless healthy cluster: keep its previous shape, or fall
            # back to global intensity moments when there is none yet
            if old[c] is not None:
                params.append(replace(old[c], weight=0.0))
            else:
                mu = float(vd.intensities.mean())
                var = max(float(vd.intensities.var()), config.var_floor)
                params.append(ClusterParams(HEALTHY, 0.0, mu, var))
            continue
        g = gamma[:, c]
        mu = float(g @ vd.intensities) / n_c
        var = float(g @ (vd.intensities - mu) ** 2) / n_c
        var = max(var, config.var_floor)
        if kind == HEALTHY:
            params.append(ClusterParams(HEALTHY, weight, mu, var))
        else:
            loc = (g @ vd.coords) / n_c
            diff = vd.coords - loc
            cov = (diff * g[:, None]).T @ diff / n_c
            cov = _floor_cov(cov, config.cov_floor)
            params.append(ClusterParams(HEMORRHAGE, weight, mu, var,
                                        location_mean=loc, location_cov=cov))
    total = sum(p.weight for p in params)
    if total <= 0:
        raise InternalError("all cluster weights vanished in the M-step")
    return [replace(p, weight=p.weight / total) for p in params]


def m_step(resp: Responsibilities, state: MixtureState, brain: BrainExtract,
           config: EmConfig) -> MixtureState:
    """Re-estimate cluster parameters from responsibilities."""
    if resp.n_clusters != state.n_clusters or resp.n_voxels != brain.n_bv:
        raise InternalError("responsibility shape does not match state/brain")
    vd = _voxel_data(brain, config)
    kinds = [c.kind for c in state.clusters]
    clusters = _estimate_clusters(resp.gamma, vd, kinds, state.clusters, config)
    return replace(state, clusters=tuple(clusters), iteration=state.iteration + 1)


def init_state(brain: BrainExtract, config: EmConfig = EmConfig()) -> MixtureState:
    """Seed the model from intensity thresholds.

    Voxels below healthy_seed_hu start fully healthy. The largest connected
    region above hemorrhage_seed_hu seeds one hemorrhage cluster when it
    reaches min_region_voxels; with no such region the state holds just the
    healthy cluster. The ambiguous band between the two thresholds starts
    with a uniform split. Bright voxels outside the seeded region also start
    healthy: they are unexplained until a later growth pass claims them,
    which keeps the seeded cluster's location covariance tight.
    """
    vd = _voxel_data(brain, config)
    n = vd.intensities.shape[0]
    bright = LabelMask((brain.volume.data > config.hemorrhage_seed_hu)
                       & brain.brain_mask.binary())
    labeling = connected_components(bright, config.connectivity)

    if labeling.n_components > 0 and labeling.sizes[0] >= config.min_region_voxels:
        region_sel = labeling.labels.data.ravel(order="F")[vd.flat] == 1
        band = ((vd.intensities >= config.healthy_seed_hu)
                & (vd.intensities <= config.hemorrhage_seed_hu))
        gamma = np.zeros((n, 2), dtype=np.float64)
        gamma[:, 0] = 1.0
        gamma[band] = (0.5, 0.5)
        gamma[region_sel] = (0.0, 1.0)
        kinds = [HEALTHY, HEMORRHAGE]
    else:
        gamma = np.ones((n, 1), dtype=np.float64)
        kinds = [HEALTHY]

    clusters = _estimate_clusters(gamma, vd, kinds, [None] * len(kinds), config)
    state = MixtureState(clusters=tuple(clusters), n_bv=brain.n_bv, iteration=0)
    return replace(state, log_likelihood=log_likelihood(state, brain, config))


def run_em(state: MixtureState, brain: BrainExtract, config: EmConfig = EmConfig(),
           trace: list | None = None) -> MixtureState:
    """Iterate E/M until the relative log-likelihood gain falls under tol.

    Runs at most max_em_iters iterations; the returned state's converged
    flag records whether the tolerance was reached. When a list is passed
    as trace, the post-update log-likelihood of every iteration is appended.
    """
    ll_prev = state.log_likelihood
    if not math.isfinite(ll_prev):
        ll_prev = log_likelihood(state, brain, config)
    state = replace(state, converged=False)
    for _ in range(config.max_em_iters):
        resp = e_step(state, brain, config)
        state = m_step(resp, state, brain, config)
        ll = log_likelihood(state, brain, config)
        state = replace(state, log_likelihood=ll)
        if trace is not None:
            trace.append(ll)
        rel = abs(ll - ll_prev) / max(1.0, abs(ll_prev))
        ll_prev = ll
        if rel <= config.rel_ll_tol:
            state = replace(state, converged=True)
            break
    return state


def _region_cluster(region_sel: np.ndarray, vd: _VoxelData, n_bv: int,
                    config: EmConfig) -> ClusterParams:
    """Hard parameters of a voxel region, used to seed a new cluster."""
    ints = vd.intensities[region_sel]
    coords = vd.coords[region_sel]
    mu = float(ints.mean())
    var = max(float(ints.var()), config.var_floor)
    loc = coords.mean(axis=0)
    cov = _floor_cov(np.cov(coords, rowvar=False, bias=True), config.cov_floor)
    return ClusterParams(HEMORRHAGE, region_sel.sum() / n_bv, mu, var,
                         location_mean=loc, location_cov=cov)


def grow_clusters(state: MixtureState, brain: BrainExtract,
                  config: EmConfig = EmConfig()) -> tuple[MixtureState, bool]:
    """Seed clusters for bright regions the model still labels healthy.

    Finds connected components above hemorrhage_seed_hu among voxels whose
    hard label is currently healthy, and adds one cluster per component of
    at least min_region_voxels (largest first, capped at max_clusters).
    Returns the possibly-extended state and whether anything was added.
    """
    vd = _voxel_data(brain, config)
    gamma = e_step(state, brain, config).gamma
    healthy_labeled = gamma[:, 1:].sum(axis=1) <= gamma[:, 0]
    candidate_sel = healthy_labeled & (vd.intensities > config.hemorrhage_seed_hu)
    candidates = mask_from_linear(vd.dims, vd.flat[candidate_sel])
    labeling = connected_components(candidates, config.connectivity)

    added: list[ClusterParams] = []
    n_live = state.n_clusters
    for label in range(1, labeling.n_components + 1):
        if labeling.sizes[label - 1] < config.min_region_voxels:
            break
        if n_live + len(added) >= config.max_clusters:
            log.warning("cluster cap %d reached; leaving %d candidate regions unmodeled",
                        config.max_clusters, labeling.n_components - label + 1)
            break
        region_sel = labeling.labels.data.ravel(order="F")[vd.flat] == label
        added.append(_region_cluster(region_sel, vd, state.n_bv, config))

    if not added:
        return state, False

    room = max(1.0 - sum(c.weight for c in added), 1e-12)
    clusters = [replace(c, weight=c.weight * room) for c in state.clusters] + added
    total = sum(c.weight for c in clusters)
    clusters = [replace(c, weight=c.weight / total) for c in clusters]
    new_state = replace(state, clusters=tuple(clusters), converged=False)
    new_state = replace(new_state,
                        log_likelihood=log_likelihood(new_state, brain, config))
    log.info("grew mixture by %d cluster(s) to %d", len(added), new_state.n_clusters)
    return new_state, True


def fit_mixture(brain: BrainExtract, config: EmConfig = EmConfig(),
                trace: list | None = None) -> tuple[MixtureState, Responsibilities]:
    """Full adaptive fit: init, then alternate EM and growth to a fixpoint.

    With no initial bright region the model stays healthy-only ("no
    hemorrhage found") and no EM runs. The trace, when given, collects
    ("phase", log_likelihood) pairs across the whole fit.
    """
    state = init_state(brain, config)
    if trace is not None:
        trace.append(("init", state.log_likelihood))
    if state.n_hemorrhage == 0:
        log.info("no hemorrhage found: no bright region of at least %d voxels",
                 config.min_region_voxels)
        return replace(state, converged=True), e_step(state, brain, config)

    for _ in range(config.max_clusters + 1):
        em_trace: list | None = [] if trace is not None else None
        state = run_em(state, brain, config, trace=em_trace)
        if trace is not None:
            trace.extend(("em", ll) for ll in em_trace)
        state, changed = grow_clusters(state, brain, config)
        if not changed:
            break
        if trace is not None:
            trace.append(("grow", state.log_likelihood))
    return state, e_step(state, brain, config)


def state_report(state: MixtureState) -> str:
    """Fixed-format cluster table: kind, weight, intensity, location."""
    lines = [
        f"clusters={state.n_clusters} n_bv={state.n_bv} "
        f"iterations={state.iteration} converged={str(state.converged).lower()} "
        f"log_likelihood={state.log_likelihood:.6f}",
        "idx kind        weight    mu_int    sigma_int mu_loc                     cov_eigenvalues",
    ]
    for idx, cl in enumerate(state.clusters):
        if cl.kind == HEALTHY:
            loc = "-"
            eig = "-"
        else:
            loc = ",".join(f"{v:.2f}" for v in cl.location_mean)
            eig = ",".join(f"{v:.2f}" for v in sorted(np.linalg.eigvalsh(cl.location_cov)))
        lines.append(f"{idx:<3d} {cl.kind:<11s} {cl.weight:<9.6f} {cl.intensity_mean:<9.3f} "
                     f"{cl.intensity_std:<9.3f} {loc:<26s} {eig}")
    return "\n".join(lines) + "\n"


class HemorrhageMixture(BaseEstimator):
    """Estimator wrapper around the adaptive mixture fit.

    fit(X) expects a BrainExtract; afterwards state_, responsibilities_,
    n_iter_ and converged_ hold the outcome, and labels_ is the binary
    hemorrhage mask over the full volume grid (before hole filling).
    """

    def __init__(self, healthy_seed_hu=40.0, hemorrhage_seed_hu=50.0,
                 min_region_voxels=100, max_em_iters=100, rel_ll_tol=1e-6,
                 var_floor=1e-4, cov_floor=1e-4, max_clusters=16,
                 connectivity=26, spacing_scaled=False):
        self.healthy_seed_hu = healthy_seed_hu
        self.hemorrhage_seed_hu = hemorrhage_seed_hu
        self.min_region_voxels = min_region_voxels
        self.max_em_iters = max_em_iters
        self.rel_ll_tol = rel_ll_tol
        self.var_floor = var_floor
        self.cov_floor = cov_floor
        self.max_clusters = max_clusters
        self.connectivity = connectivity
        self.spacing_scaled = spacing_scaled

    def _config(self) -> EmConfig:
        return EmConfig(**self.get_params())

    def fit(self, X: BrainExtract, y=None):
        from .postprocess import hard_label

        state, resp = fit_mixture(X, self._config())
        self.state_ = state
        self.responsibilities_ = resp
        self.n_iter_ = state.iteration
        self.converged_ = state.converged
        self.labels_ = hard_label(resp, X)
        return self

    def fit_predict(self, X: BrainExtract, y=None) -> LabelMask:
        return self.fit(X).labels_
