"""End-to-end segmentation runs and config-file plumbing."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .fcm import FcmConfig, fcm_segment
from .mixture import EmConfig, fit_mixture, state_report
from .morphology import ball
from .postprocess import SegmentationResult, finalize
from .preprocess import BrainExtract, PreprocessConfig, WindowBounds, preprocess_pipeline
from .volume import Volume3D

ALGORITHMS = ("mixture", "fcm", "fcm40", "fcm45")


@dataclass(frozen=True)
class RunConfig:
    algorithm: str = "mixture"
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    em: EmConfig = field(default_factory=EmConfig)
    fcm: FcmConfig = field(default_factory=FcmConfig)
    fill_radius: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.fill_radius < 0:
            raise ConfigError("fill_radius must be >= 0")


def _fcm_for(algorithm: str, base: FcmConfig) -> FcmConfig:
    """fcm40/fcm45 pin the threshold; bare fcm keeps the configured one."""
    if algorithm == "fcm":
        return base
    return replace(base, threshold_hu={"fcm40": 40.0, "fcm45": 45.0}[algorithm])


def segment_brain(brain: BrainExtract, config: RunConfig) -> SegmentationResult:
    """Run the configured algorithm on an already-extracted brain."""
    if config.algorithm == "mixture":
        state, resp = fit_mixture(brain, config.em)
        fill_se = ball(config.fill_radius) if config.fill_radius >= 1 else None
        result = finalize(resp, state, brain, fill_se)
        return replace(result, report=state_report(state))
    return fcm_segment(brain, _fcm_for(config.algorithm, config.fcm))


def segment_volume(vol: Volume3D, config: RunConfig = RunConfig()) -> tuple[SegmentationResult, BrainExtract]:
    """Preprocess a raw volume and segment it."""
    brain = preprocess_pipeline(vol, config.preprocess)
    return segment_brain(brain, config), brain


def compare_algorithms(vol: Volume3D, config: RunConfig, algorithms=ALGORITHMS) -> tuple[dict, BrainExtract]:
    """Segment one volume with several algorithms sharing one preprocess."""
    brain = preprocess_pipeline(vol, config.preprocess)
    results = {}
    for name in algorithms:
        results[name] = segment_brain(brain, replace(config, algorithm=name))
    return results, brain


_INT_KEYS = {
    "skull.close_radius": ("preprocess", "skull_close_radius"),
    "brain.erode_radius": ("preprocess", "brain_erode_radius"),
    "brain.connectivity": ("preprocess", "connectivity"),
    "em.min_region_voxels": ("em", "min_region_voxels"),
    "em.max_em_iters": ("em", "max_em_iters"),
    "em.max_clusters": ("em", "max_clusters"),
    "em.connectivity": ("em", "connectivity"),
    "fcm.n_clusters": ("fcm", "n_clusters"),
    "fcm.max_iters": ("fcm", "max_iters"),
    "fcm.open_radius": ("fcm", "open_radius"),
    "post.fill_radius": (None, "fill_radius"),
}

_FLOAT_KEYS = {
    "window.min": ("window", "min_hu"),
    "window.max": ("window", "max_hu"),
    "em.healthy_seed_hu": ("em", "healthy_seed_hu"),
    "em.hemorrhage_seed_hu": ("em", "hemorrhage_seed_hu"),
    "em.rel_ll_tol": ("em", "rel_ll_tol"),
    "em.var_floor": ("em", "var_floor"),
    "em.cov_floor": ("em", "cov_floor"),
    "fcm.fuzziness": ("fcm", "fuzziness"),
    "fcm.threshold_hu": ("fcm", "threshold_hu"),
    "fcm.tol": ("fcm", "tol"),
}

_BOOL_KEYS = {
    "em.spacing_scaled": ("em", "spacing_scaled"),
}


def build_run_config(kv: dict[str, str], algorithm: str = "mixture") -> RunConfig:
    """Turn flat ``section.key`` strings into a validated RunConfig."""
    window: dict = {}
    pre: dict = {}
    em: dict = {}
    fcm: dict = {}
    top: dict = {"algorithm": algorithm}
    buckets = {"window": window, "preprocess": pre, "em": em, "fcm": fcm, None: top}

    for key, raw in kv.items():
        try:
            if key in _INT_KEYS:
                section, name = _INT_KEYS[key]
                buckets[section][name] = int(raw)
            elif key in _FLOAT_KEYS:
                section, name = _FLOAT_KEYS[key]
                buckets[section][name] = float(raw)
            elif key in _BOOL_KEYS:
                section, name = _BOOL_KEYS[key]
                if raw.lower() not in ("true", "false", "0", "1"):
                    raise ValueError(f"expected a boolean, got {raw!r}")
                buckets[section][name] = raw.lower() in ("true", "1")
            elif key == "algorithm":
                top["algorithm"] = raw
            else:
                raise ConfigError(f"unknown config key {key!r}")
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: bad value {raw!r} ({exc})") from exc

    if window:
        pre["window"] = WindowBounds(**{**{"min_hu": 0.0, "max_hu": 100.0}, **window})
    return RunConfig(
        preprocess=PreprocessConfig(**pre),
        em=EmConfig(**em),
        fcm=FcmConfig(**fcm),
        **top,
    )
