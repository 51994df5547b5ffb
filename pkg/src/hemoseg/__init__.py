"""Unsupervised acute hemorrhage segmentation for head CT volumes.

The functional core lives in the submodules (preprocess, mixture, fcm,
postprocess, metrics, phantom, io); the estimator classes re-exported here
wrap it in a fit/transform/predict shape.
"""

from .errors import ConfigError, DataError, HemosegError, InternalError
from .fcm import FcmConfig, FuzzyCMeans, fcm_fit, fcm_segment
from .io import RescaleParams, load_mask, load_nifti, load_raw, save_nifti
from .metrics import EvalReport, detection_rate, dice, evaluate, load_boxes, save_boxes, summarize
from .mixture import (
    EmConfig,
    HemorrhageMixture,
    MixtureState,
    Responsibilities,
    e_step,
    fit_mixture,
    grow_clusters,
    init_state,
    log_likelihood,
    m_step,
    run_em,
)
from .morphology import ball, closing, connected_components, cross, cube, dilate, erode, opening
from .phantom import BlobSpec, PhantomOutput, PhantomSpec, generate
from .pipeline import RunConfig, compare_algorithms, segment_volume
from .postprocess import SegmentationResult, finalize, hard_label
from .preprocess import (
    BrainExtract,
    BrainExtractor,
    PreprocessConfig,
    WindowBounds,
    extract_brain,
    preprocess_pipeline,
    strip_skull,
    window,
)
from .volume import BoundingBox, LabelMask, Volume3D, VoxelCoord, coord_of, count_nonzero, index_of

__version__ = "0.1.0"

__all__ = [
    "BlobSpec", "BoundingBox", "BrainExtract", "BrainExtractor", "ConfigError",
    "DataError", "EmConfig", "EvalReport", "FcmConfig", "FuzzyCMeans",
    "HemorrhageMixture", "HemosegError", "InternalError", "LabelMask",
    "MixtureState", "PhantomOutput", "PhantomSpec", "PreprocessConfig",
    "RescaleParams", "Responsibilities", "RunConfig", "SegmentationResult",
    "Volume3D", "VoxelCoord", "WindowBounds", "ball", "closing",
    "compare_algorithms", "connected_components", "coord_of", "count_nonzero",
    "cross", "cube", "detection_rate", "dice", "dilate", "e_step", "erode",
    "evaluate", "extract_brain", "fcm_fit", "fcm_segment", "finalize",
    "fit_mixture", "generate", "grow_clusters", "hard_label", "index_of",
    "init_state", "load_boxes", "load_mask", "load_nifti", "load_raw",
    "log_likelihood", "m_step", "opening", "preprocess_pipeline", "run_em",
    "save_boxes", "save_nifti", "segment_volume", "strip_skull", "summarize",
    "window",
]
