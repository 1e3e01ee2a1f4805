"""Crowd data: density maps, side information, synthetic scenes, patches."""

from .context import AUX_KINDS, AuxNormalizer, SceneContext
from .density import Annotation, count_in_roi, make_density_map, person_sigmas
from .evaluate import evaluate_mae, predict_count, predict_density_grid
from .patches import N_CLASSES, GridSpec, PatchSample, PatchSet, extract_patches, sample_patches
from .synth import SyntheticScene, blob_aspect, synth_scene

__all__ = [
    "AUX_KINDS", "Annotation", "AuxNormalizer", "GridSpec", "N_CLASSES", "PatchSample", "PatchSet",
    "SceneContext", "SyntheticScene", "blob_aspect", "count_in_roi", "evaluate_mae",
    "extract_patches", "make_density_map", "person_sigmas", "predict_count",
    "predict_density_grid", "sample_patches", "synth_scene",
]
