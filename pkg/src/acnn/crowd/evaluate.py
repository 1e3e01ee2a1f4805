"""Count prediction from centre-pixel density estimates, and MAE."""

import numpy as np

from ..errors import ContractViolation, InvalidArgument
from .patches import GridSpec, extract_patches, patch_aux

PREDICT_CHUNK = 256


def evaluate_mae(predicted, true):
    p = np.asarray(predicted, dtype=np.float64)
    t = np.asarray(true, dtype=np.float64)
    if p.shape != t.shape or p.size == 0:
        raise InvalidArgument("MAE needs two nonempty sequences of equal length")
    return float(np.mean(np.abs(p - t)))


def predict_density_grid(model, image, context_values, pmap, stride, roi):
    """Model predictions at every ``stride`` lattice point inside ``roi``.

    Returns ``(centers, predictions)``.
    """
    if stride < 1:
        raise InvalidArgument("stride must be >= 1")
    if not getattr(model, "trained", False):
        raise ContractViolation("model has not been trained")
    roi = np.ones(image.shape, dtype=bool) if roi is None else np.asarray(roi, dtype=bool)
    if roi.shape != image.shape:
        raise InvalidArgument("ROI and image sizes differ")
    centers = GridSpec(stride).centers(roi)
    preds = np.zeros(len(centers), dtype=np.float64)
    for i in range(0, len(centers), PREDICT_CHUNK):
        c = centers[i:i + PREDICT_CHUNK]
        patches = extract_patches(image, c, model.patch_size)
        aux = patch_aux(model.aux_kind, context_values, pmap, c)
        preds[i:i + PREDICT_CHUNK] = model.predict_density(patches, aux)
    return centers, preds


def predict_count(model, image, context_values, pmap, stride=4, roi=None):
    """``stride**2`` times the sum of centre-density predictions over the ROI lattice."""
    _, preds = predict_density_grid(model, image, context_values, pmap, stride, roi)
    return float(stride * stride * preds.sum())
