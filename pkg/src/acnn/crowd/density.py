"""Ground-truth density maps and region counts."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument
from ..geometry import perspective_at

SIGMA_H_FRACTION = 1 / 5
SIGMA_V_FRACTION = 1 / 2
TRUNCATE = 4.0  # Gaussian support in standard deviations


@dataclass
class Annotation:
    points: np.ndarray  # [K, 2] (row, col), pixel centres on integer coordinates
    shape: tuple
    roi: np.ndarray = field(default=None)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        self.shape = tuple(int(s) for s in self.shape)
        H, W = self.shape
        if self.roi is None:
            self.roi = np.ones(self.shape, dtype=bool)
        self.roi = np.asarray(self.roi, dtype=bool)
        if self.roi.shape != self.shape:
            raise InvalidArgument(f"ROI shape {self.roi.shape} != image shape {self.shape}")
        p = self.points
        if len(p) and (p[:, 0].min() < -0.5 or p[:, 0].max() > H - 0.5
                       or p[:, 1].min() < -0.5 or p[:, 1].max() > W - 0.5):
            raise InvalidArgument("annotation points must lie inside the image")

    def __len__(self):
        return len(self.points)


def person_sigmas(m_p):
    """Horizontal and vertical standard deviations for a person at perspective ``m_p``."""
    return SIGMA_H_FRACTION * m_p, SIGMA_V_FRACTION * m_p


def make_density_map(ann, pmap):
    """Sum of one elliptical Gaussian per person, each renormalized to unit mass.

    Renormalizing after truncation at the image border keeps the total equal
    to the number of annotated people.
    """
    H, W = ann.shape
    if pmap.values.shape != (H, W):
        raise InvalidArgument("perspective map and annotation sizes differ")
    out = np.zeros((H, W), dtype=np.float64)
    for r, c in ann.points:
        m_p = perspective_at(pmap, (r, c))
        if not m_p > 0:
            raise InvalidArgument(f"non-positive perspective {m_p} at ({r}, {c})")
        sh, sv = person_sigmas(m_p)
        r0 = max(int(np.ceil(r - TRUNCATE * sv)), 0)
        r1 = min(int(np.floor(r + TRUNCATE * sv)) + 1, H)
        c0 = max(int(np.ceil(c - TRUNCATE * sh)), 0)
        c1 = min(int(np.floor(c + TRUNCATE * sh)) + 1, W)
        gr = np.exp(-0.5 * ((np.arange(r0, r1) - r) / sv) ** 2)
        gc = np.exp(-0.5 * ((np.arange(c0, c1) - c) / sh) ** 2)
        blob = np.outer(gr, gc)
        total = blob.sum() if blob.size else 0.0
        if total > 0:
            out[r0:r1, c0:c1] += blob / total
        else:
            # vanishing sigma: all mass on the nearest pixel
            out[min(max(int(np.floor(r + 0.5)), 0), H - 1), min(max(int(np.floor(c + 0.5)), 0), W - 1)] += 1.0
    return out


def count_in_roi(dmap, roi):
    roi = np.asarray(roi, dtype=bool)
    if roi.shape != dmap.shape:
        raise InvalidArgument(f"mask shape {roi.shape} != map shape {dmap.shape}")
    return float(dmap[roi].sum())
