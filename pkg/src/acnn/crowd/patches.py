"""Patch extraction with multi-task targets."""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument

N_CLASSES = 15
PATCH_SIZES = (33, 65)


@dataclass(frozen=True)
class GridSpec:
    """Patch centres on a ``stride`` lattice, optionally subsampled to ``n_samples``."""

    stride: int = 4
    n_samples: int = None

    def centers(self, roi, rng=None):
        if self.stride < 1 or (self.n_samples is not None and self.n_samples < 1):
            raise InvalidArgument(f"degenerate grid spec {self}")
        H, W = roi.shape
        off = self.stride // 2
        rr, cc = np.meshgrid(np.arange(off, H, self.stride), np.arange(off, W, self.stride), indexing="ij")
        rr, cc = rr.ravel(), cc.ravel()
        keep = roi[rr, cc]
        pts = np.column_stack([rr[keep], cc[keep]])
        if self.n_samples is not None and self.n_samples < len(pts):
            rng = rng if rng is not None else np.random.default_rng(0)
            pts = pts[np.sort(rng.choice(len(pts), self.n_samples, replace=False))]
        return pts


@dataclass
class PatchSample:
    patch: np.ndarray  # [1, s, s]
    aux: np.ndarray  # raw side information
    density: float
    count_class: int


@dataclass
class PatchSet:
    """Structure-of-arrays batch of :class:`PatchSample`."""

    patches: np.ndarray  # [n, 1, s, s] float32
    aux: np.ndarray  # [n, d] raw
    density: np.ndarray  # [n]
    count_class: np.ndarray  # [n] int
    centers: np.ndarray  # [n, 2]

    def __len__(self):
        return len(self.density)

    def __getitem__(self, i):
        return PatchSample(self.patches[i], self.aux[i], float(self.density[i]), int(self.count_class[i]))

    @classmethod
    def concat(cls, sets):
        sets = list(sets)
        return cls(*(np.concatenate([getattr(s, f) for s in sets]) for f in
                     ("patches", "aux", "density", "count_class", "centers")))

    def subset(self, idx):
        return PatchSet(self.patches[idx], self.aux[idx], self.density[idx],
                        self.count_class[idx], self.centers[idx])


def extract_patches(image, centers, size):
    """Square patches around integer centres, reflecting at the borders."""
    if size not in PATCH_SIZES and size % 2 == 0:
        raise InvalidArgument(f"patch size must be odd, got {size}")
    half = size // 2
    mode = "reflect" if min(image.shape) > half else "symmetric"
    padded = np.pad(image, half, mode=mode)
    centers = np.asarray(centers, dtype=np.int64).reshape(-1, 2)
    out = np.empty((len(centers), 1, size, size), dtype=np.float32)
    for i, (r, c) in enumerate(centers):
        out[i, 0] = padded[r:r + size, c:c + size]
    return out


def count_classes(points, centers, size):
    """Number of annotated points inside each patch, clamped into 15 classes."""
    half = size / 2.0
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    if len(points) == 0:
        return np.zeros(len(centers), dtype=np.int64)
    dr = np.abs(points[None, :, 0] - centers[:, None, 0])
    dc = np.abs(points[None, :, 1] - centers[:, None, 1])
    inside = ((dr < half) & (dc < half)).sum(axis=1)
    return np.clip(inside, 0, N_CLASSES - 1).astype(np.int64)


def patch_aux(kind, context_values, pmap, centers):
    """Raw aux per patch: the perspective at each centre, or the scene's values."""
    centers = np.asarray(centers, dtype=np.int64).reshape(-1, 2)
    if kind == "perspective":
        return pmap.values[centers[:, 0], centers[:, 1]][:, None].astype(np.float64)
    values = np.atleast_1d(np.asarray(context_values, dtype=np.float64))
    return np.repeat(values[None, :], len(centers), axis=0)


def sample_patches(image, dmap, ann, aux_kind, context_values, grid, seed, pmap=None, size=33):
    """Sample training patches on ``grid`` inside the annotation ROI.

    The regression target is the density value at the patch centre; the
    class target is the clamped number of people inside the patch.
    """
    if aux_kind == "perspective" and pmap is None:
        raise InvalidArgument("perspective aux needs a perspective map")
    rng = np.random.default_rng(seed)
    centers = grid.centers(ann.roi, rng)
    if len(centers) == 0:
        raise InvalidArgument("grid spec selects no patch centres")
    return PatchSet(
        extract_patches(image, centers, size),
        patch_aux(aux_kind, context_values, pmap, centers),
        dmap[centers[:, 0], centers[:, 1]].astype(np.float64),
        count_classes(ann.points, centers, size),
        centers,
    )
