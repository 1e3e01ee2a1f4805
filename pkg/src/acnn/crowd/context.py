"""Side-information records and their normalization."""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument

AUX_KINDS = {"perspective": 1, "angle_height": 2, "kernel_radius": 1}

# training values are kept inside +/- this many scale units
TRAIN_BOUND = 1.5


@dataclass
class SceneContext:
    kind: str
    values: np.ndarray

    def __post_init__(self):
        if self.kind not in AUX_KINDS:
            raise InvalidArgument(f"unknown aux kind {self.kind!r}")
        self.values = np.atleast_1d(np.asarray(self.values, dtype=np.float64))
        if self.values.shape != (AUX_KINDS[self.kind],):
            raise InvalidArgument(f"{self.kind} needs {AUX_KINDS[self.kind]} value(s), got {self.values}")


@dataclass
class AuxNormalizer:
    """Per-component affine map ``(raw - center) / scale``.

    Fitted as a z-score, with the scale widened when needed so that every
    training value lands inside ``[-1.5, 1.5]``.
    """

    kind: str
    center: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, kind, values):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] == 0 or v.shape[1] != AUX_KINDS[kind]:
            raise InvalidArgument(f"cannot fit {kind} normalizer on shape {v.shape}")
        center = v.mean(axis=0)
        spread = np.abs(v - center).max(axis=0)
        scale = np.maximum(v.std(axis=0), spread / TRAIN_BOUND)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(kind, center, scale)

    def transform(self, values):
        v = np.asarray(values, dtype=np.float64)
        if v.ndim == 1 and len(self.center) == 1:
            v = v[:, None]
        return (v - self.center) / self.scale

    def to_dict(self):
        return {"kind": self.kind, "center": [float(c) for c in self.center],
                "scale": [float(s) for s in self.scale]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], np.asarray(d["center"], dtype=np.float64),
                   np.asarray(d["scale"], dtype=np.float64))
