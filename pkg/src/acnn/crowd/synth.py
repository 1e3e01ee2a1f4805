"""Synthetic multi-viewpoint crowd scenes.

People are rendered as bright anisotropic Gaussian blobs on a smooth
textured floor. Blob height scales with the perspective value at the
person's row, and the blob aspect ratio goes from 3:1 (side view, shallow
tilt) at -10 degrees to 1:1 (top view) at -65 degrees, so what a person
looks like depends on the camera side information.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.ndimage import gaussian_filter

from ..errors import InvalidArgument
from ..geometry import CameraExtrinsics, estimate_perspective_map
from .context import SceneContext
from .density import Annotation, make_density_map

ANGLE_RANGE = (-65.0, -10.0)
HEIGHT_RANGE = (2.2, 16.0)
BLOB_SCALE = 0.3  # rendered vertical std in metres
MIN_SIGMA = 0.5
# random placements keep person centres this many pixels inside the frame
PLACEMENT_MARGIN = 8


def blob_aspect(angle_deg):
    """Vertical/horizontal extent ratio: 3 at -10 deg, 1 at -65 deg, linear between."""
    lo, hi = ANGLE_RANGE
    t = (hi - angle_deg) / (hi - lo)
    return 3.0 - 2.0 * t


@dataclass
class SyntheticScene:
    image: np.ndarray
    annotation: Annotation
    context: SceneContext
    camera: CameraExtrinsics
    pmap: object

    @cached_property
    def density(self):
        return make_density_map(self.annotation, self.pmap)

    @property
    def count(self):
        return len(self.annotation)


def _background(rng, rows, cols):
    field = gaussian_filter(rng.standard_normal((rows, cols)), sigma=3.0, mode="wrap")
    field = field / (field.std() + 1e-12)
    grain = gaussian_filter(rng.standard_normal((rows, cols)), sigma=0.7, mode="wrap")
    grain = grain / (grain.std() + 1e-12)
    return 0.3 + 0.06 * field + 0.02 * grain


def render_blob(image, row, col, sigma_v, sigma_h, amplitude):
    H, W = image.shape
    sigma_v, sigma_h = max(sigma_v, MIN_SIGMA), max(sigma_h, MIN_SIGMA)
    r0, r1 = max(int(row - 4 * sigma_v), 0), min(int(row + 4 * sigma_v) + 2, H)
    c0, c1 = max(int(col - 4 * sigma_h), 0), min(int(col + 4 * sigma_h) + 2, W)
    if r0 >= r1 or c0 >= c1:
        return
    gr = np.exp(-0.5 * ((np.arange(r0, r1) - row) / sigma_v) ** 2)
    gc = np.exp(-0.5 * ((np.arange(c0, c1) - col) / sigma_h) ** 2)
    image[r0:r1, c0:c1] += amplitude * np.outer(gr, gc)


def synth_scene(angle_deg, height_m, n_people, seed, rows=96, cols=128, fov_deg=16.0, points=None,
                margin=PLACEMENT_MARGIN):
    """Render one scene; returns a :class:`SyntheticScene`.

    ``points`` ([K, 2] row/col) overrides random placement, which is uniform
    over the frame shrunk by ``margin`` pixels on every side. Background and
    people draw from independent streams of ``seed``, so the same seed gives
    the same floor whatever the people.
    """
    if not ANGLE_RANGE[0] <= angle_deg <= ANGLE_RANGE[1]:
        raise InvalidArgument(f"tilt angle {angle_deg} outside {ANGLE_RANGE}")
    if not HEIGHT_RANGE[0] <= height_m <= HEIGHT_RANGE[1]:
        raise InvalidArgument(f"camera height {height_m} outside {HEIGHT_RANGE}")
    if n_people < 0:
        raise InvalidArgument("n_people must be nonnegative")
    if margin < 0 or 2 * margin >= min(rows, cols):
        raise InvalidArgument(f"placement margin {margin} does not fit a {rows}x{cols} frame")
    cam = CameraExtrinsics(angle_deg, height_m, fov_deg, rows, cols)
    pmap = estimate_perspective_map(cam)
    bg_seq, people_seq = np.random.SeedSequence(seed).spawn(2)
    bg_rng, rng = np.random.default_rng(bg_seq), np.random.default_rng(people_seq)
    image = _background(bg_rng, rows, cols)

    if points is None:
        points = np.column_stack([rng.uniform(margin, rows - 1 - margin, n_people),
                                  rng.uniform(margin, cols - 1 - margin, n_people)])
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    amps = rng.uniform(0.35, 0.5, len(points))
    aspect = blob_aspect(angle_deg)
    for (r, c), amp in zip(points, amps):
        sv = BLOB_SCALE * pmap.at(r, c)
        render_blob(image, r, c, sv, sv / aspect, amp)

    image = np.clip(image, 0.0, 1.0).astype(np.float32)
    ann = Annotation(points, (rows, cols))
    ctx = SceneContext("angle_height", [angle_deg, height_m])
    return SyntheticScene(image, ann, ctx, cam, pmap)
