"""Perspective maps from camera tilt, height and vertical field of view.

Each image row is mapped linearly to a ray angle below the horizon. For a
ray at angle ``beta`` and slant range ``rho = H / sin(beta)``, one pixel of
angular size ``delta`` covers a ground depth ``d = rho*delta / sin(beta)``
and a vertical extent ``h = rho*delta / cos(beta)`` at that distance. The
person length scale is ``a = sqrt(d*h)`` metres per pixel and the
perspective value is ``1/a`` pixels per metre.
"""

from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, InvalidArgument

MIN_BETA_DEG = 1.0
MAX_BETA_DEG = 89.0


@dataclass(frozen=True)
class CameraExtrinsics:
    angle_deg: float  # tilt, negative looking down
    height_m: float
    fov_deg: float  # vertical field of view
    rows: int
    cols: int

    def __post_init__(self):
        if not -90.0 < self.angle_deg < 0.0:
            raise InvalidArgument(f"tilt angle must lie in (-90, 0) degrees, got {self.angle_deg}")
        if self.height_m <= 0:
            raise InvalidArgument(f"camera height must be positive, got {self.height_m}")
        if not 0.0 < self.fov_deg < 180.0:
            raise InvalidArgument(f"vertical FOV must lie in (0, 180) degrees, got {self.fov_deg}")
        if self.rows < 1 or self.cols < 1:
            raise InvalidArgument("image size must be positive")
        if self.angle_deg + self.fov_deg / 2 >= 0:
            raise GeometryError("top rows look at or above the horizon (need angle + fov/2 < 0)")

    @property
    def pixel_angle(self):
        """Angular size of one pixel row, radians."""
        return np.deg2rad(self.fov_deg) / self.rows


def ray_angles(cam):
    """Angle below the horizon (radians) of the ray through each row centre."""
    r = np.arange(cam.rows, dtype=np.float64)
    centre = (cam.rows - 1) / 2.0
    return np.deg2rad(-cam.angle_deg) - cam.pixel_angle * (centre - r)


@dataclass
class PerspectiveMap:
    values: np.ndarray  # [rows, cols] pixels per metre

    @property
    def shape(self):
        return self.values.shape

    @property
    def rows(self):
        """Per-row perspective values (the map is column-constant)."""
        return self.values[:, 0]

    def at(self, row, col):
        return perspective_at(self, (row, col))


def row_perspective(cam):
    beta = ray_angles(cam)
    lo, hi = np.deg2rad(MIN_BETA_DEG), np.deg2rad(MAX_BETA_DEG)
    if beta.min() <= lo or beta.max() >= hi:
        raise GeometryError(
            f"ray angles span [{np.rad2deg(beta.min()):.2f}, {np.rad2deg(beta.max()):.2f}] deg, "
            f"outside ({MIN_BETA_DEG}, {MAX_BETA_DEG})")
    s, c = np.sin(beta), np.cos(beta)
    rho = cam.height_m / s
    a = rho * cam.pixel_angle / np.sqrt(s * c)
    return 1.0 / a


def estimate_perspective_map(cam):
    per_row = row_perspective(cam)
    return PerspectiveMap(np.repeat(per_row[:, None], cam.cols, axis=1))


def perspective_at(pmap, p):
    """Perspective value at ``p = (row, col)``.

    Pixel centres sit on integer coordinates, so the image spans
    ``[-0.5, H - 0.5]``; sub-pixel points round to the nearest pixel.
    """
    H, W = pmap.values.shape
    r, c = float(p[0]), float(p[1])
    if not (-0.5 <= r <= H - 0.5 and -0.5 <= c <= W - 0.5):
        raise InvalidArgument(f"pixel {p} outside {H}x{W} map")
    row = min(max(int(np.floor(r + 0.5)), 0), H - 1)
    col = min(max(int(np.floor(c + 0.5)), 0), W - 1)
    return float(pmap.values[row, col])
