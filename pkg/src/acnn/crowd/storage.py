"""On-disk scene sets: PGM frames, an annotation CSV and a scene metadata CSV.

A directory holds ``scenes.csv`` (``scene,angle_deg,height_m,fov_deg``),
``annotations.csv`` (``image,row,col``; one row per person), one 16-bit PGM
per scene under ``images/`` and optionally an 8-bit ``roi.pgm`` mask shared
by every frame.
"""

import os

import numpy as np

from ..errors import InvalidArgument
from ..geometry import CameraExtrinsics, estimate_perspective_map
from ..io import load_image, load_mask, read_csv, save_image, save_mask, write_csv
from .context import SceneContext
from .density import Annotation
from .synth import SyntheticScene

SCENES_CSV = "scenes.csv"
ANNOTATIONS_CSV = "annotations.csv"
ROI_PGM = "roi.pgm"
SCENE_HEADER = ("scene", "angle_deg", "height_m", "fov_deg")
ANNOTATION_HEADER = ("image", "row", "col")


def save_scene_dir(path, named_scenes, roi=None, comments=()):
    """Write ``[(name, scene), ...]``; scene names become image file stems."""
    os.makedirs(os.path.join(path, "images"), exist_ok=True)
    meta, points = [], []
    for name, sc in named_scenes:
        cam = sc.camera
        meta.append((name, cam.angle_deg, cam.height_m, cam.fov_deg))
        image = f"{name}.pgm"
        save_image(os.path.join(path, "images", image), sc.image)
        points += [(image, r, c) for r, c in sc.annotation.points]
    write_csv(os.path.join(path, SCENES_CSV), SCENE_HEADER, meta, comments)
    write_csv(os.path.join(path, ANNOTATIONS_CSV), ANNOTATION_HEADER, points, comments)
    if roi is not None:
        save_mask(os.path.join(path, ROI_PGM), roi)


def load_scene_dir(path):
    """Returns ``(names, scenes, roi)``; ``roi`` is None when no mask is stored."""
    meta_path = os.path.join(path, SCENES_CSV)
    if not os.path.exists(meta_path):
        raise InvalidArgument(f"{path} has no {SCENES_CSV}")
    meta = read_csv(meta_path)
    if not meta:
        raise InvalidArgument(f"{meta_path} lists no scenes")
    by_image = {}
    for row in read_csv(os.path.join(path, ANNOTATIONS_CSV)):
        by_image.setdefault(row["image"], []).append((float(row["row"]), float(row["col"])))
    roi_path = os.path.join(path, ROI_PGM)
    roi = load_mask(roi_path) if os.path.exists(roi_path) else None

    names, scenes = [], []
    for row in meta:
        name = row["scene"]
        image = load_image(os.path.join(path, "images", f"{name}.pgm"))
        rows, cols = image.shape
        angle, height = float(row["angle_deg"]), float(row["height_m"])
        cam = CameraExtrinsics(angle, height, float(row["fov_deg"]), rows, cols)
        ann = Annotation(np.array(by_image.get(f"{name}.pgm", []), dtype=np.float64).reshape(-1, 2),
                         (rows, cols), roi)
        names.append(name)
        scenes.append(SyntheticScene(image, ann, SceneContext("angle_height", [angle, height]), cam,
                                     estimate_perspective_map(cam)))
    return names, scenes, roi
