"""Binary PGM images and small CSV helpers."""

import csv
import os
import re

import numpy as np

from .errors import InvalidArgument


def write_pgm(path, array, maxval=None):
    """Write a 2-D unsigned integer array as binary (P5) PGM.

    16-bit samples are stored big-endian as the format requires.
    """
    a = np.asarray(array)
    if a.ndim != 2:
        raise InvalidArgument("PGM images must be 2-D")
    if maxval is None:
        maxval = 255 if a.dtype == np.uint8 else 65535
    if not 0 < maxval < 65536:
        raise InvalidArgument("PGM maxval must lie in 1..65535")
    if a.size and (a.min() < 0 or a.max() > maxval):
        raise InvalidArgument("pixel values outside [0, maxval]")
    dtype = ">u1" if maxval < 256 else ">u2"
    header = f"P5\n{a.shape[1]} {a.shape[0]}\n{maxval}\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(a.astype(dtype).tobytes())


_TOKEN = re.compile(rb"\s*(#[^\n]*\n\s*)*(\S+)")


def read_pgm(path):
    """Read a binary PGM; returns ``(array, maxval)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    pos = 0
    fields = []
    for _ in range(4):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise InvalidArgument(f"{path}: truncated PGM header")
        fields.append(m.group(2))
        pos = m.end()
    if fields[0] != b"P5":
        raise InvalidArgument(f"{path}: not a binary PGM")
    w, h, maxval = (int(f) for f in fields[1:])
    pos += 1  # single whitespace byte before the raster
    dtype = ">u1" if maxval < 256 else ">u2"
    n = w * h * np.dtype(dtype).itemsize
    raster = data[pos:pos + n]
    if len(raster) != n:
        raise InvalidArgument(f"{path}: truncated PGM raster")
    return np.frombuffer(raster, dtype=dtype).reshape(h, w).astype(np.uint16 if maxval > 255 else np.uint8), maxval


def save_image(path, image):
    """Store a [0, 1] grayscale image as 16-bit PGM."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    write_pgm(path, np.rint(img * 65535).astype(np.uint16), 65535)


def load_image(path):
    a, maxval = read_pgm(path)
    return (a.astype(np.float64) / maxval).astype(np.float32)


def save_mask(path, mask):
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), 255)


def load_mask(path):
    a, _ = read_pgm(path)
    return a > 0


def save_scaled(path, values):
    """Max-scaled 16-bit PGM of a nonnegative map."""
    v = np.asarray(values, dtype=np.float64)
    peak = v.max() if v.size else 0.0
    scaled = np.zeros(v.shape) if peak <= 0 else v / peak
    write_pgm(path, np.rint(scaled * 65535).astype(np.uint16), 65535)


def fmt(value):
    """Deterministic text for CSV cells."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.10g}"
    return str(value)


def write_csv(path, header, rows, comments=()):
    """Write a CSV with optional leading ``# `` comment lines."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])


def read_csv(path):
    """Rows as dicts, skipping ``#`` comment lines."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
