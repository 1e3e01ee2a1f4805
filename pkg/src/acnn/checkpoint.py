"""Checkpoints: a JSON manifest plus a raw little-endian float32 blob.

``save_checkpoint(model, "run.json")`` writes ``run.json`` and
``run.json.blob``. The manifest records the model family and spec, the aux
normalization, tensor names/shapes in blob order and a SHA-256 of the blob.
Both files are written to a temporary name first and renamed into place.
"""

import hashlib
import json
import os
import tempfile

import numpy as np

from .counting import CountingModel, ModelSpec
from .crowd.context import AuxNormalizer
from .deconv import DeconvNet, DeconvSpec
from .errors import ChecksumError, CheckpointError, MissingBlobError, VersionError

FORMAT = "acnn-checkpoint"
VERSION = "1"
BLOB_DTYPE = np.dtype("<f4")


class EmptyModel:
    """A model with no parameters (useful as a persistence edge case)."""

    trained = False
    normalizer = None

    def params(self):
        return []


def _family(model):
    if isinstance(model, CountingModel):
        return "counting"
    if isinstance(model, DeconvNet):
        return "deconv"
    if isinstance(model, EmptyModel):
        return "empty"
    raise CheckpointError(f"cannot checkpoint objects of type {type(model).__name__}")


def _batchnorms(model):
    return model.batchnorms() if isinstance(model, DeconvNet) else []


def _tensors(model):
    out = [(p.name, p.value) for p in model.params()]
    for bn in _batchnorms(model):
        if bn.running_mean is not None:
            out += [(bn.name + ".running_mean", bn.running_mean), (bn.name + ".running_var", bn.running_var)]
    return out


def _atomic_write(path, data):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def blob_path(path):
    return str(path) + ".blob"


def save_checkpoint(model, path, force=False, extra=None):
    """Write manifest and blob; refuses to overwrite unless ``force``."""
    path = str(path)
    if not force and (os.path.exists(path) or os.path.exists(blob_path(path))):
        raise CheckpointError(f"{path} already exists (use force to overwrite)")
    family = _family(model)
    tensors = _tensors(model)
    blob = b"".join(np.ascontiguousarray(v, dtype=BLOB_DTYPE).tobytes() for _, v in tensors)
    manifest = {
        "format": FORMAT,
        "version": VERSION,
        "family": family,
        "spec": model.spec.to_dict() if family != "empty" else None,
        "trained": bool(model.trained),
        "normalizer": model.normalizer.to_dict() if model.normalizer is not None else None,
        "train_radii": list(getattr(model, "train_radii", ())),
        "tensors": [{"name": n, "shape": list(np.shape(v))} for n, v in tensors],
        "blob": os.path.basename(blob_path(path)),
        "blob_bytes": len(blob),
        "sha256": hashlib.sha256(blob).hexdigest(),
        "extra": extra or {},
    }
    _atomic_write(blob_path(path), blob)
    _atomic_write(path, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode())


def read_manifest(path):
    try:
        with open(path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except FileNotFoundError:
        raise CheckpointError(f"no checkpoint manifest at {path}") from None
    except json.JSONDecodeError as e:
        raise CheckpointError(f"manifest {path} is not valid JSON: {e}") from None
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"{path} is not an {FORMAT} manifest")
    if manifest.get("version") != VERSION:
        raise VersionError(f"unsupported checkpoint version {manifest.get('version')!r} (expected {VERSION})")
    return manifest


def load_checkpoint(path):
    """Rebuild the model described by the manifest and fill in its tensors."""
    path = str(path)
    manifest = read_manifest(path)
    bpath = os.path.join(os.path.dirname(os.path.abspath(path)), manifest["blob"])
    if not os.path.exists(bpath):
        raise MissingBlobError(f"checkpoint blob {bpath} is missing")
    with open(bpath, "rb") as f:
        blob = f.read()
    if len(blob) != manifest["blob_bytes"]:
        raise CheckpointError(f"blob {bpath} has {len(blob)} bytes, manifest says {manifest['blob_bytes']}")
    if hashlib.sha256(blob).hexdigest() != manifest["sha256"]:
        raise ChecksumError(f"checksum mismatch for {bpath}")

    family = manifest["family"]
    if family == "counting":
        model = CountingModel(ModelSpec.from_dict(manifest["spec"]))
    elif family == "deconv":
        model = DeconvNet(DeconvSpec.from_dict(manifest["spec"]))
    elif family == "empty":
        model = EmptyModel()
    else:
        raise CheckpointError(f"unknown model family {family!r}")

    flat = np.frombuffer(blob, dtype=BLOB_DTYPE)
    entries = manifest["tensors"]
    params = {p.name: p for p in model.params()}
    bns = {bn.name: bn for bn in _batchnorms(model)}
    offset = 0
    seen = set()
    for e in entries:
        shape = tuple(e["shape"])
        n = int(np.prod(shape)) if shape else 1
        value = flat[offset:offset + n].reshape(shape).astype(np.float32)
        offset += n
        name = e["name"]
        seen.add(name)
        if name in params:
            if params[name].value.shape != shape:
                raise CheckpointError(f"tensor {name} has shape {shape}, model expects {params[name].value.shape}")
            params[name].value = value
        else:
            base, _, attr = name.rpartition(".")
            if base not in bns or attr not in ("running_mean", "running_var"):
                raise CheckpointError(f"checkpoint tensor {name} does not belong to the model")
            setattr(bns[base], attr, value)
    missing = set(params) - seen
    if missing:
        raise CheckpointError(f"checkpoint lacks tensors {sorted(missing)}")
    if offset != flat.size:
        raise CheckpointError("blob holds more data than the manifest describes")
    for p in model.params():
        p.m = np.zeros_like(p.value)
        p.v = np.zeros_like(p.value)
    if manifest["normalizer"] is not None:
        model.normalizer = AuxNormalizer.from_dict(manifest["normalizer"])
    if family == "deconv":
        model.train_radii = tuple(manifest["train_radii"])
    model.trained = manifest["trained"]
    return model

