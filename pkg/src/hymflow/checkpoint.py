"""Checkpoint files: JSON header plus flat little-endian complex doubles.

Layout: magic b"HYMF1\\n", a little-endian uint64 header length, the UTF-8
JSON header, then the raw array bytes in C order ('<c16').  Round-trips are
bit exact; the header records enough metadata (dimensions, rank, charges,
form type, twist data) to validate the payload against a model.
"""

import json
import struct

import numpy as np

MAGIC = b"HYMF1\n"


def save_field(path, array, meta):
    """Write a complex field with its metadata header; bit-exact payload."""
    a = np.ascontiguousarray(np.asarray(array, dtype="<c16"))
    header = dict(meta)
    header["shape"] = list(a.shape)
    header["dtype"] = "<c16"
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        f.write(a.tobytes(order="C"))


def load_field(path):
    """Read (array, header) from a checkpoint; validates framing."""
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        (hlen,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(hlen).decode("utf-8"))
        shape = tuple(header["shape"])
        count = int(np.prod(shape)) if shape else 1
        raw = f.read(count * 16)
        if len(raw) != count * 16:
            raise ValueError(f"{path}: truncated payload")
        extra = f.read(1)
        if extra:
            raise ValueError(f"{path}: trailing bytes after payload")
    a = np.frombuffer(raw, dtype="<c16").reshape(shape).copy()
    return a, header


def metric_meta(model, kind="metric", **extra):
    m = {
        "kind": kind,
        "n": model.lat.n,
        "grid": model.lat.grid,
        "rank": model.rank,
        "charges": model.charges.tolist(),
        "form_type": "endomorphism" if kind == "metric" else "(0,1)",
        "twist": "landau-diagonal",
    }
    m.update(extra)
    return m


def validate_metric_checkpoint(array, header, model):
    """Shape/positivity checks for a metric loaded as initial data."""
    want = model.lat.shape + (model.rank, model.rank)
    if tuple(array.shape) != want:
        raise ValueError(
            f"checkpoint shape {array.shape} does not match scenario {want}")
    if header.get("kind") != "metric":
        raise ValueError(f"checkpoint kind {header.get('kind')!r} is not a metric")
    if list(map(list, model.charges.tolist())) != list(header.get("charges", [])):
        raise ValueError("checkpoint charges do not match the scenario bundle")
    from .fields import is_positive, hermitize
    if not is_positive(hermitize(array)):
        raise ValueError("positivity/shape check failed: metric is not positive")
    return True
