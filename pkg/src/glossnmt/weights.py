"""Versioned little-endian tensor container.

Layout::

    magic    4 bytes  b"GNMW"
    version  u32
    count    u32
    count x entry:
        name_len u32, name (utf-8)
        dtype    u8   (0=f32, 1=f64, 2=i64, 3=u8)
        ndim     u32, dims u64 * ndim
        payload  row-major little-endian bytes

Entries whose names start with ``__`` carry UTF-8 JSON metadata as u8 arrays.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from .errors import DuplicateNameError, TruncatedFileError, VersionError, WeightFormatError

MAGIC = b"GNMW"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8"), 3: np.dtype("u1")}
_TAGS = {np.dtype(v).newbyteorder("="): k for k, v in _DTYPES.items()}


def _tag(arr: np.ndarray) -> int:
    try:
        return _TAGS[arr.dtype.newbyteorder("=")]
    except KeyError:
        raise WeightFormatError(f"unsupported dtype {arr.dtype}") from None


def dumps(tensors: dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        tag = _tag(arr)
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<BI", tag, arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype=_DTYPES[tag]).tobytes())
    return buf.getvalue()


def loads(blob: bytes) -> dict[str, np.ndarray]:
    view = memoryview(blob)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise TruncatedFileError(f"container truncated at byte {pos} (wanted {n} more)")
        out = view[pos : pos + n]
        pos += n
        return out

    if bytes(take(4)) != MAGIC:
        raise VersionError("not a weight container (bad magic)")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise VersionError(f"container version {version}, expected {VERSION}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (n,) = struct.unpack("<I", take(4))
        name = bytes(take(n)).decode("utf-8")
        tag, ndim = struct.unpack("<BI", take(5))
        if tag not in _DTYPES:
            raise WeightFormatError(f"entry {name!r}: unknown dtype tag {tag}")
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        dt = _DTYPES[tag]
        size = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
        arr = np.frombuffer(bytes(take(size)), dtype=dt).reshape(shape)
        if name in out:
            raise DuplicateNameError(f"duplicate entry name {name!r}")
        out[name] = arr.astype(dt.newbyteorder("="))
    if pos != len(view):
        raise WeightFormatError(f"{len(view) - pos} trailing bytes after {count} entries")
    return out


def save_tensors(tensors: dict[str, np.ndarray], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps(tensors))


def load_tensors(path) -> dict[str, np.ndarray]:
    return loads(Path(path).read_bytes())


def meta_entry(obj) -> np.ndarray:
    return np.frombuffer(json.dumps(obj, sort_keys=True).encode("utf-8"), dtype=np.uint8)


def read_meta(arr: np.ndarray):
    return json.loads(arr.tobytes().decode("utf-8"))


def digest(tensors: dict[str, np.ndarray]) -> str:
    """SHA-256 over names, dtypes, shapes and payloads."""
    h = hashlib.sha256()
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        h.update(name.encode())
        h.update(str(arr.dtype).encode())
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()


# -- model-level wrappers ------------------------------------------------------

def save_weights(model, path) -> None:
    """Serialize a ``TranslationModel`` or ``TeacherModel`` with its rebuild metadata."""
    tensors = {"__meta__": meta_entry(model.metadata())}
    for name, p in model.named_parameters():
        if name in tensors:
            raise DuplicateNameError(f"duplicate parameter name {name!r}")
        tensors[name] = p.data
    save_tensors(tensors, path)


def load_weights(path):
    """Rebuild the model stored at ``path``; nothing is returned on a malformed file."""
    tensors = load_tensors(path)
    if "__meta__" not in tensors:
        raise WeightFormatError(f"{path}: no __meta__ entry")
    meta = read_meta(tensors.pop("__meta__"))
    kind = meta.get("kind")
    if kind == "teacher":
        from .teacher import TeacherModel
        model = TeacherModel.from_metadata(meta)
    elif kind == "translation":
        from .model import model_from_metadata
        model = model_from_metadata(meta)
    else:
        raise WeightFormatError(f"{path}: unknown model kind {kind!r}")
    model.load_state_dict(tensors)
    return model
