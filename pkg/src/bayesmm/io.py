"""Binary carriers for feature streams and prompt embeddings.

Both formats are little-endian.

Feature stream (``.bmmf``)::

    magic   4s   b"BMMF"
    version u32  1
    flags   u32  bit 0: features are unit-normalized
    d       u32
    C       u32
    N       u64
    N x [label i32 (-1 = unlabeled), feature d x f32]

Prompt embeddings (``.bmmt``)::

    magic   4s   b"BMMT"
    version u32  1
    d       u32
    C       u32
    M       u32
    C*M*d x f32, class-major then prompt-minor

The class-name manifest of a prompt file lives next to it as
``<path>.classes.json``.
"""
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (BadMagicError, FileFormatError, InvalidInputError, LabelRangeError,
                     TruncatedFileError, UnsupportedVersionError)

STREAM_MAGIC = b"BMMF"
PROMPT_MAGIC = b"BMMT"
FORMAT_VERSION = 1
FLAG_NORMALIZED = 1

_STREAM_HEADER = struct.Struct("<4sIIIIQ")
_PROMPT_HEADER = struct.Struct("<4sIIII")
STREAM_HEADER_SIZE = _STREAM_HEADER.size  # 28
PROMPT_HEADER_SIZE = _PROMPT_HEADER.size  # 20


def record_dtype(d):
    return np.dtype([("label", "<i4"), ("feature", "<f4", (d,))])


@dataclass
class FeatureStream:
    """A decoded feature stream; iterating yields ``(label, feature)`` in file order."""
    labels: np.ndarray    # (N,) int32
    features: np.ndarray  # (N, d) float32
    n_classes: int
    flags: int = FLAG_NORMALIZED

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def normalized(self):
        return bool(self.flags & FLAG_NORMALIZED)

    def __len__(self):
        return self.labels.shape[0]

    def __iter__(self):
        for i in range(len(self)):
            yield int(self.labels[i]), self.features[i]


@dataclass
class PromptFile:
    embeddings: np.ndarray  # (C, M, d) float32
    class_names: list = field(default_factory=list)

    @property
    def n_classes(self):
        return self.embeddings.shape[0]

    @property
    def n_prompts(self):
        return self.embeddings.shape[1]

    @property
    def dim(self):
        return self.embeddings.shape[2]


def _check_header(magic, version, expected_magic, path):
    if magic != expected_magic:
        raise BadMagicError(f"{path}: bad magic {magic!r}, expected {expected_magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported version {version}")


def encode_stream(labels, features, n_classes, flags=FLAG_NORMALIZED):
    features = np.asarray(features, dtype="<f4")
    labels = np.asarray(labels, dtype="<i4").reshape(-1)
    if features.ndim != 2:
        if features.size == 0 and labels.size == 0:
            raise InvalidInputError("an empty stream still needs a (0, d) feature array")
        raise InvalidInputError(f"features must be (N, d), got {features.shape}")
    n, d = features.shape
    if labels.shape[0] != n:
        raise InvalidInputError(f"{labels.shape[0]} labels for {n} features")
    if d < 1 or n_classes < 1:
        raise InvalidInputError("d and C must be positive")
    if np.any((labels < -1) | (labels >= n_classes)):
        raise LabelRangeError(f"labels must lie in {{-1}} U [0, {n_classes})")
    rec = np.empty(n, dtype=record_dtype(d))
    rec["label"] = labels
    rec["feature"] = features
    header = _STREAM_HEADER.pack(STREAM_MAGIC, FORMAT_VERSION, int(flags), d, int(n_classes), n)
    return header + rec.tobytes()


def decode_stream(buf, path="<bytes>"):
    if len(buf) < STREAM_HEADER_SIZE:
        if len(buf) >= 4 and buf[:4] != STREAM_MAGIC:
            raise BadMagicError(f"{path}: bad magic {bytes(buf[:4])!r}")
        raise TruncatedFileError(f"{path}: {len(buf)} bytes is shorter than the {STREAM_HEADER_SIZE}-byte header")
    magic, version, flags, d, C, n = _STREAM_HEADER.unpack_from(buf, 0)
    _check_header(magic, version, STREAM_MAGIC, path)
    if d < 1 or C < 1:
        raise FileFormatError(f"{path}: header declares d={d}, C={C}")
    dt = record_dtype(d)
    expected = STREAM_HEADER_SIZE + n * dt.itemsize
    if len(buf) != expected:
        raise TruncatedFileError(f"{path}: header declares {n} records ({expected} bytes), file has {len(buf)}")
    rec = np.frombuffer(buf, dtype=dt, count=n, offset=STREAM_HEADER_SIZE)
    labels = rec["label"].astype(np.int32)
    if np.any((labels < -1) | (labels >= C)):
        bad = int(np.flatnonzero((labels < -1) | (labels >= C))[0])
        raise LabelRangeError(f"{path}: record {bad} has label {labels[bad]} outside {{-1}} U [0, {C})")
    features = np.array(rec["feature"], dtype=np.float32).reshape(n, d)
    return FeatureStream(labels, features, C, flags)


def write_stream(path, labels, features, n_classes, flags=FLAG_NORMALIZED):
    data = encode_stream(labels, features, n_classes, flags)
    with open(path, "wb") as fh:
        fh.write(data)


def read_stream(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    return decode_stream(buf, os.fspath(path))


def read_stream_header(path):
    with open(path, "rb") as fh:
        head = fh.read(STREAM_HEADER_SIZE)
        size = os.fstat(fh.fileno()).st_size
    if len(head) < STREAM_HEADER_SIZE:
        raise TruncatedFileError(f"{path}: too short for a stream header")
    magic, version, flags, d, C, n = _STREAM_HEADER.unpack(head)
    _check_header(magic, version, STREAM_MAGIC, path)
    return {"format": "BMMF", "version": version, "flags": flags,
            "normalized": bool(flags & FLAG_NORMALIZED), "d": d, "C": C, "N": n,
            "bytes": size, "expected_bytes": STREAM_HEADER_SIZE + n * (4 + 4 * d)}


def encode_prompts(embeddings):
    z = np.asarray(embeddings, dtype="<f4")
    if z.ndim != 3 or min(z.shape) < 1:
        raise InvalidInputError(f"prompt embeddings must be (C, M, d) with all sizes >= 1, got {z.shape}")
    C, M, d = z.shape
    return _PROMPT_HEADER.pack(PROMPT_MAGIC, FORMAT_VERSION, d, C, M) + np.ascontiguousarray(z).tobytes()


def decode_prompts(buf, path="<bytes>"):
    if len(buf) < PROMPT_HEADER_SIZE:
        if len(buf) >= 4 and buf[:4] != PROMPT_MAGIC:
            raise BadMagicError(f"{path}: bad magic {bytes(buf[:4])!r}")
        raise TruncatedFileError(f"{path}: shorter than the {PROMPT_HEADER_SIZE}-byte header")
    magic, version, d, C, M = _PROMPT_HEADER.unpack_from(buf, 0)
    _check_header(magic, version, PROMPT_MAGIC, path)
    if min(d, C, M) < 1:
        raise FileFormatError(f"{path}: header declares d={d}, C={C}, M={M}")
    expected = PROMPT_HEADER_SIZE + 4 * C * M * d
    if len(buf) != expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, file has {len(buf)}")
    z = np.frombuffer(buf, dtype="<f4", count=C * M * d, offset=PROMPT_HEADER_SIZE)
    return PromptFile(z.astype(np.float32).reshape(C, M, d))


def manifest_path(path):
    return os.fspath(path) + ".classes.json"


def write_prompts(path, embeddings, class_names=None):
    data = encode_prompts(embeddings)
    with open(path, "wb") as fh:
        fh.write(data)
    C = np.shape(embeddings)[0]
    names = list(class_names) if class_names is not None else [f"class_{c}" for c in range(C)]
    if len(names) != C:
        raise InvalidInputError(f"{len(names)} class names for {C} classes")
    with open(manifest_path(path), "w") as fh:
        json.dump({"classes": {str(i): n for i, n in enumerate(names)}}, fh, indent=2)
        fh.write("\n")


def read_prompts(path):
    with open(path, "rb") as fh:
        buf = fh.read()
    pf = decode_prompts(buf, os.fspath(path))
    mp = manifest_path(path)
    if os.path.exists(mp):
        with open(mp) as fh:
            classes = json.load(fh)["classes"]
        pf.class_names = [classes[str(i)] for i in range(pf.n_classes)]
    else:
        pf.class_names = [f"class_{c}" for c in range(pf.n_classes)]
    return pf


def read_prompt_header(path):
    with open(path, "rb") as fh:
        head = fh.read(PROMPT_HEADER_SIZE)
        size = os.fstat(fh.fileno()).st_size
    if len(head) < PROMPT_HEADER_SIZE:
        raise TruncatedFileError(f"{path}: too short for a prompt header")
    magic, version, d, C, M = _PROMPT_HEADER.unpack(head)
    _check_header(magic, version, PROMPT_MAGIC, path)
    return {"format": "BMMT", "version": version, "d": d, "C": C, "M": M,
            "bytes": size, "expected_bytes": PROMPT_HEADER_SIZE + 4 * C * M * d}
