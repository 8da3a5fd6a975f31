import hashlib
import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bayesmm.errors import (BadMagicError, FileFormatError, InvalidInputError, LabelRangeError,
                            TruncatedFileError, UnsupportedVersionError)
from bayesmm.io import (PROMPT_HEADER_SIZE, STREAM_HEADER_SIZE, decode_prompts, decode_stream, encode_prompts,
                        encode_stream, manifest_path, read_prompt_header, read_prompts, read_stream,
                        read_stream_header, write_prompts, write_stream)


def hand_stream(labels, feats, C, flags=1, version=1, magic=b"BMMF"):
    # independent byte layout
    d = feats.shape[1] if feats.ndim == 2 else 0
    out = magic + struct.pack("<IIIIQ", version, flags, d, C, len(labels))
    for lab, f in zip(labels, feats):
        out += struct.pack("<i", int(lab)) + struct.pack(f"<{d}f", *f)
    return out


def test_header_sizes():
    assert STREAM_HEADER_SIZE == 28
    assert PROMPT_HEADER_SIZE == 20


def test_empty_stream():
    buf = encode_stream(np.zeros(0), np.zeros((0, 3)), 2)
    assert len(buf) == STREAM_HEADER_SIZE
    s = decode_stream(buf)
    assert len(s) == 0 and s.dim == 3 and list(s) == []


def test_one_record_layout():
    buf = encode_stream([0], np.array([[1.0, 0.0]]), 2)
    assert len(buf) == STREAM_HEADER_SIZE + 4 + 2 * 4
    assert buf == hand_stream([0], np.array([[1.0, 0.0]]), 2)
    s = decode_stream(buf)
    assert s.labels.tolist() == [0] and s.features.tolist() == [[1.0, 0.0]]


def test_stream_matches_hand_layout(rng):
    feats = rng.standard_normal((7, 3)).astype(np.float32)
    labels = rng.integers(-1, 4, 7)
    assert encode_stream(labels, feats, 4, flags=0) == hand_stream(labels, feats, 4, flags=0)


def test_large_roundtrip_hash(tmp_path, rng):
    feats = rng.standard_normal((1000, 16)).astype(np.float32)
    labels = rng.integers(-1, 10, 1000)
    p = tmp_path / "s.bmmf"
    write_stream(p, labels, feats, 10)
    s = read_stream(p)
    again = tmp_path / "t.bmmf"
    write_stream(again, s.labels, s.features, s.n_classes, s.flags)
    assert hashlib.sha256(p.read_bytes()).digest() == hashlib.sha256(again.read_bytes()).digest()
    assert s.features.tobytes() == feats.tobytes()


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 30), st.integers(1, 8), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_stream_roundtrip_bit_identical(n, d, C, seed):
    rng = np.random.default_rng(seed)
    feats = rng.standard_normal((n, d)).astype(np.float32)
    feats.view(np.uint32)[...] ^= rng.integers(0, 2, feats.shape, dtype=np.uint32)  # arbitrary low bits
    labels = rng.integers(-1, C, n)
    buf = encode_stream(labels, feats, C)
    s = decode_stream(buf)
    assert s.features.tobytes() == feats.tobytes()
    assert s.labels.tolist() == labels.tolist()
    assert encode_stream(s.labels, s.features, s.n_classes, s.flags) == buf


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_prompt_roundtrip_bit_identical(C, M, d, seed):
    z = np.random.default_rng(seed).standard_normal((C, M, d)).astype(np.float32)
    buf = encode_prompts(z)
    assert len(buf) == 20 + 4 * C * M * d
    assert decode_prompts(buf).embeddings.tobytes() == z.tobytes()
    assert encode_prompts(decode_prompts(buf).embeddings) == buf


def test_prompt_file_and_manifest(tmp_path, rng):
    z = rng.standard_normal((3, 2, 4)).astype(np.float32)
    p = tmp_path / "p.bmmt"
    write_prompts(p, z, ["chair", "lamp", "mug"])
    pf = read_prompts(p)
    assert pf.class_names == ["chair", "lamp", "mug"]
    assert json.loads(open(manifest_path(p)).read()) == {"classes": {"0": "chair", "1": "lamp", "2": "mug"}}
    assert read_prompt_header(p)["M"] == 2
    with pytest.raises(InvalidInputError):
        write_prompts(tmp_path / "q.bmmt", z, ["a"])


def test_stream_header_dump(tmp_path):
    p = tmp_path / "s.bmmf"
    write_stream(p, [0, 1], np.zeros((2, 3)), 2)
    h = read_stream_header(p)
    assert (h["d"], h["C"], h["N"], h["bytes"], h["expected_bytes"]) == (3, 2, 2, 28 + 2 * 16, 28 + 2 * 16)


# -- malformations, each with its own error kind --------------------------

GOOD = encode_stream([0, 1], np.ones((2, 2)), 2)
GOOD_P = encode_prompts(np.ones((2, 1, 3)))


@pytest.mark.parametrize("buf,exc", [
    (b"XXXX" + GOOD[4:], BadMagicError),
    (b"BMMT" + GOOD[4:], BadMagicError),
    (GOOD[:4] + struct.pack("<I", 2) + GOOD[8:], UnsupportedVersionError),
    (GOOD[:-1], TruncatedFileError),
    (GOOD + b"\0", TruncatedFileError),
    (GOOD[:10], TruncatedFileError),
    (b"", TruncatedFileError),
    (hand_stream([2], np.ones((1, 2)), 2), LabelRangeError),
    (hand_stream([-2], np.ones((1, 2)), 2), LabelRangeError),
    (b"BMMF" + struct.pack("<IIIIQ", 1, 1, 0, 2, 0), FileFormatError),
])
def test_stream_malformations(buf, exc):
    with pytest.raises(exc):
        decode_stream(buf)


@pytest.mark.parametrize("buf,exc", [
    (b"BMMF" + GOOD_P[4:], BadMagicError),
    (GOOD_P[:4] + struct.pack("<I", 0) + GOOD_P[8:], UnsupportedVersionError),
    (GOOD_P[:-4], TruncatedFileError),
    (GOOD_P[:12], TruncatedFileError),
    (b"BMMT" + struct.pack("<IIII", 1, 3, 0, 1), FileFormatError),
])
def test_prompt_malformations(buf, exc):
    with pytest.raises(exc):
        decode_prompts(buf)


def test_error_kinds_are_distinct():
    kinds = {BadMagicError, UnsupportedVersionError, TruncatedFileError, LabelRangeError}
    assert len(kinds) == 4
    for a in kinds:
        assert issubclass(a, FileFormatError)
        for b in kinds - {a}:
            assert not issubclass(a, b)


def test_encode_rejects_bad_input():
    with pytest.raises(LabelRangeError):
        encode_stream([3], np.ones((1, 2)), 3)
    with pytest.raises(InvalidInputError):
        encode_stream([0, 1], np.ones((1, 2)), 2)
    with pytest.raises(InvalidInputError):
        encode_prompts(np.ones((2, 3)))
