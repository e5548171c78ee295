"""Model bundle files.

Layout::

    magic    8 bytes   b"SPANPRS\\0"
    version  uint32 LE
    hlen     uint64 LE
    header   hlen bytes of UTF-8 JSON (hyperparameters, vocabulary, label
             inventory, and an array manifest of names and shapes)
    payload  each manifest array in order, float32 little-endian, C order
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .encoder import Hyper, SpanModel, Vocabulary, param_shapes
from .treebank import LabelInventory

MAGIC = b"SPANPRS\0"
VERSION = 1


class ModelFormatError(ValueError):
    pass


class FormatVersionError(ModelFormatError):
    """Not a bundle, or a bundle written by an incompatible version."""


class TruncatedModelError(ModelFormatError):
    pass


class ShapeManifestError(ModelFormatError):
    """The array manifest does not match the hyperparameters."""


def header_dict(model: SpanModel) -> dict:
    return {
        "hyper": model.hyper.to_dict(),
        "vocab": model.vocab.to_dict(),
        "labels": list(model.inventory.labels),
        "arrays": [[name, list(arr.shape)] for name, arr in model.params.items()],
    }


def dumps(model: SpanModel) -> bytes:
    header = json.dumps(header_dict(model), sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<IQ", VERSION, len(header)), header]
    for arr in model.params.values():
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def save_model(model: SpanModel, path) -> None:
    with open(path, "wb") as f:
        f.write(dumps(model))


def loads(data: bytes) -> SpanModel:
    if data[: len(MAGIC)] != MAGIC:
        raise FormatVersionError("not a model bundle (bad magic bytes)")
    fixed = len(MAGIC) + 12
    if len(data) < fixed:
        raise TruncatedModelError("model bundle truncated inside the preamble")
    version, hlen = struct.unpack("<IQ", data[len(MAGIC):fixed])
    if version != VERSION:
        raise FormatVersionError(f"model bundle version {version}, expected {VERSION}")
    if len(data) < fixed + hlen:
        raise TruncatedModelError("model bundle truncated inside the header")
    try:
        header = json.loads(data[fixed:fixed + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"unreadable model header: {e}") from None

    hyper = Hyper(**header["hyper"])
    vocab = Vocabulary.from_dict(header["vocab"])
    inventory = LabelInventory(header["labels"])
    expected = param_shapes(hyper, vocab, len(inventory))
    manifest = {name: tuple(shape) for name, shape in header["arrays"]}
    for name, shape in expected.items():
        if name not in manifest:
            raise ShapeManifestError(f"array {name} missing from the model bundle")
        if manifest[name] != shape:
            raise ShapeManifestError(f"array {name} has shape {manifest[name]}, expected {shape}")
    for name in manifest:
        if name not in expected:
            raise ShapeManifestError(f"unexpected array {name} in the model bundle")

    params = {}
    offset = fixed + hlen
    for name, shape in header["arrays"]:
        size = int(np.prod(shape)) * 4
        if offset + size > len(data):
            raise TruncatedModelError(f"model bundle truncated inside array {name}")
        arr = np.frombuffer(data, dtype="<f4", count=size // 4, offset=offset)
        params[name] = arr.reshape(shape).astype(np.float32)
        offset += size
    if offset != len(data):
        raise ModelFormatError(f"{len(data) - offset} trailing bytes after the last array")
    ordered = {name: params[name] for name in expected}
    return SpanModel(ordered, vocab, inventory, hyper)


def load_model(path) -> SpanModel:
    with open(path, "rb") as f:
        return loads(f.read())
