"""Array encoding for the JSON file formats.

Arrays travel as ``{"shape": [...], "dtype": "<f8", "data": <base64>}`` with
little-endian payloads, so a file is byte-stable across runs and loads back
bit-identically.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1


class BundleError(ValueError):
    """Unreadable, truncated, or incompatible file."""


_DTYPES = {"<f8": np.float64, "<i8": np.int64}


def encode_array(a) -> dict:
    a = np.asarray(a)
    dtype = "<i8" if np.issubdtype(a.dtype, np.integer) else "<f8"
    raw = np.ascontiguousarray(a, dtype=dtype).tobytes()
    return {"shape": list(a.shape), "dtype": dtype, "data": base64.b64encode(raw).decode("ascii")}


def decode_array(obj) -> np.ndarray:
    try:
        dtype = obj["dtype"]
        shape = tuple(int(s) for s in obj["shape"])
        raw = base64.b64decode(obj["data"], validate=True)
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleError(f"malformed array record: {exc}") from exc
    if dtype not in _DTYPES:
        raise BundleError(f"unsupported dtype {dtype!r}")
    arr = np.frombuffer(raw, dtype=dtype)
    if arr.size != int(np.prod(shape, dtype=np.int64)):
        raise BundleError(f"array payload has {arr.size} items, shape {shape} needs more")
    return arr.reshape(shape).astype(_DTYPES[dtype])


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def write_json(path, doc) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def read_json(path, expected_format: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BundleError(f"cannot read {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != expected_format:
        raise BundleError(f"{path} is not a {expected_format} file")
    if doc.get("version") != FORMAT_VERSION:
        raise BundleError(f"{path}: format version {doc.get('version')} unsupported (want {FORMAT_VERSION})")
    return doc


def encode_layers(layers) -> list:
    return [{"W": encode_array(W), "b": encode_array(b)} for W, b in layers]


def decode_layers(objs) -> list:
    try:
        return [(decode_array(o["W"]), decode_array(o["b"])) for o in objs]
    except (KeyError, TypeError) as exc:
        raise BundleError(f"malformed layer list: {exc}") from exc
