"""Golden-vector file format for cross-implementation conformance.

The vector file is JSON with two sections:

* ``value_vectors``: each entry holds the canonical octets of one encoded
  value (``encoded_hex``) and a typed JSON rendering of the value itself.
* ``frame_vectors``: each entry holds the exact octets of one frame
  (``frame_hex``) plus its header fields and payload octets.

Typed JSON rendering (key ``t`` selects the kind):

======== ==========================================================
null     ``{"t": "null"}``
bool     ``{"t": "bool", "v": true}``
int      ``{"t": "int", "v": "-42"}``           (decimal string, i64-safe)
real     ``{"t": "real", "bits": "1f85eb51b81e0940"}``  (8 LE octets, hex)
string   ``{"t": "string", "v": "..."}``
bytes    ``{"t": "bytes", "hex": "00ff"}``
list     ``{"t": "list", "items": [...]}``
map      ``{"t": "map", "entries": [["key", {...}], ...]}`` (canonical order)
array    ``{"t": "array", "kind": "f32", "shape": [2,3], "data_hex": "..."}``
image    ``{"t": "image", "codec": "jpeg", "data_hex": "..."}``
======== ==========================================================

Any implementation must decode every vector to the stated value and
re-encode it to the identical octets.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .protocol.value import CompressedImage, Value, _sorted_map_items

FORMAT_NAME = "policyserve-golden-vectors"
FORMAT_VERSION = 1

_ARRAY_KINDS = {"u8": np.uint8, "i64": np.int64, "f32": np.float32, "f64": np.float64}


def value_to_jsonable(v: Value) -> dict:
    """Render a value in the typed JSON form used by the vector file."""
    if v is None:
        return {"t": "null"}
    if isinstance(v, bool):
        return {"t": "bool", "v": v}
    if isinstance(v, int):
        return {"t": "int", "v": str(v)}
    if isinstance(v, float):
        return {"t": "real", "bits": struct.pack("<d", v).hex()}
    if isinstance(v, str):
        return {"t": "string", "v": v}
    if isinstance(v, (bytes, bytearray)):
        return {"t": "bytes", "hex": bytes(v).hex()}
    if isinstance(v, list):
        return {"t": "list", "items": [value_to_jsonable(item) for item in v]}
    if isinstance(v, dict):
        entries = [[kb.decode("utf-8"), value_to_jsonable(item)]
                   for kb, item in _sorted_map_items(v)]
        return {"t": "map", "entries": entries}
    if isinstance(v, np.ndarray):
        kind = {np.dtype(np.uint8): "u8", np.dtype(np.int64): "i64",
                np.dtype(np.float32): "f32", np.dtype(np.float64): "f64"}[
                    v.dtype.newbyteorder("=")]
        data = np.ascontiguousarray(v.astype(v.dtype.newbyteorder("<"))).tobytes()
        return {"t": "array", "kind": kind, "shape": list(v.shape), "data_hex": data.hex()}
    if isinstance(v, CompressedImage):
        return {"t": "image", "codec": v.codec, "data_hex": v.data.hex()}
    raise TypeError(f"cannot render {type(v).__name__}")


def jsonable_to_value(doc: dict) -> Value:
    """Rebuild a value from its typed JSON form."""
    t = doc["t"]
    if t == "null":
        return None
    if t == "bool":
        return bool(doc["v"])
    if t == "int":
        return int(doc["v"])
    if t == "real":
        return struct.unpack("<d", bytes.fromhex(doc["bits"]))[0]
    if t == "string":
        return doc["v"]
    if t == "bytes":
        return bytes.fromhex(doc["hex"])
    if t == "list":
        return [jsonable_to_value(item) for item in doc["items"]]
    if t == "map":
        return {key: jsonable_to_value(item) for key, item in doc["entries"]}
    if t == "array":
        dtype = np.dtype(_ARRAY_KINDS[doc["kind"]]).newbyteorder("<")
        raw = bytes.fromhex(doc["data_hex"])
        return np.frombuffer(raw, dtype=dtype).reshape(doc["shape"]).copy()
    if t == "image":
        return CompressedImage(doc["codec"], bytes.fromhex(doc["data_hex"]))
    raise ValueError(f"unknown typed-json kind {t!r}")


def default_vector_path() -> Path:
    return Path(__file__).resolve().parents[2] / "conformance" / "golden_vectors.json"


def load_vectors(path: str | Path | None = None) -> dict:
    path = Path(path) if path else default_vector_path()
    doc = json.loads(path.read_text())
    if doc.get("format") != FORMAT_NAME or doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"{path} is not a version-{FORMAT_VERSION} {FORMAT_NAME} file")
    return doc
