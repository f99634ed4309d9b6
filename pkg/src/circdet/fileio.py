"""On-disk formats.

FGRID (one tensor), little-endian::

    b"FGRD" | u32 H | u32 W | u32 D | H*W*D float32, row-major, channel-last

FGRC (named tensors)::

    b"FGRC" | u32 count | count * (u16 name_len | utf-8 name | FGRID record)

Annotations and predictions are JSON::

    {"images": [{"id", "h", "w"}], "annotations": [{"image_id", "x", "y", "r"}]}
    {"predictions": [{"image_id", "x", "y", "r", "score"}]}

Numbers are written with 9 significant digits; unknown fields are ignored.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import FormatError
from .types import Circle

FGRID_MAGIC = b"FGRD"
FGRC_MAGIC = b"FGRC"
_HEADER = struct.Struct("<4sIII")


def atomic_write(path, payload: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- binary tensors --------------------------------------------------------------


def encode_fgrid(data) -> bytes:
    arr = np.asarray(data)
    if arr.ndim != 3:
        raise ValueError(f"FGRID holds 3-D tensors, got shape {arr.shape}")
    h, w, d = arr.shape
    return _HEADER.pack(FGRID_MAGIC, h, w, d) + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_fgrid(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Parse one FGRID record at ``offset``; returns the tensor and the end offset."""
    if len(buf) - offset < _HEADER.size:
        raise FormatError("truncated FGRID header", len(buf))
    magic, h, w, d = _HEADER.unpack_from(buf, offset)
    if magic != FGRID_MAGIC:
        raise FormatError(f"bad FGRID magic {magic!r}", offset)
    start = offset + _HEADER.size
    end = start + 4 * h * w * d
    if end > len(buf):
        raise FormatError(f"truncated FGRID payload: need {end - start} bytes", len(buf))
    arr = np.frombuffer(buf, dtype="<f4", count=h * w * d, offset=start).reshape(h, w, d)
    return arr.astype(np.float32), end


def write_fgrid(path, data) -> None:
    atomic_write(path, encode_fgrid(data))


def read_fgrid(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = decode_fgrid(buf)
    if end != len(buf):
        raise FormatError("trailing bytes after FGRID record", end)
    return arr


def encode_fgrc(tensors: Mapping[str, np.ndarray]) -> bytes:
    parts = [FGRC_MAGIC, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(encode_fgrid(arr))
    return b"".join(parts)


def decode_fgrc(buf: bytes) -> dict[str, np.ndarray]:
    if len(buf) < 8:
        raise FormatError("truncated FGRC header", len(buf))
    if buf[:4] != FGRC_MAGIC:
        raise FormatError(f"bad FGRC magic {buf[:4]!r}", 0)
    (count,) = struct.unpack_from("<I", buf, 4)
    pos = 8
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        if pos + 2 > len(buf):
            raise FormatError("truncated tensor name length", len(buf))
        (n,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        if pos + n > len(buf):
            raise FormatError("truncated tensor name", len(buf))
        try:
            name = buf[pos : pos + n].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"tensor name is not UTF-8: {exc.reason}", pos + exc.start) from None
        pos += n
        out[name], pos = decode_fgrid(buf, pos)
    if pos != len(buf):
        raise FormatError("trailing bytes after FGRC container", pos)
    return out


def write_fgrc(path, tensors: Mapping[str, np.ndarray]) -> None:
    atomic_write(path, encode_fgrc(tensors))


def read_fgrc(path) -> dict[str, np.ndarray]:
    return decode_fgrc(Path(path).read_bytes())


# -- JSON annotations ------------------------------------------------------------


def sig9(v: float) -> float:
    """Round to 9 significant digits, the precision used in JSON files."""
    return float(f"{float(v):.9g}")


def _load_json(path) -> dict:
    raw = Path(path).read_bytes()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"not UTF-8: {exc.reason}", exc.start) from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", len(text[: exc.pos].encode("utf-8"))) from None
    if not isinstance(doc, dict):
        raise FormatError("top-level JSON value must be an object", 0)
    return doc


def write_json(path, doc: dict) -> None:
    """Atomic, indented UTF-8 JSON."""
    atomic_write(path, (json.dumps(doc, indent=1) + "\n").encode("utf-8"))


def _field(entry: dict, key: str, kind=float):
    try:
        return kind(entry[key])
    except (KeyError, TypeError, ValueError):
        raise FormatError(f"entry {entry!r} lacks a valid {key!r}", 0) from None


def write_annotations(path, images: list[dict], circles: Mapping[int, list[Circle]]) -> None:
    """``images`` holds ``{"id", "h", "w"}`` dicts; circles are in pixels."""
    doc = {
        "images": [{"id": int(im["id"]), "h": int(im["h"]), "w": int(im["w"])} for im in images],
        "annotations": [
            {"image_id": int(img), "x": sig9(c.x), "y": sig9(c.y), "r": sig9(c.r)}
            for img in sorted(circles)
            for c in circles[img]
        ],
    }
    write_json(path, doc)


def read_annotations(path) -> tuple[list[dict], dict[int, list[Circle]]]:
    doc = _load_json(path)
    images = [{"id": _field(im, "id", int), "h": _field(im, "h", int), "w": _field(im, "w", int)}
              for im in doc.get("images", [])]
    circles: dict[int, list[Circle]] = {im["id"]: [] for im in images}
    for ann in doc.get("annotations", []):
        img = _field(ann, "image_id", int)
        circles.setdefault(img, []).append(Circle(_field(ann, "x"), _field(ann, "y"), _field(ann, "r")))
    return images, circles


def write_predictions(path, detections: Mapping[int, list]) -> None:
    """``detections`` maps image id to ``(circle, score)`` pairs."""
    doc = {
        "predictions": [
            {"image_id": int(img), "x": sig9(c.x), "y": sig9(c.y), "r": sig9(c.r), "score": sig9(s)}
            for img in sorted(detections)
            for c, s in detections[img]
        ]
    }
    write_json(path, doc)


def read_predictions(path) -> dict[int, list[tuple[Circle, float]]]:
    doc = _load_json(path)
    out: dict[int, list[tuple[Circle, float]]] = {}
    for p in doc.get("predictions", []):
        img = _field(p, "image_id", int)
        out.setdefault(img, []).append((Circle(_field(p, "x"), _field(p, "y"), _field(p, "r")), _field(p, "score")))
    return out
