"""On-disk formats.

Sequence file (JSON)::

    {"version": 1, "dim": d, "times": [...], "codes": [[...], ...],
     "heldout": [indices], "meta": {...}}

Model file (binary, little-endian)::

    b"DYNO" | u16 version | u16 dim | u8 n_hidden | u16 * n_hidden widths
    | f64 t_first | f64 t_last | f64 * dim z0
    | per layer: f64 weights (row-major, out x in), f64 bias
    | u32 CRC32 of everything before it

The input width of the first layer (dim or dim + 1 for a time input) is
recovered from the payload length.

Image stack: raw f64 little-endian array of shape (frames, C, H, W) with a
JSON sidecar ``<path>.json`` holding the shape and frame times.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .dynamics import MlpParams, n_params
from .trajectory import FittedModel, LatentSequence

MAGIC = b"DYNO"
MODEL_VERSION = 1
SEQUENCE_VERSION = 1


class FormatError(ValueError):
    pass


# -- sequences ---------------------------------------------------------------


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise FormatError(f"{path}: expected a number, got {type(value).__name__}")
    return float(value)


def sequence_to_dict(seq: LatentSequence, meta: Optional[dict] = None) -> dict:
    return {
        "version": SEQUENCE_VERSION,
        "dim": seq.dim,
        "times": [float(t) for t in seq.times],
        "codes": [[float(x) for x in row] for row in seq.codes],
        "heldout": [int(i) for i in seq.heldout_indices],
        "meta": meta or {},
    }


def sequence_from_dict(doc: Any) -> tuple[LatentSequence, dict]:
    if not isinstance(doc, dict):
        raise FormatError("$: expected an object")
    for key in ("version", "dim", "times", "codes"):
        if key not in doc:
            raise FormatError(f"$.{key}: missing")
    if doc["version"] != SEQUENCE_VERSION:
        raise FormatError(f"$.version: unsupported version {doc['version']!r}")
    dim = doc["dim"]
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise FormatError("$.dim: expected a positive integer")
    if not isinstance(doc["times"], list):
        raise FormatError("$.times: expected an array")
    if not isinstance(doc["codes"], list):
        raise FormatError("$.codes: expected an array")
    times = [_number(v, f"$.times[{i}]") for i, v in enumerate(doc["times"])]
    if len(doc["codes"]) != len(times):
        raise FormatError(f"$.codes: has {len(doc['codes'])} rows but $.times has {len(times)} entries")
    codes = []
    for i, row in enumerate(doc["codes"]):
        if not isinstance(row, list) or len(row) != dim:
            raise FormatError(f"$.codes[{i}]: expected an array of {dim} numbers")
        codes.append([_number(v, f"$.codes[{i}][{j}]") for j, v in enumerate(row)])
    if len(times) < 2:
        raise FormatError("$.times: need at least two frames")
    for i in range(1, len(times)):
        if not times[i] > times[i - 1]:
            raise FormatError(f"times not strictly increasing at index {i}")
    mask = np.zeros(len(times), dtype=bool)
    held = doc.get("heldout", [])
    if not isinstance(held, list):
        raise FormatError("$.heldout: expected an array")
    for k, i in enumerate(held):
        if isinstance(i, bool) or not isinstance(i, int) or not 0 <= i < len(times):
            raise FormatError(f"$.heldout[{k}]: expected a frame index in [0, {len(times)})")
        if i == 0:
            raise FormatError(f"$.heldout[{k}]: the initial frame cannot be held out")
        mask[i] = True
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise FormatError("$.meta: expected an object")
    try:
        seq = LatentSequence(np.array(times), np.array(codes), mask)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc
    return seq, meta


def save_sequence(seq: LatentSequence, path, meta: Optional[dict] = None) -> None:
    # repr-based float output round-trips exactly
    Path(path).write_text(json.dumps(sequence_to_dict(seq, meta), indent=1) + "\n")


def load_sequence(path) -> LatentSequence:
    return load_sequence_with_meta(path)[0]


def load_sequence_with_meta(path) -> tuple[LatentSequence, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON ({exc})") from exc
    return sequence_from_dict(doc)


# -- models ------------------------------------------------------------------


def model_to_bytes(m: FittedModel) -> bytes:
    p = m.params
    hidden = p.hidden
    if len(hidden) > 255 or max(hidden, default=0) > 0xFFFF or p.dim > 0xFFFF:
        raise ValueError("model too large for the file format")
    out = bytearray(MAGIC)
    out += struct.pack("<HHB", MODEL_VERSION, p.dim, len(hidden))
    out += struct.pack(f"<{len(hidden)}H", *hidden)
    out += struct.pack("<dd", m.t_first, m.t_last)
    out += np.asarray(m.z0, dtype="<f8").tobytes()
    # theta is already laid out layer by layer, weights row-major then bias
    out += np.asarray(p.theta, dtype="<f8").tobytes()
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


def model_from_bytes(data: bytes) -> FittedModel:
    if len(data) < 4 + 5 + 4 or data[:4] != MAGIC:
        raise FormatError("not a model file (bad magic)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise FormatError("model file is corrupt (CRC mismatch)")
    version, dim, n_hidden = struct.unpack_from("<HHB", body, 4)
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}")
    pos = 9
    hidden = struct.unpack_from(f"<{n_hidden}H", body, pos)
    pos += 2 * n_hidden
    t_first, t_last = struct.unpack_from("<dd", body, pos)
    pos += 16
    z0 = np.frombuffer(body, dtype="<f8", count=dim, offset=pos).astype(np.float64)
    pos += 8 * dim
    n_rest = (len(body) - pos) // 8
    for time_input in (True, False):
        sizes = (dim + int(time_input), *hidden, dim)
        if n_params(sizes) == n_rest and (len(body) - pos) % 8 == 0:
            break
    else:
        raise FormatError("parameter payload does not match the declared architecture")
    theta = np.frombuffer(body, dtype="<f8", count=n_rest, offset=pos).astype(np.float64)
    return FittedModel(MlpParams(theta, sizes, time_input), z0, t_first, t_last)


def save_model(m: FittedModel, path) -> None:
    Path(path).write_bytes(model_to_bytes(m))


def load_model(path) -> FittedModel:
    return model_from_bytes(Path(path).read_bytes())


# -- images ------------------------------------------------------------------


def save_images(images: np.ndarray, path, times=None, extra: Optional[dict] = None) -> None:
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[None]
    if images.ndim != 4:
        raise ValueError("images must be (C, H, W) or (frames, C, H, W)")
    n, c, h, w = images.shape
    Path(path).write_bytes(images.astype("<f8").tobytes())
    side = {"frames": n, "channels": c, "height": h, "width": w}
    if times is not None:
        side["times"] = [float(t) for t in times]
    side.update(extra or {})
    Path(str(path) + ".json").write_text(json.dumps(side, indent=1) + "\n")


def load_images(path) -> tuple[np.ndarray, dict]:
    side_path = Path(str(path) + ".json")
    try:
        side = json.loads(side_path.read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"missing image sidecar {side_path}") from exc
    for key in ("channels", "height", "width"):
        if not isinstance(side.get(key), int) or side[key] < 1:
            raise FormatError(f"$.{key}: expected a positive integer in {side_path}")
    raw = np.frombuffer(Path(path).read_bytes(), dtype="<f8")
    per = side["channels"] * side["height"] * side["width"]
    if raw.size % per:
        raise FormatError(f"{path}: size is not a multiple of one {per}-pixel frame")
    n = raw.size // per
    if side.get("frames", n) != n:
        raise FormatError(f"{path}: sidecar declares {side['frames']} frames, file holds {n}")
    return raw.reshape(n, side["channels"], side["height"], side["width"]).astype(np.float64), side


def write_ppm(image: np.ndarray, path, lo: float = -1.0, hi: float = 1.0) -> None:
    """Binary PPM (3 channels) or PGM (1 channel) for quick viewing."""
    image = np.asarray(image, dtype=np.float64)
    c, h, w = image.shape
    px = np.clip(np.round((image - lo) / (hi - lo) * 255), 0, 255).astype(np.uint8)
    if c == 1:
        header, data = f"P5\n{w} {h}\n255\n", px[0]
    elif c == 3:
        header, data = f"P6\n{w} {h}\n255\n", np.transpose(px, (1, 2, 0))
    else:
        raise ValueError("PPM/PGM export needs 1 or 3 channels")
    Path(path).write_bytes(header.encode() + data.tobytes())
