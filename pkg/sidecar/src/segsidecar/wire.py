"""Protocol primitives: RLE masks, message framing, response envelopes."""

from __future__ import annotations

import json
from typing import BinaryIO

import numpy as np

ERROR_TIMEOUT = "TIMEOUT"
ERROR_BAD_PROMPT = "BAD_PROMPT"
ERROR_INTERNAL = "INTERNAL"


def rle_encode(mask: np.ndarray) -> list[int]:
    """Row-major runs alternating zero/one, zero run first."""
    flat = np.asarray(mask, dtype=bool).ravel()
    n = flat.size
    if n == 0:
        return [0]
    changes = np.nonzero(np.diff(flat))[0] + 1
    boundaries = np.concatenate(([0], changes, [n]))
    runs = np.diff(boundaries).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return [int(r) for r in runs]


def mask_payload(mask: np.ndarray, score: float) -> dict:
    h, w = mask.shape
    return {"rle": rle_encode(mask), "width": w, "height": h, "score": float(score)}


def ok(request_id, **payload) -> dict:
    return {"request_id": request_id, "ok": True, **payload}


def error(request_id, code: str, message: str) -> dict:
    return {
        "request_id": request_id,
        "ok": False,
        "error": {"code": code, "message": message},
    }


def encode_message(message: dict) -> bytes:
    payload = json.dumps(message, sort_keys=True, separators=(",", ":")).encode()
    return str(len(payload)).encode() + b"\n" + payload


def read_message(stream: BinaryIO) -> dict | None:
    header = stream.readline()
    if not header:
        return None
    length = int(header.strip())
    payload = stream.read(length)
    if len(payload) != length:
        raise ValueError("truncated frame")
    return json.loads(payload)
