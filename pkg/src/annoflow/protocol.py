"""Segmentation backend wire protocol.

Requests and responses are single JSON objects. Over HTTP they travel as
POST bodies to /rpc; over stdio each message is framed as the decimal byte
length, a newline, then the JSON payload. PROTOCOL.md is the normative
description; this module is its reference implementation.

Error codes: TIMEOUT, BAD_PROMPT, INTERNAL.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import BinaryIO, Callable

from .errors import ProtocolError
from .geometry import BBox, BinaryMask, rle_decode, rle_encode

ERROR_TIMEOUT = "TIMEOUT"
ERROR_BAD_PROMPT = "BAD_PROMPT"
ERROR_INTERNAL = "INTERNAL"

OPS = ("health", "capabilities", "segment", "segment_grid")


@dataclass(frozen=True)
class GridSpec:
    """Equidistant point-prompt grid over the full frame."""

    nx: int = 32
    ny: int = 32

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid dimensions must be >= 2")

    def points(self, width: int, height: int) -> list[tuple[int, int]]:
        return [
            (int((j + 0.5) * width / self.nx), int((i + 0.5) * height / self.ny))
            for i in range(self.ny)
            for j in range(self.nx)
        ]


@dataclass(frozen=True)
class BoxPrompt:
    bbox: BBox

    def to_dict(self) -> dict:
        return {
            "kind": "bbox",
            "x_min": self.bbox.x_min,
            "y_min": self.bbox.y_min,
            "x_max": self.bbox.x_max,
            "y_max": self.bbox.y_max,
        }


@dataclass(frozen=True)
class PointsPrompt:
    points: tuple[tuple[int, int], ...]
    labels: tuple[int, ...]  # 1 foreground, 0 background

    def to_dict(self) -> dict:
        return {
            "kind": "points",
            "points": [list(p) for p in self.points],
            "labels": list(self.labels),
        }


@dataclass(frozen=True)
class GridPrompt:
    grid: GridSpec

    def to_dict(self) -> dict:
        return {"kind": "grid", "nx": self.grid.nx, "ny": self.grid.ny}


Prompt = BoxPrompt | PointsPrompt | GridPrompt


def prompt_from_dict(data: dict) -> Prompt:
    kind = data.get("kind")
    try:
        if kind == "bbox":
            return BoxPrompt(
                BBox(
                    int(data["x_min"]),
                    int(data["y_min"]),
                    int(data["x_max"]),
                    int(data["y_max"]),
                )
            )
        if kind == "points":
            points = tuple((int(x), int(y)) for x, y in data["points"])
            labels = tuple(int(v) for v in data["labels"])
            if len(points) != len(labels):
                raise ProtocolError("points and labels length mismatch")
            return PointsPrompt(points, labels)
        if kind == "grid":
            return GridPrompt(GridSpec(int(data["nx"]), int(data["ny"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad prompt: {exc}") from exc
    raise ProtocolError(f"unknown prompt kind {kind!r}")


@dataclass(frozen=True)
class FrameRef:
    """Frame addressed by index, with optional path or inline image bytes."""

    index: int
    width: int
    height: int
    path: str | None = None
    image_b64: str | None = None

    def to_dict(self) -> dict:
        out: dict = {"index": self.index, "width": self.width, "height": self.height}
        if self.path is not None:
            out["path"] = self.path
        if self.image_b64 is not None:
            out["image_b64"] = self.image_b64
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FrameRef":
        try:
            return cls(
                index=int(data["index"]),
                width=int(data["width"]),
                height=int(data["height"]),
                path=data.get("path"),
                image_b64=data.get("image_b64"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad frame reference: {exc}") from exc


@dataclass(frozen=True)
class MaskResult:
    mask: BinaryMask
    score: float

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must be in [0, 1]")


def mask_result_to_dict(result: MaskResult) -> dict:
    return {
        "rle": rle_encode(result.mask),
        "width": result.mask.width,
        "height": result.mask.height,
        "score": result.score,
    }


def mask_result_from_dict(data: dict) -> MaskResult:
    try:
        mask = rle_decode(data["rle"], int(data["width"]), int(data["height"]))
        return MaskResult(mask=mask, score=float(data["score"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad mask payload: {exc}") from exc


def make_request(
    op: str,
    frame: FrameRef | None = None,
    prompts: list[Prompt] | None = None,
    request_id: int = 0,
) -> dict:
    req: dict = {"op": op, "request_id": request_id}
    if frame is not None:
        req["frame"] = frame.to_dict()
    if prompts is not None:
        req["prompts"] = [p.to_dict() for p in prompts]
    return req


def ok_response(request_id: int, **payload) -> dict:
    return {"request_id": request_id, "ok": True, **payload}


def error_response(request_id: int, code: str, message: str) -> dict:
    return {
        "request_id": request_id,
        "ok": False,
        "error": {"code": code, "message": message},
    }


def encode_message(message: dict) -> bytes:
    """Stdio framing: decimal byte length, newline, JSON payload."""
    payload = json.dumps(message, sort_keys=True, separators=(",", ":")).encode()
    return str(len(payload)).encode() + b"\n" + payload


def read_message(stream: BinaryIO) -> dict | None:
    """Read one framed message; None at clean EOF."""
    header = stream.readline()
    if not header:
        return None
    try:
        length = int(header.strip())
    except ValueError as exc:
        raise ProtocolError(f"bad frame header {header!r}") from exc
    payload = stream.read(length)
    if len(payload) != length:
        raise ProtocolError("truncated frame")
    try:
        return json.loads(payload)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"invalid json payload: {exc}") from exc


def parse_response_masks(response: dict, frame: FrameRef) -> list[MaskResult]:
    """Validate and decode a successful segment/segment_grid response."""
    if "masks" not in response:
        raise ProtocolError("response missing masks")
    results = []
    for item in response["masks"]:
        result = mask_result_from_dict(item)
        if result.mask.width != frame.width or result.mask.height != frame.height:
            raise ProtocolError(
                f"mask dimensions {result.mask.width}x{result.mask.height} "
                f"differ from frame {frame.width}x{frame.height}"
            )
        results.append(result)
    return results


# --- Conformance vectors ------------------------------------------------

def _tiny_test_frame() -> FrameRef:
    """A 16x12 inline PNG with a bright 6x4 blob; intensity backends segment
    it, oracle-style backends may ignore the pixels."""
    import base64
    import io

    import numpy as np
    from PIL import Image

    arr = np.zeros((12, 16), dtype=np.uint8)
    arr[4:8, 5:11] = 255
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return FrameRef(
        index=0,
        width=16,
        height=12,
        image_b64=base64.b64encode(buf.getvalue()).decode(),
    )


def run_conformance(call: Callable[[dict], dict]) -> list[tuple[str, bool, str]]:
    """Run the protocol test vectors against a raw request->response callable.

    Checks request parsing, mask run-sum validity, and error codes; never
    segmentation quality.
    """
    results: list[tuple[str, bool, str]] = []

    def vector(name: str):
        def wrap(fn):
            try:
                fn()
                results.append((name, True, ""))
            except Exception as exc:  # noqa: BLE001 - report, don't crash
                results.append((name, False, f"{type(exc).__name__}: {exc}"))

        return wrap

    frame = _tiny_test_frame()

    @vector("health")
    def _():
        resp = call(make_request("health", request_id=1))
        assert resp.get("ok") is True, resp
        assert resp.get("status") == "ok", resp

    @vector("capabilities")
    def _():
        resp = call(make_request("capabilities", request_id=2))
        assert resp.get("ok") is True, resp
        prompts = resp.get("prompts", [])
        assert "bbox" in prompts and "grid" in prompts, resp

    @vector("segment_bbox")
    def _():
        req = make_request(
            "segment", frame=frame, prompts=[BoxPrompt(BBox(3, 2, 12, 9))], request_id=3
        )
        resp = call(req)
        assert resp.get("ok") is True, resp
        masks = parse_response_masks(resp, frame)  # run-sum enforced by decode
        assert len(masks) == 1, f"expected 1 mask, got {len(masks)}"

    @vector("segment_grid")
    def _():
        req = make_request(
            "segment_grid", frame=frame, prompts=[GridPrompt(GridSpec(4, 4))], request_id=4
        )
        resp = call(req)
        assert resp.get("ok") is True, resp
        parse_response_masks(resp, frame)

    @vector("bad_prompt_error")
    def _():
        req = make_request("segment", frame=frame, request_id=5)
        req["prompts"] = [{"kind": "bbox", "x_min": 0}]  # missing coordinates
        resp = call(req)
        assert resp.get("ok") is False, resp
        assert resp["error"]["code"] == ERROR_BAD_PROMPT, resp

    @vector("missing_prompts_error")
    def _():
        resp = call(make_request("segment", frame=frame, request_id=6))
        assert resp.get("ok") is False, resp
        assert resp["error"]["code"] == ERROR_BAD_PROMPT, resp

    @vector("unknown_op_error")
    def _():
        resp = call({"op": "transmogrify", "request_id": 7})
        assert resp.get("ok") is False, resp
        assert resp["error"]["code"] == ERROR_INTERNAL, resp

    @vector("request_id_echo")
    def _():
        resp = call(make_request("health", request_id=99))
        assert resp.get("request_id") == 99, resp

    return results
