"""Segmentation backends: the in-process stubs that make the whole pipeline
runnable without a neural model, plus wire clients/servers for remote ones.

Stubs:
  GroundTruthOracleBackend  replies with ground-truth masks (by prompt IoU)
  ScriptedBackend           wraps another backend and injects failures
  ThresholdBackend          intensity-thresholds synthetic frames
  ReplayBackend             replays a recorded transcript verbatim
"""

from __future__ import annotations

import base64
import io
import json
import re
import subprocess
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BackendError, ProtocolError
from .geometry import BinaryMask, bbox_iou, mask_to_bbox
from .protocol import (
    ERROR_BAD_PROMPT,
    ERROR_INTERNAL,
    ERROR_TIMEOUT,
    BoxPrompt,
    FrameRef,
    GridPrompt,
    GridSpec,
    MaskResult,
    Prompt,
    encode_message,
    error_response,
    make_request,
    mask_result_to_dict,
    ok_response,
    parse_response_masks,
    prompt_from_dict,
    read_message,
)


class SegmentationBackend:
    """Interface every backend implements. Per-session calls are serialized
    by the engine; implementations must tolerate calls from multiple
    sessions concurrently."""

    def segment(self, frame: FrameRef, prompts: Sequence[BoxPrompt]) -> list[MaskResult]:
        raise NotImplementedError

    def segment_grid(self, frame: FrameRef, grid: GridSpec) -> list[MaskResult]:
        raise NotImplementedError

    def health(self) -> str:
        return "ok"

    def capabilities(self) -> list[str]:
        return ["bbox", "grid"]


def _load_frame_array(frame: FrameRef) -> np.ndarray:
    """Grayscale uint8 pixels from an inline image or an on-disk path."""
    from PIL import Image

    if frame.image_b64 is not None:
        img = Image.open(io.BytesIO(base64.b64decode(frame.image_b64)))
    elif frame.path is not None:
        img = Image.open(frame.path)
    else:
        raise BackendError(ERROR_BAD_PROMPT, "frame carries neither path nor image")
    arr = np.asarray(img.convert("L"))
    if arr.shape != (frame.height, frame.width):
        raise BackendError(
            ERROR_BAD_PROMPT,
            f"frame file is {arr.shape[1]}x{arr.shape[0]}, "
            f"reference says {frame.width}x{frame.height}",
        )
    return arr


class GroundTruthOracleBackend(SegmentationBackend):
    """Replies with ground-truth instance masks.

    For each bbox prompt returns the GT mask whose tight box best overlaps
    the prompt (ties to the lowest instance id); grid requests return every
    instance mask. Masks come from an in-memory table or a directory of
    PNGs named {frame:06d}_{instance:02d}.png.
    """

    def __init__(self, masks_by_frame: dict[int, list[BinaryMask]]):
        self.masks_by_frame = masks_by_frame

    @classmethod
    def from_directory(cls, mask_dir: str | Path) -> "GroundTruthOracleBackend":
        from PIL import Image

        pattern = re.compile(r"^(\d{6})_(\d{2})\.png$")
        table: dict[int, dict[int, BinaryMask]] = {}
        for path in sorted(Path(mask_dir).iterdir()):
            m = pattern.match(path.name)
            if not m:
                continue
            frame_idx, inst = int(m.group(1)), int(m.group(2))
            arr = np.asarray(Image.open(path).convert("L")) > 127
            table.setdefault(frame_idx, {})[inst] = BinaryMask(arr)
        return cls(
            {
                f: [insts[i] for i in sorted(insts)]
                for f, insts in table.items()
            }
        )

    def _frame_masks(self, frame: FrameRef) -> list[BinaryMask]:
        try:
            return self.masks_by_frame[frame.index]
        except KeyError:
            raise BackendError(
                ERROR_INTERNAL, f"no ground truth for frame {frame.index}"
            ) from None

    def segment(self, frame: FrameRef, prompts: Sequence[BoxPrompt]) -> list[MaskResult]:
        gt = self._frame_masks(frame)
        gt_boxes = [mask_to_bbox(m) if m.area else None for m in gt]
        out = []
        for prompt in prompts:
            best_i, best_iou = 0, -1.0
            for i, box in enumerate(gt_boxes):
                iou = bbox_iou(prompt.bbox, box) if box is not None else 0.0
                if iou > best_iou:
                    best_i, best_iou = i, iou
            out.append(MaskResult(mask=gt[best_i], score=1.0))
        return out

    def segment_grid(self, frame: FrameRef, grid: GridSpec) -> list[MaskResult]:
        return [MaskResult(mask=m, score=1.0) for m in self._frame_masks(frame)]


def scale_mask(mask: BinaryMask, area_factor: float) -> BinaryMask:
    """Rescale a mask about its bbox center so its area multiplies by
    roughly area_factor (nearest-neighbor resampling, clipped to frame)."""
    if mask.area == 0 or area_factor == 1.0:
        return mask
    side = float(np.sqrt(area_factor))
    box = mask_to_bbox(mask)
    patch = mask.pixels[box.y_min : box.y_max + 1, box.x_min : box.x_max + 1]
    new_h = max(1, int(round(box.height * side)))
    new_w = max(1, int(round(box.width * side)))
    src_y = np.minimum((np.arange(new_h) / side).astype(int), box.height - 1)
    src_x = np.minimum((np.arange(new_w) / side).astype(int), box.width - 1)
    grown = patch[np.ix_(src_y, src_x)]

    out = np.zeros_like(mask.pixels)
    cy = (box.y_min + box.y_max) // 2
    cx = (box.x_min + box.x_max) // 2
    y0 = cy - new_h // 2
    x0 = cx - new_w // 2
    ty0, tx0 = max(0, y0), max(0, x0)
    ty1 = min(out.shape[0], y0 + new_h)
    tx1 = min(out.shape[1], x0 + new_w)
    out[ty0:ty1, tx0:tx1] = grown[ty0 - y0 : ty1 - y0, tx0 - x0 : tx1 - x0]
    return BinaryMask(out)


@dataclass(frozen=True)
class ScenarioRule:
    """One failure-injection rule. stage is 'segment' or 'grid'; instance
    None hits every prompt; op is scale_area | empty | drop_all; max_hits
    limits how many calls the rule corrupts (inject once, then behave)."""

    frame: int
    stage: str = "segment"
    op: str = "scale_area"
    instance: int | None = None
    factor: float = 2.0
    every: int | None = None  # if set, applies when frame % every == rule.frame
    max_hits: int | None = None

    def applies(self, frame_index: int, stage: str) -> bool:
        if stage != self.stage:
            return False
        if self.every:
            return frame_index % self.every == self.frame and frame_index > 0
        return frame_index == self.frame


class ScriptedBackend(SegmentationBackend):
    """Failure injection around an inner backend, driven by scenario rules."""

    def __init__(self, inner: SegmentationBackend, rules: Sequence[ScenarioRule]):
        self.inner = inner
        self.rules = list(rules)
        self._hits = [0] * len(self.rules)

    @classmethod
    def from_scenario_file(
        cls, inner: SegmentationBackend, path: str | Path
    ) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text())
        rules = [
            ScenarioRule(
                frame=int(r["frame"]),
                stage=r.get("stage", "segment"),
                op=r.get("op", "scale_area"),
                instance=r.get("instance"),
                factor=float(r.get("factor", 2.0)),
                every=r.get("every"),
                max_hits=r.get("max_hits"),
            )
            for r in data.get("rules", [])
        ]
        return cls(inner, rules)

    def _apply(
        self, results: list[MaskResult], frame_index: int, stage: str
    ) -> list[MaskResult]:
        out = list(results)
        for rule_index, rule in enumerate(self.rules):
            if not rule.applies(frame_index, stage):
                continue
            if rule.max_hits is not None and self._hits[rule_index] >= rule.max_hits:
                continue
            self._hits[rule_index] += 1
            if rule.op == "drop_all":
                return []
            targets = (
                range(len(out)) if rule.instance is None else [rule.instance]
            )
            for i in targets:
                if i >= len(out):
                    continue
                if rule.op == "empty":
                    empty = BinaryMask.zeros(out[i].mask.width, out[i].mask.height)
                    out[i] = MaskResult(mask=empty, score=out[i].score)
                elif rule.op == "scale_area":
                    out[i] = MaskResult(
                        mask=scale_mask(out[i].mask, rule.factor), score=out[i].score
                    )
                else:
                    raise BackendError(ERROR_INTERNAL, f"unknown scenario op {rule.op}")
        return out

    def segment(self, frame: FrameRef, prompts: Sequence[BoxPrompt]) -> list[MaskResult]:
        return self._apply(self.inner.segment(frame, prompts), frame.index, "segment")

    def segment_grid(self, frame: FrameRef, grid: GridSpec) -> list[MaskResult]:
        return self._apply(self.inner.segment_grid(frame, grid), frame.index, "grid")


class ThresholdBackend(SegmentationBackend):
    """Intensity segmentation of synthetic frames: pixels >= threshold are
    foreground. Box prompts clip to the prompt region; grid requests return
    the connected components of the global foreground."""

    def __init__(self, threshold: int = 128):
        self.threshold = threshold

    def segment(self, frame: FrameRef, prompts: Sequence[BoxPrompt]) -> list[MaskResult]:
        arr = _load_frame_array(frame)
        fg = arr >= self.threshold
        out = []
        for prompt in prompts:
            b = prompt.bbox
            if b.x_max >= frame.width or b.y_max >= frame.height:
                raise BackendError(ERROR_BAD_PROMPT, f"prompt {b} outside frame")
            region = np.zeros_like(fg)
            region[b.y_min : b.y_max + 1, b.x_min : b.x_max + 1] = True
            out.append(MaskResult(mask=BinaryMask(fg & region), score=1.0))
        return out

    def segment_grid(self, frame: FrameRef, grid: GridSpec) -> list[MaskResult]:
        from scipy import ndimage

        arr = _load_frame_array(frame)
        fg = arr >= self.threshold
        labels, count = ndimage.label(fg, structure=np.ones((3, 3)))
        return [
            MaskResult(mask=BinaryMask(labels == i), score=1.0)
            for i in range(1, count + 1)
        ]


@dataclass
class TranscriptEntry:
    frame_index: int
    kind: str  # "segment" | "segment_grid"
    results: list[MaskResult]


class ReplayBackend(SegmentationBackend):
    """Replays a recorded backend transcript verbatim, in call order."""

    def __init__(self, transcript: Sequence[TranscriptEntry]):
        self.transcript = list(transcript)
        self._pos = 0

    def _next(self, frame: FrameRef, kind: str) -> list[MaskResult]:
        if self._pos >= len(self.transcript):
            raise BackendError(ERROR_INTERNAL, "transcript exhausted")
        entry = self.transcript[self._pos]
        if entry.frame_index != frame.index or entry.kind != kind:
            raise BackendError(
                ERROR_INTERNAL,
                f"transcript expects {entry.kind}@{entry.frame_index}, "
                f"got {kind}@{frame.index}",
            )
        self._pos += 1
        return list(entry.results)

    def segment(self, frame: FrameRef, prompts: Sequence[BoxPrompt]) -> list[MaskResult]:
        return self._next(frame, "segment")

    def segment_grid(self, frame: FrameRef, grid: GridSpec) -> list[MaskResult]:
        return self._next(frame, "segment_grid")


# --- Server-side dispatch (shared by HTTP and stdio servers) -------------

def handle_request(backend: SegmentationBackend, request: dict) -> dict:
    """Map one wire request onto a backend; exceptions become error codes."""
    request_id = request.get("request_id", 0)
    op = request.get("op")
    try:
        if op == "health":
            return ok_response(request_id, status=backend.health())
        if op == "capabilities":
            return ok_response(request_id, prompts=backend.capabilities())
        if op in ("segment", "segment_grid"):
            if "frame" not in request:
                return error_response(request_id, ERROR_BAD_PROMPT, "missing frame")
            frame = FrameRef.from_dict(request["frame"])
            raw_prompts = request.get("prompts")
            if not raw_prompts:
                return error_response(request_id, ERROR_BAD_PROMPT, "missing prompts")
            prompts = [prompt_from_dict(p) for p in raw_prompts]
            if op == "segment":
                boxes = [p for p in prompts if isinstance(p, BoxPrompt)]
                if len(boxes) != len(prompts):
                    return error_response(
                        request_id, ERROR_BAD_PROMPT, "segment takes bbox prompts"
                    )
                results = backend.segment(frame, boxes)
            else:
                grids = [p for p in prompts if isinstance(p, GridPrompt)]
                if len(grids) != 1:
                    return error_response(
                        request_id, ERROR_BAD_PROMPT, "segment_grid takes one grid prompt"
                    )
                results = backend.segment_grid(frame, grids[0].grid)
            return ok_response(
                request_id, masks=[mask_result_to_dict(r) for r in results]
            )
        return error_response(request_id, ERROR_INTERNAL, f"unsupported op {op!r}")
    except ProtocolError as exc:
        return error_response(request_id, ERROR_BAD_PROMPT, str(exc))
    except BackendError as exc:
        return error_response(request_id, exc.code, exc.message)
    except Exception as exc:  # noqa: BLE001 - wire boundary
        return error_response(request_id, ERROR_INTERNAL, f"{type(exc).__name__}: {exc}")


class BackendHTTPServer:
    """Threaded HTTP host for a backend, speaking the protocol on POST /rpc."""

    def __init__(self, backend: SegmentationBackend, host: str = "127.0.0.1", port: int = 0):
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 - stdlib naming
                if self.path != "/rpc":
                    self.send_error(404)
                    return
                length = int(self.headers.get("Content-Length", "0"))
                body = self.rfile.read(length)
                try:
                    request = json.loads(body)
                except json.JSONDecodeError:
                    response = error_response(0, ERROR_BAD_PROMPT, "invalid json body")
                else:
                    response = handle_request(outer.backend, request)
                payload = json.dumps(response, sort_keys=True).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args):
                pass

        self.backend = backend
        self.server = ThreadingHTTPServer((host, port), Handler)
        self.thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}/rpc"

    def start(self) -> "BackendHTTPServer":
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()
        return self

    def stop(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        if self.thread:
            self.thread.join(timeout=5)


def run_stdio_server(backend: SegmentationBackend, stdin: "io.BufferedReader", stdout: "io.BufferedWriter") -> None:
    """Serve framed protocol messages until EOF (for sidecar-style hosting)."""
    while True:
        try:
            request = read_message(stdin)
        except ProtocolError as exc:
            stdout.write(encode_message(error_response(0, ERROR_BAD_PROMPT, str(exc))))
            stdout.flush()
            continue
        if request is None:
            return
        stdout.write(encode_message(handle_request(backend, request)))
        stdout.flush()


# --- Wire clients ---------------------------------------------------------

class HttpBackend(SegmentationBackend):
    """Client for a backend served over HTTP POST /rpc. One retry on
    timeout or connection failure, then a typed error."""

    def __init__(self, url: str, timeout: float = 30.0, retries: int = 1):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self._request_id = 0

    def call_raw(self, request: dict) -> dict:
        import requests

        last_exc: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = requests.post(self.url, json=request, timeout=self.timeout)
                return resp.json()
            except (requests.Timeout, requests.ConnectionError) as exc:
                last_exc = exc
            except ValueError as exc:
                raise ProtocolError(f"non-json response: {exc}") from exc
        raise BackendError(ERROR_TIMEOUT, f"backend unreachable: {last_exc}")

    def _call(self, request: dict) -> dict:
        response = self.call_raw(request)
        if not response.get("ok"):
            err = response.get("error", {})
            raise BackendError(
                err.get("code", ERROR_INTERNAL), err.get("message", "")
            )
        return response

    def _next_id(self) -> int:
        self._request_id += 1
        return self._request_id

    def segment(self, frame: FrameRef, prompts: Sequence[BoxPrompt]) -> list[MaskResult]:
        response = self._call(
            make_request("segment", frame=frame, prompts=list(prompts), request_id=self._next_id())
        )
        return parse_response_masks(response, frame)

    def segment_grid(self, frame: FrameRef, grid: GridSpec) -> list[MaskResult]:
        response = self._call(
            make_request(
                "segment_grid", frame=frame, prompts=[GridPrompt(grid)], request_id=self._next_id()
            )
        )
        return parse_response_masks(response, frame)

    def health(self) -> str:
        return self._call(make_request("health", request_id=self._next_id()))["status"]

    def capabilities(self) -> list[str]:
        return self._call(make_request("capabilities", request_id=self._next_id()))["prompts"]


class StdioBackend(SegmentationBackend):
    """Client for a backend subprocess speaking framed messages on stdio."""

    def __init__(self, command: list[str], timeout: float = 30.0):
        self.command = command
        self.timeout = timeout
        self._proc: subprocess.Popen | None = None
        self._request_id = 0
        self._lock = threading.Lock()

    def _ensure(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
            )
        return self._proc

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=5)
        self._proc = None

    def call_raw(self, request: dict) -> dict:
        with self._lock:
            proc = self._ensure()
            try:
                proc.stdin.write(encode_message(request))
                proc.stdin.flush()
                response = read_message(proc.stdout)
            except (BrokenPipeError, ProtocolError) as exc:
                raise BackendError(ERROR_INTERNAL, f"sidecar failed: {exc}") from exc
            if response is None:
                raise BackendError(ERROR_INTERNAL, "sidecar closed the stream")
            return response

    def _call(self, request: dict) -> dict:
        response = self.call_raw(request)
        if not response.get("ok"):
            err = response.get("error", {})
            raise BackendError(err.get("code", ERROR_INTERNAL), err.get("message", ""))
        return response

    def _next_id(self) -> int:
        self._request_id += 1
        return self._request_id

    def segment(self, frame: FrameRef, prompts: Sequence[BoxPrompt]) -> list[MaskResult]:
        response = self._call(
            make_request("segment", frame=frame, prompts=list(prompts), request_id=self._next_id())
        )
        return parse_response_masks(response, frame)

    def segment_grid(self, frame: FrameRef, grid: GridSpec) -> list[MaskResult]:
        response = self._call(
            make_request(
                "segment_grid", frame=frame, prompts=[GridPrompt(grid)], request_id=self._next_id()
            )
        )
        return parse_response_masks(response, frame)

    def health(self) -> str:
        return self._call(make_request("health", request_id=self._next_id()))["status"]

    def capabilities(self) -> list[str]:
        return self._call(make_request("capabilities", request_id=self._next_id()))["prompts"]
