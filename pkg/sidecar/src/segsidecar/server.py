"""Request dispatch and the stdio/http serving loops."""

from __future__ import annotations

import base64
import io
import json
import sys
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .predictors import Predictor
from .wire import (
    ERROR_BAD_PROMPT,
    ERROR_INTERNAL,
    encode_message,
    error,
    mask_payload,
    ok,
    read_message,
)

CAPABILITIES = ["bbox", "points", "grid"]


def _load_image(frame: dict) -> np.ndarray:
    from PIL import Image

    if frame.get("image_b64"):
        img = Image.open(io.BytesIO(base64.b64decode(frame["image_b64"])))
    elif frame.get("path"):
        img = Image.open(frame["path"])
    else:
        raise ValueError("frame carries neither path nor image_b64")
    arr = np.asarray(img.convert("L"))
    if arr.shape != (int(frame["height"]), int(frame["width"])):
        raise ValueError(
            f"frame file is {arr.shape[1]}x{arr.shape[0]}, "
            f"reference says {frame['width']}x{frame['height']}"
        )
    return arr


def _parse_boxes(prompts: list[dict], width: int, height: int) -> list[tuple[int, int, int, int]]:
    boxes = []
    for p in prompts:
        if p.get("kind") != "bbox":
            raise ValueError("segment takes bbox prompts")
        try:
            box = (int(p["x_min"]), int(p["y_min"]), int(p["x_max"]), int(p["y_max"]))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"bad bbox prompt: missing {exc}") from exc
        if not (0 <= box[0] <= box[2] < width and 0 <= box[1] <= box[3] < height):
            raise ValueError(f"bbox {box} outside {width}x{height} frame")
        boxes.append(box)
    return boxes


def _grid_points(prompt: dict, width: int, height: int) -> list[tuple[int, int]]:
    try:
        nx, ny = int(prompt["nx"]), int(prompt["ny"])
    except (KeyError, TypeError) as exc:
        raise ValueError(f"bad grid prompt: missing {exc}") from exc
    if nx < 2 or ny < 2:
        raise ValueError("grid dimensions must be >= 2")
    return [
        (int((j + 0.5) * width / nx), int((i + 0.5) * height / ny))
        for i in range(ny)
        for j in range(nx)
    ]


def handle(predictor: Predictor, request: dict) -> dict:
    request_id = request.get("request_id", 0)
    op = request.get("op")
    try:
        if op == "health":
            return ok(request_id, status="ok")
        if op == "capabilities":
            return ok(request_id, prompts=CAPABILITIES)
        if op in ("segment", "segment_grid"):
            frame = request.get("frame")
            prompts = request.get("prompts")
            if not frame:
                return error(request_id, ERROR_BAD_PROMPT, "missing frame")
            if not prompts:
                return error(request_id, ERROR_BAD_PROMPT, "missing prompts")
            try:
                image = _load_image(frame)
                width, height = int(frame["width"]), int(frame["height"])
                if op == "segment":
                    boxes = _parse_boxes(prompts, width, height)
                    masks = predictor.predict_boxes(image, boxes)
                else:
                    if len(prompts) != 1 or prompts[0].get("kind") != "grid":
                        raise ValueError("segment_grid takes one grid prompt")
                    points = _grid_points(prompts[0], width, height)
                    masks = predictor.predict_points(image, points)
            except (ValueError, KeyError, TypeError) as exc:
                return error(request_id, ERROR_BAD_PROMPT, str(exc))
            return ok(
                request_id, masks=[mask_payload(m, 1.0) for m in masks]
            )
        return error(request_id, ERROR_INTERNAL, f"unsupported op {op!r}")
    except Exception as exc:  # noqa: BLE001 - wire boundary
        return error(request_id, ERROR_INTERNAL, f"{type(exc).__name__}: {exc}")


def serve_stdio(predictor: Predictor) -> None:
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer
    while True:
        try:
            request = read_message(stdin)
        except (ValueError, json.JSONDecodeError) as exc:
            stdout.write(encode_message(error(0, ERROR_BAD_PROMPT, str(exc))))
            stdout.flush()
            continue
        if request is None:
            return
        stdout.write(encode_message(handle(predictor, request)))
        stdout.flush()


def serve_http(predictor: Predictor, host: str, port: int) -> None:
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
                response = error(0, ERROR_BAD_PROMPT, "invalid json body")
            else:
                response = handle(predictor, request)
            payload = json.dumps(response, sort_keys=True).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer((host, port), Handler)
    print(f"segsidecar listening on http://{host}:{server.server_address[1]}/rpc", file=sys.stderr)
    server.serve_forever()
