"""Sidecar acceptance: the workbench's protocol-test vectors must pass
against the sidecar, exercised purely through external interfaces (the
CLI and the wire). No segmentation-quality assertions anywhere."""

import base64
import io
import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from segsidecar.predictors import DemoPredictor, SidecarConfig, build_predictor
from segsidecar.server import handle
from segsidecar.wire import rle_encode

SIDECAR_CMD = f"{sys.executable} -m segsidecar --demo --stdio"


def tiny_frame(w=16, h=12):
    arr = np.zeros((h, w), dtype=np.uint8)
    arr[4:8, 5:11] = 255
    buf = io.BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return {
        "index": 0,
        "width": w,
        "height": h,
        "image_b64": base64.b64encode(buf.getvalue()).decode(),
    }


class TestWorkbenchConformance:
    def test_protocol_test_cli_green(self):
        result = subprocess.run(
            [
                sys.executable,
                "-m",
                "annoflow.cli",
                "protocol-test",
                "--stdio",
                SIDECAR_CMD,
            ],
            capture_output=True,
            text=True,
            timeout=120,
        )
        assert result.returncode == 0, result.stdout + result.stderr
        assert "FAIL" not in result.stdout


class TestDispatch:
    def test_health_and_capabilities(self):
        predictor = DemoPredictor()
        assert handle(predictor, {"op": "health", "request_id": 1}) == {
            "request_id": 1,
            "ok": True,
            "status": "ok",
        }
        caps = handle(predictor, {"op": "capabilities", "request_id": 2})
        assert caps["ok"] and "bbox" in caps["prompts"] and "grid" in caps["prompts"]

    def test_segment_run_sum_valid(self):
        predictor = DemoPredictor()
        resp = handle(
            predictor,
            {
                "op": "segment",
                "request_id": 3,
                "frame": tiny_frame(),
                "prompts": [{"kind": "bbox", "x_min": 3, "y_min": 2, "x_max": 12, "y_max": 9}],
            },
        )
        assert resp["ok"], resp
        assert len(resp["masks"]) == 1
        payload = resp["masks"][0]
        assert sum(payload["rle"]) == payload["width"] * payload["height"]
        assert payload["width"] == 16 and payload["height"] == 12

    def test_grid_returns_components(self):
        predictor = DemoPredictor()
        resp = handle(
            predictor,
            {
                "op": "segment_grid",
                "request_id": 4,
                "frame": tiny_frame(),
                "prompts": [{"kind": "grid", "nx": 4, "ny": 4}],
            },
        )
        assert resp["ok"], resp
        for payload in resp["masks"]:
            assert sum(payload["rle"]) == payload["width"] * payload["height"]

    def test_bad_prompt_codes(self):
        predictor = DemoPredictor()
        missing = handle(predictor, {"op": "segment", "request_id": 5, "frame": tiny_frame()})
        assert not missing["ok"] and missing["error"]["code"] == "BAD_PROMPT"
        malformed = handle(
            predictor,
            {
                "op": "segment",
                "request_id": 6,
                "frame": tiny_frame(),
                "prompts": [{"kind": "bbox", "x_min": 0}],
            },
        )
        assert not malformed["ok"] and malformed["error"]["code"] == "BAD_PROMPT"
        outside = handle(
            predictor,
            {
                "op": "segment",
                "request_id": 7,
                "frame": tiny_frame(),
                "prompts": [{"kind": "bbox", "x_min": 0, "y_min": 0, "x_max": 99, "y_max": 99}],
            },
        )
        assert not outside["ok"] and outside["error"]["code"] == "BAD_PROMPT"

    def test_unknown_op_internal(self):
        resp = handle(DemoPredictor(), {"op": "transmogrify", "request_id": 8})
        assert not resp["ok"] and resp["error"]["code"] == "INTERNAL"


class TestRle:
    def test_layout(self):
        assert rle_encode(np.zeros((2, 3), dtype=bool)) == [6]
        assert rle_encode(np.ones((2, 3), dtype=bool)) == [0, 6]
        mask = np.array([[0, 1, 1], [0, 0, 1]], dtype=bool)
        assert rle_encode(mask) == [1, 2, 2, 1]


class TestConfig:
    def test_missing_checkpoint_fails_fast(self, tmp_path):
        config = SidecarConfig(box_checkpoint=tmp_path / "nope.pt", grid_checkpoint=tmp_path / "nope2.pt")
        with pytest.raises(FileNotFoundError):
            build_predictor(config)

    def test_cli_exits_nonzero_without_model(self, tmp_path):
        result = subprocess.run(
            [
                sys.executable,
                "-m",
                "segsidecar",
                "--stdio",
                "--box-checkpoint",
                str(tmp_path / "missing.pt"),
            ],
            capture_output=True,
            text=True,
            timeout=60,
        )
        assert result.returncode == 1
        assert "cannot load model" in result.stderr
