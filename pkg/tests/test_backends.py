import io
import sys

import numpy as np
import pytest
from PIL import Image

from annoflow.backends import (
    BackendHTTPServer,
    GroundTruthOracleBackend,
    HttpBackend,
    ReplayBackend,
    ScenarioRule,
    ScriptedBackend,
    StdioBackend,
    ThresholdBackend,
    TranscriptEntry,
    handle_request,
    scale_mask,
)
from annoflow.errors import BackendError, ProtocolError
from annoflow.geometry import BBox, BinaryMask, mask_to_bbox
from annoflow.protocol import (
    BoxPrompt,
    FrameRef,
    GridSpec,
    MaskResult,
    encode_message,
    mask_result_from_dict,
    mask_result_to_dict,
    read_message,
    run_conformance,
)


def rect_mask(x0, y0, x1, y1, w=64, h=48):
    return BinaryMask.from_bbox(BBox(x0, y0, x1, y1), w, h)


def frame_ref(idx=0, w=64, h=48):
    return FrameRef(index=idx, width=w, height=h)


class TestOracle:
    def test_returns_gt_in_prompt_order(self):
        masks = [rect_mask(5, 5, 14, 14), rect_mask(40, 30, 49, 39)]
        oracle = GroundTruthOracleBackend({0: masks})
        out = oracle.segment(
            frame_ref(),
            [BoxPrompt(BBox(40, 30, 49, 39)), BoxPrompt(BBox(5, 5, 14, 14))],
        )
        assert out[0].mask == masks[1]
        assert out[1].mask == masks[0]

    def test_inflated_prompt_still_finds_instance(self):
        masks = [rect_mask(5, 5, 14, 14), rect_mask(40, 30, 49, 39)]
        oracle = GroundTruthOracleBackend({0: masks})
        out = oracle.segment(frame_ref(), [BoxPrompt(BBox(3, 3, 17, 17))])
        assert out[0].mask == masks[0]

    def test_grid_returns_all_instances(self):
        masks = [rect_mask(5, 5, 14, 14), rect_mask(40, 30, 49, 39)]
        oracle = GroundTruthOracleBackend({0: masks})
        out = oracle.segment_grid(frame_ref(), GridSpec(4, 4))
        assert [r.mask for r in out] == masks

    def test_unknown_frame_errors(self):
        oracle = GroundTruthOracleBackend({0: [rect_mask(0, 0, 3, 3)]})
        with pytest.raises(BackendError):
            oracle.segment(frame_ref(idx=7), [BoxPrompt(BBox(0, 0, 3, 3))])


class TestScaleMask:
    def test_doubles_area_roughly(self):
        mask = rect_mask(20, 15, 29, 24)  # 10x10 = 100 px
        scaled = scale_mask(mask, 2.0)
        assert 180 <= scaled.area <= 220
        before = mask_to_bbox(mask)
        after = mask_to_bbox(scaled)
        assert abs((after.x_min + after.x_max) / 2 - (before.x_min + before.x_max) / 2) <= 1
        assert abs((after.y_min + after.y_max) / 2 - (before.y_min + before.y_max) / 2) <= 1

    def test_identity_and_empty(self):
        mask = rect_mask(4, 4, 9, 9)
        assert scale_mask(mask, 1.0) == mask
        empty = BinaryMask.zeros(64, 48)
        assert scale_mask(empty, 2.0) == empty


class TestScripted:
    def test_scale_rule_applies_once(self):
        gt = {i: [rect_mask(10, 10, 19, 19)] for i in range(4)}
        backend = ScriptedBackend(
            GroundTruthOracleBackend(gt), [ScenarioRule(frame=2, op="scale_area", factor=2.0)]
        )
        prompt = [BoxPrompt(BBox(10, 10, 19, 19))]
        assert backend.segment(frame_ref(1), prompt)[0].mask.area == 100
        assert backend.segment(frame_ref(2), prompt)[0].mask.area > 150
        assert backend.segment(frame_ref(3), prompt)[0].mask.area == 100

    def test_every_rule(self):
        gt = {i: [rect_mask(10, 10, 19, 19)] for i in range(21)}
        backend = ScriptedBackend(
            GroundTruthOracleBackend(gt),
            [ScenarioRule(frame=0, every=10, op="scale_area", factor=2.0)],
        )
        prompt = [BoxPrompt(BBox(10, 10, 19, 19))]
        assert backend.segment(frame_ref(10), prompt)[0].mask.area > 150
        assert backend.segment(frame_ref(20), prompt)[0].mask.area > 150
        assert backend.segment(frame_ref(0), prompt)[0].mask.area == 100  # frame 0 exempt
        assert backend.segment(frame_ref(11), prompt)[0].mask.area == 100

    def test_empty_and_drop_all(self):
        gt = {0: [rect_mask(10, 10, 19, 19)]}
        backend = ScriptedBackend(
            GroundTruthOracleBackend(gt),
            [
                ScenarioRule(frame=0, op="empty", instance=0),
                ScenarioRule(frame=0, stage="grid", op="drop_all"),
            ],
        )
        assert backend.segment(frame_ref(), [BoxPrompt(BBox(10, 10, 19, 19))])[0].mask.area == 0
        assert backend.segment_grid(frame_ref(), GridSpec()) == []


class TestThreshold:
    @pytest.fixture
    def frame_on_disk(self, tmp_path):
        arr = np.zeros((48, 64), dtype=np.uint8)
        arr[10:20, 12:30] = 220  # bright blob
        arr[40:44, 50:60] = 210  # second blob
        path = tmp_path / "000001.png"
        Image.fromarray(arr, mode="L").save(path)
        return FrameRef(index=0, width=64, height=48, path=str(path))

    def test_segment_returns_blob_in_box(self, frame_on_disk):
        out = ThresholdBackend(128).segment(
            frame_on_disk, [BoxPrompt(BBox(8, 8, 34, 24))]
        )
        expected = rect_mask(12, 10, 29, 19)
        assert out[0].mask == expected

    def test_grid_returns_components(self, frame_on_disk):
        out = ThresholdBackend(128).segment_grid(frame_on_disk, GridSpec())
        assert len(out) == 2
        areas = sorted(r.mask.area for r in out)
        assert areas == [40, 180]

    def test_prompt_outside_frame_is_bad_prompt(self, frame_on_disk):
        with pytest.raises(BackendError) as err:
            ThresholdBackend().segment(frame_on_disk, [BoxPrompt(BBox(0, 0, 99, 99))])
        assert err.value.code == "BAD_PROMPT"


class TestReplay:
    def test_replays_verbatim(self):
        masks = [rect_mask(1, 1, 5, 5)]
        entries = [
            TranscriptEntry(0, "segment", [MaskResult(masks[0], 1.0)]),
            TranscriptEntry(1, "segment", [MaskResult(masks[0], 0.5)]),
        ]
        backend = ReplayBackend(entries)
        out0 = backend.segment(frame_ref(0), [BoxPrompt(BBox(0, 0, 5, 5))])
        assert out0[0].mask == masks[0] and out0[0].score == 1.0
        out1 = backend.segment(frame_ref(1), [BoxPrompt(BBox(0, 0, 5, 5))])
        assert out1[0].score == 0.5

    def test_transcript_mismatch(self):
        backend = ReplayBackend([TranscriptEntry(0, "segment_grid", [])])
        with pytest.raises(BackendError):
            backend.segment(frame_ref(0), [BoxPrompt(BBox(0, 0, 5, 5))])


class TestProtocol:
    def test_framing_round_trip(self):
        message = {"op": "health", "request_id": 42}
        stream = io.BytesIO(encode_message(message))
        assert read_message(stream) == message
        assert read_message(stream) is None  # EOF

    def test_mask_result_round_trip(self):
        result = MaskResult(rect_mask(3, 4, 10, 12), 0.75)
        again = mask_result_from_dict(mask_result_to_dict(result))
        assert again.mask == result.mask and again.score == result.score

    def test_run_sum_enforced(self):
        payload = mask_result_to_dict(MaskResult(rect_mask(3, 4, 10, 12), 1.0))
        payload["rle"] = payload["rle"][:-1]  # corrupt
        with pytest.raises(ProtocolError):
            mask_result_from_dict(payload)

    def test_local_conformance(self):
        backend = ThresholdBackend()
        results = run_conformance(lambda req: handle_request(backend, req))
        failed = [(n, d) for n, ok, d in results if not ok]
        assert not failed, failed


class TestHttpWire:
    @pytest.fixture
    def server(self):
        srv = BackendHTTPServer(ThresholdBackend(), port=0).start()
        yield srv
        srv.stop()

    def test_segment_over_http(self, server, tmp_path):
        arr = np.zeros((24, 32), dtype=np.uint8)
        arr[5:12, 8:20] = 255
        path = tmp_path / "f.png"
        Image.fromarray(arr, mode="L").save(path)
        client = HttpBackend(server.url)
        frame = FrameRef(index=0, width=32, height=24, path=str(path))
        out = client.segment(frame, [BoxPrompt(BBox(4, 2, 24, 16))])
        assert out[0].mask == rect_mask(8, 5, 19, 11, w=32, h=24)
        assert client.health() == "ok"
        assert "bbox" in client.capabilities()

    def test_conformance_over_http(self, server):
        client = HttpBackend(server.url)
        results = run_conformance(client.call_raw)
        failed = [(n, d) for n, ok, d in results if not ok]
        assert not failed, failed

    def test_error_code_surfaces(self, server, tmp_path):
        arr = np.zeros((24, 32), dtype=np.uint8)
        path = tmp_path / "f.png"
        Image.fromarray(arr, mode="L").save(path)
        client = HttpBackend(server.url)
        frame = FrameRef(index=0, width=32, height=24, path=str(path))
        with pytest.raises(BackendError) as err:
            client.segment(frame, [BoxPrompt(BBox(0, 0, 60, 60))])
        assert err.value.code == "BAD_PROMPT"

    def test_unreachable_backend_times_out(self):
        client = HttpBackend("http://127.0.0.1:1/rpc", timeout=0.2, retries=1)
        with pytest.raises(BackendError) as err:
            client.health()
        assert err.value.code == "TIMEOUT"


STDIO_SERVER = (
    "import sys; from annoflow.backends import run_stdio_server, ThresholdBackend; "
    "run_stdio_server(ThresholdBackend(), sys.stdin.buffer, sys.stdout.buffer)"
)


class TestStdioWire:
    def test_conformance_over_stdio(self):
        client = StdioBackend([sys.executable, "-c", STDIO_SERVER])
        try:
            results = run_conformance(client.call_raw)
            failed = [(n, d) for n, ok, d in results if not ok]
            assert not failed, failed
        finally:
            client.close()
