import json
import sys

import numpy as np
import pytest

from annoflow.cli import main
from annoflow.mot import MotRecord, write_mot
from annoflow.synth import SynthSpec
from annoflow.tracking import synth_sequence
from annoflow.watershed import Heatmap, write_heatmap
from conftest import write_dataset_to_disk, write_scenario

SPEC = SynthSpec(frames=12, num_objects=2, frame_w=120, frame_h=90, obj_w=12, obj_h=9, seed=4)


@pytest.fixture
def dataset(tmp_path):
    manifest_dir, mask_dir, initial = write_dataset_to_disk(tmp_path, SPEC)
    prompts = tmp_path / "prompts.json"
    prompts.write_text(json.dumps([list(b.as_tuple()) for b in initial]))
    return manifest_dir, mask_dir, prompts


class TestRun:
    def test_headless_run_and_export(self, tmp_path, dataset, capsys):
        manifest_dir, mask_dir, prompts = dataset
        code = main(
            [
                "run",
                "--manifest", str(manifest_dir),
                "--backend", f"oracle:{mask_dir}",
                "--prompts", str(prompts),
                "--journal", str(tmp_path / "run.journal"),
                "--export-dir", str(tmp_path / "out"),
            ]
        )
        assert code == 0
        stats = json.loads(capsys.readouterr().out)
        assert stats["status"] == "completed"
        mot = (tmp_path / "out" / "labels.mot.csv").read_text()
        assert len(mot.strip().splitlines()) == SPEC.frames * 2
        yolo_files = list((tmp_path / "out" / "yolo").glob("*.txt"))
        assert len(yolo_files) == SPEC.frames

    def test_conflict_exit_code(self, tmp_path, dataset):
        manifest_dir, mask_dir, prompts = dataset
        scenario = write_scenario(
            tmp_path / "scn.json",
            [
                {"frame": 5, "op": "scale_area", "factor": 2.0},
                {"frame": 5, "stage": "grid", "op": "drop_all"},
            ],
        )
        code = main(
            [
                "run",
                "--manifest", str(manifest_dir),
                "--backend", f"scripted:{scenario}:{mask_dir}",
                "--prompts", str(prompts),
                "--journal", str(tmp_path / "run.journal"),
            ]
        )
        assert code == 3

    def test_cli_and_resume_identical_exports(self, tmp_path, dataset):
        from annoflow.engine import Session

        manifest_dir, mask_dir, prompts = dataset
        main(
            [
                "run",
                "--manifest", str(manifest_dir),
                "--backend", f"oracle:{mask_dir}",
                "--prompts", str(prompts),
                "--journal", str(tmp_path / "cli.journal"),
                "--export-dir", str(tmp_path / "out"),
            ]
        )
        session = Session.resume(tmp_path / "cli.journal", backend=None)
        assert session.export_mot() == (tmp_path / "out" / "labels.mot.csv").read_text()


class TestExportCommand:
    def test_export_from_journal(self, tmp_path, dataset, capsys):
        manifest_dir, mask_dir, prompts = dataset
        main(
            [
                "run",
                "--manifest", str(manifest_dir),
                "--backend", f"oracle:{mask_dir}",
                "--prompts", str(prompts),
                "--journal", str(tmp_path / "j.journal"),
            ]
        )
        capsys.readouterr()
        code = main(
            [
                "export",
                "--journal", str(tmp_path / "j.journal"),
                "--format", "mot",
                "--out", str(tmp_path / "labels.csv"),
            ]
        )
        assert code == 0
        assert (tmp_path / "labels.csv").read_text().count("\n") == SPEC.frames * 2


class TestEval:
    def test_eval_prints_idf1(self, tmp_path, capsys):
        gt, dets = synth_sequence(SynthSpec(frames=20, seed=3))
        gt_path = tmp_path / "gt.csv"
        write_mot(
            [
                MotRecord(frame=f, track_id=t.track_id, bbox=b)
                for t in gt
                for f, b in sorted(t.boxes.items())
            ],
            gt_path,
        )
        det_path = tmp_path / "det.csv"
        write_mot(
            [MotRecord(frame=d.frame, track_id=0, bbox=d.bbox, score=d.score) for d in dets],
            det_path,
        )
        code = main(
            [
                "eval",
                "--gt", str(gt_path),
                "--pred", str(det_path),
                "--track",
                "--report", str(tmp_path / "report.json"),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "IDF1 1.0000" in out
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["idf1"] == 1.0
        assert report["idfp"] == 0


class TestWatershedCommand:
    def test_watershed_writes_instances(self, tmp_path, capsys):
        yy, xx = np.mgrid[0:48, 0:64].astype(float)
        values = np.full((48, 64), -1.0)
        for cx in (16, 46):
            values += 4.0 * np.exp(-((xx - cx) ** 2 + (yy - 24) ** 2) / (2 * 3.0**2))
        write_heatmap(Heatmap(values), tmp_path / "f.hmap")
        code = main(
            [
                "watershed",
                "--input", str(tmp_path / "f.hmap"),
                "--count", "2",
                "--radius", "10",
                "--out-prefix", str(tmp_path / "inst"),
            ]
        )
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["instances"] == 2
        assert (tmp_path / "inst_00.png").exists()
        assert (tmp_path / "inst_01.png").exists()


class TestProtocolTest:
    def test_self_mode_passes(self, capsys):
        code = main(["protocol-test"])
        assert code == 0
        out = capsys.readouterr().out
        assert "[PASS] health" in out
        assert "FAIL" not in out

    def test_stdio_mode(self, capsys):
        server = (
            "import sys; from annoflow.backends import run_stdio_server, ThresholdBackend; "
            "run_stdio_server(ThresholdBackend(), sys.stdin.buffer, sys.stdout.buffer)"
        )
        code = main(["protocol-test", "--stdio", f"{sys.executable} -c '{server}'"])
        assert code == 0
        assert "FAIL" not in capsys.readouterr().out


class TestEnvOverrides:
    def test_env_beats_flag(self, tmp_path, monkeypatch):
        from annoflow.cli import _setting

        monkeypatch.setenv("ANNOFLOW_PORT", "9999")
        assert _setting("port", 1234, {}) == "9999"
        monkeypatch.delenv("ANNOFLOW_PORT")
        assert _setting("port", 1234, {}) == 1234
        assert _setting("port", None, {"port": "7777"}) == "7777"
        assert _setting("port", None, {}, 8765) == 8765

    def test_config_file_parsing(self, tmp_path):
        from annoflow.cli import _read_config_file

        cfg = tmp_path / "annoflow.conf"
        cfg.write_text(
            "# service settings\n"
            "HOST = 0.0.0.0\n"
            "port=9001\n"
            "\n"
            "backend = threshold:90\n"
            "not a setting\n"
        )
        values = _read_config_file(str(cfg))
        assert values == {"host": "0.0.0.0", "port": "9001", "backend": "threshold:90"}
        assert _read_config_file(None) == {}
