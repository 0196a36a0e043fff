import json
from pathlib import Path

import numpy as np
import pytest

from annoflow.backends import GroundTruthOracleBackend
from annoflow.engine import EngineParams
from annoflow.manifest import FrameManifest, write_manifest
from annoflow.synth import SynthSpec, gt_boxes, gt_masks


def make_dataset(tmp_path: Path, spec: SynthSpec, name: str = "scene"):
    """Synthetic sequence on disk: manifest + oracle backend + initial GT
    boxes. Frame image files are not written (oracle backends never read
    pixels); tests that need pixels write them explicitly."""
    manifest_dir = tmp_path / name
    manifest_dir.mkdir(parents=True, exist_ok=True)
    manifest = FrameManifest(
        name=name,
        width=spec.frame_w,
        height=spec.frame_h,
        fps=30.0,
        expected_count=spec.num_objects,
        frames=tuple(f"{i + 1:06d}.png" for i in range(spec.frames)),
        root=manifest_dir,
    )
    write_manifest(manifest, manifest_dir)
    backend = GroundTruthOracleBackend(gt_masks(spec))
    initial = gt_boxes(spec)[0]
    return manifest, backend, initial


def write_scenario(path: Path, rules: list[dict]) -> Path:
    path.write_text(json.dumps({"rules": rules}, indent=2))
    return path


def write_dataset_to_disk(data_root: Path, spec: SynthSpec, name: str = "scene"):
    """Full on-disk dataset: frame PNGs (bright rectangles on black, usable
    by the threshold backend and as UI assets), oracle mask PNGs, and the
    manifest. Returns (manifest_dir, mask_dir, initial_boxes)."""
    from PIL import Image

    manifest_dir = data_root / name
    manifest_dir.mkdir(parents=True, exist_ok=True)
    mask_dir = data_root / f"{name}-masks"
    mask_dir.mkdir(parents=True, exist_ok=True)

    boxes_per_frame = gt_boxes(spec)
    for f, boxes in enumerate(boxes_per_frame):
        frame = np.zeros((spec.frame_h, spec.frame_w), dtype=np.uint8)
        for i, b in enumerate(boxes):
            frame[b.y_min : b.y_max + 1, b.x_min : b.x_max + 1] = 220
            mask = np.zeros((spec.frame_h, spec.frame_w), dtype=np.uint8)
            mask[b.y_min : b.y_max + 1, b.x_min : b.x_max + 1] = 255
            Image.fromarray(mask, mode="L").save(mask_dir / f"{f:06d}_{i:02d}.png")
        Image.fromarray(frame, mode="L").save(manifest_dir / f"{f + 1:06d}.png")

    manifest = FrameManifest(
        name=name,
        width=spec.frame_w,
        height=spec.frame_h,
        fps=30.0,
        expected_count=spec.num_objects,
        frames=tuple(f"{i + 1:06d}.png" for i in range(spec.frames)),
        root=manifest_dir,
    )
    write_manifest(manifest, manifest_dir)
    return manifest_dir, mask_dir, boxes_per_frame[0]


@pytest.fixture
def small_spec():
    return SynthSpec(frames=30, num_objects=2, frame_w=120, frame_h=90, obj_w=12, obj_h=9, speed=2, seed=5)


@pytest.fixture
def engine_params():
    return EngineParams()
