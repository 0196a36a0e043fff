"""Predictor backends behind the sidecar.

A predictor turns an image plus prompts into boolean masks. The demo
predictor thresholds intensity and exists so the protocol surface can be
exercised (and conformance-tested) without any checkpoint; real deployments
load SAM-style checkpoints through the adapters below. Which checkpoint to
use, and how it was trained, is entirely the operator's business.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class SidecarConfig:
    box_checkpoint: Path | None = None   # promptable model for box prompts
    grid_checkpoint: Path | None = None  # model used for grid-point prompts
    device: str = "cpu"
    demo: bool = False

    def validate(self) -> None:
        if self.demo:
            return
        for label, path in (
            ("box checkpoint", self.box_checkpoint),
            ("grid checkpoint", self.grid_checkpoint),
        ):
            if path is None:
                raise FileNotFoundError(f"{label} not configured (use --demo for the stub)")
            if not Path(path).is_file():
                raise FileNotFoundError(f"{label} does not exist: {path}")


class Predictor:
    def predict_boxes(self, image: np.ndarray, boxes: list[tuple[int, int, int, int]]) -> list[np.ndarray]:
        raise NotImplementedError

    def predict_points(self, image: np.ndarray, points: list[tuple[int, int]]) -> list[np.ndarray]:
        raise NotImplementedError


def _flood_components(fg: np.ndarray) -> list[np.ndarray]:
    """8-connected components without scipy (the sidecar stays light)."""
    h, w = fg.shape
    seen = np.zeros_like(fg, dtype=bool)
    components = []
    for sy in range(h):
        for sx in range(w):
            if not fg[sy, sx] or seen[sy, sx]:
                continue
            stack = [(sx, sy)]
            seen[sy, sx] = True
            member = np.zeros_like(fg, dtype=bool)
            while stack:
                x, y = stack.pop()
                member[y, x] = True
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        nx, ny = x + dx, y + dy
                        if 0 <= nx < w and 0 <= ny < h and fg[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            stack.append((nx, ny))
            components.append(member)
    return components


class DemoPredictor(Predictor):
    """Intensity thresholding; good enough to prove the pipes."""

    def __init__(self, threshold: int = 128):
        self.threshold = threshold

    def predict_boxes(self, image, boxes):
        fg = image >= self.threshold
        out = []
        for x0, y0, x1, y1 in boxes:
            region = np.zeros_like(fg)
            region[y0 : y1 + 1, x0 : x1 + 1] = True
            out.append(fg & region)
        return out

    def predict_points(self, image, points):
        fg = image >= self.threshold
        components = _flood_components(fg)
        hits = []
        for comp in components:
            if any(comp[y, x] for x, y in points if 0 <= y < comp.shape[0] and 0 <= x < comp.shape[1]):
                hits.append(comp)
        return hits


class SamPredictor(Predictor):
    """Adapter over segment-anything style checkpoints. Imports lazily so
    the sidecar starts fast in demo mode and fails with a clear diagnostic
    when the model stack is missing."""

    def __init__(self, config: SidecarConfig):
        try:
            import torch  # noqa: F401
            from segment_anything import SamPredictor as _SamPredictor, sam_model_registry
        except ImportError as exc:
            raise RuntimeError(
                "segment-anything and torch are required for checkpoint mode; "
                f"install segsidecar[sam] ({exc})"
            ) from exc
        sam = sam_model_registry["default"](checkpoint=str(config.box_checkpoint))
        sam.to(config.device)
        self._predictor = _SamPredictor(sam)

    def predict_boxes(self, image, boxes):
        import numpy as np

        rgb = np.stack([image] * 3, axis=-1) if image.ndim == 2 else image
        self._predictor.set_image(rgb)
        out = []
        for box in boxes:
            masks, scores, _ = self._predictor.predict(
                box=np.array(box, dtype=float), multimask_output=False
            )
            out.append(masks[0].astype(bool))
        return out

    def predict_points(self, image, points):
        import numpy as np

        rgb = np.stack([image] * 3, axis=-1) if image.ndim == 2 else image
        self._predictor.set_image(rgb)
        out = []
        for x, y in points:
            masks, scores, _ = self._predictor.predict(
                point_coords=np.array([[x, y]], dtype=float),
                point_labels=np.array([1]),
                multimask_output=False,
            )
            out.append(masks[0].astype(bool))
        return out


def build_predictor(config: SidecarConfig) -> Predictor:
    config.validate()
    if config.demo:
        return DemoPredictor()
    return SamPredictor(config)
