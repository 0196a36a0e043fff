"""Frame manifests: a directory of pre-extracted, zero-padded image files
plus a manifest.json naming the sequence and its geometry."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ManifestError

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg", ".bmp"}
MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class FrameManifest:
    name: str
    width: int
    height: int
    fps: float
    expected_count: int
    frames: tuple[str, ...]  # file names relative to root, in order
    root: Path | None = None

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ManifestError("frame dimensions must be positive")
        if self.expected_count < 1:
            raise ManifestError("expected_count must be >= 1")
        if not self.frames:
            raise ManifestError("manifest lists no frames")

    def __len__(self) -> int:
        return len(self.frames)

    def frame_path(self, index: int) -> Path | None:
        if self.root is None:
            return None
        return self.root / self.frames[index]

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "width": self.width,
            "height": self.height,
            "fps": self.fps,
            "expected_count": self.expected_count,
            "frames": list(self.frames),
        }

    @classmethod
    def from_dict(cls, data: dict, root: Path | None = None) -> "FrameManifest":
        try:
            return cls(
                name=data["name"],
                width=int(data["width"]),
                height=int(data["height"]),
                fps=float(data.get("fps", 30.0)),
                expected_count=int(data["expected_count"]),
                frames=tuple(data["frames"]),
                root=root,
            )
        except KeyError as exc:
            raise ManifestError(f"manifest missing field {exc}") from exc


def load_manifest(directory: str | Path) -> FrameManifest:
    """Read manifest.json from a frame directory. If the json omits the
    frame list, image files in the directory are used in sorted order."""
    root = Path(directory)
    manifest_file = root / MANIFEST_NAME
    if not manifest_file.is_file():
        raise ManifestError(f"no {MANIFEST_NAME} in {root}")
    try:
        data = json.loads(manifest_file.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"invalid manifest json: {exc}") from exc
    if "frames" not in data:
        data["frames"] = sorted(
            p.name for p in root.iterdir() if p.suffix.lower() in IMAGE_EXTENSIONS
        )
    return FrameManifest.from_dict(data, root=root)


def write_manifest(manifest: FrameManifest, directory: str | Path) -> Path:
    root = Path(directory)
    root.mkdir(parents=True, exist_ok=True)
    path = root / MANIFEST_NAME
    path.write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    return path
