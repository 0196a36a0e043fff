"""Classical instance segmentation from logit heatmaps.

The logit field is treated as a landscape: peaks seed one instance each
(greedy, with circular exclusion zones sized to the animals), the thresholded
foreground is cleaned morphologically, missing seeds are recovered from the
known animal count, and a priority flood over the inverted logits carves the
foreground into instances. K-means or GMM re-clustering of the foreground
coordinates is an optional refinement.

Everything is deterministic: ties resolve in row-major pixel order and the
flood breaks priority ties by insertion order.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .clustering import farthest_point_init, gmm, kmeans
from .geometry import BinaryMask, InstanceMask, MaskSource

HEATMAP_MAGIC = b"HMAP"

_EIGHT = np.ones((3, 3), dtype=bool)
_NEIGHBORS = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


@dataclass(frozen=True)
class Heatmap:
    values: np.ndarray  # (h, w) float, finite

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=float)
        if arr.ndim != 2:
            raise ValueError("heatmap must be 2-D")
        if not np.isfinite(arr).all():
            raise ValueError("heatmap contains non-finite values")
        object.__setattr__(self, "values", arr)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class PeakParams:
    expected_count: int
    exclusion_radius: float  # proportional to animal size
    overlap_removal_distance: float | None = None  # defaults to the radius
    binarize_threshold: float = 0.0
    morphology_kernel: int = 3
    small_region_fraction: float = 0.2
    clustering: str | None = None  # None | "kmeans" | "gmm"
    em_max_iters: int = 100
    em_tol: float = 1e-4

    def __post_init__(self):
        if self.expected_count < 1:
            raise ValueError("expected_count must be >= 1")
        if self.exclusion_radius <= 0:
            raise ValueError("exclusion_radius must be positive")
        if self.clustering not in (None, "kmeans", "gmm"):
            raise ValueError(f"unknown clustering {self.clustering!r}")

    @property
    def min_peak_distance(self) -> float:
        return (
            self.overlap_removal_distance
            if self.overlap_removal_distance is not None
            else self.exclusion_radius
        )


def extract_peaks(h: Heatmap, params: PeakParams) -> list[tuple[int, int]]:
    """Greedy maximum-intensity peaks, each suppressing a disc of the
    exclusion radius; afterwards, of any two peaks closer than the overlap
    removal distance the lower-intensity one is dropped. May return fewer
    than expected_count points. Ties resolve to the first pixel in
    row-major order."""
    values = h.values
    hh, ww = values.shape
    yy, xx = np.mgrid[0:hh, 0:ww]
    available = np.ones_like(values, dtype=bool)
    peaks: list[tuple[int, int]] = []
    r2 = params.exclusion_radius**2
    while len(peaks) < params.expected_count and available.any():
        masked = np.where(available, values, -np.inf)
        flat = int(np.argmax(masked))  # first occurrence = row-major tie-break
        py, px = divmod(flat, ww)
        peaks.append((px, py))
        available &= (xx - px) ** 2 + (yy - py) ** 2 > r2

    # overlap removal: keep higher-intensity peak of any too-close pair
    min_d2 = params.min_peak_distance**2
    order = sorted(
        range(len(peaks)), key=lambda i: (-values[peaks[i][1], peaks[i][0]], i)
    )
    kept: list[int] = []
    for i in order:
        xi, yi = peaks[i]
        if all(
            (xi - peaks[j][0]) ** 2 + (yi - peaks[j][1]) ** 2 >= min_d2 for j in kept
        ):
            kept.append(i)
    return [peaks[i] for i in sorted(kept)]


def clean_foreground(h: Heatmap, params: PeakParams) -> BinaryMask:
    """Binarize at the threshold, close then open with the morphology
    kernel, and drop connected components far smaller than the largest."""
    fg = h.values > params.binarize_threshold
    if not fg.any():
        return BinaryMask(fg)
    k = params.morphology_kernel
    structure = np.ones((k, k), dtype=bool)
    fg = ndimage.binary_closing(fg, structure=structure)
    fg = ndimage.binary_opening(fg, structure=structure)
    labels, count = ndimage.label(fg, structure=_EIGHT)
    if count == 0:
        return BinaryMask(np.zeros_like(fg))
    areas = ndimage.sum_labels(np.ones_like(labels), labels, index=range(1, count + 1))
    cutoff = params.small_region_fraction * areas.max()
    keep = np.zeros(count + 1, dtype=bool)
    keep[1:] = areas >= cutoff
    return BinaryMask(keep[labels])


def recover_missed_seeds(
    foreground: BinaryMask,
    seeds: list[tuple[int, int]],
    h: Heatmap,
    params: PeakParams,
) -> list[tuple[int, int]]:
    """Add the highest-intensity pixel of each seedless foreground component
    (largest components first) until expected_count seeds exist."""
    seeds = list(seeds)
    if len(seeds) >= params.expected_count:
        return seeds
    labels, count = ndimage.label(foreground.pixels, structure=_EIGHT)
    seeded = {labels[y, x] for x, y in seeds if labels[y, x] != 0}
    candidates = []
    for comp in range(1, count + 1):
        if comp in seeded:
            continue
        member = labels == comp
        area = int(member.sum())
        masked = np.where(member, h.values, -np.inf)
        flat = int(np.argmax(masked))
        py, px = divmod(flat, foreground.width)
        candidates.append((area, comp, (px, py)))
    candidates.sort(key=lambda t: (-t[0], t[1]))
    for _, _, point in candidates:
        if len(seeds) >= params.expected_count:
            break
        seeds.append(point)
    return seeds


def watershed(
    h: Heatmap, seeds: list[tuple[int, int]], foreground: BinaryMask
) -> np.ndarray:
    """Priority flood from the seeds over elevation = -logit, restricted to
    the foreground. Returns an int label map: -1 background, otherwise the
    seed's index. Every foreground pixel reachable from a seed gets exactly
    one label; seed pixels keep their own label.

    Ties in elevation resolve by queue insertion order, so the result is
    reproducible bit for bit."""
    elevation = -h.values
    fg = foreground.pixels
    hh, ww = fg.shape
    labels = np.full((hh, ww), -1, dtype=np.int32)

    heap: list[tuple[float, int, int, int]] = []
    counter = 0
    for i, (x, y) in enumerate(seeds):
        if not (0 <= x < ww and 0 <= y < hh) or not fg[y, x]:
            raise ValueError(f"seed {i} at ({x}, {y}) lies outside the foreground")
        if labels[y, x] != -1:
            raise ValueError(f"seed {i} duplicates seed {labels[y, x]}")
        labels[y, x] = i
        heapq.heappush(heap, (float(elevation[y, x]), counter, x, y))
        counter += 1

    while heap:
        _, _, x, y = heapq.heappop(heap)
        label = labels[y, x]
        for dy, dx in _NEIGHBORS:
            nx, ny = x + dx, y + dy
            if 0 <= nx < ww and 0 <= ny < hh and fg[ny, nx] and labels[ny, nx] == -1:
                labels[ny, nx] = label
                heapq.heappush(heap, (float(elevation[ny, nx]), counter, nx, ny))
                counter += 1
    return labels


def _label_map_points(labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.nonzero(labels >= 0)
    return np.stack([xs, ys], axis=1).astype(float), labels[ys, xs]


def refine_kmeans(labels: np.ndarray, n_clusters: int) -> np.ndarray:
    """Re-cluster all labeled coordinates into n_clusters with Lloyd's
    algorithm, initialized by farthest-point seeding from the current label
    centroids. Returns a label map over the same foreground."""
    points, current = _label_map_points(labels)
    if len(points) == 0:
        raise ValueError("no foreground to cluster")
    if n_clusters > len(points):
        raise ValueError("more clusters than foreground pixels")
    centroids = np.stack(
        [points[current == c].mean(axis=0) for c in np.unique(current)]
    )
    result = kmeans(points, n_clusters, farthest_point_init(points, n_clusters, centroids))
    out = np.full_like(labels, -1)
    out[points[:, 1].astype(int), points[:, 0].astype(int)] = result.assignments
    return out


def refine_gmm(
    labels: np.ndarray, n_clusters: int, max_iters: int = 100, tol: float = 1e-4
) -> np.ndarray:
    """Like refine_kmeans, but fits a full-covariance Gaussian mixture by EM
    (initialized from the K-means result) and assigns each coordinate to its
    maximum-responsibility component."""
    points, current = _label_map_points(labels)
    if len(points) == 0:
        raise ValueError("no foreground to cluster")
    if n_clusters > len(points):
        raise ValueError("more clusters than foreground pixels")
    centroids = np.stack(
        [points[current == c].mean(axis=0) for c in np.unique(current)]
    )
    km = kmeans(points, n_clusters, farthest_point_init(points, n_clusters, centroids))
    result = gmm(points, n_clusters, max_iters=max_iters, tol=tol, init=km)
    out = np.full_like(labels, -1)
    out[points[:, 1].astype(int), points[:, 0].astype(int)] = result.assignments
    return out


def heatmap_to_instances(
    h: Heatmap, params: PeakParams, frame_index: int = 0
) -> list[InstanceMask]:
    """Full baseline: peaks -> foreground cleanup -> seed recovery ->
    watershed -> optional clustering refinement. Seedless leftover
    components (possible when components outnumber the expected count) are
    dropped, since no instance can claim them."""
    fg = clean_foreground(h, params)
    if fg.area == 0:
        return []
    seeds = [p for p in extract_peaks(h, params) if fg.pixels[p[1], p[0]]]
    seeds = recover_missed_seeds(fg, seeds, h, params)
    if not seeds:
        return []
    labels_fg, count = ndimage.label(fg.pixels, structure=_EIGHT)
    seeded_components = {labels_fg[y, x] for x, y in seeds}
    reachable = np.isin(labels_fg, sorted(seeded_components)) & fg.pixels
    labels = watershed(h, seeds, BinaryMask(reachable))

    if params.clustering == "kmeans":
        labels = refine_kmeans(labels, min(params.expected_count, int(reachable.sum())))
    elif params.clustering == "gmm":
        labels = refine_gmm(
            labels,
            min(params.expected_count, int(reachable.sum())),
            max_iters=params.em_max_iters,
            tol=params.em_tol,
        )

    out = []
    for i in range(int(labels.max()) + 1):
        member = labels == i
        if member.any():
            out.append(
                InstanceMask(
                    mask=BinaryMask(member),
                    instance_id=len(out),
                    frame_index=frame_index,
                    source=MaskSource.MODEL,
                )
            )
    return out


# --- Heatmap file format ---------------------------------------------------

def write_heatmap(h: Heatmap, path: str | Path) -> None:
    """Little-endian float32 row-major payload behind a small header:
    magic 'HMAP', uint32 width, uint32 height."""
    header = HEATMAP_MAGIC + struct.pack("<II", h.width, h.height)
    payload = h.values.astype("<f4").tobytes(order="C")
    Path(path).write_bytes(header + payload)


def read_heatmap(path: str | Path) -> Heatmap:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != HEATMAP_MAGIC:
        raise ValueError(f"{path} is not a heatmap file")
    width, height = struct.unpack("<II", raw[4:12])
    expected = 12 + 4 * width * height
    if len(raw) != expected:
        raise ValueError(
            f"heatmap payload is {len(raw) - 12} bytes, expected {4 * width * height}"
        )
    values = np.frombuffer(raw[12:], dtype="<f4").reshape(height, width)
    return Heatmap(values.astype(float))


def heatmap_from_image(path: str | Path) -> Heatmap:
    """PNG-as-intensity fallback: gray levels map linearly to logits in
    [-1, 1] with 127.5 at zero."""
    from PIL import Image

    arr = np.asarray(Image.open(path).convert("L")).astype(float)
    return Heatmap(arr / 127.5 - 1.0)
