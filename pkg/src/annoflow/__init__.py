"""annoflow: human-in-the-loop video annotation with quality assessment.

Core pieces: mask/box geometry, density-based mask cleanup, spatio-temporal
consistency validation, the annotation session engine with journal replay,
pluggable segmentation backends, a watershed baseline for logit heatmaps,
and a tracker/IDF1 harness for scoring exported labels.
"""

from .geometry import (
    BBox,
    BinaryMask,
    InstanceMask,
    MaskSource,
    bbox_iou,
    inflate_bbox,
    mask_area,
    mask_iou,
    mask_to_bbox,
    rle_decode,
    rle_encode,
)
from .density import DensityParams, dilate, kde_density, remove_outliers
from .consistency import (
    Association,
    ConsistencyParams,
    FrameContext,
    SizeAnchor,
    Verdict,
    VerdictOutcome,
    associate,
    check_overlap,
    check_size,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "BinaryMask",
    "InstanceMask",
    "MaskSource",
    "bbox_iou",
    "inflate_bbox",
    "mask_area",
    "mask_iou",
    "mask_to_bbox",
    "rle_decode",
    "rle_encode",
    "DensityParams",
    "dilate",
    "kde_density",
    "remove_outliers",
    "Association",
    "ConsistencyParams",
    "FrameContext",
    "SizeAnchor",
    "Verdict",
    "VerdictOutcome",
    "associate",
    "check_overlap",
    "check_size",
    "validate",
]
