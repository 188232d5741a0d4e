"""Threshold-based lung-field segmentation.

Pipeline: CLAHE -> Otsu binarisation (dark pixels are foreground, since lung
fields are radiolucent) -> morphological opening -> border clearing (drops
the dark background, which always touches the frame edge) -> dilation ->
connected-component size filtering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import imgops
from .errors import DegenerateHistogramError, InvalidArgumentError
from .imgops import LabelMap, StructuringElement


@dataclass(frozen=True)
class SegConfig:
    """Tuning knobs for `segment_lungs`.

    Radii are calibrated for `scale_reference`-sized inputs and scale
    linearly with min(W, H).  `min_component_fraction` is the fraction of the
    frame area below which a component is discarded.
    """

    clahe_tiles: int = 8
    clahe_clip: float = 2.0
    open_radius: int = 2
    dilate_radius: int = 6
    min_component_fraction: float = 0.02
    connectivity: int = 8
    polarity: str = "below"
    scale_reference: int = 256

    def __post_init__(self):
        if not 0.0 < self.min_component_fraction < 1.0:
            raise InvalidArgumentError("min_component_fraction must lie in (0, 1)")
        if self.open_radius < 0 or self.dilate_radius < 0:
            raise InvalidArgumentError("radii must be >= 0")


@dataclass
class SegResult:
    mask: np.ndarray
    stages: dict | None = None
    components_kept: int = 0
    degenerate: bool = False


def filter_small_components(label_map: LabelMap, t: float) -> np.ndarray:
    """Keep only components whose pixel count is >= t."""
    if t < 0:
        raise InvalidArgumentError("size threshold must be >= 0")
    keep = np.flatnonzero(label_map.component_sizes >= t) + 1
    return np.isin(label_map.labels, keep)


def segment_lungs(img, cfg: SegConfig = SegConfig(), keep_stages: bool = False) -> SegResult:
    """Binary lung-field mask for a chest-radiograph-like image.

    A constant (single-bin) image yields an empty mask flagged degenerate so
    batch runs can skip it rather than abort.
    """
    img = imgops.check_image(img)
    h, w = img.shape
    scale = min(h, w) / cfg.scale_reference
    open_r = max(0, round(cfg.open_radius * scale))
    dilate_r = max(0, round(cfg.dilate_radius * scale))

    equalized = imgops.clahe(img, tiles=cfg.clahe_tiles, clip_limit=cfg.clahe_clip)
    try:
        threshold = imgops.otsu_threshold(equalized)
    except DegenerateHistogramError:
        empty = np.zeros((h, w), dtype=bool)
        stages = {"clahe": equalized} if keep_stages else None
        return SegResult(mask=empty, stages=stages, components_kept=0, degenerate=True)

    binarized = imgops.binarize(equalized, threshold, cfg.polarity)
    opened = imgops.morph_open(binarized, StructuringElement("disk", open_r))
    cleared = imgops.clear_border(opened, cfg.connectivity)
    dilated = imgops.morph_dilate(cleared, StructuringElement("disk", dilate_r))
    labels = imgops.connected_components(dilated, cfg.connectivity)
    t = cfg.min_component_fraction * h * w
    mask = filter_small_components(labels, t)
    kept = int(np.count_nonzero(labels.component_sizes >= t))

    stages = None
    if keep_stages:
        stages = {
            "clahe": equalized,
            "binarize": binarized,
            "open": opened,
            "clear": cleared,
            "dilate": dilated,
        }
    return SegResult(mask=mask, stages=stages, components_kept=kept, degenerate=False)


def dice(a, b) -> float:
    """Dice overlap 2|A∩B| / (|A|+|B|); 1.0 when both masks are empty."""
    a = imgops.check_mask(a)
    b = imgops.check_mask(b)
    denom = int(a.sum()) + int(b.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / denom


class LungSegmenter(BaseEstimator, TransformerMixin):
    """Stateless sklearn-style transformer mapping images to lung masks."""

    def __init__(self, clahe_tiles=8, clahe_clip=2.0, open_radius=2, dilate_radius=6,
                 min_component_fraction=0.02, connectivity=8, polarity="below",
                 scale_reference=256):
        self.clahe_tiles = clahe_tiles
        self.clahe_clip = clahe_clip
        self.open_radius = open_radius
        self.dilate_radius = dilate_radius
        self.min_component_fraction = min_component_fraction
        self.connectivity = connectivity
        self.polarity = polarity
        self.scale_reference = scale_reference

    def _config(self) -> SegConfig:
        return SegConfig(
            clahe_tiles=self.clahe_tiles,
            clahe_clip=self.clahe_clip,
            open_radius=self.open_radius,
            dilate_radius=self.dilate_radius,
            min_component_fraction=self.min_component_fraction,
            connectivity=self.connectivity,
            polarity=self.polarity,
            scale_reference=self.scale_reference,
        )

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        """Segment one image (2-D array) or a sequence of images."""
        cfg = self._config()
        if isinstance(X, np.ndarray) and X.ndim == 2:
            return segment_lungs(X, cfg).mask
        return [segment_lungs(img, cfg).mask for img in X]
