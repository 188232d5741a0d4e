"""Pixel-level primitives: CLAHE, Otsu, binary morphology, labeling, blur.

Images are 2-D float64 arrays with intensities in [0, 1]; masks are 2-D bool
arrays of the same shape.  Histogram-based operations quantise intensities
into 256 uniform bins over [0, 1] (8-bit radiograph convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import (
    DegenerateHistogramError,
    InvalidArgumentError,
    InvalidDimensionsError,
    InvalidPlacementError,
)

HIST_BINS = 256


def check_image(img) -> np.ndarray:
    """Validate and return a float64 grayscale image in [0, 1]."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidDimensionsError(f"expected a non-empty 2-D image, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidArgumentError("image contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise InvalidArgumentError("image intensities must lie in [0, 1]")
    return arr


def check_mask(mask) -> np.ndarray:
    """Validate and return a 2-D boolean mask."""
    arr = np.asarray(mask)
    if arr.ndim != 2 or arr.size == 0:
        raise InvalidDimensionsError(f"expected a non-empty 2-D mask, got shape {arr.shape}")
    return arr.astype(bool)


def intensity_bins(img: np.ndarray, bins: int = HIST_BINS) -> np.ndarray:
    """Map intensities in [0, 1] to integer bin indices 0..bins-1."""
    return np.minimum((np.asarray(img) * bins).astype(np.int64), bins - 1)


# ---------------------------------------------------------------------------
# CLAHE
# ---------------------------------------------------------------------------

def _tile_lut(tile: np.ndarray, clip_limit: float) -> np.ndarray:
    """256-entry monotone transfer function for one tile.

    Histogram is clipped at clip_limit multiples of the uniform bin height and
    the excess redistributed equally (single pass).  The mapping is the
    classic (cdf - cdf_min) / (1 - cdf_min) equalisation; a tile whose mass
    sits in one bin keeps its levels unchanged.
    """
    area = tile.size
    hist = np.bincount(intensity_bins(tile).ravel(), minlength=HIST_BINS).astype(np.float64)
    if math.isfinite(clip_limit):
        clip_height = clip_limit * area / HIST_BINS
        excess = np.clip(hist - clip_height, 0.0, None).sum()
        hist = np.minimum(hist, clip_height) + excess / HIST_BINS
    cdf = np.cumsum(hist) / area
    occupied = np.flatnonzero(hist)
    cdf_min = cdf[occupied[0]]
    if 1.0 - cdf_min <= 1e-12:
        return np.arange(HIST_BINS, dtype=np.float64) / (HIST_BINS - 1)
    return np.clip((cdf - cdf_min) / (1.0 - cdf_min), 0.0, 1.0)


def clahe_tile_luts(img: np.ndarray, tiles: int, clip_limit: float) -> np.ndarray:
    """Per-tile transfer functions, shape (tiles_y, tiles_x, 256).

    Exposed mainly so the monotonicity of individual tile mappings can be
    inspected; `clahe` is the user-facing operation.
    """
    img = check_image(img)
    if tiles < 1:
        raise InvalidArgumentError("tiles must be >= 1")
    if not clip_limit > 0:
        raise InvalidArgumentError("clip_limit must be > 0")
    h, w = img.shape
    ty = min(int(tiles), h)
    tx = min(int(tiles), w)
    th = -(-h // ty)
    tw = -(-w // tx)
    padded = np.pad(img, ((0, th * ty - h), (0, tw * tx - w)), mode="symmetric")
    luts = np.empty((ty, tx, HIST_BINS))
    for i in range(ty):
        for j in range(tx):
            luts[i, j] = _tile_lut(padded[i * th:(i + 1) * th, j * tw:(j + 1) * tw], clip_limit)
    return luts


def clahe(img, tiles: int = 8, clip_limit: float = 2.0) -> np.ndarray:
    """Contrast-limited adaptive histogram equalisation.

    The image is padded by reflection (bottom/right) to a tile multiple,
    per-tile clipped-histogram equalisation maps are built, and each pixel is
    remapped by bilinear interpolation between the four surrounding tile
    maps.  A constant image is returned unchanged.
    """
    img = check_image(img)
    if img.min() == img.max():
        return img.copy()
    luts = clahe_tile_luts(img, tiles, clip_limit)
    ty, tx = luts.shape[:2]
    h, w = img.shape
    th = -(-h // ty)
    tw = -(-w // tx)
    padded = np.pad(img, ((0, th * ty - h), (0, tw * tx - w)), mode="symmetric")
    bins = intensity_bins(padded)

    yc = (np.arange(padded.shape[0]) + 0.5) / th - 0.5
    xc = (np.arange(padded.shape[1]) + 0.5) / tw - 0.5
    iy0 = np.floor(yc).astype(np.int64)
    ix0 = np.floor(xc).astype(np.int64)
    fy = (yc - iy0)[:, None]
    fx = (xc - ix0)[None, :]
    iy1 = np.clip(iy0 + 1, 0, ty - 1)[:, None]
    iy0 = np.clip(iy0, 0, ty - 1)[:, None]
    ix1 = np.clip(ix0 + 1, 0, tx - 1)[None, :]
    ix0 = np.clip(ix0, 0, tx - 1)[None, :]

    out = (
        (1 - fy) * (1 - fx) * luts[iy0, ix0, bins]
        + (1 - fy) * fx * luts[iy0, ix1, bins]
        + fy * (1 - fx) * luts[iy1, ix0, bins]
        + fy * fx * luts[iy1, ix1, bins]
    )
    return np.clip(out[:h, :w], 0.0, 1.0)


# ---------------------------------------------------------------------------
# Thresholding
# ---------------------------------------------------------------------------

def otsu_threshold(img) -> int:
    """Bin index in 0..255 maximising between-class variance.

    Ties break toward the lowest bin.  Raises DegenerateHistogramError when
    all pixels share one bin (no split exists).
    """
    img = check_image(img)
    hist = np.bincount(intensity_bins(img).ravel(), minlength=HIST_BINS).astype(np.float64)
    if np.count_nonzero(hist) <= 1:
        raise DegenerateHistogramError("all pixels fall into a single histogram bin")
    p = hist / hist.sum()
    levels = np.arange(HIST_BINS, dtype=np.float64)
    omega = np.cumsum(p)
    m = np.cumsum(p * levels)
    mu_total = m[-1]
    sigma_b = np.zeros(HIST_BINS)
    valid = (omega > 0.0) & (omega < 1.0)
    sigma_b[valid] = (mu_total * omega[valid] - m[valid]) ** 2 / (omega[valid] * (1.0 - omega[valid]))
    return int(np.argmax(sigma_b))


def binarize(img, threshold: int, polarity: str = "below") -> np.ndarray:
    """Threshold an image on bin indices.

    polarity="below" marks bin(intensity) <= threshold as foreground,
    "above" marks bin(intensity) > threshold.
    """
    img = check_image(img)
    if not 0 <= int(threshold) < HIST_BINS:
        raise InvalidArgumentError(f"threshold must be in 0..{HIST_BINS - 1}")
    bins = intensity_bins(img)
    if polarity == "below":
        return bins <= int(threshold)
    if polarity == "above":
        return bins > int(threshold)
    raise InvalidArgumentError(f"unknown polarity {polarity!r}")


# ---------------------------------------------------------------------------
# Morphology and labeling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StructuringElement:
    """Flat structuring element; radius 0 is the identity element."""

    shape: str = "disk"
    radius: int = 1

    def __post_init__(self):
        if self.shape not in ("disk", "square"):
            raise InvalidArgumentError(f"unknown structuring element shape {self.shape!r}")
        if self.radius < 0:
            raise InvalidArgumentError("radius must be >= 0")

    def footprint(self) -> np.ndarray:
        r = self.radius
        if self.shape == "square":
            return np.ones((2 * r + 1, 2 * r + 1), dtype=bool)
        yy, xx = np.ogrid[-r:r + 1, -r:r + 1]
        return yy * yy + xx * xx <= r * r


def morph_open(mask, se: StructuringElement) -> np.ndarray:
    """Morphological opening (erosion then dilation with the same element)."""
    mask = check_mask(mask)
    if se.radius == 0:
        return mask.copy()
    fp = se.footprint()
    eroded = ndimage.binary_erosion(mask, structure=fp, border_value=0)
    return ndimage.binary_dilation(eroded, structure=fp, border_value=0)


def morph_dilate(mask, se: StructuringElement) -> np.ndarray:
    """Morphological dilation (Minkowski growth, clipped to the frame)."""
    mask = check_mask(mask)
    if se.radius == 0:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=se.footprint(), border_value=0)


def _connectivity_structure(connectivity: int) -> np.ndarray:
    if connectivity == 4:
        return ndimage.generate_binary_structure(2, 1)
    if connectivity == 8:
        return ndimage.generate_binary_structure(2, 2)
    raise InvalidArgumentError("connectivity must be 4 or 8")


@dataclass
class LabelMap:
    """Connected-component labels (0 = background) plus per-label pixel counts."""

    labels: np.ndarray
    component_sizes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    @property
    def n_components(self) -> int:
        return len(self.component_sizes)


def connected_components(mask, connectivity: int = 8) -> LabelMap:
    """Label maximal connected foreground components 1..K."""
    mask = check_mask(mask)
    labels, k = ndimage.label(mask, structure=_connectivity_structure(connectivity))
    sizes = np.bincount(labels.ravel(), minlength=k + 1)[1:]
    return LabelMap(labels=labels, component_sizes=sizes.astype(np.int64))


def clear_border(mask, connectivity: int = 8) -> np.ndarray:
    """Remove every connected component containing a border pixel."""
    mask = check_mask(mask)
    lm = connected_components(mask, connectivity)
    border = np.concatenate([
        lm.labels[0, :], lm.labels[-1, :], lm.labels[:, 0], lm.labels[:, -1],
    ])
    border_labels = np.unique(border[border > 0])
    if border_labels.size == 0:
        return mask.copy()
    return mask & ~np.isin(lm.labels, border_labels)


# ---------------------------------------------------------------------------
# Blur and rasterisation
# ---------------------------------------------------------------------------

def gaussian_kernel_1d(radius: float) -> np.ndarray:
    """Separable blur kernel: sigma = radius/3, half-width ceil(radius), sum 1."""
    if radius < 0 or not math.isfinite(radius):
        raise InvalidArgumentError("blur radius must be finite and >= 0")
    half = math.ceil(radius)
    sigma = radius / 3.0
    x = np.arange(-half, half + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def gaussian_blur(img, radius: float) -> np.ndarray:
    """Separable Gaussian blur with reflect border handling.

    radius 0 returns the input bit-identically.
    """
    img = check_image(img)
    if radius < 0:
        raise InvalidArgumentError("blur radius must be >= 0")
    if radius == 0:
        return img.copy()
    k = gaussian_kernel_1d(radius)
    out = ndimage.correlate1d(img, k, axis=0, mode="reflect")
    out = ndimage.correlate1d(out, k, axis=1, mode="reflect")
    return np.clip(out, 0.0, 1.0)


def rasterize_shape(kind: str, center, half_axes, fill: float, dims) -> np.ndarray:
    """Draw a filled ellipse or axis-aligned rectangle on a zero image.

    dims is (width, height); center is (x, y) and half_axes (a, b) in pixel
    coordinates.  The shape bounding box must lie inside the frame.
    """
    w, h = int(dims[0]), int(dims[1])
    x, y = float(center[0]), float(center[1])
    a, b = float(half_axes[0]), float(half_axes[1])
    if a < 1 or b < 1:
        raise InvalidArgumentError("half axes must be >= 1 pixel")
    if not 0.0 <= fill <= 1.0:
        raise InvalidArgumentError("fill must lie in [0, 1]")
    if x - a < 0 or x + a > w - 1 or y - b < 0 or y + b > h - 1:
        raise InvalidPlacementError("shape bounding box extends outside the frame")
    out = np.zeros((h, w), dtype=np.float64)
    win, support = shape_support(kind, (x, y), (a, b))
    out[win][support] = fill
    return out


def shape_support(kind: str, center, half_axes):
    """Bounding-box window slices and boolean support of a shape.

    Returns (window, support) where window indexes the enclosing frame and
    support is the shape's pixel set inside that window.
    """
    x, y = float(center[0]), float(center[1])
    a, b = float(half_axes[0]), float(half_axes[1])
    x0, x1 = math.floor(x - a), math.ceil(x + a)
    y0, y1 = math.floor(y - b), math.ceil(y + b)
    win = (slice(y0, y1 + 1), slice(x0, x1 + 1))
    py = np.arange(y0, y1 + 1, dtype=np.float64)[:, None]
    px = np.arange(x0, x1 + 1, dtype=np.float64)[None, :]
    if kind == "ellipse":
        support = ((px - x) / a) ** 2 + ((py - y) / b) ** 2 <= 1.0
    elif kind == "rectangle":
        support = (np.abs(px - x) <= a) & (np.abs(py - y) <= b)
    else:
        raise InvalidArgumentError(f"unknown shape kind {kind!r}")
    return win, support
