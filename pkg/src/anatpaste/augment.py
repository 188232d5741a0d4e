"""Paste-style anomaly synthesis.

`anat_paste` crops a patch from a normal image, re-pastes it elsewhere, and
blends it in through a soft mask: a randomly drawn ellipse/rectangle whose
edge is Gaussian-blurred, multiplied by the lung mask so the synthetic
anomaly can only appear inside lung fields.  `cut_paste_scar` is the
unconstrained thin-rectangle baseline.  All sampling is driven by an explicit
numpy Generator, so equal seeds give bit-identical outcomes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import imgops
from .errors import (
    InvalidArgumentError,
    InvalidDimensionsError,
    InvalidPlacementError,
    NoLungRegionError,
    NoValidPlacementError,
)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned pixel rectangle: origin (x, y), size (w, h)."""

    x: int
    y: int
    w: int
    h: int

    def slices(self):
        return slice(self.y, self.y + self.h), slice(self.x, self.x + self.w)


@dataclass(frozen=True)
class AnatPasteConfig:
    area_ratio: tuple = (0.02, 0.15)
    aspect: tuple = (0.3, 3.3)          # height/width, sampled log-uniformly
    fill_range: tuple = (0.59, 1.0)
    blur_radius_range: tuple = (0.0, 15.0)
    shape_kinds: tuple = ("ellipse", "rectangle")
    max_placement_attempts: int = 100
    max_crop_attempts: int = 10

    def __post_init__(self):
        if not (0.0 <= self.fill_range[0] <= self.fill_range[1] <= 1.0):
            raise InvalidArgumentError("fill_range must be an increasing range within [0, 1]")
        if self.blur_radius_range[0] < 0 or self.blur_radius_range[0] > self.blur_radius_range[1]:
            raise InvalidArgumentError("blur_radius_range must be an increasing range within [0, inf)")
        if self.area_ratio[0] <= 0 or self.aspect[0] <= 0:
            raise InvalidArgumentError("area and aspect ratios must be positive")


@dataclass(frozen=True)
class CutPasteScarConfig:
    width_range: tuple = (2.0, 16.0)
    length_range: tuple = (10.0, 25.0)
    rotation_range: tuple = (-45.0, 45.0)
    max_attempts: int = 100


@dataclass
class AugmentOutcome:
    """Augmented image plus the exact parameters that produced it."""

    anomaly_image: np.ndarray
    soft_mask: np.ndarray
    patch_src_rect: Rect
    patch_dst_rect: Rect
    shape_kind: str
    shape_center: tuple
    shape_half_axes: tuple
    fill_value: float
    blur_radius: float
    rotation_deg: float | None = None


def crop_to_frame_patch(img, src_rect: Rect, dst_pos) -> np.ndarray:
    """Full-size image that is zero except for the translated crop window."""
    img = imgops.check_image(img)
    h, w = img.shape
    dx, dy = int(dst_pos[0]), int(dst_pos[1])
    dst_rect = Rect(dx, dy, src_rect.w, src_rect.h)
    for r in (src_rect, dst_rect):
        if r.x < 0 or r.y < 0 or r.w < 1 or r.h < 1 or r.x + r.w > w or r.y + r.h > h:
            raise InvalidPlacementError(f"rectangle {r} does not fit a {w}x{h} frame")
    out = np.zeros_like(img)
    out[dst_rect.slices()] = img[src_rect.slices()]
    return out


def _blur_window(center, half_axes, blur_radius, frame_shape):
    """Frame slices outside which a blurred shape is exactly zero."""
    h, w = frame_shape
    pad = 2 * math.ceil(blur_radius) + 1 if blur_radius > 0 else 0
    x, y = float(center[0]), float(center[1])
    a, b = float(half_axes[0]), float(half_axes[1])
    y0 = max(0, math.floor(y - b) - pad)
    y1 = min(h - 1, math.ceil(y + b) + pad)
    x0 = max(0, math.floor(x - a) - pad)
    x1 = min(w - 1, math.ceil(x + a) + pad)
    return slice(y0, y1 + 1), slice(x0, x1 + 1)


def make_blur_shape(kind, center, half_axes, fill, blur_radius, dims) -> np.ndarray:
    """Rasterise a shape at the given fill, then Gaussian-blur its edge.

    Equivalent to ``gaussian_blur(rasterize_shape(...), blur_radius)`` but
    only the neighbourhood of the shape is convolved; far from the shape both
    input and output are exactly zero.
    """
    shape_img = imgops.rasterize_shape(kind, center, half_axes, fill, dims)
    if blur_radius == 0:
        return shape_img
    if blur_radius < 0:
        raise InvalidArgumentError("blur radius must be >= 0")
    window = _blur_window(center, half_axes, blur_radius, shape_img.shape)
    out = np.zeros_like(shape_img)
    out[window] = imgops.gaussian_blur(shape_img[window], blur_radius)
    return out


def compose(x_normal, x_patch, x_mask) -> np.ndarray:
    """Blend: normal * (1 - mask) + patch * mask, clamped to [0, 1]."""
    x_normal = imgops.check_image(x_normal)
    x_patch = np.asarray(x_patch, dtype=np.float64)
    x_mask = np.asarray(x_mask, dtype=np.float64)
    if x_patch.shape != x_normal.shape or x_mask.shape != x_normal.shape:
        raise InvalidDimensionsError("image, patch and mask must share dimensions")
    if x_mask.min() < 0.0 or x_mask.max() > 1.0:
        raise InvalidArgumentError("mask values must lie in [0, 1]")
    return np.clip(x_normal * (1.0 - x_mask) + x_patch * x_mask, 0.0, 1.0)


def _paste(img, lung, cfg, rng, use_lung_mask, lung_constraint, force_zero_blur):
    img = imgops.check_image(img)
    h, w = img.shape
    if use_lung_mask or lung_constraint:
        lung = imgops.check_mask(lung)
        if lung.shape != img.shape:
            raise InvalidDimensionsError("lung mask must match the image dimensions")
        if not lung.any():
            raise NoLungRegionError("lung mask is empty")

    chosen = None
    for _ in range(cfg.max_crop_attempts):
        ratio = rng.uniform(cfg.area_ratio[0], cfg.area_ratio[1])
        aspect = math.exp(rng.uniform(math.log(cfg.aspect[0]), math.log(cfg.aspect[1])))
        ph = int(np.clip(round(math.sqrt(h * w * ratio * aspect)), 1, h))
        pw = int(np.clip(round(math.sqrt(h * w * ratio / aspect)), 1, w))
        src_x = int(rng.integers(0, w - pw + 1))
        src_y = int(rng.integers(0, h - ph + 1))
        if pw < 5 or ph < 5:
            continue  # too small to host a shape strictly inside
        for _ in range(cfg.max_placement_attempts):
            dst_x = int(rng.integers(0, w - pw + 1))
            dst_y = int(rng.integers(0, h - ph + 1))
            kind = cfg.shape_kinds[int(rng.integers(0, len(cfg.shape_kinds)))]
            max_a = (pw - 3) / 2.0
            max_b = (ph - 3) / 2.0
            a = float(rng.uniform(1.0, max_a))
            b = float(rng.uniform(1.0, max_b))
            cx = float(rng.uniform(dst_x + 1 + a, dst_x + pw - 2 - a))
            cy = float(rng.uniform(dst_y + 1 + b, dst_y + ph - 2 - b))
            win, support = imgops.shape_support(kind, (cx, cy), (a, b))
            if lung_constraint and not lung[win][support].any():
                continue
            chosen = (Rect(src_x, src_y, pw, ph), Rect(dst_x, dst_y, pw, ph),
                      kind, (cx, cy), (a, b))
            break
        if chosen is not None:
            break
    if chosen is None:
        raise NoValidPlacementError(
            f"no placement found in {cfg.max_crop_attempts}x{cfg.max_placement_attempts} attempts")

    src_rect, dst_rect, kind, center, half_axes = chosen
    fill = float(rng.uniform(cfg.fill_range[0], cfg.fill_range[1]))
    blur_radius = float(rng.uniform(cfg.blur_radius_range[0], cfg.blur_radius_range[1]))
    if force_zero_blur:
        blur_radius = 0.0

    x_blur = make_blur_shape(kind, center, half_axes, fill, blur_radius, (w, h))
    x_mask = x_blur * lung if use_lung_mask else x_blur
    x_patch = crop_to_frame_patch(img, src_rect, (dst_rect.x, dst_rect.y))
    return AugmentOutcome(
        anomaly_image=compose(img, x_patch, x_mask),
        soft_mask=x_mask,
        patch_src_rect=src_rect,
        patch_dst_rect=dst_rect,
        shape_kind=kind,
        shape_center=center,
        shape_half_axes=half_axes,
        fill_value=fill,
        blur_radius=blur_radius,
    )


def anat_paste(img, lung, cfg: AnatPasteConfig = AnatPasteConfig(),
               rng: np.random.Generator | None = None) -> AugmentOutcome:
    """Lung-constrained paste augmentation.

    The drawn shape must intersect the lung mask (rejection-sampled) and its
    bounding box must sit strictly inside the pasted patch rectangle; the
    final soft mask is the blurred shape multiplied by the lung mask, so its
    support is contained in the lung fields.
    """
    rng = np.random.default_rng() if rng is None else rng
    return _paste(img, lung, cfg, rng, use_lung_mask=True, lung_constraint=True,
                  force_zero_blur=False)


def anat_paste_ablated(img, lung, cfg: AnatPasteConfig = AnatPasteConfig(),
                       rng: np.random.Generator | None = None,
                       ablation: str | None = None) -> AugmentOutcome:
    """`anat_paste` with one component removed.

    ablation="no_segmentation" drops the lung multiplication and the lung
    intersection requirement; "no_blur" forces a hard-edged shape (the radius
    is still sampled, keeping the random stream aligned with the full
    method).  ablation=None reproduces `anat_paste` exactly.
    """
    rng = np.random.default_rng() if rng is None else rng
    if ablation is None:
        return _paste(img, lung, cfg, rng, True, True, False)
    if ablation == "no_segmentation":
        return _paste(img, lung, cfg, rng, False, False, False)
    if ablation == "no_blur":
        return _paste(img, lung, cfg, rng, True, True, True)
    raise InvalidArgumentError(f"unknown ablation {ablation!r}")


def cut_paste_scar(img, cfg: CutPasteScarConfig = CutPasteScarConfig(),
                   rng: np.random.Generator | None = None) -> AugmentOutcome:
    """Thin-rectangle baseline: cut, rotate (nearest neighbour), hard paste.

    No lung constraint and no blending; the returned mask is binary.
    """
    img = imgops.check_image(img)
    rng = np.random.default_rng() if rng is None else rng
    h, w = img.shape

    placed = None
    for _ in range(cfg.max_attempts):
        scar_w = float(rng.uniform(cfg.width_range[0], cfg.width_range[1]))
        scar_l = float(rng.uniform(cfg.length_range[0], cfg.length_range[1]))
        theta = float(rng.uniform(cfg.rotation_range[0], cfg.rotation_range[1]))
        rad = math.radians(theta)
        hx, hy = scar_l / 2.0, scar_w / 2.0
        rx = hx * abs(math.cos(rad)) + hy * abs(math.sin(rad))
        ry = hx * abs(math.sin(rad)) + hy * abs(math.cos(rad))
        sx_lo, sx_hi = math.ceil(hx), w - 1 - math.ceil(hx)
        sy_lo, sy_hi = math.ceil(hy), h - 1 - math.ceil(hy)
        dx_lo, dx_hi = math.ceil(rx), w - 1 - math.ceil(rx)
        dy_lo, dy_hi = math.ceil(ry), h - 1 - math.ceil(ry)
        if sx_lo > sx_hi or sy_lo > sy_hi or dx_lo > dx_hi or dy_lo > dy_hi:
            continue
        src_cx = int(rng.integers(sx_lo, sx_hi + 1))
        src_cy = int(rng.integers(sy_lo, sy_hi + 1))
        dst_cx = int(rng.integers(dx_lo, dx_hi + 1))
        dst_cy = int(rng.integers(dy_lo, dy_hi + 1))
        placed = (hx, hy, rad, theta, src_cx, src_cy, dst_cx, dst_cy)
        break
    if placed is None:
        raise NoValidPlacementError(f"no scar placement found in {cfg.max_attempts} attempts")

    hx, hy, rad, theta, src_cx, src_cy, dst_cx, dst_cy = placed
    rx = hx * abs(math.cos(rad)) + hy * abs(math.sin(rad))
    ry = hx * abs(math.sin(rad)) + hy * abs(math.cos(rad))
    y0, y1 = math.floor(dst_cy - ry), math.ceil(dst_cy + ry)
    x0, x1 = math.floor(dst_cx - rx), math.ceil(dst_cx + rx)
    py, px = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    u = math.cos(rad) * (px - dst_cx) + math.sin(rad) * (py - dst_cy)
    v = -math.sin(rad) * (px - dst_cx) + math.cos(rad) * (py - dst_cy)
    support = (np.abs(u) <= hx) & (np.abs(v) <= hy)

    sx = np.clip(np.rint(src_cx + u).astype(np.int64), math.ceil(src_cx - hx), math.floor(src_cx + hx))
    sy = np.clip(np.rint(src_cy + v).astype(np.int64), math.ceil(src_cy - hy), math.floor(src_cy + hy))
    window = (slice(y0, y1 + 1), slice(x0, x1 + 1))
    out = img.copy()
    out[window][support] = img[sy[support], sx[support]]
    mask = np.zeros_like(img)
    mask[window][support] = 1.0

    src_rect = Rect(math.ceil(src_cx - hx), math.ceil(src_cy - hy),
                    math.floor(src_cx + hx) - math.ceil(src_cx - hx) + 1,
                    math.floor(src_cy + hy) - math.ceil(src_cy - hy) + 1)
    dst_rect = Rect(x0, y0, x1 - x0 + 1, y1 - y0 + 1)
    return AugmentOutcome(
        anomaly_image=out,
        soft_mask=mask,
        patch_src_rect=src_rect,
        patch_dst_rect=dst_rect,
        shape_kind="scar",
        shape_center=(float(dst_cx), float(dst_cy)),
        shape_half_axes=(hx, hy),
        fill_value=1.0,
        blur_radius=0.0,
        rotation_deg=theta,
    )
