"""Synthetic chest-radiograph-like phantoms with ground-truth masks.

A phantom is a dark background, a bright body ellipse, two dark lung
ellipses, optional sinusoidal rib bands over the lungs, and seeded additive
noise.  Abnormal samples add smooth bright bumps strictly inside the lung
fields.  The normal and abnormal variants of the same (seed, index) share
geometry and noise, so their pixel difference is confined to the lung mask.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GenerationFailedError, InvalidArgumentError
from .rng import substream


@dataclass(frozen=True)
class PhantomConfig:
    width: int = 256
    height: int = 256
    body_ax: tuple = (0.34, 0.40)       # body semi-axes, fraction of min(W,H)
    body_ay: tuple = (0.42, 0.47)
    lung_ax: tuple = (0.26, 0.34)       # lung semi-axes, fraction of body axes
    lung_ay: tuple = (0.48, 0.58)
    background_level: float = 0.05
    body_level: float = 0.75
    lung_level: float = 0.25
    rib_texture: bool = True
    rib_amplitude: float = 0.05
    rib_period: float = 24.0
    noise_sigma: float = 0.02
    lesion_count: tuple = (1, 3)
    lesion_amplitude: tuple = (0.3, 0.5)
    lesion_radius: tuple = (8.0, 20.0)
    seed: int = 0
    max_retries: int = 20

    def __post_init__(self):
        for level in (self.background_level, self.body_level, self.lung_level):
            if not 0.0 <= level <= 1.0:
                raise InvalidArgumentError("intensity levels must lie in [0, 1]")


@dataclass
class PhantomSample:
    image: np.ndarray
    gt_lung: np.ndarray
    gt_lesion: np.ndarray
    label: int
    seed: int
    index: int
    lungs: list = field(default_factory=list)     # (cx, cy, a, b) per lung
    lesions: list = field(default_factory=list)   # (cx, cy, radius, amplitude) per lesion


def _ellipse_mask(shape, cx, cy, a, b):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    return ((xx - cx) / a) ** 2 + ((yy - cy) / b) ** 2 <= 1.0


def _lung_inside_body(lung, body, margin):
    """Lung ellipse boundary must sit inside the body ellipse shrunk by margin."""
    lx, ly, la, lb = lung
    bx, by, ba, bb = body
    if ba <= margin or bb <= margin:
        return False
    t = np.linspace(0.0, 2.0 * math.pi, 64, endpoint=False)
    px = lx + la * np.cos(t)
    py = ly + lb * np.sin(t)
    return bool(np.all(((px - bx) / (ba - margin)) ** 2 + ((py - by) / (bb - margin)) ** 2 <= 1.0))


def generate(cfg: PhantomConfig, index: int, cls: str = "normal") -> PhantomSample:
    """Deterministic phantom for (cfg.seed, index, cls).

    Geometry and noise come from a sub-stream keyed by (seed, index); lesion
    parameters come from a separate sub-stream, so the abnormal sample is a
    twin of the normal one outside the lung fields.
    """
    if cls not in ("normal", "abnormal"):
        raise InvalidArgumentError(f"class must be 'normal' or 'abnormal', got {cls!r}")
    w, h = cfg.width, cfg.height
    scale = min(w, h)
    rng = substream(cfg.seed, index)

    body = lungs = None
    for _ in range(cfg.max_retries):
        bcx = w / 2.0 + rng.uniform(-0.015, 0.015) * scale
        bcy = h / 2.0 + rng.uniform(-0.01, 0.03) * scale
        bax = rng.uniform(*cfg.body_ax) * scale
        bay = rng.uniform(*cfg.body_ay) * scale
        candidate = []
        for side in (-1.0, 1.0):
            lcx = bcx + side * rng.uniform(0.44, 0.54) * bax
            lcy = bcy - rng.uniform(0.04, 0.12) * bay
            la = rng.uniform(*cfg.lung_ax) * bax
            lb = rng.uniform(*cfg.lung_ay) * bay
            candidate.append((lcx, lcy, la, lb))
        ok = all(_lung_inside_body(c, (bcx, bcy, bax, bay), margin=0.03 * scale)
                 for c in candidate)
        sep = candidate[1][0] - candidate[1][2] > candidate[0][0] + candidate[0][2] + 2.0
        if ok and sep:
            body, lungs = (bcx, bcy, bax, bay), candidate
            break
    if body is None:
        raise GenerationFailedError(f"phantom geometry infeasible for index {index}")

    img = np.full((h, w), cfg.background_level, dtype=np.float64)
    body_mask = _ellipse_mask((h, w), *body)
    img[body_mask] = cfg.body_level
    gt_lung = np.zeros((h, w), dtype=bool)
    for lung in lungs:
        gt_lung |= _ellipse_mask((h, w), *lung)
    img[gt_lung] = cfg.lung_level

    if cfg.rib_texture:
        phase = rng.uniform(0.0, cfg.rib_period)
        yy = np.arange(h, dtype=np.float64)[:, None]
        bands = 0.5 * (1.0 + np.sin(2.0 * math.pi * (yy + phase) / cfg.rib_period))
        img += cfg.rib_amplitude * bands * gt_lung

    noise = rng.normal(0.0, cfg.noise_sigma, size=(h, w))

    gt_lesion = np.zeros((h, w), dtype=bool)
    lesions = []
    if cls == "abnormal":
        lrng = substream(cfg.seed, index, 1)
        lung_flat = np.flatnonzero(gt_lung)
        n_lesions = int(lrng.integers(cfg.lesion_count[0], cfg.lesion_count[1] + 1))
        yy, xx = np.mgrid[0:h, 0:w]
        for _ in range(n_lesions):
            pix = int(lung_flat[lrng.integers(0, len(lung_flat))])
            cy, cx = divmod(pix, w)
            radius = float(lrng.uniform(*cfg.lesion_radius)) * scale / 256.0
            amp = float(lrng.uniform(*cfg.lesion_amplitude))
            sigma = radius / 2.0
            bump = amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2.0 * sigma * sigma))
            img += bump * gt_lung
            gt_lesion |= (bump >= amp / 2.0) & gt_lung
            lesions.append((float(cx), float(cy), radius, amp))

    img = np.clip(img + noise, 0.0, 1.0)
    return PhantomSample(
        image=img,
        gt_lung=gt_lung,
        gt_lesion=gt_lesion,
        label=1 if cls == "abnormal" else 0,
        seed=cfg.seed,
        index=index,
        lungs=[tuple(map(float, lung)) for lung in lungs],
        lesions=lesions,
    )


def generate_corpus(cfg: PhantomConfig, n_normal: int, n_abnormal: int,
                    start_index: int = 0, id_prefix: str = ""):
    """Indexed phantom set plus manifest rows.

    Samples get global indices start_index.. so disjoint splits can be drawn
    from one seed; manifest rows are (id, class, seed, index, lesions) with
    lesions packed as "cx:cy:radius:amplitude;..." strings.
    """
    if n_normal < 0 or n_abnormal < 0:
        raise InvalidArgumentError("sample counts must be >= 0")
    samples = []
    manifest = []
    idx = start_index
    for cls, count in (("normal", n_normal), ("abnormal", n_abnormal)):
        for k in range(count):
            sample = generate(cfg, idx, cls)
            sid = f"{id_prefix}{cls}_{k:04d}"
            samples.append((sid, sample))
            lesion_str = ";".join(
                f"{cx:.2f}:{cy:.2f}:{r:.3f}:{a:.4f}" for cx, cy, r, a in sample.lesions)
            manifest.append({"id": sid, "class": cls, "seed": cfg.seed,
                             "index": idx, "lesions": lesion_str})
            idx += 1
    return samples, manifest
