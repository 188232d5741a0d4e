"""Flat `key = value` configuration with section-prefixed keys.

Every key has a typed default below; unknown keys are rejected so typos fail
loudly.  Lines starting with '#' (or blank) are ignored.  The helpers at the
bottom materialise the per-module config dataclasses from a parsed mapping.
"""

from __future__ import annotations

from pathlib import Path

from .augment import AnatPasteConfig, CutPasteScarConfig
from .classifier import Descriptor, TrainConfig
from .errors import ConfigError
from .phantom import PhantomConfig
from .segmentation import SegConfig

# key -> default; value types are inferred from the defaults.
DEFAULTS = {
    "seed": 0,
    "runs": 5,
    "mode": "anat",
    "paths.corpus": "",            # read an existing phantom corpus instead of generating
    "phantom.width": 256,
    "phantom.height": 256,
    "phantom.background_level": 0.05,
    "phantom.body_level": 0.75,
    "phantom.lung_level": 0.25,
    "phantom.rib_texture": True,
    "phantom.rib_amplitude": 0.05,
    "phantom.rib_period": 24.0,
    "phantom.noise_sigma": 0.02,
    "phantom.lesion_count_min": 1,
    "phantom.lesion_count_max": 3,
    "phantom.lesion_amplitude_min": 0.3,
    "phantom.lesion_amplitude_max": 0.5,
    "phantom.lesion_radius_min": 8.0,
    "phantom.lesion_radius_max": 20.0,
    "phantom.train_normals": 400,
    "phantom.val_normals": 100,
    "phantom.val_abnormals": 100,
    "phantom.test_normals": 100,
    "phantom.test_abnormals": 100,
    "phantom.write_images": False,
    "seg.clahe_tiles": 8,
    "seg.clahe_clip": 2.0,
    "seg.open_radius": 2,
    "seg.dilate_radius": 6,
    "seg.min_component_fraction": 0.02,
    "seg.connectivity": 8,
    "seg.polarity": "below",
    "aug.area_ratio_min": 0.02,
    "aug.area_ratio_max": 0.15,
    "aug.aspect_min": 0.3,
    "aug.aspect_max": 3.3,
    "aug.fill_min": 0.59,
    "aug.fill_max": 1.0,
    "aug.blur_radius_min": 0.0,
    "aug.blur_radius_max": 15.0,
    "aug.shapes": "ellipse,rectangle",
    "aug.max_placement_attempts": 100,
    "aug.max_crop_attempts": 10,
    "aug.n_per_image": 1,
    "scar.width_min": 2.0,
    "scar.width_max": 16.0,
    "scar.length_min": 10.0,
    "scar.length_max": 25.0,
    "scar.rotation_min": -45.0,
    "scar.rotation_max": 45.0,
    "train.batch_size": 64,
    "train.epochs": 64,
    "train.base_lr": 0.03,
    "train.momentum": 0.9,
    "train.weight_decay": 0.00003,
    "train.hidden": "128,64,32",
    "train.grid_size": 16,
    "train.histogram_bins": 32,
    "kde.bandwidth": 1.0,
    "kde.freeze_normalization": False,
    "eval.threshold": "",          # empty = choose the best-F1 threshold
}


def _coerce(key: str, raw: str, line: int):
    default = DEFAULTS[key]
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"line {line}: bad value for {key}: {exc}") from exc


def parse_config(path=None, overrides=None) -> dict:
    """Defaults merged with a config file and explicit overrides."""
    cfg = dict(DEFAULTS)
    if path is not None:
        text = Path(path).read_text()
        for line_no, line in enumerate(text.splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"line {line_no}: expected 'key = value', got {stripped!r}")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key not in DEFAULTS:
                raise ConfigError(f"line {line_no}: unknown key {key!r}")
            cfg[key] = _coerce(key, value, line_no)
    for key, value in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        cfg[key] = value
    return cfg


def write_config(path, cfg: dict) -> None:
    """Emit the configuration back as sorted `key = value` lines."""
    lines = [f"{key} = {cfg[key]}" for key in sorted(cfg)]
    Path(path).write_text("\n".join(lines) + "\n")


def seg_config(cfg: dict) -> SegConfig:
    return SegConfig(
        clahe_tiles=cfg["seg.clahe_tiles"],
        clahe_clip=cfg["seg.clahe_clip"],
        open_radius=cfg["seg.open_radius"],
        dilate_radius=cfg["seg.dilate_radius"],
        min_component_fraction=cfg["seg.min_component_fraction"],
        connectivity=cfg["seg.connectivity"],
        polarity=cfg["seg.polarity"],
    )


def aug_config(cfg: dict) -> AnatPasteConfig:
    shapes = tuple(s.strip() for s in cfg["aug.shapes"].split(",") if s.strip())
    return AnatPasteConfig(
        area_ratio=(cfg["aug.area_ratio_min"], cfg["aug.area_ratio_max"]),
        aspect=(cfg["aug.aspect_min"], cfg["aug.aspect_max"]),
        fill_range=(cfg["aug.fill_min"], cfg["aug.fill_max"]),
        blur_radius_range=(cfg["aug.blur_radius_min"], cfg["aug.blur_radius_max"]),
        shape_kinds=shapes,
        max_placement_attempts=cfg["aug.max_placement_attempts"],
        max_crop_attempts=cfg["aug.max_crop_attempts"],
    )


def scar_config(cfg: dict) -> CutPasteScarConfig:
    return CutPasteScarConfig(
        width_range=(cfg["scar.width_min"], cfg["scar.width_max"]),
        length_range=(cfg["scar.length_min"], cfg["scar.length_max"]),
        rotation_range=(cfg["scar.rotation_min"], cfg["scar.rotation_max"]),
    )


def train_config(cfg: dict, seed: int, mode: str) -> TrainConfig:
    hidden = tuple(int(v) for v in cfg["train.hidden"].split(","))
    return TrainConfig(
        batch_size=cfg["train.batch_size"],
        epochs=cfg["train.epochs"],
        base_lr=cfg["train.base_lr"],
        momentum=cfg["train.momentum"],
        weight_decay=cfg["train.weight_decay"],
        hidden=hidden,
        seed=seed,
        mode=mode,
    )


def descriptor(cfg: dict) -> Descriptor:
    return Descriptor(grid_size=cfg["train.grid_size"],
                      histogram_bins=cfg["train.histogram_bins"])


def phantom_config(cfg: dict, seed: int) -> PhantomConfig:
    return PhantomConfig(
        width=cfg["phantom.width"],
        height=cfg["phantom.height"],
        background_level=cfg["phantom.background_level"],
        body_level=cfg["phantom.body_level"],
        lung_level=cfg["phantom.lung_level"],
        rib_texture=cfg["phantom.rib_texture"],
        rib_amplitude=cfg["phantom.rib_amplitude"],
        rib_period=cfg["phantom.rib_period"],
        noise_sigma=cfg["phantom.noise_sigma"],
        lesion_count=(cfg["phantom.lesion_count_min"], cfg["phantom.lesion_count_max"]),
        lesion_amplitude=(cfg["phantom.lesion_amplitude_min"], cfg["phantom.lesion_amplitude_max"]),
        lesion_radius=(cfg["phantom.lesion_radius_min"], cfg["phantom.lesion_radius_max"]),
        seed=seed,
    )
