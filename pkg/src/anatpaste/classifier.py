"""Self-supervised binary classifier: original vs paste-augmented images.

A deterministic descriptor (grid-cell means + intensity histogram) feeds a
small fully-connected network with two output logits.  Each training batch of
B normal images contributes 2B cross-entropy terms: the originals labeled 0
and freshly augmented copies labeled 1.  Optimisation is SGD with momentum
and weight decay under a single-cycle cosine learning-rate schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import imgops
from .augment import AnatPasteConfig, CutPasteScarConfig, anat_paste_ablated, cut_paste_scar
from .errors import (
    EmptyDatasetError,
    InvalidArgumentError,
    InvalidDimensionsError,
    NoValidPlacementError,
    ParseError,
)
from .rng import substream

AUGMENT_MODES = ("anat", "anat-noseg", "anat-noblur", "cutpaste-scar")


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Descriptor:
    """Deterministic image descriptor: per-cell means + intensity histogram."""

    grid_size: int = 16
    histogram_bins: int = 32

    @property
    def dim(self) -> int:
        return self.grid_size * self.grid_size + self.histogram_bins


def extract_features(img, desc: Descriptor = Descriptor()) -> np.ndarray:
    """Concatenate grid-cell mean intensities and a normalised histogram."""
    img = imgops.check_image(img)
    h, w = img.shape
    g = desc.grid_size
    if h < g or w < g:
        raise InvalidDimensionsError(f"image {w}x{h} smaller than the {g}x{g} descriptor grid")
    if h % g == 0 and w % g == 0:
        cells = img.reshape(g, h // g, g, w // g).mean(axis=(1, 3)).ravel()
    else:
        ys = (np.arange(g + 1) * h) // g
        xs = (np.arange(g + 1) * w) // g
        cells = np.array([
            img[ys[i]:ys[i + 1], xs[j]:xs[j + 1]].mean()
            for i in range(g) for j in range(g)
        ])
    bins = imgops.intensity_bins(img, desc.histogram_bins)
    hist = np.bincount(bins.ravel(), minlength=desc.histogram_bins).astype(np.float64)
    return np.concatenate([cells, hist / img.size])


def extract_features_batch(imgs, desc: Descriptor = Descriptor()) -> np.ndarray:
    return np.stack([extract_features(img, desc) for img in imgs])


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

@dataclass
class MlpModel:
    """Fully-connected stack; rectifier on hidden layers, 2 output logits."""

    weights: list        # weights[i] has shape (fan_in, fan_out)
    biases: list

    @property
    def layer_sizes(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]


def init_model(layer_sizes, rng: np.random.Generator) -> MlpModel:
    """Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpModel(weights=weights, biases=biases)


def forward(model: MlpModel, x):
    """Logits and the penultimate activation (input to the output layer).

    Accepts a single vector or an (n, d) batch.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    act = x[None, :] if single else x
    if act.shape[1] != model.weights[0].shape[0]:
        raise InvalidDimensionsError(
            f"input dim {act.shape[1]} != model input dim {model.weights[0].shape[0]}")
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        act = np.maximum(act @ w + b, 0.0)
    logits = act @ model.weights[-1] + model.biases[-1]
    if single:
        return logits[0], act[0]
    return logits, act


def cross_entropy(logits, labels) -> float:
    """Mean -log softmax(logits)[label], via the log-sum-exp stabilisation."""
    logits = np.asarray(logits, dtype=np.float64)
    single = logits.ndim == 1
    lg = logits[None, :] if single else logits
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    m = lg.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(lg - m).sum(axis=1))
    losses = lse - lg[np.arange(len(lab)), lab]
    return float(losses.mean())


def _softmax(logits):
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


def backward(model: MlpModel, x, labels):
    """Mean loss and its exact gradients w.r.t. every weight and bias.

    Gradient shapes mirror the parameter shapes.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    acts = [x[None, :] if single else x]
    if acts[0].shape[1] != model.weights[0].shape[0]:
        raise InvalidDimensionsError("input dim does not match model")
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        acts.append(np.maximum(acts[-1] @ w + b, 0.0))
    logits = acts[-1] @ model.weights[-1] + model.biases[-1]
    lab = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n = len(lab)

    probs = _softmax(logits)
    loss = cross_entropy(logits, lab)
    delta = probs.copy()
    delta[np.arange(n), lab] -= 1.0
    delta /= n

    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    for layer in range(len(model.weights) - 1, -1, -1):
        grad_w[layer] = acts[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (acts[layer] > 0.0)
    return loss, (grad_w, grad_b)


# ---------------------------------------------------------------------------
# Optimiser and schedule
# ---------------------------------------------------------------------------

@dataclass
class OptimState:
    learning_rate: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 0.00003
    velocity_w: list = field(default_factory=list)
    velocity_b: list = field(default_factory=list)

    @classmethod
    def for_model(cls, model: MlpModel, learning_rate=0.03, momentum=0.9, weight_decay=0.00003):
        return cls(
            learning_rate=learning_rate,
            momentum=momentum,
            weight_decay=weight_decay,
            velocity_w=[np.zeros_like(w) for w in model.weights],
            velocity_b=[np.zeros_like(b) for b in model.biases],
        )


def sgd_step(model: MlpModel, grads, opt: OptimState) -> None:
    """In-place SGD update: v <- m*v + (g + wd*p); p <- p - lr*v."""
    grad_w, grad_b = grads
    if len(grad_w) != len(model.weights):
        raise InvalidDimensionsError("gradient count does not match parameter count")
    for p, g, v in zip(model.weights, grad_w, opt.velocity_w):
        if g.shape != p.shape:
            raise InvalidDimensionsError("gradient shape does not match parameter shape")
        v *= opt.momentum
        v += g + opt.weight_decay * p
        p -= opt.learning_rate * v
    for p, g, v in zip(model.biases, grad_b, opt.velocity_b):
        if g.shape != p.shape:
            raise InvalidDimensionsError("gradient shape does not match parameter shape")
        v *= opt.momentum
        v += g + opt.weight_decay * p
        p -= opt.learning_rate * v


def cosine_lr(step: int, total: int, base_lr: float) -> float:
    """Single-cycle cosine annealing: base_lr at step 0 down to 0 at `total`."""
    if total <= 0:
        raise InvalidArgumentError("total step count must be > 0")
    if not 0 <= step <= total:
        raise InvalidArgumentError("step must lie in [0, total]")
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * step / total))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    epochs: int = 64
    base_lr: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 0.00003
    hidden: tuple = (128, 64, 32)
    seed: int = 0
    mode: str = "anat"

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if self.mode not in AUGMENT_MODES:
            raise InvalidArgumentError(f"mode must be one of {AUGMENT_MODES}")


def _augment_one(img, lung, mode, aug_cfg, scar_cfg, rng):
    if mode == "anat":
        return anat_paste_ablated(img, lung, aug_cfg, rng, ablation=None)
    if mode == "anat-noseg":
        return anat_paste_ablated(img, lung, aug_cfg, rng, ablation="no_segmentation")
    if mode == "anat-noblur":
        return anat_paste_ablated(img, lung, aug_cfg, rng, ablation="no_blur")
    return cut_paste_scar(img, scar_cfg, rng)


def train(normals, lung_masks, aug_cfg: AnatPasteConfig, cfg: TrainConfig,
          descriptor: Descriptor = Descriptor(),
          scar_cfg: CutPasteScarConfig = CutPasteScarConfig()):
    """Train the pretext classifier on normal images.

    Every epoch reshuffles the images and draws fresh augmentations; a batch
    of B normals contributes B label-0 originals and B label-1 augmented
    copies.  Returns the final model and a per-epoch log of
    (epoch, lr, mean_loss) rows.
    """
    normals = list(normals)
    if not normals:
        raise EmptyDatasetError("training requires at least one normal image")
    if lung_masks is None:
        lung_masks = [None] * len(normals)

    feats = extract_features_batch(normals, descriptor)
    layer_sizes = [descriptor.dim, *cfg.hidden, 2]
    model = init_model(layer_sizes, substream(cfg.seed, 0))
    opt = OptimState.for_model(model, cfg.base_lr, cfg.momentum, cfg.weight_decay)
    rng = substream(cfg.seed, 1)

    n = len(normals)
    batches_per_epoch = -(-n // cfg.batch_size)
    total_steps = cfg.epochs * batches_per_epoch
    log = []
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_lr = cosine_lr(step, total_steps, cfg.base_lr)
        losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            aug_feats = []
            for i in idx:
                try:
                    outcome = _augment_one(normals[i], lung_masks[i], cfg.mode,
                                           aug_cfg, scar_cfg, rng)
                except NoValidPlacementError as exc:
                    raise NoValidPlacementError(f"image {i}: {exc}") from exc
                aug_feats.append(extract_features(outcome.anomaly_image, descriptor))
            x = np.concatenate([feats[idx], np.stack(aug_feats)])
            y = np.concatenate([np.zeros(len(idx), dtype=np.int64),
                                np.ones(len(idx), dtype=np.int64)])
            loss, grads = backward(model, x, y)
            opt.learning_rate = cosine_lr(step, total_steps, cfg.base_lr)
            sgd_step(model, grads, opt)
            losses.append(loss)
            step += 1
        log.append({"epoch": epoch, "lr": epoch_lr, "mean_loss": float(np.mean(losses))})
    return model, log


def penultimate_features(model: MlpModel, imgs, descriptor: Descriptor = Descriptor()) -> np.ndarray:
    """Last-hidden-layer activations for a batch of images."""
    feats = extract_features_batch(imgs, descriptor)
    _, penult = forward(model, feats)
    return penult


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_HEADER = "anatpaste-model v1"


def save_checkpoint(path, model: MlpModel, descriptor: Descriptor) -> None:
    """Versioned text checkpoint; float64 values stored as hex for exactness."""
    lines = [CHECKPOINT_HEADER,
             "layer_sizes " + " ".join(map(str, model.layer_sizes)),
             f"descriptor {descriptor.grid_size} {descriptor.histogram_bins}"]
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        lines.append(f"W{i} {w.shape[0]} {w.shape[1]}")
        for row in w:
            lines.append(" ".join(v.hex() for v in row))
        lines.append(f"b{i} {b.shape[0]}")
        lines.append(" ".join(v.hex() for v in b))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_HEADER:
        raise ParseError(f"{path} is not a model checkpoint")
    layer_sizes = [int(v) for v in lines[1].split()[1:]]
    g, hb = (int(v) for v in lines[2].split()[1:])
    descriptor = Descriptor(grid_size=g, histogram_bins=hb)
    weights, biases = [], []
    pos = 3
    for _ in range(len(layer_sizes) - 1):
        rows, cols = (int(v) for v in lines[pos].split()[1:])
        pos += 1
        w = np.array([[float.fromhex(v) for v in lines[pos + r].split()] for r in range(rows)])
        pos += rows
        nb = int(lines[pos].split()[1])
        pos += 1
        b = np.array([float.fromhex(v) for v in lines[pos].split()])
        pos += 1
        assert w.shape == (rows, cols) and b.shape == (nb,)
        weights.append(w)
        biases.append(b)
    return MlpModel(weights=weights, biases=biases), descriptor
