"""End-to-end anomaly detector with an sklearn estimator surface.

fit() takes normal images only: it segments lungs (when the augmentation
mode needs them), trains the pretext classifier, then fits a KDE over the
penultimate features of the training normals.  score_samples() returns raw
anomaly scores (higher = more abnormal); predict() additionally needs a
threshold calibrated on labeled validation data.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .augment import AnatPasteConfig, CutPasteScarConfig
from .classifier import Descriptor, TrainConfig, penultimate_features, train
from .metrics import LabeledScores, best_f1_threshold
from .scoring import KdeScorer, anomaly_scores
from .segmentation import SegConfig, segment_lungs


class AnatPasteDetector(BaseEstimator):
    """One-class detector trained with anatomy-constrained paste augmentation.

    Parameters mirror the stage configs; `mode` selects the augmentation
    ("anat", "anat-noseg", "anat-noblur", "cutpaste-scar").
    """

    def __init__(self, seg_config=None, aug_config=None, scar_config=None,
                 descriptor=None, epochs=64, batch_size=64, base_lr=0.03,
                 momentum=0.9, weight_decay=0.00003, hidden=(128, 64, 32),
                 bandwidth=1.0, mode="anat", random_state=0):
        self.seg_config = seg_config
        self.aug_config = aug_config
        self.scar_config = scar_config
        self.descriptor = descriptor
        self.epochs = epochs
        self.batch_size = batch_size
        self.base_lr = base_lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.hidden = hidden
        self.bandwidth = bandwidth
        self.mode = mode
        self.random_state = random_state

    def _needs_lungs(self) -> bool:
        return self.mode in ("anat", "anat-noblur")

    def fit(self, X, y=None, lung_masks=None):
        """Train on a sequence of normal images (y is ignored)."""
        X = list(X)
        seg_cfg = self.seg_config or SegConfig()
        desc = self.descriptor or Descriptor()
        if lung_masks is None and self._needs_lungs():
            lung_masks = [segment_lungs(img, seg_cfg).mask for img in X]
        train_cfg = TrainConfig(
            batch_size=self.batch_size, epochs=self.epochs, base_lr=self.base_lr,
            momentum=self.momentum, weight_decay=self.weight_decay,
            hidden=tuple(self.hidden), seed=self.random_state, mode=self.mode)
        self.model_, self.train_log_ = train(
            X, lung_masks, self.aug_config or AnatPasteConfig(), train_cfg,
            descriptor=desc, scar_cfg=self.scar_config or CutPasteScarConfig())
        self.descriptor_ = desc
        refs = penultimate_features(self.model_, X, desc)
        self.scorer_ = KdeScorer(bandwidth=self.bandwidth).fit(refs)
        self.threshold_ = None
        return self

    def _check_fitted(self):
        if not hasattr(self, "scorer_"):
            raise NotFittedError("detector is not fitted; call fit() first")

    def embed(self, X) -> np.ndarray:
        """Penultimate-layer features for a sequence of images."""
        self._check_fitted()
        return penultimate_features(self.model_, list(X), self.descriptor_)

    def score_samples(self, X) -> np.ndarray:
        """Raw anomaly scores (-log KDE density); higher = more abnormal."""
        self._check_fitted()
        return self.scorer_.score_samples(self.embed(X))

    def calibrate_threshold(self, X, y):
        """Pick the best-F1 threshold from labeled validation images."""
        self._check_fitted()
        score_set = anomaly_scores(self.scorer_, self.embed(X), labels=y)
        ls = LabeledScores(ids=score_set.ids, scores=score_set.score,
                           labels=np.asarray(y, dtype=np.int64))
        thr, _ = best_f1_threshold(ls)
        self.normalization_ = score_set.normalization
        self.threshold_ = thr
        return self

    def predict(self, X) -> np.ndarray:
        """1 for abnormal, 0 for normal, at the calibrated threshold."""
        self._check_fitted()
        if self.threshold_ is None:
            raise NotFittedError("no threshold; call calibrate_threshold() first")
        raw = self.score_samples(X)
        lo, hi = self.normalization_
        score = np.clip((raw - lo) / (hi - lo), 0.0, 1.0) if hi > lo else np.zeros_like(raw)
        return (score > self.threshold_).astype(np.int64)
