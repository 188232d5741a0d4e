"""Kernel-density anomaly scoring and ensemble averaging.

References are standardised per dimension (std floored at 1e-8) and density
is the mean Gaussian kernel response with K(0) = 1:

    A(z) = (1/N) * sum_i exp(-||(z - z_i)/h||^2 / 2)

The anomaly score is -log(A + 1e-300), min-max normalised to [0, 1] over a
chosen population (by default the scored query set itself), so higher means
more abnormal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .errors import (
    EmptyQuerySetError,
    EmptyReferenceSetError,
    InvalidArgumentError,
    InvalidDimensionsError,
    MisalignedEnsembleError,
)

DENSITY_EPS = 1e-300
STD_FLOOR = 1e-8


class KdeScorer(BaseEstimator):
    """Gaussian KDE over standardised reference features.

    fit(X) stores the references; density(X) evaluates A(z); score_samples(X)
    returns the raw anomaly score -log(A(z) + eps) (higher = more abnormal).
    """

    def __init__(self, bandwidth: float = 1.0):
        self.bandwidth = bandwidth

    def fit(self, X, y=None):
        if not self.bandwidth > 0:
            raise InvalidArgumentError("bandwidth must be > 0")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] == 0:
            raise EmptyReferenceSetError("reference set must be a non-empty (n, d) array")
        if not np.isfinite(X).all():
            raise InvalidArgumentError("reference features must be finite")
        self.mean_ = X.mean(axis=0)
        self.scale_ = np.maximum(X.std(axis=0), STD_FLOOR)
        self.references_ = (X - self.mean_) / self.scale_
        return self

    def _standardize(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = X[None, :] if single else X
        if X.shape[1] != self.references_.shape[1]:
            raise InvalidDimensionsError(
                f"query dim {X.shape[1]} != reference dim {self.references_.shape[1]}")
        return (X - self.mean_) / self.scale_, single

    def density(self, X):
        """Mean kernel response A(z) in (0, 1] per query."""
        Z, single = self._standardize(X)
        diff = (Z[:, None, :] - self.references_[None, :, :]) / self.bandwidth
        sq = np.sum(diff * diff, axis=2)
        dens = np.exp(-0.5 * sq).mean(axis=1)
        return float(dens[0]) if single else dens

    def score_samples(self, X):
        """Raw anomaly score: -log(density + eps); higher = more abnormal."""
        dens = np.atleast_1d(self.density(X))
        out = -np.log(dens + DENSITY_EPS)
        return float(out[0]) if np.ndim(X) == 1 else out


@dataclass
class ScoreSet:
    """Aligned (id, raw score, normalised score) triples.

    `normalization` records the (min, max) of the raw scores used for the
    [0, 1] rescaling; `labels` is optional (0 normal / 1 abnormal).
    """

    ids: list
    raw: np.ndarray
    score: np.ndarray
    normalization: tuple
    labels: np.ndarray | None = None


def anomaly_scores(model: KdeScorer, queries, ids=None, labels=None,
                   normalization: tuple | None = None) -> ScoreSet:
    """Score queries and min-max normalise to [0, 1].

    With `normalization` given (e.g. frozen from a validation set) the raw
    scores are rescaled by it and clipped into [0, 1]; otherwise the query
    population itself defines the range.  A degenerate range (max == min)
    maps every score to 0.
    """
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[0] == 0:
        raise EmptyQuerySetError("query set must be a non-empty (n, d) array")
    raw = model.score_samples(queries)
    if normalization is None:
        lo, hi = float(raw.min()), float(raw.max())
    else:
        lo, hi = float(normalization[0]), float(normalization[1])
    if hi > lo:
        score = np.clip((raw - lo) / (hi - lo), 0.0, 1.0)
    else:
        score = np.zeros_like(raw)
    if ids is None:
        ids = [str(i) for i in range(len(raw))]
    ids = [str(i) for i in ids]
    if len(ids) != len(raw):
        raise InvalidDimensionsError("ids and queries must align")
    lab = None if labels is None else np.asarray(labels, dtype=np.int64)
    return ScoreSet(ids=ids, raw=raw, score=score, normalization=(lo, hi), labels=lab)


def ensemble_average(score_sets) -> ScoreSet:
    """Per-id arithmetic mean of normalised scores across aligned score sets."""
    score_sets = list(score_sets)
    if not score_sets:
        raise MisalignedEnsembleError("ensemble requires at least one score set")
    base = score_sets[0]
    order = {sid: i for i, sid in enumerate(base.ids)}
    stacked = [base.score]
    for other in score_sets[1:]:
        if set(other.ids) != set(base.ids):
            raise MisalignedEnsembleError("score sets do not share the same ids")
        idx = [order[sid] for sid in other.ids]
        aligned = np.empty_like(other.score)
        aligned[idx] = other.score
        stacked.append(aligned)
        if other.labels is not None and base.labels is not None:
            relabeled = np.empty_like(other.labels)
            relabeled[idx] = other.labels
            if not np.array_equal(relabeled, base.labels):
                raise MisalignedEnsembleError("score sets disagree on labels")
    mean = np.mean(stacked, axis=0)
    return ScoreSet(ids=list(base.ids), raw=mean.copy(), score=mean,
                    normalization=(0.0, 1.0), labels=None if base.labels is None else base.labels.copy())
