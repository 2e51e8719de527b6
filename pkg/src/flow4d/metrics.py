"""Tracking metrics: scale alignment, average point distance, endpoint error.

Predictions live at an arbitrary global scale, so evaluation first
aligns them to ground truth by the ratio of median point norms over the
mutually valid samples of the whole sequence.  Accuracy is then the
percentage of samples within a distance threshold (strictly below),
averaged over a threshold sweep, plus the mean endpoint error, both
restricted to the first ``max_frames`` frames.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .exceptions import ConfigInvalid, DegenerateSet, EmptyIntersection, ShapeMismatch


@dataclass(frozen=True)
class MetricConfig:
    thresholds: tuple = (0.1, 0.3, 0.5, 1.0)
    max_frames: int = 64

    def __post_init__(self):
        if not self.thresholds or any(t <= 0 for t in self.thresholds):
            raise ConfigInvalid(f"bad thresholds {self.thresholds}")
        if self.max_frames < 1:
            raise ConfigInvalid(f"max_frames must be positive, got {self.max_frames}")
        object.__setattr__(self, "thresholds", tuple(float(t) for t in self.thresholds))


def _as_tracks(arr, name):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 4:
        arr = arr.reshape(arr.shape[0], -1, 3)
    if arr.ndim != 3 or arr.shape[-1] != 3:
        raise ShapeMismatch(
            f"{name}: expected (frames, points, 3) or (frames, H, W, 3), "
            f"got {arr.shape}"
        )
    return arr


def _as_valid(mask, tracks, name):
    if mask is None:
        return np.ones(tracks.shape[:2], dtype=bool)
    mask = np.asarray(mask, dtype=bool).reshape(tracks.shape[0], -1)
    if mask.shape != tracks.shape[:2]:
        raise ShapeMismatch(f"{name}: mask shape {mask.shape} vs {tracks.shape[:2]}")
    return mask


def median_align(pred, gt, pred_valid=None, gt_valid=None):
    """Scale factor aligning predicted tracks to GT by median point norm.

    Uses every mutually valid sample of the whole sequence; returns
    median(||gt||) / median(||pred||).
    """
    pred = _as_tracks(pred, "pred")
    gt = _as_tracks(gt, "gt")
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    both = _as_valid(pred_valid, pred, "pred_valid") & _as_valid(gt_valid, gt, "gt_valid")
    if not both.any():
        raise EmptyIntersection("no mutually valid samples for scale alignment")
    denom = float(np.median(np.linalg.norm(pred[both], axis=-1)))
    if denom <= 0:
        raise DegenerateSet("median predicted norm is zero; cannot align scale")
    return float(np.median(np.linalg.norm(gt[both], axis=-1))) / denom


class MedianAligner(BaseEstimator):
    """Estimator form of the median-norm scale alignment.

    ``fit(X, y)`` with predicted and GT tracks learns ``scale_``;
    ``transform(X)`` applies it.
    """

    def __init__(self):
        pass

    def fit(self, X, y, pred_valid=None, gt_valid=None):
        self.scale_ = median_align(X, y, pred_valid, gt_valid)
        return self

    def transform(self, X):
        return np.asarray(X, dtype=np.float64) * self.scale_

    def fit_transform(self, X, y, **kw):
        return self.fit(X, y, **kw).transform(X)


def _window(arrs, max_frames):
    return [a[:max_frames] for a in arrs]


def apd3d(pred, gt, pred_valid=None, gt_valid=None, thresholds=(0.1, 0.3, 0.5, 1.0),
          max_frames=64, subset=None):
    """Percentage of mutually valid samples with error strictly below
    each threshold, over the first ``max_frames`` frames.

    ``subset`` optionally restricts scoring to a pixel subset (e.g. the
    dynamic region), shaped like one frame's validity.  Returns
    (per_threshold, mean) where per_threshold maps threshold -> percent.
    """
    pred = _as_tracks(pred, "pred")
    gt = _as_tracks(gt, "gt")
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    both = _as_valid(pred_valid, pred, "pred_valid") & _as_valid(gt_valid, gt, "gt_valid")
    if subset is not None:
        both = both & np.asarray(subset, dtype=bool).reshape(-1)[None, :]
    pred, gt, both = _window((pred, gt, both), max_frames)
    if not both.any():
        raise EmptyIntersection("no mutually valid samples to score")
    err = np.linalg.norm(pred[both] - gt[both], axis=-1)
    per = {float(t): float(100.0 * (err < t).mean()) for t in thresholds}
    return per, float(np.mean(list(per.values())))


def epe(pred, gt, pred_valid=None, gt_valid=None, max_frames=64, subset=None):
    """Mean Euclidean error over mutually valid samples in the window."""
    pred = _as_tracks(pred, "pred")
    gt = _as_tracks(gt, "gt")
    if pred.shape != gt.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs gt {gt.shape}")
    both = _as_valid(pred_valid, pred, "pred_valid") & _as_valid(gt_valid, gt, "gt_valid")
    if subset is not None:
        both = both & np.asarray(subset, dtype=bool).reshape(-1)[None, :]
    pred, gt, both = _window((pred, gt, both), max_frames)
    if not both.any():
        raise EmptyIntersection("no mutually valid samples to score")
    return float(np.linalg.norm(pred[both] - gt[both], axis=-1).mean())


@dataclass(frozen=True)
class MetricReport:
    """Evaluation results in a fixed key order, serializable as text."""

    scale: float
    frames_evaluated: int
    samples: int
    epe: float
    apd: dict
    apd_mean: float
    dynamic: dict = None  # optional: epe / apd / apd_mean on the subset

    def items(self):
        rows = [
            ("scale", self.scale),
            ("frames_evaluated", self.frames_evaluated),
            ("samples", self.samples),
            ("epe", self.epe),
        ]
        for t in sorted(self.apd):
            rows.append((f"apd_{t:g}", self.apd[t]))
        rows.append(("apd_mean", self.apd_mean))
        if self.dynamic is not None:
            rows.append(("dynamic_epe", self.dynamic["epe"]))
            for t in sorted(self.dynamic["apd"]):
                rows.append((f"dynamic_apd_{t:g}", self.dynamic["apd"][t]))
            rows.append(("dynamic_apd_mean", self.dynamic["apd_mean"]))
        return rows

    def to_text(self):
        lines = []
        for key, value in self.items():
            if isinstance(value, float):
                lines.append(f"{key} {value:.17g}")
            else:
                lines.append(f"{key} {value}")
        return "\n".join(lines) + "\n"


def evaluate_tracks(pred, gt, pred_valid=None, gt_valid=None,
                    config=MetricConfig(), dynamic_subset=None, align=True):
    """Full evaluation: median scale alignment, then EPE and the
    threshold sweep within the frame window; optionally the same numbers
    on a pixel subset.  Returns a MetricReport.
    """
    pred = _as_tracks(pred, "pred")
    gt = _as_tracks(gt, "gt")
    scale = median_align(pred, gt, pred_valid, gt_valid) if align else 1.0
    aligned = pred * scale
    both = _as_valid(pred_valid, pred, "pred_valid") & _as_valid(gt_valid, gt, "gt_valid")
    samples = int(both[:config.max_frames].sum())
    per, mean = apd3d(aligned, gt, pred_valid, gt_valid,
                      thresholds=config.thresholds, max_frames=config.max_frames)
    err = epe(aligned, gt, pred_valid, gt_valid, max_frames=config.max_frames)
    dynamic = None
    if dynamic_subset is not None:
        d_per, d_mean = apd3d(aligned, gt, pred_valid, gt_valid,
                              thresholds=config.thresholds,
                              max_frames=config.max_frames, subset=dynamic_subset)
        d_err = epe(aligned, gt, pred_valid, gt_valid,
                    max_frames=config.max_frames, subset=dynamic_subset)
        dynamic = {"epe": d_err, "apd": d_per, "apd_mean": d_mean}
    return MetricReport(
        scale=scale,
        frames_evaluated=int(min(config.max_frames, pred.shape[0])),
        samples=samples,
        epe=err,
        apd=per,
        apd_mean=mean,
        dynamic=dynamic,
    )
