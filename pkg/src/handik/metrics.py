"""Evaluation metrics: threshold curves, per-axis MAE and aligned error.

The threshold curve is the fraction of frames whose mean 3D joint error
falls at or below each threshold.  The aligned error removes global
translation (centroid match) and uniform scale (root-centred norm ratio)
but keeps rotation, for comparison against methods that only recover a
scale-normalised pose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import N_KEYPOINTS


@dataclass
class MetricsReport:
    """Threshold curve, axis-wise errors and per-frame table."""

    thresholds: np.ndarray
    threshold_curve: np.ndarray  # fractions in [0, 1]
    per_axis_mae: np.ndarray  # (3,) mm
    mean_error_mm: float
    aligned_mean_error_mm: float
    frame_ids: list
    per_frame_error_mm: np.ndarray
    per_frame_aligned_mm: np.ndarray


def threshold_curve(errors, thresholds) -> np.ndarray:
    """Fraction of frames with error at or below each threshold."""
    errors = np.asarray(errors, dtype=float)
    thresholds = np.asarray(thresholds, dtype=float)
    if errors.size == 0:
        raise ValueError("cannot build a threshold curve from zero frames")
    if not np.all(np.isfinite(errors)) or np.any(errors < 0.0):
        raise ValueError("errors must be finite and non-negative")
    return (errors[None, :] <= thresholds[:, None]).mean(axis=1)


def _stacked(estimated, truth):
    est = np.asarray(estimated, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.ndim == 2:
        est = est[None]
    if tru.ndim == 2:
        tru = tru[None]
    if est.shape != tru.shape or est.shape[1:] != (N_KEYPOINTS, 3):
        raise ValueError(
            f"estimated and truth must both be (frames, 21, 3), got {est.shape} vs {tru.shape}")
    return est, tru


def per_axis_mae(estimated, truth) -> np.ndarray:
    """Mean absolute error per world axis over all frames and joints."""
    est, tru = _stacked(estimated, truth)
    return np.abs(est - tru).mean(axis=(0, 1))


def mean_joint_error(estimated, truth) -> np.ndarray:
    """Per-frame mean Euclidean joint error in millimetres."""
    est, tru = _stacked(estimated, truth)
    return np.linalg.norm(est - tru, axis=2).mean(axis=1)


def aligned_error(estimated, truth) -> float:
    """Mean joint error after removing global translation and uniform scale.

    Centroids are matched, the estimate is rescaled by the ratio of
    root-centred point-set norms, and rotation is deliberately kept.
    """
    est = np.asarray(estimated, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != (N_KEYPOINTS, 3) or tru.shape != (N_KEYPOINTS, 3):
        raise ValueError("aligned_error expects matched (21, 3) point sets")
    est_centred = est - est.mean(axis=0)
    tru_centred = tru - tru.mean(axis=0)
    est_norm = np.linalg.norm(est_centred)
    tru_norm = np.linalg.norm(tru_centred)
    if est_norm < 1e-12 or tru_norm < 1e-12:
        raise ValueError("degenerate point set: zero spread around the centroid")
    aligned = tru.mean(axis=0) + (tru_norm / est_norm) * est_centred
    return float(np.linalg.norm(aligned - tru, axis=1).mean())


def compute_report(frame_ids, estimated, truth, thresholds) -> MetricsReport:
    """Aggregate metrics over matched per-frame joint sets."""
    est, tru = _stacked(estimated, truth)
    if len(frame_ids) != est.shape[0]:
        raise ValueError("frame_ids length must match the number of frames")
    per_frame = mean_joint_error(est, tru)
    per_frame_aligned = np.array([aligned_error(e, t) for e, t in zip(est, tru)])
    thresholds = np.asarray(thresholds, dtype=float)
    return MetricsReport(
        thresholds=thresholds,
        threshold_curve=threshold_curve(per_frame, thresholds),
        per_axis_mae=per_axis_mae(est, tru),
        mean_error_mm=float(per_frame.mean()),
        aligned_mean_error_mm=float(per_frame_aligned.mean()),
        frame_ids=list(frame_ids),
        per_frame_error_mm=per_frame,
        per_frame_aligned_mm=per_frame_aligned,
    )
