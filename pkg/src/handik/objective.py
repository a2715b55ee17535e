"""Confidence-weighted reprojection residuals and total cost.

Each detected joint contributes the residual pair ``(p^3 (x - u), p^3 (y - v))``
where ``(x, y)`` is the projected model keypoint, ``(u, v)`` the detection and
``p`` its confidence.  Joints below the confidence threshold, or projecting
behind the camera, contribute nothing.  Multi-view costs are the plain sum of
the per-camera costs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dual as dm
from .camera import Camera, _project_parts
from .kinematics import (
    N_KEYPOINTS,
    HandModel,
    PoseParams,
    _fk_parts,
    validate_pose,
)

MIN_ACTIVE_JOINTS = 3


class UnsolvableFrameError(RuntimeError):
    """Too few usable joints to constrain the pose."""


@dataclass
class Observation:
    """21 detected 2D joints (u, v, confidence) for one hand in one view."""

    joints: np.ndarray  # (21, 3) columns u px, v px, p in [0, 1]
    hand_id: str
    handedness: str
    camera_id: str

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=float)
        if joints.shape != (N_KEYPOINTS, 3):
            raise ValueError("observation must hold exactly 21 joints (u, v, p)")
        if not np.all(np.isfinite(joints)):
            raise ValueError("observation values must be finite")
        p = joints[:, 2]
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise ValueError("confidences must lie in [0, 1]")
        if self.handedness not in ("left", "right"):
            raise ValueError(f"handedness must be 'left' or 'right', got {self.handedness!r}")
        self.joints = joints


@dataclass
class SolverConfig:
    """Gating threshold plus Levenberg-Marquardt settings."""

    confidence_threshold: float = 0.1
    max_iterations: int = 50
    cost_tolerance: float = 1e-8
    parameter_tolerance: float = 1e-10
    initial_damping: float = 1e-3
    damping_up_factor: float = 10.0
    damping_down_factor: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.confidence_threshold < 1.0:
            raise ValueError("confidence_threshold must lie in [0, 1)")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.cost_tolerance <= 0.0 or self.parameter_tolerance <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.initial_damping <= 0.0:
            raise ValueError("initial_damping must be positive")
        if self.damping_up_factor <= 1.0:
            raise ValueError("damping_up_factor must exceed 1")
        if not 0.0 < self.damping_down_factor < 1.0:
            raise ValueError("damping_down_factor must lie in (0, 1)")


@dataclass
class ResidualVector:
    """Weighted residual entries plus the per-camera active-joint mask.

    ``values`` holds two entries (x then y) per active joint, ordered by
    observation then joint index.  The sum of squares equals the scalar cost.
    """

    values: np.ndarray  # (2 * n_active,)
    active_mask: np.ndarray  # (n_observations, 21) bool
    camera_ids: tuple = field(default_factory=tuple)


def joint_residual(projected, observed):
    """Weighted residual pair for a single joint.

    ``projected`` is (x, y) pixels, ``observed`` is (u, v, p).  The squared
    sum of the pair is the joint's contribution to the total cost.
    """
    x, y = projected
    u, v, p = observed
    if not 0.0 <= p <= 1.0:
        raise ValueError("confidence must lie in [0, 1]")
    w = p**3
    return (w * (x - u), w * (y - v))


def _resolve_cameras(rig, observations):
    by_id = {cam.camera_id: cam for cam in rig}
    cams = []
    for obs in observations:
        if obs.camera_id not in by_id:
            raise ValueError(f"camera_id {obs.camera_id!r} not present in the rig")
        cams.append(by_id[obs.camera_id])
    return cams


def _residual_parts(model, translation, rotation, articulation, cameras, observations, config):
    """Shared backend-generic core of the objective.

    Runs forward kinematics once, projects into every observed view and
    returns per-observation (rx, ry, mask) with the weighted residual
    components still in generic (array or dual) form.
    """
    x, y, z = _fk_parts(model, translation, rotation, articulation)
    out = []
    for cam, obs in zip(cameras, observations):
        with np.errstate(divide="ignore", invalid="ignore"):
            u, v, depth = _project_parts(cam, x, y, z)
        p = obs.joints[:, 2]
        mask = (p >= config.confidence_threshold) & (dm.value(depth) > 0.0)
        w = p**3
        rx = (u - obs.joints[:, 0]) * w
        ry = (v - obs.joints[:, 1]) * w
        out.append((rx, ry, mask))
    return out


def build_residuals(
    model: HandModel,
    pose: PoseParams,
    rig: list,
    observations: list,
    config: SolverConfig,
) -> ResidualVector:
    """Residual vector of the pose against all observations.

    Raises UnsolvableFrameError when fewer than three active joints remain
    across all views.
    """
    validate_pose(model, pose)
    cams = _resolve_cameras(rig, observations)
    parts = _residual_parts(
        model, tuple(pose.translation), tuple(pose.rotation), pose.articulation,
        cams, observations, config,
    )
    masks = np.array([mask for _, _, mask in parts])
    if masks.sum() < MIN_ACTIVE_JOINTS:
        raise UnsolvableFrameError(
            f"only {int(masks.sum())} active joints across {len(observations)} views"
        )
    chunks = []
    for rx, ry, mask in parts:
        chunks.append(np.stack([rx[mask], ry[mask]], axis=1).ravel())
    return ResidualVector(
        values=np.concatenate(chunks),
        active_mask=masks,
        camera_ids=tuple(obs.camera_id for obs in observations),
    )


def total_cost(residuals: ResidualVector) -> float:
    """Sum of squares of all active residual entries."""
    return float(np.dot(residuals.values, residuals.values))
