"""Synthetic ground truth: pose sampling, smooth motion, noisy observations.

Sequences are a reflected random walk in pose space (bouncing off the
sampling ranges so they stay feasible indefinitely), projected through a
camera rig and corrupted with Gaussian pixel noise.  Confidences follow
``base * exp(-noise_px / decay)`` so noisier detections are less trusted,
with an independent dropout that zeroes joints entirely.  Everything is
deterministic under a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import project
from .dataio import FrameRecord
from .kinematics import (
    N_ARTICULATIONS,
    HandModel,
    PoseParams,
    forward_kinematics,
)
from .objective import Observation
from .pipeline import FrameInput
from .solver import step_quaternion


def _default_translation_range():
    return np.array([[-60.0, 60.0], [-40.0, 40.0], [450.0, 650.0]])


@dataclass
class SynthConfig:
    """Sampling ranges, motion bounds and observation noise model."""

    n_frames: int = 100
    seed: int = 0
    translation_range: np.ndarray = field(default_factory=_default_translation_range)
    max_rotation_deg: float = 30.0
    articulation_ranges: np.ndarray | None = None  # (20, 2) radians; None -> shrunk limits
    range_margin: float = 0.1
    max_translation_step_mm: float = 10.0
    max_rotation_step_deg: float = 3.0
    max_articulation_step_deg: float = 4.0
    pixel_noise_sigma: float = 0.0
    base_confidence: float = 1.0
    confidence_decay_px: float = 2.0
    dropout_prob: float = 0.0
    hand_id: str = "hand0"

    def __post_init__(self):
        self.translation_range = np.asarray(self.translation_range, dtype=float).reshape(3, 2)
        if np.any(self.translation_range[:, 0] > self.translation_range[:, 1]):
            raise ValueError("translation ranges must satisfy lo <= hi")
        if self.articulation_ranges is not None:
            self.articulation_ranges = np.asarray(
                self.articulation_ranges, dtype=float).reshape(N_ARTICULATIONS, 2)
        if not 0.0 <= self.range_margin < 0.5:
            raise ValueError("range_margin must lie in [0, 0.5)")
        if self.pixel_noise_sigma < 0.0:
            raise ValueError("pixel noise sigma must be non-negative")
        if not 0.0 <= self.base_confidence <= 1.0:
            raise ValueError("base_confidence must lie in [0, 1]")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")
        if self.confidence_decay_px <= 0.0:
            raise ValueError("confidence_decay_px must be positive")
        if self.n_frames < 1:
            raise ValueError("n_frames must be at least 1")
        if self.max_rotation_deg < 0.0 or self.max_rotation_step_deg < 0.0:
            raise ValueError("rotation bounds must be non-negative")
        if self.max_translation_step_mm < 0.0 or self.max_articulation_step_deg < 0.0:
            raise ValueError("step bounds must be non-negative")


def articulation_ranges(model: HandModel, config: SynthConfig) -> np.ndarray:
    """Sampling ranges for the 20 angles, validated against the limits."""
    if config.articulation_ranges is None:
        lo = model.joint_limits[:, 0]
        hi = model.joint_limits[:, 1]
        margin = config.range_margin * (hi - lo)
        return np.stack([lo + margin, hi - margin], axis=1)
    ranges = config.articulation_ranges
    if np.any(ranges[:, 0] > ranges[:, 1]):
        raise ValueError("articulation ranges must satisfy lo <= hi")
    if np.any(ranges[:, 0] < model.joint_limits[:, 0] - 1e-12) or np.any(
            ranges[:, 1] > model.joint_limits[:, 1] + 1e-12):
        raise ValueError("articulation ranges must lie within the joint limits")
    return ranges


def _random_axis_angle(rng, max_angle_rad):
    axis = rng.normal(size=3)
    norm = np.linalg.norm(axis)
    if norm < 1e-12 or max_angle_rad == 0.0:
        return np.zeros(3)
    return axis / norm * rng.uniform(0.0, max_angle_rad)


def sample_pose(model: HandModel, config: SynthConfig, rng: np.random.Generator) -> PoseParams:
    """Uniform pose sample within the configured ranges."""
    ranges = articulation_ranges(model, config)
    articulation = rng.uniform(ranges[:, 0], ranges[:, 1])
    translation = rng.uniform(config.translation_range[:, 0], config.translation_range[:, 1])
    identity = np.array([1.0, 0.0, 0.0, 0.0])
    rotation = step_quaternion(identity, _random_axis_angle(rng, np.radians(config.max_rotation_deg)))
    return PoseParams(translation, rotation, articulation)


def _reflect(values, lo, hi):
    """Fold values into [lo, hi] by reflecting at the boundaries."""
    width = hi - lo
    out = np.where(width <= 0.0, lo, values)
    span = np.where(width <= 0.0, 1.0, 2.0 * width)
    y = np.mod(out - lo, span)
    y = np.where(y > width, span - y, y)
    return np.where(width <= 0.0, lo, lo + y)


def _step_pose(pose, ranges, config, rng):
    a_step = np.radians(config.max_articulation_step_deg)
    articulation = _reflect(
        pose.articulation + rng.uniform(-a_step, a_step, N_ARTICULATIONS),
        ranges[:, 0], ranges[:, 1],
    )
    t_step = config.max_translation_step_mm
    translation = _reflect(
        pose.translation + rng.uniform(-t_step, t_step, 3),
        config.translation_range[:, 0], config.translation_range[:, 1],
    )
    rotation = step_quaternion(
        pose.rotation, _random_axis_angle(rng, np.radians(config.max_rotation_step_deg)))
    return PoseParams(translation, rotation, articulation)


def _observe(model, pose, camera, config, rng, hand_id):
    proj = project(camera, forward_kinematics(model, pose))
    noise = rng.normal(0.0, config.pixel_noise_sigma, size=(21, 2)) \
        if config.pixel_noise_sigma > 0.0 else np.zeros((21, 2))
    magnitude = np.hypot(noise[:, 0], noise[:, 1])
    confidence = np.clip(
        config.base_confidence * np.exp(-magnitude / config.confidence_decay_px), 0.0, 1.0)
    dropped = rng.random(21) < config.dropout_prob
    confidence[dropped] = 0.0

    joints = np.zeros((21, 3))
    valid = proj.in_front & np.isfinite(proj.points).all(axis=1)
    joints[valid, :2] = proj.points[valid] + noise[valid]
    confidence[~valid] = 0.0
    joints[:, 2] = confidence
    return Observation(joints=joints, hand_id=hand_id,
                       handedness=model.handedness, camera_id=camera.camera_id)


def generate_sequence(model: HandModel, rig: list, config: SynthConfig):
    """Ground-truth sequence: list of (true PoseParams, FrameInput)."""
    rng = np.random.default_rng(config.seed)
    ranges = articulation_ranges(model, config)
    pose = sample_pose(model, config, rng)
    frames = []
    for frame_id in range(config.n_frames):
        observations = [
            _observe(model, pose, camera, config, rng, config.hand_id)
            for camera in rig
        ]
        frames.append((pose.copy(), FrameInput(frame_id=frame_id, observations=observations)))
        pose = _step_pose(pose, ranges, config, rng)
    return frames


def sequence_records(model: HandModel, rig: list, config: SynthConfig):
    """Same sequence as FrameRecords with ground-truth 3D keypoints, ready
    for :func:`handik.dataio.write_dataset`."""
    records = []
    for pose, frame in generate_sequence(model, rig, config):
        truth = forward_kinematics(model, pose).points
        records.append(FrameRecord(
            frame_id=frame.frame_id,
            hand_id=config.hand_id,
            handedness=model.handedness,
            keypoints={obs.camera_id: obs.joints.copy() for obs in frame.observations},
            truth=truth,
        ))
    return records
