"""Per-frame orchestration: cold starts, tracking warm starts, occluded
joint substitution and handedness routing.

With no prior state a frame is solved from a geometric cold start; once a
frame succeeds, subsequent frames warm-start from the last solution and
joints that dropped below the confidence gate are re-targeted at the
reprojection of their last known 3D position.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .camera import Camera, project
from .kinematics import HandModel, JointSet3D, PoseParams, forward_kinematics
from .objective import (
    MIN_ACTIVE_JOINTS,
    Observation,
    SolverConfig,
    UnsolvableFrameError,
)
from .solver import SolveResult, TERM_UNSOLVABLE, solve

# Substituted joints stay active but heavily down-weighted (0.15^3 ~ 0.003).
SUBSTITUTION_CONFIDENCE = 0.15

# Consecutive unsolvable frames after which the track resets to cold start.
STALE_RESET_FRAMES = 30


@dataclass
class TrackState:
    """Last accepted solution for one tracked hand.

    ``last_joints`` is always the forward kinematics of ``last_pose``.
    States for different hands are independent; frames of one hand must be
    processed in order.
    """

    last_pose: PoseParams | None = None
    last_joints: JointSet3D | None = None
    frames_since_success: int = 0


@dataclass
class FrameInput:
    """All observations of one hand for one frame (one per camera)."""

    frame_id: int
    observations: list

    def __post_init__(self):
        if not self.observations:
            raise ValueError("frame must carry at least one observation")
        hand_ids = {obs.hand_id for obs in self.observations}
        handednesses = {obs.handedness for obs in self.observations}
        if len(hand_ids) != 1 or len(handednesses) != 1:
            raise ValueError("all observations in a frame must describe the same hand")
        cam_ids = [obs.camera_id for obs in self.observations]
        if len(set(cam_ids)) != len(cam_ids):
            raise ValueError("duplicate camera_id within a frame")


def cold_start(
    model: HandModel,
    camera: Camera,
    observation: Observation,
    confidence_threshold: float = 0.1,
) -> PoseParams:
    """Detection-only initial pose estimate.

    Articulation at rest and identity rotation; the wrist is placed on the
    back-projected ray of its detection at a similar-triangles depth
    estimate: focal length times the model hand span over the observed
    keypoint bounding-box diagonal.
    """
    p = observation.joints[:, 2]
    confident = p >= confidence_threshold
    if confident.sum() < MIN_ACTIVE_JOINTS:
        raise UnsolvableFrameError(
            f"cold start needs at least {MIN_ACTIVE_JOINTS} confident joints, "
            f"found {int(confident.sum())}"
        )
    pts = observation.joints[confident, :2]
    diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
    if diag < 1e-6:
        raise UnsolvableFrameError("confident joints are degenerate (zero spread)")
    focal = float(np.mean(camera.focal))
    depth = focal * model.hand_span() / diag

    if confident[0]:
        anchor = observation.joints[0, :2]
    else:
        anchor = pts.mean(axis=0)
    ray = np.array([
        (anchor[0] - camera.center[0]) / camera.focal[0],
        (anchor[1] - camera.center[1]) / camera.focal[1],
        1.0,
    ])
    t_cam = depth * ray
    # world = R^T (cam - t) for world->camera extrinsics (R, t)
    w, x, y, z = camera.rotation
    r = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])
    t_world = r.T @ (t_cam - camera.translation)
    return PoseParams(t_world, np.array([1.0, 0.0, 0.0, 0.0]), model.rest_articulation())


def substitute_occluded(
    observation: Observation,
    state: TrackState,
    model: HandModel,
    camera: Camera,
    config: SolverConfig,
    substitution_confidence: float = SUBSTITUTION_CONFIDENCE,
) -> Observation:
    """Replace gated joints with reprojections of their last known position.

    Joints at or above the confidence threshold are never touched.  The last
    known 3D joints already carry the most recent root transform (the track
    state keeps them consistent with its pose), so they reproject directly.
    No-op without prior state.
    """
    if state.last_joints is None:
        return observation
    low = observation.joints[:, 2] < config.confidence_threshold
    if not low.any():
        return observation
    proj = project(camera, state.last_joints)
    usable = low & proj.in_front & np.isfinite(proj.points).all(axis=1)
    if not usable.any():
        return observation
    joints = observation.joints.copy()
    joints[usable, :2] = proj.points[usable]
    joints[usable, 2] = substitution_confidence
    return replace(observation, joints=joints)


def route_handedness(model_left: HandModel, model_right: HandModel, frame: FrameInput) -> HandModel:
    """Pick the skeleton matching the frame's handedness tag."""
    handedness = frame.observations[0].handedness
    if handedness == "left":
        return model_left
    if handedness == "right":
        return model_right
    raise ValueError(f"frame carries no valid handedness tag: {handedness!r}")


def _stale_result(state: TrackState, frame: FrameInput) -> SolveResult:
    n_obs = len(frame.observations)
    return SolveResult(
        pose=state.last_pose,
        joints3d=state.last_joints,
        initial_cost=np.nan,
        final_cost=np.nan,
        iterations=0,
        termination=TERM_UNSOLVABLE,
        per_joint_pixel_error=np.full((n_obs, 21), np.nan),
        camera_ids=tuple(obs.camera_id for obs in frame.observations),
    )


def estimate_frame(
    model: HandModel,
    rig: list,
    frame: FrameInput,
    state: TrackState | None,
    config: SolverConfig | None = None,
) -> tuple[SolveResult, TrackState]:
    """Solve one frame, warm-starting from the track state when present.

    On an unsolvable frame with prior state, returns the prior pose flagged
    ``unsolvable`` and advances the staleness counter; after
    ``STALE_RESET_FRAMES`` consecutive failures the state resets so the next
    frame cold-starts.  Without prior state, unsolvable frames raise.
    """
    if config is None:
        config = SolverConfig()
    if state is None:
        state = TrackState()
    by_id = {cam.camera_id: cam for cam in rig}
    for obs in frame.observations:
        if obs.camera_id not in by_id:
            raise ValueError(f"camera_id {obs.camera_id!r} not present in the rig")

    if state.last_pose is not None:
        observations = [
            substitute_occluded(obs, state, model, by_id[obs.camera_id], config)
            for obs in frame.observations
        ]
        initial = state.last_pose
    else:
        observations = frame.observations
        first = observations[0]
        initial = cold_start(model, by_id[first.camera_id], first,
                             confidence_threshold=config.confidence_threshold)

    try:
        result = solve(model, rig, observations, initial, config)
    except UnsolvableFrameError:
        if state.last_pose is None:
            raise
        failures = state.frames_since_success + 1
        result = _stale_result(state, frame)
        if failures >= STALE_RESET_FRAMES:
            return result, TrackState()
        return result, TrackState(state.last_pose, state.last_joints, failures)

    new_state = TrackState(
        last_pose=result.pose,
        last_joints=result.joints3d,
        frames_since_success=0,
    )
    return result, new_state
