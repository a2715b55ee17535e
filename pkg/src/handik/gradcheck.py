"""Central finite-difference validation of the dual-number Jacobian."""

from __future__ import annotations

import numpy as np

from .kinematics import N_TANGENT, forward_kinematics
from .objective import SolverConfig, build_residuals
from .solver import apply_tangent, jacobian
from .synth import SynthConfig, generate_sequence

_BLOCKS = {"translation": slice(0, 3), "rotation": slice(3, 6), "articulation": slice(6, 26)}


def finite_difference_jacobian(model, rig, observations, pose, config, rel_step=1e-6):
    """Central differences in the 26-dim tangent space.

    Steps are ``rel_step`` times the parameter scale: the magnitude of the
    translation entry (floored at 1 mm) for the translation block, one
    radian otherwise.
    """
    r0 = build_residuals(model, pose, rig, observations, config)
    jac = np.empty((r0.values.size, N_TANGENT))
    scales = np.ones(N_TANGENT)
    scales[:3] = np.maximum(1.0, np.abs(pose.translation))
    for k in range(N_TANGENT):
        h = rel_step * scales[k]
        delta = np.zeros(N_TANGENT)
        delta[k] = h
        plus = build_residuals(model, apply_tangent(pose, delta), rig, observations, config)
        minus = build_residuals(model, apply_tangent(pose, -delta), rig, observations, config)
        if not (np.array_equal(plus.active_mask, r0.active_mask)
                and np.array_equal(minus.active_mask, r0.active_mask)):
            raise RuntimeError("active set changed under the finite-difference step")
        jac[:, k] = (plus.values - minus.values) / (2.0 * h)
    return jac


def _interior_pose(model, pose, margin=1e-3):
    lo = model.joint_limits[:, 0] + margin
    hi = model.joint_limits[:, 1] - margin
    pose = pose.copy()
    pose.articulation = np.clip(pose.articulation, lo, hi)
    return pose


def gradient_check(model, rig, n_poses=50, seed=0, rel_step=1e-6):
    """Max relative AD-vs-FD error per tangent block over random poses.

    Poses and consistent full-confidence observations come from the
    synthetic generator; articulations are nudged strictly inside the limits
    so the differencing never crosses a bound.
    """
    config = SolverConfig()
    synth = SynthConfig(n_frames=n_poses, seed=seed, pixel_noise_sigma=0.0,
                        max_articulation_step_deg=15.0, max_rotation_step_deg=10.0,
                        max_translation_step_mm=25.0)
    worst = {name: 0.0 for name in _BLOCKS}
    for pose, frame in generate_sequence(model, rig, synth):
        pose = _interior_pose(model, pose)
        obs = _reproject(model, rig, pose, frame)
        ad = jacobian(model, rig, obs, pose, config)
        fd = finite_difference_jacobian(model, rig, obs, pose, config, rel_step)
        denom = np.maximum(1.0, np.maximum(np.abs(ad), np.abs(fd)))
        rel = np.abs(ad - fd) / denom
        for name, block in _BLOCKS.items():
            worst[name] = max(worst[name], float(rel[:, block].max()))
    return worst


def _reproject(model, rig, pose, frame):
    """Rebuild the frame's observations from the (nudged) pose so they stay
    consistent with it."""
    from .camera import project
    from .objective import Observation

    joints = forward_kinematics(model, pose)
    out = []
    by_id = {cam.camera_id: cam for cam in rig}
    for obs in frame.observations:
        proj = project(by_id[obs.camera_id], joints)
        arr = obs.joints.copy()
        valid = proj.in_front
        arr[valid, :2] = proj.points[valid]
        arr[:, 2] = np.where(valid, 1.0, 0.0)
        out.append(Observation(joints=arr, hand_id=obs.hand_id,
                               handedness=obs.handedness, camera_id=obs.camera_id))
    return out
