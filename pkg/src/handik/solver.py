"""Levenberg-Marquardt pose fitting with exact forward-mode Jacobians.

The 27-value pose is optimised in a 26-dimensional tangent space: 3
translation, 3 rotation (exponential-map increment about the current
quaternion) and 20 articulation angles.  Derivatives are propagated through
forward kinematics, extrinsics, distortion and confidence weighting with
dual numbers, so the Jacobian is exact to machine precision.

The normal equations use Marquardt scaling (``J^T J + lam * diag(J^T J)``)
and a Cholesky solve of the 26 x 26 system.  Joint limits are enforced by
clamping each trial step before it is scored, so accepted poses are always
feasible and the accepted-cost trace is non-increasing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import dual as dm
from .camera import project
from .dual import Dual
from .kinematics import (
    N_TANGENT,
    HandModel,
    JointSet3D,
    PoseParams,
    clamp_to_limits,
    forward_kinematics,
)
from .objective import (
    ResidualVector,
    SolverConfig,
    UnsolvableFrameError,
    _residual_parts,
    _resolve_cameras,
    build_residuals,
    total_cost,
)

TERM_COST = "converged-by-cost"
TERM_STEP = "converged-by-step"
TERM_MAX_ITERATIONS = "max-iterations"
TERM_UNSOLVABLE = "unsolvable"

_DAMPING_CEILING = 1e16
_DAMPING_FLOOR = 1e-12
_DIAG_FLOOR = 1e-12


@dataclass
class SolveResult:
    """Optimised pose with residual statistics and convergence diagnostics.

    ``per_joint_pixel_error`` is unweighted pixel distance per joint and
    observed view, NaN for joints that were gated out of the objective.
    """

    pose: PoseParams
    joints3d: JointSet3D
    initial_cost: float
    final_cost: float
    iterations: int
    termination: str
    per_joint_pixel_error: np.ndarray  # (n_observations, 21)
    camera_ids: tuple


def _exp_quat(dx, dy, dz):
    """Unit quaternion of the axis-angle vector (dx, dy, dz).

    Generic over duals; uses the series expansion near zero where the exact
    formula is not differentiable.
    """
    theta2 = dx * dx + dy * dy + dz * dz
    if np.max(np.asarray(dm.value(theta2))) < 1e-12:
        w = 1.0 - theta2 * 0.125
        k = 0.5 - theta2 / 48.0
    else:
        theta = dm.sqrt(theta2)
        w = dm.cos(theta * 0.5)
        k = dm.sin(theta * 0.5) / theta
    return (w, dx * k, dy * k, dz * k)


def _qmul(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return (
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    )


def step_quaternion(q, delta) -> np.ndarray:
    """Apply a world-frame exponential-map increment to a unit quaternion."""
    q = np.asarray(q, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if np.dot(delta, delta) == 0.0:
        return q.copy()
    out = np.array(_qmul(_exp_quat(*delta), q))
    return out / np.linalg.norm(out)


def apply_tangent(pose: PoseParams, delta) -> PoseParams:
    """Move the pose by a 26-vector tangent step (no limit clamping)."""
    delta = np.asarray(delta, dtype=float)
    return PoseParams(
        pose.translation + delta[:3],
        step_quaternion(pose.rotation, delta[3:6]),
        pose.articulation + delta[6:],
    )


def _dual_pose(pose):
    """Seed the pose into the 26-slot tangent space as dual numbers."""
    t = Dual.seed(pose.translation, 0, N_TANGENT)
    zero = np.zeros(3)
    d = Dual.seed(zero, 3, N_TANGENT)
    q0 = tuple(pose.rotation)
    q = _qmul(_exp_quat(d[0], d[1], d[2]), q0)
    th = Dual.seed(pose.articulation, 6, N_TANGENT)
    return (t[0], t[1], t[2]), q, th


def _residuals_and_jacobian(model, rig, observations, pose, config):
    """One dual pass giving the residual vector and its exact Jacobian."""
    cams = _resolve_cameras(rig, observations)
    translation, rotation, articulation = _dual_pose(pose)
    parts = _residual_parts(model, translation, rotation, articulation,
                            cams, observations, config)
    masks = np.array([mask for _, _, mask in parts])
    if masks.sum() < 3:
        raise UnsolvableFrameError(
            f"only {int(masks.sum())} active joints across {len(observations)} views"
        )
    vals = []
    rows = []
    for rx, ry, mask in parts:
        vals.append(np.stack([rx.val[mask], ry.val[mask]], axis=1).ravel())
        rows.append(np.stack([rx.eps[mask], ry.eps[mask]], axis=1).reshape(-1, N_TANGENT))
    residuals = ResidualVector(
        values=np.concatenate(vals),
        active_mask=masks,
        camera_ids=tuple(obs.camera_id for obs in observations),
    )
    return residuals, np.concatenate(rows, axis=0)


def jacobian(model, rig, observations, pose, config) -> np.ndarray:
    """Exact Jacobian of the active residuals with respect to the tangent.

    Rows follow the residual ordering (observation, then joint, x then y);
    columns are [translation (3), rotation tangent (3), articulation (20)].
    """
    _, jac = _residuals_and_jacobian(model, rig, observations, pose, config)
    return jac


def _pixel_errors(model, rig, observations, pose, config):
    cams = _resolve_cameras(rig, observations)
    joints = forward_kinematics(model, pose)
    errors = np.full((len(observations), 21), np.nan)
    for i, (cam, obs) in enumerate(zip(cams, observations)):
        proj = project(cam, joints)
        active = (obs.joints[:, 2] >= config.confidence_threshold) & proj.in_front
        diff = proj.points[active] - obs.joints[active, :2]
        errors[i, active] = np.hypot(diff[:, 0], diff[:, 1])
    return joints, errors


def solve(
    model: HandModel,
    rig: list,
    observations: list,
    initial: PoseParams,
    config: SolverConfig | None = None,
) -> SolveResult:
    """Minimise the weighted reprojection cost over the pose.

    Deterministic given identical inputs; accepted steps never increase the
    cost and the returned pose always satisfies the joint limits.
    """
    if config is None:
        config = SolverConfig()
    pose = clamp_to_limits(model, initial)
    residuals = build_residuals(model, pose, rig, observations, config)
    cost = total_cost(residuals)
    if not np.isfinite(cost):
        raise ValueError("cost is not finite at the initial pose")
    initial_cost = cost

    lam = config.initial_damping
    iterations = 0
    termination = TERM_MAX_ITERATIONS
    done = False
    for _ in range(config.max_iterations):
        iterations += 1
        res, jac = _residuals_and_jacobian(model, rig, observations, pose, config)
        jtj = jac.T @ jac
        grad = jac.T @ res.values
        diag = np.maximum(np.diag(jtj), _DIAG_FLOOR)

        while True:
            system = jtj + lam * np.diag(diag)
            try:
                delta = cho_solve(cho_factor(system), -grad)
            except LinAlgError:
                delta = None
            if delta is None or not np.all(np.isfinite(delta)):
                lam *= config.damping_up_factor
                if lam > _DAMPING_CEILING:
                    termination = TERM_STEP
                    done = True
                    break
                continue
            if np.linalg.norm(delta) < config.parameter_tolerance:
                termination = TERM_STEP
                done = True
                break
            trial = clamp_to_limits(model, apply_tangent(pose, delta))
            trial_cost = total_cost(build_residuals(model, trial, rig, observations, config))
            if np.isfinite(trial_cost) and trial_cost < cost:
                previous = cost
                pose, cost = trial, trial_cost
                lam = max(lam * config.damping_down_factor, _DAMPING_FLOOR)
                if previous - cost <= config.cost_tolerance * previous or cost <= 1e-24:
                    termination = TERM_COST
                    done = True
                break
            lam *= config.damping_up_factor
            if lam > _DAMPING_CEILING:
                termination = TERM_STEP
                done = True
                break
        if done:
            break

    joints, pixel_errors = _pixel_errors(model, rig, observations, pose, config)
    return SolveResult(
        pose=pose,
        joints3d=joints,
        initial_cost=initial_cost,
        final_cost=cost,
        iterations=iterations,
        termination=termination,
        per_joint_pixel_error=pixel_errors,
        camera_ids=tuple(obs.camera_id for obs in observations),
    )
