"""Parametric 26-DoF hand skeleton and forward kinematics.

The skeleton has 21 keypoints in the standard detector layout: index 0 is
the wrist, and each finger contributes four points ordered base to tip
(thumb 1-4, index 5-8, middle 9-12, ring 13-16, pinky 17-20).  Twenty bones
connect them in a tree rooted at the wrist.

A pose holds 27 values encoding 26 degrees of freedom: wrist translation
(3, millimetres), a unit quaternion for the global rotation (4 values, 3
DoF) and 20 articulation angles in radians.  Per finger the articulation is
[base flexion, base abduction, mid flexion, tip flexion]; flexion rotates
about the parent frame's X axis and abduction about its Z axis.  At the
identity pose the keypoints reproduce the model's rest shape, built by
chaining each bone's rest direction scaled by its length.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import dual as dm

N_KEYPOINTS = 21
N_BONES = 20
N_ARTICULATIONS = 20
N_FINGERS = 5
N_TANGENT = 26  # 3 translation + 3 rotation tangent + 20 articulation

FINGER_NAMES = ("thumb", "index", "middle", "ring", "pinky")
WRIST = 0

# Articulation layout per finger: 4*finger + offset.
BASE_FLEXION = 0
BASE_ABDUCTION = 1
MID_FLEXION = 2
TIP_FLEXION = 3

_QUAT_TOL = 1e-9
_LIMIT_TOL = 1e-9

# Keypoints [wrist, bases..., seconds..., thirds..., tips...] -> 0..20 order.
_CHAIN_ORDER = np.concatenate(
    [[0], *[1 + 4 * np.arange(5) + level for level in range(4)]]
)
_ASSEMBLY_INDEX = np.argsort(_CHAIN_ORDER)
_ONE = np.ones(1)


class InvalidPoseError(ValueError):
    """Pose violates the hand model's invariants."""


@dataclass
class HandModel:
    """Bone table, joint limits and handedness of a hand skeleton.

    Bones are stored in canonical order (sorted by child keypoint 1..20).
    ``bone_dir`` rows are unit rest directions expressed in the parent
    joint's frame; they are normalised on construction.  ``joint_limits``
    rows follow the articulation layout and are radians.
    """

    handedness: str
    bone_parent: np.ndarray
    bone_child: np.ndarray
    bone_length: np.ndarray
    bone_dir: np.ndarray
    joint_limits: np.ndarray

    def __post_init__(self):
        if self.handedness not in ("left", "right"):
            raise ValueError(f"handedness must be 'left' or 'right', got {self.handedness!r}")
        parent = np.asarray(self.bone_parent, dtype=int)
        child = np.asarray(self.bone_child, dtype=int)
        length = np.asarray(self.bone_length, dtype=float)
        direction = np.asarray(self.bone_dir, dtype=float)
        limits = np.asarray(self.joint_limits, dtype=float)
        if parent.shape != (N_BONES,) or child.shape != (N_BONES,):
            raise ValueError("bone table must have exactly 20 bones")
        if length.shape != (N_BONES,) or direction.shape != (N_BONES, 3):
            raise ValueError("bone lengths must be (20,), directions (20, 3)")
        if limits.shape != (N_ARTICULATIONS, 2):
            raise ValueError("joint_limits must be (20, 2)")

        order = np.argsort(child)
        parent, child = parent[order], child[order]
        length, direction = length[order], direction[order]
        if not np.array_equal(child, np.arange(1, N_KEYPOINTS)):
            raise ValueError("bone children must cover keypoints 1..20 exactly once")
        expected_parent = np.arange(N_BONES)
        expected_parent[0::4] = WRIST  # finger bases attach to the wrist
        if not np.array_equal(parent, expected_parent):
            raise ValueError("bone topology must be five 4-bone chains rooted at the wrist")
        if not np.all(np.isfinite(length)) or np.any(length <= 0.0):
            raise ValueError("bone lengths must be finite and strictly positive")
        norms = np.linalg.norm(direction, axis=1)
        if not np.all(np.isfinite(direction)) or np.any(norms < 1e-8):
            raise ValueError("bone rest directions must be finite and non-zero")
        direction = direction / norms[:, None]
        if not np.all(np.isfinite(limits)):
            raise ValueError("joint limits must be finite")
        if np.any(limits[:, 0] >= limits[:, 1]):
            raise ValueError("joint limits must satisfy lo < hi")
        if np.any(limits < -np.pi) or np.any(limits > np.pi):
            raise ValueError("joint limits must lie within [-pi, pi]")

        self.bone_parent = parent
        self.bone_child = child
        self.bone_length = length
        self.bone_dir = direction
        self.joint_limits = limits

    def rest_keypoints(self) -> np.ndarray:
        """Keypoint positions of the identity pose, wrist at the origin."""
        pts = np.zeros((N_KEYPOINTS, 3))
        for b in range(N_BONES):
            pts[self.bone_child[b]] = (
                pts[self.bone_parent[b]] + self.bone_length[b] * self.bone_dir[b]
            )
        return pts

    def hand_span(self) -> float:
        """Wrist to middle fingertip distance at rest, in millimetres."""
        rest = self.rest_keypoints()
        return float(np.linalg.norm(rest[12] - rest[0]))

    def rest_articulation(self) -> np.ndarray:
        """All-zero articulation clipped into the joint limits."""
        return np.clip(0.0, self.joint_limits[:, 0], self.joint_limits[:, 1])


@dataclass
class PoseParams:
    """27-value pose: translation (mm), unit quaternion (w, x, y, z), 20 angles.

    The quaternion is renormalised eagerly on construction; assigning to the
    fields directly bypasses that, so prefer building new instances.
    """

    translation: np.ndarray
    rotation: np.ndarray
    articulation: np.ndarray

    def __post_init__(self):
        t = np.array(self.translation, dtype=float).reshape(3)
        q = np.array(self.rotation, dtype=float).reshape(4)
        a = np.array(self.articulation, dtype=float).reshape(N_ARTICULATIONS)
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(q)) and np.all(np.isfinite(a))):
            raise InvalidPoseError("pose values must be finite")
        norm = np.linalg.norm(q)
        if norm < 1e-6:
            raise InvalidPoseError("quaternion norm too small to normalise")
        self.translation = t
        self.rotation = q / norm
        self.articulation = a

    @classmethod
    def identity(cls) -> "PoseParams":
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(N_ARTICULATIONS))

    @classmethod
    def from_vector(cls, vec) -> "PoseParams":
        vec = np.asarray(vec, dtype=float).reshape(27)
        return cls(vec[:3], vec[3:7], vec[7:])

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.translation, self.rotation, self.articulation])

    def copy(self) -> "PoseParams":
        return PoseParams(self.translation.copy(), self.rotation.copy(), self.articulation.copy())


@dataclass
class JointSet3D:
    """21 world-frame keypoint positions in millimetres, shape (21, 3)."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.shape != (N_KEYPOINTS, 3):
            raise ValueError("joint set must be (21, 3)")
        self.points = pts


def _rotate(qw, qx, qy, qz, vx, vy, vz):
    # v + 2 w (q x v) + 2 q x (q x v), written out component-wise.
    tx = 2.0 * (qy * vz - qz * vy)
    ty = 2.0 * (qz * vx - qx * vz)
    tz = 2.0 * (qx * vy - qy * vx)
    rx = vx + qw * tx + (qy * tz - qz * ty)
    ry = vy + qw * ty + (qz * tx - qx * tz)
    rz = vz + qw * tz + (qx * ty - qy * tx)
    return rx, ry, rz


def _qmul_about_x(qw, qx, qy, qz, angle):
    # q * (cos a/2, sin a/2, 0, 0)
    c = dm.cos(angle * 0.5)
    s = dm.sin(angle * 0.5)
    return (qw * c - qx * s, qw * s + qx * c, qy * c + qz * s, qz * c - qy * s)


def _qmul_about_z(qw, qx, qy, qz, angle):
    # q * (cos a/2, 0, 0, sin a/2)
    c = dm.cos(angle * 0.5)
    s = dm.sin(angle * 0.5)
    return (qw * c - qz * s, qx * c + qy * s, qy * c - qx * s, qw * s + qz * c)


def _fk_parts(model, translation, rotation, articulation):
    """Backend-generic forward kinematics.

    ``translation``/``rotation`` are component tuples and ``articulation``
    is sliceable (plain arrays or duals).  Returns (x, y, z) components for
    the 21 keypoints in canonical order.
    """
    tx, ty, tz = translation
    qw, qx, qy, qz = rotation

    flex_base = articulation[0::4]
    abd_base = articulation[1::4]
    flex_mid = articulation[2::4]
    flex_tip = articulation[3::4]

    lengths = model.bone_length
    dirs = model.bone_dir

    # Metacarpals: rigid offsets from the wrist in the root frame.
    mx, my, mz = _rotate(qw, qx, qy, qz, dirs[0::4, 0], dirs[0::4, 1], dirs[0::4, 2])
    base_x = tx + lengths[0::4] * mx
    base_y = ty + lengths[0::4] * my
    base_z = tz + lengths[0::4] * mz

    # Base joints: flexion about parent X, then abduction about parent Z.
    q1 = _qmul_about_x(qw, qx, qy, qz, flex_base)
    q1 = _qmul_about_z(*q1, abd_base)
    px, py, pz = _rotate(*q1, dirs[1::4, 0], dirs[1::4, 1], dirs[1::4, 2])
    second_x = base_x + lengths[1::4] * px
    second_y = base_y + lengths[1::4] * py
    second_z = base_z + lengths[1::4] * pz

    q2 = _qmul_about_x(*q1, flex_mid)
    px, py, pz = _rotate(*q2, dirs[2::4, 0], dirs[2::4, 1], dirs[2::4, 2])
    third_x = second_x + lengths[2::4] * px
    third_y = second_y + lengths[2::4] * py
    third_z = second_z + lengths[2::4] * pz

    q3 = _qmul_about_x(*q2, flex_tip)
    px, py, pz = _rotate(*q3, dirs[3::4, 0], dirs[3::4, 1], dirs[3::4, 2])
    tip_x = third_x + lengths[3::4] * px
    tip_y = third_y + lengths[3::4] * py
    tip_z = third_z + lengths[3::4] * pz

    x = dm.concat([tx * _ONE, base_x, second_x, third_x, tip_x])[_ASSEMBLY_INDEX]
    y = dm.concat([ty * _ONE, base_y, second_y, third_y, tip_y])[_ASSEMBLY_INDEX]
    z = dm.concat([tz * _ONE, base_z, second_z, third_z, tip_z])[_ASSEMBLY_INDEX]
    return x, y, z


def validate_pose(model: HandModel, pose: PoseParams) -> None:
    """Raise InvalidPoseError unless ``pose`` satisfies ``model`` invariants."""
    if abs(np.linalg.norm(pose.rotation) - 1.0) > _QUAT_TOL:
        raise InvalidPoseError("quaternion is not unit norm")
    lo = model.joint_limits[:, 0] - _LIMIT_TOL
    hi = model.joint_limits[:, 1] + _LIMIT_TOL
    bad = np.where((pose.articulation < lo) | (pose.articulation > hi))[0]
    if bad.size:
        raise InvalidPoseError(f"articulation {bad[0]} outside joint limits")


def forward_kinematics(model: HandModel, pose: PoseParams) -> JointSet3D:
    """Map pose parameters to the 21 world-frame keypoints."""
    validate_pose(model, pose)
    x, y, z = _fk_parts(model, tuple(pose.translation), tuple(pose.rotation), pose.articulation)
    return JointSet3D(np.stack([x, y, z], axis=1))


def mirror_model(model: HandModel) -> HandModel:
    """Opposite-handed model: rest directions reflected across the X=0 plane
    of the root frame, abduction limits sign-swapped.  An involution."""
    dirs = model.bone_dir.copy()
    dirs[:, 0] = -dirs[:, 0]
    limits = model.joint_limits.copy()
    abd = slice(BASE_ABDUCTION, None, 4)
    limits[abd] = -limits[abd][:, ::-1]
    return replace(
        model,
        handedness="right" if model.handedness == "left" else "left",
        bone_dir=dirs,
        joint_limits=limits,
        bone_parent=model.bone_parent.copy(),
        bone_child=model.bone_child.copy(),
        bone_length=model.bone_length.copy(),
    )


def mirror_pose(pose: PoseParams) -> PoseParams:
    """Pose for the mirrored model whose keypoints are the X-reflection of
    the original pose's keypoints."""
    t = pose.translation * np.array([-1.0, 1.0, 1.0])
    q = pose.rotation * np.array([1.0, 1.0, -1.0, -1.0])
    a = pose.articulation.copy()
    a[BASE_ABDUCTION::4] = -a[BASE_ABDUCTION::4]
    return PoseParams(t, q, a)


def clamp_to_limits(model: HandModel, pose: PoseParams) -> PoseParams:
    """Clamp articulation into the model's limits and renormalise the
    quaternion; translation is left unchanged."""
    vals = np.concatenate([pose.translation, pose.rotation, pose.articulation])
    if not np.all(np.isfinite(vals)):
        raise InvalidPoseError("pose values must be finite")
    clamped = np.clip(pose.articulation, model.joint_limits[:, 0], model.joint_limits[:, 1])
    return PoseParams(pose.translation.copy(), pose.rotation.copy(), clamped)


def default_model(handedness: str = "left") -> HandModel:
    """Packaged default skeleton with anthropometric average bone lengths."""
    from .dataio import read_hand_model  # local import to avoid a cycle
    from importlib import resources

    path = resources.files("handik.data").joinpath("default_left.txt")
    with resources.as_file(path) as p:
        model = read_hand_model(p)
    if handedness == "left":
        return model
    if handedness == "right":
        return mirror_model(model)
    raise ValueError(f"handedness must be 'left' or 'right', got {handedness!r}")
