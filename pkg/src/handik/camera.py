"""Calibrated pinhole camera with Brown-Conrady lens distortion.

Extrinsics map world to camera coordinates (``X_c = R X_w + t``); the
projection applies perspective division, the distortion polynomial and the
pixel intrinsics.  Points with non-positive camera-frame depth are flagged
instead of raising so the solver can gate them out of the objective.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import dual as dm
from .kinematics import N_KEYPOINTS, JointSet3D, _rotate

_QUAT_TOL = 1e-9


@dataclass
class Camera:
    """Intrinsics, distortion and world-to-camera extrinsics of one view."""

    camera_id: str
    focal: np.ndarray  # (fx, fy) pixels
    center: np.ndarray  # (cx, cy) pixels
    distortion: np.ndarray  # (k1, k2, p1, p2, k3)
    rotation: np.ndarray  # unit quaternion (w, x, y, z), world -> camera
    translation: np.ndarray  # (3,) mm, world -> camera
    image_size: tuple  # (width, height) pixels

    def __post_init__(self):
        focal = np.array(self.focal, dtype=float).reshape(2)
        center = np.array(self.center, dtype=float).reshape(2)
        dist = np.array(self.distortion, dtype=float).reshape(5)
        q = np.array(self.rotation, dtype=float).reshape(4)
        t = np.array(self.translation, dtype=float).reshape(3)
        w, h = self.image_size
        if np.any(focal <= 0.0):
            raise ValueError("focal lengths must be positive")
        if int(w) <= 0 or int(h) <= 0:
            raise ValueError("image size must be positive")
        vals = np.concatenate([focal, center, dist, q, t])
        if not np.all(np.isfinite(vals)):
            raise ValueError("camera parameters must be finite")
        norm = np.linalg.norm(q)
        if norm < 1e-6:
            raise ValueError("extrinsic quaternion norm too small")
        self.focal = focal
        self.center = center
        self.distortion = dist
        self.rotation = q / norm
        self.translation = t
        self.image_size = (int(w), int(h))


@dataclass
class Projection2D:
    """Pixel coordinates of the 21 keypoints plus in-front-of-camera flags.

    Rows whose flag is False hold NaN instead of pixel coordinates.
    """

    points: np.ndarray  # (21, 2) pixels
    in_front: np.ndarray  # (21,) bool

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        flags = np.asarray(self.in_front, dtype=bool)
        if pts.shape != (N_KEYPOINTS, 2) or flags.shape != (N_KEYPOINTS,):
            raise ValueError("projection must be (21, 2) points with (21,) flags")
        self.points = pts
        self.in_front = flags


def _project_parts(camera, x, y, z):
    """Backend-generic world-to-pixel transform.

    Returns pixel coordinates (u, v) and the camera-frame depth, leaving
    behind-camera handling to the caller.
    """
    qw, qx, qy, qz = camera.rotation
    cx_, cy_, cz_ = _rotate(qw, qx, qy, qz, x, y, z)
    cx_ = cx_ + camera.translation[0]
    cy_ = cy_ + camera.translation[1]
    cz_ = cz_ + camera.translation[2]

    xn = cx_ / cz_
    yn = cy_ / cz_

    k1, k2, p1, p2, k3 = camera.distortion
    x2 = xn * xn
    y2 = yn * yn
    xy = xn * yn
    r2 = x2 + y2
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = xn * radial + 2.0 * p1 * xy + p2 * (r2 + 2.0 * x2)
    yd = yn * radial + p1 * (r2 + 2.0 * y2) + 2.0 * p2 * xy

    u = camera.focal[0] * xd + camera.center[0]
    v = camera.focal[1] * yd + camera.center[1]
    return u, v, cz_


def project(camera: Camera, joints: JointSet3D) -> Projection2D:
    """Project world-frame keypoints onto the camera's image plane."""
    pts = joints.points
    if not np.all(np.isfinite(pts)):
        raise ValueError("joint positions must be finite")
    with np.errstate(divide="ignore", invalid="ignore"):
        u, v, depth = _project_parts(camera, pts[:, 0], pts[:, 1], pts[:, 2])
    in_front = dm.value(depth) > 0.0
    out = np.stack([u, v], axis=1)
    out[~in_front] = np.nan
    return Projection2D(out, in_front)


def identity_view(camera: Camera) -> Camera:
    """Copy of ``camera`` with identity extrinsics (model lives in the
    camera frame)."""
    return replace(
        camera,
        rotation=np.array([1.0, 0.0, 0.0, 0.0]),
        translation=np.zeros(3),
    )


def _quat_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def default_rig(kind: str = "stereo") -> list[Camera]:
    """Convenience VGA rig looking along +Z from the world origin.

    ``mono`` is the single reference camera; ``stereo`` adds a second camera
    240 mm along +X, toed in by 15 degrees.  The vergence makes the two
    viewing directions genuinely different across the working volume, which
    disambiguates finger flexion far better than a parallel pair.
    """
    base = dict(
        focal=(525.0, 525.0),
        center=(319.5, 239.5),
        distortion=(0.0, 0.0, 0.0, 0.0, 0.0),
        image_size=(640, 480),
    )
    cams = [Camera(camera_id="cam0", translation=(0.0, 0.0, 0.0),
                   rotation=(1.0, 0.0, 0.0, 0.0), **base)]
    if kind == "stereo":
        half = np.radians(-15.0) / 2.0
        q = np.array([np.cos(half), 0.0, np.sin(half), 0.0])  # yaw toward cam0
        position = np.array([240.0, 0.0, 0.0])
        cams.append(Camera(camera_id="cam1", rotation=q,
                           translation=-_quat_matrix(q) @ position, **base))
    elif kind != "mono":
        raise ValueError(f"unknown rig kind {kind!r}")
    return cams
