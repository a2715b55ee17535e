"""Independent reference implementations used to derive expected values.

Everything here is deliberately written on a different code path from the
package: homogeneous 4x4 matrix chains via scipy rotations instead of
quaternion algebra, scalar loops instead of vectorised numpy, explicit
similarity transforms for alignment.
"""

import numpy as np
from scipy.spatial.transform import Rotation


def _homogeneous(rot, trans):
    out = np.eye(4)
    out[:3, :3] = rot
    out[:3, 3] = trans
    return out


def fk_oracle(model, pose):
    """Forward kinematics by composing homogeneous transforms per chain."""
    w, x, y, z = pose.rotation
    root_rot = Rotation.from_quat([x, y, z, w]).as_matrix()
    root = _homogeneous(root_rot, pose.translation)

    points = np.zeros((21, 3))
    points[0] = pose.translation
    for finger in range(5):
        flex0, abd0, flex1, flex2 = pose.articulation[4 * finger: 4 * finger + 4]
        base_kp = 1 + 4 * finger
        meta = model.bone_length[4 * finger] * model.bone_dir[4 * finger]
        p_base = (root @ np.append(meta, 1.0))[:3]
        points[base_kp] = p_base

        rot_base = (
            root_rot
            @ Rotation.from_euler("x", flex0).as_matrix()
            @ Rotation.from_euler("z", abd0).as_matrix()
        )
        frame = _homogeneous(rot_base, p_base)
        seg = model.bone_length[4 * finger + 1] * model.bone_dir[4 * finger + 1]
        p2 = (frame @ np.append(seg, 1.0))[:3]
        points[base_kp + 1] = p2

        rot_mid = rot_base @ Rotation.from_euler("x", flex1).as_matrix()
        frame = _homogeneous(rot_mid, p2)
        seg = model.bone_length[4 * finger + 2] * model.bone_dir[4 * finger + 2]
        p3 = (frame @ np.append(seg, 1.0))[:3]
        points[base_kp + 2] = p3

        rot_tip = rot_mid @ Rotation.from_euler("x", flex2).as_matrix()
        frame = _homogeneous(rot_tip, p3)
        seg = model.bone_length[4 * finger + 3] * model.bone_dir[4 * finger + 3]
        points[base_kp + 3] = (frame @ np.append(seg, 1.0))[:3]
    return points


def project_oracle(camera, point):
    """Scalar pinhole + Brown-Conrady projection of a single 3D point."""
    w, x, y, z = camera.rotation
    rot = Rotation.from_quat([x, y, z, w]).as_matrix()
    px, py, pz = rot @ np.asarray(point, dtype=float) + camera.translation
    xn = px / pz
    yn = py / pz
    k1, k2, p1, p2, k3 = camera.distortion
    r2 = xn * xn + yn * yn
    radial = 1.0 + k1 * r2 + k2 * r2 **ackat 2 + k3 * r2 ** 3
    xd = xn * radial + 2.0 * p1 * xn * yn + p2 * (r2 + 2.0 * xn * xn)
    yd = yn * radial + p1 * (r2 + 2.0 * yn * yn) + 2.0 * p2 * xn * yn
    return np.array([
        camera.focal[0] * xd + camera.center[0],
        camera.focal[1] * yd + camera.center[1],
    ]), pz


def unproject_oracle(camera, pixel, depth):
    """Invert the zero-distortion pinhole at a known depth (test-only)."""
    assert np.allclose(camera.distortion, 0.0)
    xn = (pixel[0] - camera.center[0]) / camera.focal[0]
    yn = (pixel[1] - camera.center[1]) / camera.focal[1]
    cam_point = depth * np.array([xn, yn, 1.0])
    w, x, y, z = camera.rotation
    rot = Rotation.from_quat([x, y, z, w]).as_matrix()
    return rot.T @ (cam_point - camera.translation)


def naive_cost(values):
    total = 0.0
    for v in values:
        total += float(v) * float(v)
    return total


def threshold_curve_oracle(errors, thresholds):
    fractions = []
    for t in thresholds:
        count = 0
        for e in errors:
            if e <= t:
                count += 1
        fractions.append(count / len(errors))
    return np.array(fractions)


def per_axis_mae_oracle(estimated, truth):
    sums = np.zeros(3)
    count = 0
    for est_frame, tru_frame in zip(estimated, truth):
        for est_joint, tru_joint in zip(est_frame, tru_frame):
            for axis in range(3):
                sums[axis] += abs(est_joint[axis] - tru_joint[axis])
            count += 1
    return sums / count


def aligned_error_oracle(estimated, truth):
    """Apply the translation+scale alignment as an explicit homogeneous
    similarity transform, then measure."""
    est = np.asarray(estimated, dtype=float)
    tru = np.asarray(truth, dtype=float)
    c_est = est.mean(axis=0)
    c_tru = tru.mean(axis=0)
    scale = np.linalg.norm(tru - c_tru) / np.linalg.norm(est - c_est)
    transform = (
        _homogeneous(np.eye(3), c_tru)
        @ _homogeneous(scale * np.eye(3), np.zeros(3))
        @ _homogeneous(np.eye(3), -c_est)
    )
    est_h = np.hstack([est, np.ones((est.shape[0], 1))])
    aligned = (transform @ est_h.T).T[:, :3]
    return float(np.mean(np.linalg.norm(aligned - tru, axis=1)))


def quat_mul_oracle(a, b):
    """Hamilton product via scipy (scipy uses xyzw ordering)."""
    ra = Rotation.from_quat([a[1], a[2], a[3], a[0]])
    rb = Rotation.from_quat([b[1], b[2], b[3], b[0]])
    x, y, z, w = (ra * rb).as_quat()
    return np.array([w, x, y, z])


def rotvec_quat_oracle(rotvec):
    x, y, z, w = Rotation.from_rotvec(rotvec).as_quat()
    return np.array([w, x, y, z])


def fd_jacobian_oracle(residual_fn, dim, h=1e-6):
    """Plain central differences of ``residual_fn(delta_vector)``."""
    r0 = residual_fn(np.zeros(dim))
    jac = np.empty((r0.size, dim))
    for k in range(dim):
        delta = np.zeros(dim)
        delta[k] = h
        jac[:, k] = (residual_fn(delta) - residual_fn(-delta)) / (2.0 * h)
    return jac
