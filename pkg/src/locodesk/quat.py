"""Unit-quaternion and SO(3) helpers.

Conventions used throughout the package:

* quaternions are scalar-first ``(w, x, y, z)`` numpy arrays,
* ``quat_to_mat(q)`` maps body coordinates to world coordinates,
* angular velocities are expressed in world coordinates, integrated by
  left-multiplication: ``q' = quat_from_rotvec(w * dt) * q``.
"""

import numpy as np

from .accel import jitted


@jitted
def quat_normalize(q):
    n = np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return q / n


@jitted
def quat_mul(a, b):
    aw, ax, ay, az = a[0], a[1], a[2], a[3]
    bw, bx, by, bz = b[0], b[1], b[2], b[3]
    out = np.empty(4)
    out[0] = aw * bw - ax * bx - ay * by - az * bz
    out[1] = aw * bx + ax * bw + ay * bz - az * by
    out[2] = aw * by - ax * bz + ay * bw + az * bx
    out[3] = aw * bz + ax * by - ay * bx + az * bw
    return out


@jitted
def quat_conj(q):
    out = np.empty(4)
    out[0] = q[0]
    out[1] = -q[1]
    out[2] = -q[2]
    out[3] = -q[3]
    return out


@jitted
def quat_rotate(q, v):
    # R(q) v without forming the matrix
    w, x, y, z = q[0], q[1], q[2], q[3]
    tx = 2.0 * (y * v[2] - z * v[1])
    ty = 2.0 * (z * v[0] - x * v[2])
    tz = 2.0 * (x * v[1] - y * v[0])
    out = np.empty(3)
    out[0] = v[0] + w * tx + (y * tz - z * ty)
    out[1] = v[1] + w * ty + (z * tx - x * tz)
    out[2] = v[2] + w * tz + (x * ty - y * tx)
    return out


@jitted
def quat_to_mat(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - w * z)
    R[0, 2] = 2.0 * (x * z + w * y)
    R[1, 0] = 2.0 * (x * y + w * z)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - w * x)
    R[2, 0] = 2.0 * (x * z - w * y)
    R[2, 1] = 2.0 * (y * z + w * x)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


@jitted
def mat_to_quat(R):
    # Shepperd's method, branch on the largest diagonal combination
    q = np.empty(4)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q[0] = 0.25 * s
        q[1] = (R[2, 1] - R[1, 2]) / s
        q[2] = (R[0, 2] - R[2, 0]) / s
        q[3] = (R[1, 0] - R[0, 1]) / s
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q[0] = (R[2, 1] - R[1, 2]) / s
        q[1] = 0.25 * s
        q[2] = (R[0, 1] + R[1, 0]) / s
        q[3] = (R[0, 2] + R[2, 0]) / s
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q[0] = (R[0, 2] - R[2, 0]) / s
        q[1] = (R[0, 1] + R[1, 0]) / s
        q[2] = 0.25 * s
        q[3] = (R[1, 2] + R[2, 1]) / s
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q[0] = (R[1, 0] - R[0, 1]) / s
        q[1] = (R[0, 2] + R[2, 0]) / s
        q[2] = (R[1, 2] + R[2, 1]) / s
        q[3] = 0.25 * s
    return quat_normalize(q)


@jitted
def quat_from_rotvec(w):
    angle = np.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    q = np.empty(4)
    if angle < 1e-12:
        q[0] = 1.0
        q[1] = 0.5 * w[0]
        q[2] = 0.5 * w[1]
        q[3] = 0.5 * w[2]
        return quat_normalize(q)
    half = 0.5 * angle
    s = np.sin(half) / angle
    q[0] = np.cos(half)
    q[1] = w[0] * s
    q[2] = w[1] * s
    q[3] = w[2] * s
    return q


@jitted
def quat_to_rotvec(q):
    # Rotation vector of the shortest rotation represented by q
    qn = q.copy()
    if qn[0] < 0.0:
        qn = -qn
    sin_half = np.sqrt(qn[1] * qn[1] + qn[2] * qn[2] + qn[3] * qn[3])
    out = np.empty(3)
    if sin_half < 1e-12:
        out[0] = 2.0 * qn[1]
        out[1] = 2.0 * qn[2]
        out[2] = 2.0 * qn[3]
        return out
    w = min(max(qn[0], -1.0), 1.0)
    angle = 2.0 * np.arctan2(sin_half, w)
    scale = angle / sin_half
    out[0] = qn[1] * scale
    out[1] = qn[2] * scale
    out[2] = qn[3] * scale
    return out


@jitted
def quat_err_vec(q_des, q_meas):
    """World-frame rotation vector taking q_meas to q_des."""
    return quat_to_rotvec(quat_mul(q_des, quat_conj(q_meas)))


@jitted
def quat_slerp(q0, q1, u):
    # Shortest-arc spherical interpolation
    b = q1.copy()
    dot = q0[0] * b[0] + q0[1] * b[1] + q0[2] * b[2] + q0[3] * b[3]
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 1.0 - 1e-10:
        out = q0 + u * (b - q0)
        return quat_normalize(out)
    theta = np.arccos(min(dot, 1.0))
    s = np.sin(theta)
    a0 = np.sin((1.0 - u) * theta) / s
    a1 = np.sin(u * theta) / s
    return quat_normalize(a0 * q0 + a1 * b)


@jitted
def quat_from_yaw(yaw):
    q = np.empty(4)
    q[0] = np.cos(0.5 * yaw)
    q[1] = 0.0
    q[2] = 0.0
    q[3] = np.sin(0.5 * yaw)
    return q


@jitted
def quat_yaw(q):
    """Yaw (z-rotation) of the frame's x axis projected to the ground plane."""
    xw = quat_rotate(q, np.array([1.0, 0.0, 0.0]))
    return np.arctan2(xw[1], xw[0])


@jitted
def rot_axis_angle(axis, angle):
    # Rodrigues rotation about a unit axis
    c = np.cos(angle)
    s = np.sin(angle)
    t = 1.0 - c
    x, y, z = axis[0], axis[1], axis[2]
    R = np.empty((3, 3))
    R[0, 0] = c + x * x * t
    R[0, 1] = x * y * t - z * s
    R[0, 2] = x * z * t + y * s
    R[1, 0] = x * y * t + z * s
    R[1, 1] = c + y * y * t
    R[1, 2] = y * z * t - x * s
    R[2, 0] = x * z * t - y * s
    R[2, 1] = y * z * t + x * s
    R[2, 2] = c + z * z * t
    return R


@jitted
def skew(v):
    S = np.empty((3, 3))
    S[0, 0] = 0.0
    S[0, 1] = -v[2]
    S[0, 2] = v[1]
    S[1, 0] = v[2]
    S[1, 1] = 0.0
    S[1, 2] = -v[0]
    S[2, 0] = -v[1]
    S[2, 1] = v[0]
    S[2, 2] = 0.0
    return S
