"""Forward kinematics, frame Jacobians, and center-of-mass quantities.

All spatial vectors are stacked ``[linear; angular]`` and expressed in world
coordinates.  Frame Jacobians satisfy ``[v_frame; w_frame] = J @ v`` where the
linear rows give the velocity of the frame origin (a material point of its
link).
"""

from __future__ import annotations

import numpy as np

from .accel import jitted
from .model import ModelError, RobotModel, RobotState
from .quat import mat_to_quat, quat_to_mat, rot_axis_angle

_EYE3 = np.eye(3)


@jitted
def _cross(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


@jitted
def fk_links(parent, jnt_dof, jnt_axis, jnt_pos, jnt_quat, floating, q):
    """World rotation, origin position, and world joint axis per link."""
    n = parent.shape[0]
    R = np.empty((n, 3, 3))
    p = np.empty((n, 3))
    axis_w = np.zeros((n, 3))
    if floating:
        R[0] = quat_to_mat(q[3:7])
        p[0] = q[0:3]
    else:
        R[0] = np.eye(3)
        p[0] = np.zeros(3)
    for i in range(1, n):
        par = parent[i]
        dof = jnt_dof[i]
        qi = dof + 1 if floating else dof
        ang = q[qi]
        R0 = R[par] @ quat_to_mat(jnt_quat[i])
        R[i] = R0 @ rot_axis_angle(jnt_axis[i], ang)
        p[i] = p[par] + R[par] @ jnt_pos[i]
        axis_w[i] = R0 @ jnt_axis[i]
    return R, p, axis_w


@jitted
def link_velocities(parent, jnt_dof, floating, p, axis_w, v):
    """Angular velocity and origin-point velocity of every link."""
    n = parent.shape[0]
    w = np.zeros((n, 3))
    vp = np.zeros((n, 3))
    if floating:
        vp[0] = v[0:3]
        w[0] = v[3:6]
    for i in range(1, n):
        par = parent[i]
        qd = v[jnt_dof[i]]
        w[i] = w[par] + axis_w[i] * qd
        vp[i] = vp[par] + _cross(w[par], p[i] - p[par])
    return w, vp


@jitted
def link_accel_bias(parent, jnt_dof, floating, p, axis_w, v, w):
    """Link accelerations with zero generalized acceleration (drift terms)."""
    n = parent.shape[0]
    alpha = np.zeros((n, 3))
    ap = np.zeros((n, 3))
    for i in range(1, n):
        par = parent[i]
        qd = v[jnt_dof[i]]
        r = p[i] - p[par]
        alpha[i] = alpha[par] + _cross(w[par], axis_w[i] * qd)
        ap[i] = ap[par] + _cross(alpha[par], r) + _cross(w[par], _cross(w[par], r))
    return alpha, ap


@jitted
def point_jacobian(parent, jnt_dof, floating, n_v, p, axis_w, link, point):
    """6 x n_v Jacobian of a material point of ``link`` located at ``point``."""
    J = np.zeros((6, n_v))
    if floating:
        r = point - p[0]
        for k in range(3):
            J[k, k] = 1.0
            J[3 + k, 3 + k] = 1.0
        # linear effect of base angular velocity: e_k x r
        J[0, 4] = r[2]
        J[0, 5] = -r[1]
        J[1, 3] = -r[2]
        J[1, 5] = r[0]
        J[2, 3] = r[1]
        J[2, 4] = -r[0]
    i = link
    while i > 0:
        dof = jnt_dof[i]
        lin = _cross(axis_w[i], point - p[i])
        for k in range(3):
            J[k, dof] = lin[k]
            J[3 + k, dof] = axis_w[i][k]
        i = parent[i]
    return J


@jitted
def point_drift(p, w, alpha, ap, link, point):
    """Material acceleration of the point under zero generalized acceleration."""
    r = point - p[link]
    out = np.empty(6)
    lin = ap[link] + _cross(alpha[link], r) + _cross(w[link], _cross(w[link], r))
    out[0:3] = lin
    out[3:6] = alpha[link]
    return out


@jitted
def com_chain(mass, com, R, p):
    """Per-link world COM positions and the total COM."""
    n = mass.shape[0]
    c = np.empty((n, 3))
    total = np.zeros(3)
    m_tot = 0.0
    for i in range(n):
        c[i] = p[i] + R[i] @ com[i]
        total += mass[i] * c[i]
        m_tot += mass[i]
    return c, total / m_tot, m_tot


@jitted
def com_jacobian_kernel(parent, jnt_dof, floating, n_v, p, axis_w, mass, c_links):
    n = mass.shape[0]
    J = np.zeros((3, n_v))
    m_tot = 0.0
    for i in range(n):
        Ji = point_jacobian(parent, jnt_dof, floating, n_v, p, axis_w, i, c_links[i])
        J += mass[i] * Ji[0:3]
        m_tot += mass[i]
    return J / m_tot


@jitted
def com_drift_kernel(parent, p, w, alpha, ap, mass, c_links):
    n = mass.shape[0]
    acc = np.zeros(3)
    m_tot = 0.0
    for i in range(n):
        acc += mass[i] * point_drift(p, w, alpha, ap, i, c_links[i])[0:3]
        m_tot += mass[i]
    return acc / m_tot


@jitted
def spatial_momentum(mass, inertia, R, p, c_links, w, vp):
    """Linear momentum and angular momentum about the world origin."""
    n = mass.shape[0]
    P = np.zeros(3)
    L = np.zeros(3)
    for i in range(n):
        vc = vp[i] + _cross(w[i], c_links[i] - p[i])
        Iw = R[i] @ inertia[i] @ R[i].T
        P += mass[i] * vc
        L += Iw @ w[i] + _cross(c_links[i], mass[i] * vc)
    return P, L


@jitted
def kinetic_energy(mass, inertia, R, p, c_links, w, vp):
    n = mass.shape[0]
    T = 0.0
    for i in range(n):
        vc = vp[i] + _cross(w[i], c_links[i] - p[i])
        Iw = R[i] @ inertia[i] @ R[i].T
        T += 0.5 * mass[i] * (vc @ vc) + 0.5 * (w[i] @ (Iw @ w[i]))
    return T


# ---------------------------------------------------------------------------
# model-level wrappers


def _fk(model: RobotModel, q: np.ndarray):
    a = model.arrays
    return fk_links(a.parent, a.jnt_dof, a.jnt_axis, a.jnt_pos, a.jnt_quat,
                    a.floating, q)


def forward_kinematics(model: RobotModel, q: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Pose of every named frame: ``{name: (position, quaternion wxyz)}``."""
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_q,):
        raise ModelError(f"q has dimension {q.shape}, model expects ({model.n_q},)")
    a = model.arrays
    R, p, _ = _fk(model, q)
    out = {}
    for k, name in enumerate(model.frame_names):
        li = a.frame_link[k]
        Rf = R[li] @ quat_to_mat(a.frame_quat[k])
        pf = p[li] + R[li] @ a.frame_pos[k]
        out[name] = (pf, mat_to_quat(Rf))
    return out


def frame_pose(model: RobotModel, q: np.ndarray, frame: str) -> tuple[np.ndarray, np.ndarray]:
    k = model.frame_id(frame)
    a = model.arrays
    R, p, _ = _fk(model, np.asarray(q, dtype=float))
    li = a.frame_link[k]
    Rf = R[li] @ quat_to_mat(a.frame_quat[k])
    pf = p[li] + R[li] @ a.frame_pos[k]
    return pf, mat_to_quat(Rf)


def frame_jacobian(model: RobotModel, state: RobotState, frame: str) -> np.ndarray:
    k = model.frame_id(frame)
    a = model.arrays
    R, p, axis_w = _fk(model, state.q)
    li = a.frame_link[k]
    point = p[li] + R[li] @ a.frame_pos[k]
    return point_jacobian(a.parent, a.jnt_dof, a.floating, a.n_v, p, axis_w,
                          li, point)


def jacobian_dot_qdot(model: RobotModel, state: RobotState, frame: str) -> np.ndarray:
    k = model.frame_id(frame)
    a = model.arrays
    R, p, axis_w = _fk(model, state.q)
    w, vp = link_velocities(a.parent, a.jnt_dof, a.floating, p, axis_w, state.v)
    alpha, ap = link_accel_bias(a.parent, a.jnt_dof, a.floating, p, axis_w, state.v, w)
    li = a.frame_link[k]
    point = p[li] + R[li] @ a.frame_pos[k]
    return point_drift(p, w, alpha, ap, li, point)


def frame_velocity(model: RobotModel, state: RobotState, frame: str) -> np.ndarray:
    k = model.frame_id(frame)
    a = model.arrays
    R, p, axis_w = _fk(model, state.q)
    w, vp = link_velocities(a.parent, a.jnt_dof, a.floating, p, axis_w, state.v)
    li = a.frame_link[k]
    point = p[li] + R[li] @ a.frame_pos[k]
    out = np.empty(6)
    out[0:3] = vp[li] + np.cross(w[li], point - p[li])
    out[3:6] = w[li]
    return out


def com_position(model: RobotModel, q: np.ndarray) -> np.ndarray:
    a = model.arrays
    R, p, _ = _fk(model, np.asarray(q, dtype=float))
    _, com, _ = com_chain(a.mass, a.com, R, p)
    return com


def com_velocity(model: RobotModel, state: RobotState) -> np.ndarray:
    return com_jacobian(model, state) @ state.v


def com_jacobian(model: RobotModel, state: RobotState) -> np.ndarray:
    a = model.arrays
    R, p, axis_w = _fk(model, state.q)
    c_links, _, _ = com_chain(a.mass, a.com, R, p)
    return com_jacobian_kernel(a.parent, a.jnt_dof, a.floating, a.n_v, p,
                               axis_w, a.mass, c_links)


def com_drift(model: RobotModel, state: RobotState) -> np.ndarray:
    a = model.arrays
    R, p, axis_w = _fk(model, state.q)
    w, vp = link_velocities(a.parent, a.jnt_dof, a.floating, p, axis_w, state.v)
    alpha, ap = link_accel_bias(a.parent, a.jnt_dof, a.floating, p, axis_w, state.v, w)
    c_links, _, _ = com_chain(a.mass, a.com, R, p)
    return com_drift_kernel(a.parent, p, w, alpha, ap, a.mass, c_links)


def resolve_point_ik(model: RobotModel, frame: str, target: np.ndarray,
                     q: np.ndarray, dofs: np.ndarray, iters: int = 20,
                     damping: float = 0.05, step_limit: float = 0.3,
                     tol: float = 1e-8) -> tuple[np.ndarray, float]:
    """Damped least-squares position IK over a subset of joints.

    Iterates from configuration ``q`` (left unmodified), adjusting only the
    single-dof joints listed in ``dofs`` (velocity-space indices), to bring
    the origin of ``frame`` to ``target``.  Damping keeps the update bounded
    through fold singularities where the plain pseudoinverse blows up.
    Returns the adjusted joint values (in ``dofs`` order) and the remaining
    position error norm.
    """
    a = model.arrays
    k = model.frame_id(frame)
    li = int(a.frame_link[k])
    dofs = np.asarray(dofs, dtype=np.int64)
    qpos = dofs + 1 if a.floating else dofs.copy()
    target = np.asarray(target, dtype=float).reshape(3)
    q = np.array(q, dtype=float)
    lam2 = damping * damping
    err = np.inf
    for _ in range(iters):
        R, p, axis_w = fk_links(a.parent, a.jnt_dof, a.jnt_axis, a.jnt_pos,
                                a.jnt_quat, a.floating, q)
        point = p[li] + R[li] @ a.frame_pos[k]
        e = target - point
        err = float(np.linalg.norm(e))
        if err < tol:
            break
        J = point_jacobian(a.parent, a.jnt_dof, a.floating, a.n_v, p,
                           axis_w, li, point)[0:3][:, dofs]
        dq = J.T @ np.linalg.solve(J @ J.T + lam2 * np.eye(3), e)
        step = np.abs(dq).max()
        if step > step_limit:
            dq *= step_limit / step
        q[qpos] += dq
    return q[qpos], err
