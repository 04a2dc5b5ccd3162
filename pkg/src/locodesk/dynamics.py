"""Rigid-body dynamics: joint-space mass matrix, bias forces, integration.

Generalized velocity layout for a floating-base model:
``v = [base origin linear velocity (world), base angular velocity (world),
joint rates]``.  The mass matrix and force vectors all live in these
coordinates.  Fixed-base models drop the first six rows.
"""

from __future__ import annotations

import numpy as np

from .accel import jitted
from .kinematics import (_cross, com_chain, fk_links, kinetic_energy,
                         link_velocities)
from .model import ModelError, RobotModel, RobotState
from .quat import quat_from_rotvec, quat_mul, quat_normalize

GRAVITY = 9.81


@jitted
def rnea(parent, jnt_dof, jnt_axis, jnt_pos, jnt_quat, mass, com, inertia,
         floating, n_v, q, v, vd, gravity):
    """Inverse dynamics: generalized forces for motion ``(q, v, vd)``.

    Returns ``A(q) vd + b(q, v) + g(q)`` (gravity included when
    ``gravity`` > 0, via the equivalent upward base acceleration).
    """
    n = parent.shape[0]
    R, p, axis_w = fk_links(parent, jnt_dof, jnt_axis, jnt_pos, jnt_quat,
                            floating, q)
    w, vp = link_velocities(parent, jnt_dof, floating, p, axis_w, v)

    alpha = np.zeros((n, 3))
    ap = np.zeros((n, 3))
    if floating:
        ap[0] = vd[0:3]
        alpha[0] = vd[3:6]
    ap[0, 2] += gravity
    for i in range(1, n):
        par = parent[i]
        dof = jnt_dof[i]
        r = p[i] - p[par]
        alpha[i] = alpha[par] + axis_w[i] * vd[dof] + _cross(w[par], axis_w[i] * v[dof])
        ap[i] = ap[par] + _cross(alpha[par], r) + _cross(w[par], _cross(w[par], r))

    # per-body inertial wrench: force, and moment about the link origin
    f = np.empty((n, 3))
    m_o = np.empty((n, 3))
    for i in range(n):
        rc = R[i] @ com[i]
        ac = ap[i] + _cross(alpha[i], rc) + _cross(w[i], _cross(w[i], rc))
        Fi = mass[i] * ac
        Iw = R[i] @ inertia[i] @ R[i].T
        f[i] = Fi
        m_o[i] = Iw @ alpha[i] + _cross(w[i], Iw @ w[i]) + _cross(rc, Fi)

    tau = np.zeros(n_v)
    for i in range(n - 1, 0, -1):
        par = parent[i]
        f[par] += f[i]
        m_o[par] += m_o[i] + _cross(p[i] - p[par], f[i])
        tau[jnt_dof[i]] = axis_w[i] @ m_o[i]
    if floating:
        tau[0:3] = f[0]
        tau[3:6] = m_o[0]
    return tau


@jitted
def _axis_shift(m, d):
    """Parallel-axis inertia increment for mass ``m`` displaced by ``d``."""
    out = np.empty((3, 3))
    d2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    for r in range(3):
        for c in range(3):
            out[r, c] = -m * d[r] * d[c]
        out[r, r] += m * d2
    return out


@jitted
def crba(parent, jnt_dof, jnt_axis, jnt_pos, jnt_quat, mass, com, inertia,
         floating, n_v, q):
    """Joint-space mass matrix by composite-body accumulation."""
    n = parent.shape[0]
    R, p, _axis = fk_links(parent, jnt_dof, jnt_axis, jnt_pos, jnt_quat,
                           floating, q)
    axis_w = _axis

    Mc = np.empty(n)
    Cc = np.empty((n, 3))
    Ic = np.empty((n, 3, 3))
    for i in range(n):
        Mc[i] = mass[i]
        Cc[i] = p[i] + R[i] @ com[i]
        Ic[i] = R[i] @ inertia[i] @ R[i].T
    for i in range(n - 1, 0, -1):
        par = parent[i]
        m_new = Mc[par] + Mc[i]
        c_new = (Mc[par] * Cc[par] + Mc[i] * Cc[i]) / m_new
        I_new = Ic[par] + _axis_shift(Mc[par], Cc[par] - c_new)
        I_new = I_new + Ic[i] + _axis_shift(Mc[i], Cc[i] - c_new)
        Mc[par] = m_new
        Cc[par] = c_new
        Ic[par] = I_new

    A = np.zeros((n_v, n_v))
    for i in range(1, n):
        k = jnt_dof[i]
        a = axis_w[i]
        d = Cc[i] - p[i]
        F = Mc[i] * _cross(a, d)
        N = Ic[i] @ a + _cross(d, F)
        A[k, k] = a @ N
        j = parent[i]
        while j > 0:
            dof = jnt_dof[j]
            val = axis_w[j] @ (N + _cross(p[i] - p[j], F))
            A[dof, k] = val
            A[k, dof] = val
            j = parent[j]
        if floating:
            Np0 = N + _cross(p[i] - p[0], F)
            for r in range(3):
                A[r, k] = F[r]
                A[k, r] = F[r]
                A[3 + r, k] = Np0[r]
                A[k, 3 + r] = Np0[r]
    if floating:
        d = Cc[0] - p[0]
        for m in range(3):
            e = np.zeros(3)
            e[m] = 1.0
            F = Mc[0] * e
            N = _cross(d, F)
            for r in range(3):
                A[r, m] = F[r]
                A[3 + r, m] = N[r]
        for m in range(3):
            e = np.zeros(3)
            e[m] = 1.0
            F = Mc[0] * _cross(e, d)
            N = Ic[0] @ e + _cross(d, F)
            for r in range(3):
                A[r, 3 + m] = F[r]
                A[3 + r, 3 + m] = N[r]
    return A


def _arrays(model: RobotModel):
    a = model.arrays
    return (a.parent, a.jnt_dof, a.jnt_axis, a.jnt_pos, a.jnt_quat, a.mass,
            a.com, a.inertia, a.floating, a.n_v)


def mass_matrix(model: RobotModel, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_q,):
        raise ModelError(f"q has dimension {q.shape}, model expects ({model.n_q},)")
    return crba(*_arrays(model), q)


def inverse_dynamics(model: RobotModel, q: np.ndarray, v: np.ndarray,
                     vd: np.ndarray, gravity: float = GRAVITY) -> np.ndarray:
    return rnea(*_arrays(model), np.asarray(q, float), np.asarray(v, float),
                np.asarray(vd, float), gravity)


def bias_forces(model: RobotModel, q: np.ndarray, v: np.ndarray,
                gravity: float = GRAVITY) -> np.ndarray:
    """Coriolis/centrifugal plus gravity terms ``b(q, v) + g(q)``."""
    zero = np.zeros(model.n_v)
    return rnea(*_arrays(model), np.asarray(q, float), np.asarray(v, float),
                zero, gravity)


def gravity_forces(model: RobotModel, q: np.ndarray,
                   gravity: float = GRAVITY) -> np.ndarray:
    zero = np.zeros(model.n_v)
    return rnea(*_arrays(model), np.asarray(q, float), zero, zero, gravity)


def total_energy(model: RobotModel, state: RobotState,
                 gravity: float = GRAVITY) -> float:
    a = model.arrays
    R, p, axis_w = fk_links(a.parent, a.jnt_dof, a.jnt_axis, a.jnt_pos,
                            a.jnt_quat, a.floating, state.q)
    w, vp = link_velocities(a.parent, a.jnt_dof, a.floating, p, axis_w, state.v)
    c_links, com, m_tot = com_chain(a.mass, a.com, R, p)
    T = kinetic_energy(a.mass, a.inertia, R, p, c_links, w, vp)
    return T + m_tot * gravity * com[2]


@jitted
def integrate_qv(q, v_new, dt, floating):
    """Advance configuration by one step of the new velocity (semi-implicit)."""
    q_new = q.copy()
    if floating:
        q_new[0:3] = q[0:3] + v_new[0:3] * dt
        dq = quat_from_rotvec(v_new[3:6] * dt)
        q_new[3:7] = quat_normalize(quat_mul(dq, q[3:7]))
        q_new[7:] = q[7:] + v_new[6:] * dt
    else:
        q_new[:] = q + v_new * dt
    return q_new


def integrate_state(model: RobotModel, state: RobotState, vdot: np.ndarray,
                    dt: float) -> RobotState:
    v_new = state.v + np.asarray(vdot, float) * dt
    q_new = integrate_qv(state.q, v_new, dt, model.floating)
    return RobotState(q=q_new, v=v_new)
