import numpy as np
import pytest

from locodesk import kinematics as K
from locodesk import quat as Q
from locodesk.model import RobotState

from conftest import perturb_q, random_state

H = 1e-6


def fd_frame_jacobian(model, q, frame):
    """Central-difference Jacobian in the same tangent coordinates."""
    J = np.zeros((6, model.n_v))
    for i in range(model.n_v):
        e = np.zeros(model.n_v)
        e[i] = 1.0
        pp, qp = K.frame_pose(model, perturb_q(model, q, e, H), frame)
        pm, qm = K.frame_pose(model, perturb_q(model, q, -e, H), frame)
        J[0:3, i] = (pp - pm) / (2 * H)
        dq = Q.quat_mul(qp, Q.quat_conj(qm))
        J[3:6, i] = Q.quat_to_rotvec(dq) / (2 * H)
    return J


@pytest.mark.parametrize("fixture", ["pendulum", "double_pendulum",
                                     "floating_chain"])
def test_frame_jacobians_match_finite_differences(fixture, request):
    model = request.getfixturevalue(fixture)
    rng = np.random.default_rng(11)
    for _ in range(8):
        st = random_state(model, rng)
        for frame in model.frame_names:
            J = K.frame_jacobian(model, st, frame)
            Jfd = fd_frame_jacobian(model, st.q, frame)
            assert np.allclose(J, Jfd, atol=1e-5), frame


@pytest.mark.parametrize("fixture", ["double_pendulum", "floating_chain"])
def test_frame_velocity_equals_jacobian_times_v(fixture, request):
    model = request.getfixturevalue(fixture)
    rng = np.random.default_rng(13)
    for _ in range(10):
        st = random_state(model, rng)
        for frame in model.frame_names:
            J = K.frame_jacobian(model, st, frame)
            vel = K.frame_velocity(model, st, frame)
            assert np.allclose(vel, J @ st.v, atol=1e-12)


@pytest.mark.parametrize("fixture", ["double_pendulum", "floating_chain"])
def test_jacobian_dot_qdot_matches_finite_differences(fixture, request):
    model = request.getfixturevalue(fixture)
    rng = np.random.default_rng(17)
    h = 1e-6
    for _ in range(6):
        st = random_state(model, rng)
        for frame in model.frame_names:
            drift = K.jacobian_dot_qdot(model, st, frame)
            qp = perturb_q(model, st.q, st.v, h)
            qm = perturb_q(model, st.q, -st.v, h)
            Jp = K.frame_jacobian(model, RobotState(q=qp, v=st.v), frame)
            Jm = K.frame_jacobian(model, RobotState(q=qm, v=st.v), frame)
            fd = (Jp - Jm) @ st.v / (2 * h)
            assert np.allclose(drift, fd, atol=2e-5), frame


def test_com_jacobian_and_drift(floating_chain):
    model = floating_chain
    rng = np.random.default_rng(19)
    h = 1e-6
    for _ in range(6):
        st = random_state(model, rng)
        J = K.com_jacobian(model, st)
        Jfd = np.zeros((3, model.n_v))
        for i in range(model.n_v):
            e = np.zeros(model.n_v)
            e[i] = 1.0
            cp = K.com_position(model, perturb_q(model, st.q, e, h))
            cm = K.com_position(model, perturb_q(model, st.q, -e, h))
            Jfd[:, i] = (cp - cm) / (2 * h)
        assert np.allclose(J, Jfd, atol=1e-5)
        assert np.allclose(K.com_velocity(model, st), J @ st.v, atol=1e-12)

        qp = perturb_q(model, st.q, st.v, h)
        qm = perturb_q(model, st.q, -st.v, h)
        vp = K.com_velocity(model, RobotState(q=qp, v=st.v))
        vm = K.com_velocity(model, RobotState(q=qm, v=st.v))
        assert np.allclose(K.com_drift(model, st), (vp - vm) / (2 * h),
                           atol=2e-5)


def test_forward_kinematics_matches_frame_pose(floating_chain):
    model = floating_chain
    rng = np.random.default_rng(23)
    st = random_state(model, rng)
    table = K.forward_kinematics(model, st.q)
    assert set(table) == set(model.frame_names)
    for name in model.frame_names:
        p1, q1 = table[name]
        p2, q2 = K.frame_pose(model, st.q, name)
        assert np.allclose(p1, p2, atol=1e-14)
        assert np.allclose(Q.quat_to_mat(q1), Q.quat_to_mat(q2), atol=1e-14)


def test_base_jacobian_block_structure(floating_chain):
    model = floating_chain
    rng = np.random.default_rng(29)
    st = random_state(model, rng)
    frame = "hand"
    J = K.frame_jacobian(model, st, frame)
    pw, _ = K.frame_pose(model, st.q, frame)
    r = pw - st.q[0:3]
    assert np.allclose(J[0:3, 0:3], np.eye(3), atol=1e-14)
    assert np.allclose(J[0:3, 3:6], -Q.skew(r), atol=1e-12)
    assert np.allclose(J[3:6, 0:3], 0.0, atol=1e-14)
    assert np.allclose(J[3:6, 3:6], np.eye(3), atol=1e-14)


def test_pendulum_tip_closed_form(pendulum):
    l = 0.7
    for ang in (-1.0, -0.3, 0.0, 0.4, 1.2):
        p, _ = K.frame_pose(pendulum, np.array([ang]), "tip")
        expect = np.array([-l * np.sin(ang), 0.0, -l * np.cos(ang)])
        assert np.allclose(p, expect, atol=1e-14)
