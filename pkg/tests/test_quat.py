import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from locodesk import quat as Q

finite_angle = st.floats(-6.0, 6.0, allow_nan=False)


def rand_quat(rng):
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)


@st.composite
def quats(draw):
    comps = [draw(st.floats(-1.0, 1.0)) for _ in range(4)]
    v = np.array(comps)
    n = np.linalg.norm(v)
    if n < 1e-3:
        v = np.array([1.0, 0.0, 0.0, 0.0])
        n = 1.0
    return v / n


@st.composite
def vectors(draw):
    return np.array([draw(st.floats(-5.0, 5.0)) for _ in range(3)])


@given(quats(), quats(), quats())
@settings(max_examples=50, deadline=None)
def test_mul_associative(a, b, c):
    left = Q.quat_mul(Q.quat_mul(a, b), c)
    right = Q.quat_mul(a, Q.quat_mul(b, c))
    assert np.allclose(left, right, atol=1e-12)


@given(quats(), quats())
@settings(max_examples=50, deadline=None)
def test_mul_preserves_norm(a, b):
    assert abs(np.linalg.norm(Q.quat_mul(a, b)) - 1.0) < 1e-12


@given(quats(), vectors())
@settings(max_examples=50, deadline=None)
def test_rotate_matches_matrix(q, v):
    assert np.allclose(Q.quat_rotate(q, v), Q.quat_to_mat(q) @ v, atol=1e-12)


@given(quats())
@settings(max_examples=50, deadline=None)
def test_matrix_round_trip(q):
    R = Q.quat_to_mat(q)
    q2 = Q.mat_to_quat(R)
    assert np.allclose(Q.quat_to_mat(q2), R, atol=1e-10)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(R) - 1.0) < 1e-12


@given(quats())
@settings(max_examples=50, deadline=None)
def test_conj_is_inverse(q):
    ident = Q.quat_mul(q, Q.quat_conj(q))
    assert np.allclose(ident, [1, 0, 0, 0], atol=1e-12)


@given(vectors())
@settings(max_examples=50, deadline=None)
def test_rotvec_round_trip(r):
    q = Q.quat_from_rotvec(r)
    r2 = Q.quat_to_rotvec(q)
    # same rotation even when the angle wraps past pi
    assert np.allclose(Q.quat_to_mat(Q.quat_from_rotvec(r2)), Q.quat_to_mat(q),
                       atol=1e-9)
    assert np.linalg.norm(r2) <= np.pi + 1e-9


def test_rotvec_small_angle():
    r = np.array([1e-9, -2e-9, 0.5e-9])
    q = Q.quat_from_rotvec(r)
    assert np.allclose(Q.quat_to_rotvec(q), r, rtol=1e-6, atol=1e-15)


@given(quats(), quats(), st.floats(0.0, 1.0))
@settings(max_examples=50, deadline=None)
def test_slerp_endpoints_and_unit(a, b, t):
    s = Q.quat_slerp(a, b, t)
    assert abs(np.linalg.norm(s) - 1.0) < 1e-9
    s0 = Q.quat_slerp(a, b, 0.0)
    s1 = Q.quat_slerp(a, b, 1.0)
    assert np.allclose(Q.quat_to_mat(s0), Q.quat_to_mat(a), atol=1e-9)
    assert np.allclose(Q.quat_to_mat(s1), Q.quat_to_mat(b), atol=1e-9)


def test_slerp_halves_angle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = rand_quat(rng)
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        ang = rng.uniform(0.1, 2.5)
        b = Q.quat_mul(Q.quat_from_rotvec(axis * ang), a)
        mid = Q.quat_slerp(a, b, 0.5)
        expect = Q.quat_mul(Q.quat_from_rotvec(axis * ang / 2), a)
        assert np.allclose(Q.quat_to_mat(mid), Q.quat_to_mat(expect), atol=1e-9)


@given(finite_angle)
@settings(max_examples=50, deadline=None)
def test_yaw_round_trip(yaw):
    wrapped = np.arctan2(np.sin(yaw), np.cos(yaw))
    assert abs(Q.quat_yaw(Q.quat_from_yaw(yaw)) - wrapped) < 1e-12


def test_err_vec_properties():
    rng = np.random.default_rng(5)
    for _ in range(20):
        q = rand_quat(rng)
        assert np.allclose(Q.quat_err_vec(q, q), 0.0, atol=1e-12)
        d = rng.standard_normal(3) * 1e-6
        q2 = Q.quat_mul(Q.quat_from_rotvec(d), q)
        # for small offsets the error vector is the world-frame rotation
        assert np.allclose(Q.quat_err_vec(q2, q), d, rtol=1e-5, atol=1e-14)


def test_axis_angle_matches_rotvec():
    rng = np.random.default_rng(7)
    for _ in range(20):
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        ang = rng.uniform(-3, 3)
        R1 = Q.rot_axis_angle(axis, ang)
        R2 = Q.quat_to_mat(Q.quat_from_rotvec(axis * ang))
        assert np.allclose(R1, R2, atol=1e-12)
