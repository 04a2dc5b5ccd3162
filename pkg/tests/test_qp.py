import numpy as np
import pytest

from locodesk import qp as Q


def random_qp(rng, n=5, m_in=4, with_eq=True, with_bounds=False, scale=1.0):
    """Feasible bounded QP: a strictly feasible point is baked in."""
    B = rng.standard_normal((n, n))
    H = scale * (B.T @ B + 0.3 * np.eye(n))
    c = scale * rng.standard_normal(n)
    x_feas = rng.standard_normal(n) * 0.5
    A_eq = b_eq = None
    if with_eq:
        A_eq = rng.standard_normal((1, n))
        b_eq = A_eq @ x_feas
    A_in = rng.standard_normal((m_in, n))
    b_in = A_in @ x_feas - rng.uniform(0.05, 1.0, m_in)
    lower = upper = None
    if with_bounds:
        lower = x_feas - rng.uniform(0.5, 2.0, n)
        upper = x_feas + rng.uniform(0.5, 2.0, n)
    return Q.QuadraticProgram(H=H, c=c, A_eq=A_eq, b_eq=b_eq,
                              A_in=A_in, b_in=b_in, lower=lower, upper=upper)


def fold_inequalities(qp):
    """Test-side fold of bounds into rows (independent of solver internals)."""
    rows = [qp.A_in]
    rhs = [qp.b_in]
    n = qp.n
    for i in range(n):
        if np.isfinite(qp.lower[i]):
            e = np.zeros(n)
            e[i] = 1.0
            rows.append(e[None, :])
            rhs.append([qp.lower[i]])
        if np.isfinite(qp.upper[i]):
            e = np.zeros(n)
            e[i] = -1.0
            rows.append(e[None, :])
            rhs.append([-qp.upper[i]])
    return np.vstack(rows), np.concatenate(rhs)


def active_set_oracle(qp):
    """Try every subset of inequality rows as active; keep the best feasible."""
    Ai, bi = fold_inequalities(qp)
    m = bi.shape[0]
    n = qp.n
    best_obj = np.inf
    best_x = None
    for mask in range(2 ** m):
        act = [i for i in range(m) if (mask >> i) & 1]
        A = np.vstack([qp.A_eq, Ai[act]])
        b = np.concatenate([qp.b_eq, bi[act]])
        k = A.shape[0]
        K = np.zeros((n + k, n + k))
        K[:n, :n] = qp.H
        K[:n, n:] = A.T
        K[n:, :n] = A
        rhs = np.concatenate([-qp.c, b])
        sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
        if np.linalg.norm(K @ sol - rhs) > 1e-7 * (1 + np.linalg.norm(rhs)):
            continue
        x = sol[:n]
        if m and (Ai @ x - bi).min() < -1e-9:
            continue
        obj = qp.objective(x)
        if obj < best_obj - 1e-12:
            best_obj = obj
            best_x = x
    return best_x, best_obj


def test_unconstrained_identity():
    qp = Q.QuadraticProgram(H=np.eye(3), c=np.zeros(3))
    sol = Q.solve(qp)
    assert sol.status == "optimal"
    assert np.allclose(sol.x, 0.0, atol=1e-9)


def test_minimum_norm_on_simplex_plane():
    qp = Q.QuadraticProgram(H=np.eye(2), c=np.zeros(2),
                            A_eq=np.array([[1.0, 1.0]]), b_eq=np.array([1.0]))
    sol = Q.solve(qp)
    assert sol.status == "optimal"
    assert np.allclose(sol.x, [0.5, 0.5], atol=1e-9)


def test_kkt_equality_examples():
    x, lam = Q.solve_kkt_equality(np.eye(2), np.zeros(2),
                                  np.array([[1.0, 0.0]]), np.array([1.0]))
    assert np.allclose(x, [1.0, 0.0], atol=1e-12)
    x, lam = Q.solve_kkt_equality(np.diag([1.0, 2.0]), np.array([-1.0, -1.0]),
                                  np.zeros((0, 2)), np.zeros(0))
    assert np.allclose(x, [1.0, 0.5], atol=1e-12)


def test_kkt_equality_random_residuals():
    rng = np.random.default_rng(67)
    for _ in range(50):
        n = rng.integers(2, 8)
        m = int(rng.integers(0, n))
        B = rng.standard_normal((n, n))
        H = B.T @ B + 0.2 * np.eye(n)
        c = rng.standard_normal(n)
        A = rng.standard_normal((m, n))
        b = A @ rng.standard_normal(n)
        x, lam = Q.solve_kkt_equality(H, c, A, b)
        assert np.abs(H @ x + c + A.T @ lam).max() <= 1e-10
        if m:
            assert np.abs(A @ x - b).max() <= 1e-10


def test_kkt_equality_singular_raises():
    with pytest.raises(Q.QPError):
        Q.solve_kkt_equality(np.zeros((2, 2)), np.array([1.0, 0.0]),
                             np.zeros((0, 2)), np.zeros(0))


@pytest.mark.parametrize("with_bounds", [False, True])
def test_random_qps_match_active_set_oracle(with_bounds):
    rng = np.random.default_rng(71 if with_bounds else 73)
    for _ in range(60):
        # keep the folded row count small: the oracle cost is 2^rows
        if with_bounds:
            qp = random_qp(rng, n=3, m_in=2, with_bounds=True)
        else:
            qp = random_qp(rng)
        sol = Q.solve(qp)
        assert sol.status == "optimal", sol.residuals
        res = Q.kkt_residuals(qp, sol)
        assert max(res.values()) <= 1e-8
        x_ref, obj_ref = active_set_oracle(qp)
        assert x_ref is not None
        assert abs(qp.objective(sol.x) - obj_ref) <= 1e-6
        # monotone objective: never worse than any oracle-feasible point
        assert qp.objective(sol.x) <= obj_ref + 1e-8


def test_scaling_robustness():
    rng = np.random.default_rng(79)
    for _ in range(20):
        qp = random_qp(rng)
        scaled = Q.QuadraticProgram(H=1e3 * qp.H, c=1e3 * qp.c,
                                    A_eq=qp.A_eq, b_eq=qp.b_eq,
                                    A_in=qp.A_in, b_in=qp.b_in)
        x1 = Q.solve(qp).x
        x2 = Q.solve(scaled).x
        assert np.linalg.norm(x1 - x2) <= 1e-6 * max(1.0, np.linalg.norm(x1))


def test_determinism():
    rng = np.random.default_rng(83)
    qp = random_qp(rng)
    a = Q.solve(qp)
    b = Q.solve(qp)
    assert np.array_equal(a.x, b.x)
    assert a.status == b.status and a.iterations == b.iterations


def test_infeasible_bounds():
    qp = Q.QuadraticProgram(H=np.eye(1), c=np.zeros(1),
                            A_in=np.array([[1.0], [-1.0]]),
                            b_in=np.array([1.0, 0.0]))
    sol = Q.solve(qp)
    assert sol.status == "infeasible"


def test_infeasible_equalities():
    qp = Q.QuadraticProgram(H=np.eye(2), c=np.zeros(2),
                            A_eq=np.array([[1.0, 0.0], [1.0, 0.0]]),
                            b_eq=np.array([0.0, 1.0]))
    sol = Q.solve(qp)
    assert sol.status != "optimal"


def test_iteration_cap_reports_best_iterate():
    rng = np.random.default_rng(89)
    qp = random_qp(rng)
    sol = Q.solve(qp, max_iter=1)
    assert sol.status in ("max-iterations", "infeasible")
    assert sol.x.shape == (qp.n,)


def test_invalid_inputs_rejected():
    with pytest.raises(Q.QPError):
        Q.QuadraticProgram(H=np.array([[1.0, 0.5], [0.0, 1.0]]), c=np.zeros(2))
    with pytest.raises(Q.QPError):
        Q.QuadraticProgram(H=np.eye(2), c=np.zeros(3))
    with pytest.raises(Q.QPError):
        Q.QuadraticProgram(H=np.eye(2), c=np.zeros(2),
                           lower=np.array([1.0, 0.0]),
                           upper=np.array([0.0, 1.0]))


def test_debug_dump_round_trip(tmp_path):
    rng = np.random.default_rng(97)
    qp = random_qp(rng, with_bounds=True)
    path = tmp_path / "qp.json"
    sol = Q.solve(qp, debug_dump=str(path))
    import json
    payload = json.loads(path.read_text())
    qp2 = Q.QuadraticProgram.from_dict(payload["qp"])
    sol2 = Q.solve(qp2)
    assert np.allclose(sol.x, sol2.x, atol=1e-12)
    assert payload["status"] == sol.status
