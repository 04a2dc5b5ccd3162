"""Dense convex quadratic programming.

Problem form::

    minimize    0.5 x' H x + c' x
    subject to  A_eq x  = b_eq
                A_in x >= b_in
                lower <= x <= upper      (+-inf entries allowed)

The solver is a primal-dual interior-point method with Mehrotra
predictor-corrector steps.  Box bounds are folded into extra inequality rows
internally; reported bound multipliers are split back out.  A solution is
labelled ``optimal`` only when an independent residual check (a separate code
path from the solver) certifies every KKT residual at or below 1e-8.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .accel import jitted

KKT_TOL = 1e-8
_REG_H = 1e-9
_REG_EQ = 1e-11


class QPError(ValueError):
    pass


@dataclass
class QuadraticProgram:
    H: np.ndarray
    c: np.ndarray
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    A_in: np.ndarray | None = None
    b_in: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.ascontiguousarray(self.H, dtype=float)
        self.c = np.ascontiguousarray(self.c, dtype=float)
        n = self.c.shape[0]
        if self.H.shape != (n, n):
            raise QPError(f"H shape {self.H.shape} does not match c ({n},)")
        if not np.allclose(self.H, self.H.T, atol=1e-10):
            raise QPError("H must be symmetric within 1e-10")
        if (self.A_eq is None) != (self.b_eq is None):
            raise QPError("A_eq and b_eq must be given together")
        if (self.A_in is None) != (self.b_in is None):
            raise QPError("A_in and b_in must be given together")
        if self.A_eq is None:
            self.A_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0)
        if self.A_in is None:
            self.A_in = np.zeros((0, n))
            self.b_in = np.zeros(0)
        self.A_eq = np.ascontiguousarray(self.A_eq, dtype=float)
        self.b_eq = np.ascontiguousarray(self.b_eq, dtype=float)
        self.A_in = np.ascontiguousarray(self.A_in, dtype=float)
        self.b_in = np.ascontiguousarray(self.b_in, dtype=float)
        if self.A_eq.shape[1] != n or self.A_eq.shape[0] != self.b_eq.shape[0]:
            raise QPError("equality block dimensions inconsistent")
        if self.A_in.shape[1] != n or self.A_in.shape[0] != self.b_in.shape[0]:
            raise QPError("inequality block dimensions inconsistent")
        self.lower = (np.full(n, -np.inf) if self.lower is None
                      else np.asarray(self.lower, dtype=float))
        self.upper = (np.full(n, np.inf) if self.upper is None
                      else np.asarray(self.upper, dtype=float))
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise QPError("bound dimensions inconsistent")
        if np.any(self.lower > self.upper):
            raise QPError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.c @ x)

    def to_dict(self) -> dict:
        return {
            "H": self.H.tolist(), "c": self.c.tolist(),
            "A_eq": self.A_eq.tolist(), "b_eq": self.b_eq.tolist(),
            "A_in": self.A_in.tolist(), "b_in": self.b_in.tolist(),
            "lower": [None if not np.isfinite(v) else v for v in self.lower],
            "upper": [None if not np.isfinite(v) else v for v in self.upper],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuadraticProgram":
        def bound(vals, sign):
            return np.array([sign * np.inf if v is None else v for v in vals])
        return cls(H=np.array(d["H"]), c=np.array(d["c"]),
                   A_eq=np.array(d["A_eq"]), b_eq=np.array(d["b_eq"]),
                   A_in=np.array(d["A_in"]), b_in=np.array(d["b_in"]),
                   lower=bound(d["lower"], -1), upper=bound(d["upper"], +1))


@dataclass
class QPSolution:
    x: np.ndarray
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    lower_multipliers: np.ndarray
    upper_multipliers: np.ndarray
    status: str
    iterations: int
    residuals: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _ldl_solve(K: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve a symmetric indefinite system via an LDL' factorization."""
    L, Dmat, perm = scipy.linalg.ldl(K)
    Lp = L[perm]
    y = scipy.linalg.solve_triangular(Lp, rhs[perm], lower=True,
                                      unit_diagonal=True)
    # D is block diagonal with 1x1 / 2x2 blocks; solve it blockwise
    m = K.shape[0]
    z = np.empty_like(y)
    i = 0
    while i < m:
        if i + 1 < m and abs(Dmat[i + 1, i]) > 0:
            blk = Dmat[i:i + 2, i:i + 2]
            det = blk[0, 0] * blk[1, 1] - blk[0, 1] * blk[1, 0]
            if abs(det) < 1e-300:
                raise QPError("singular KKT system")
            z[i] = (blk[1, 1] * y[i] - blk[0, 1] * y[i + 1]) / det
            z[i + 1] = (-blk[1, 0] * y[i] + blk[0, 0] * y[i + 1]) / det
            i += 2
        else:
            if abs(Dmat[i, i]) < 1e-300:
                raise QPError("singular KKT system")
            z[i] = y[i] / Dmat[i, i]
            i += 1
    w = scipy.linalg.solve_triangular(Lp.T, z, lower=False, unit_diagonal=True)
    out = np.empty_like(w)
    out[perm] = w
    return out


def solve_kkt_equality(H: np.ndarray, c: np.ndarray, A_eq: np.ndarray,
                       b_eq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Stationary point of an equality-constrained QP.

    Returns ``(x, lam)`` with ``H x + c + A_eq' lam = 0`` and
    ``A_eq x = b_eq``.
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    A_eq = np.asarray(A_eq, dtype=float).reshape(-1, c.shape[0])
    b_eq = np.asarray(b_eq, dtype=float)
    n, m = c.shape[0], b_eq.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = H
    K[:n, n:] = A_eq.T
    K[n:, :n] = A_eq
    rhs = np.concatenate([-c, b_eq])
    sol = _ldl_solve(K, rhs)
    x, lam = sol[:n], sol[n:]
    res = max(np.abs(H @ x + c + A_eq.T @ lam).max(initial=0.0),
              np.abs(A_eq @ x - b_eq).max(initial=0.0))
    scale = 1.0 + np.abs(H).max(initial=0.0) + np.abs(c).max(initial=0.0) \
        + np.abs(b_eq).max(initial=0.0)
    if not np.isfinite(res) or res > 1e-8 * scale:
        raise QPError("KKT system is singular or inconsistent")
    return x, lam


@jitted
def _ip_core(H, c, Ae, be, Ai, bi, max_iter):
    """Interior-point iteration on the folded problem.

    Works with the sign-flipped equality multiplier ``u = -y`` so the reduced
    KKT matrix stays symmetric; returns (x, y, z, s, iterations, stalled)
    where y are equality and z the nonnegative inequality multipliers, s the
    inequality slacks.
    """
    n = c.shape[0]
    me = be.shape[0]
    mi = bi.shape[0]
    # regularization enters only the factorized KKT blocks; residuals are
    # measured against the true objective
    Hr = H + _REG_H * np.eye(n)
    AeT = np.ascontiguousarray(Ae.T)
    AiT = np.ascontiguousarray(Ai.T)

    # starting point from the equality-only system
    K = np.zeros((n + me, n + me))
    K[:n, :n] = Hr
    for r in range(me):
        for cc in range(n):
            K[cc, n + r] = Ae[r, cc]
            K[n + r, cc] = Ae[r, cc]
        K[n + r, n + r] = -_REG_EQ
    rhs0 = np.concatenate((-c, be))
    sol0 = np.linalg.solve(K, rhs0)
    x = sol0[:n]
    u = sol0[n:]
    if mi == 0:
        return x, -u, np.zeros(0), np.zeros(0), 1, False

    s = Ai @ x - bi
    for i in range(mi):
        if s[i] < 1.0:
            s[i] = 1.0
    z = np.ones(mi)

    iters = 0
    stalled = False
    last_err = 1e308
    stall_count = 0
    for it in range(max_iter):
        iters = it + 1
        r_d = H @ x + c - AiT @ z
        if me > 0:
            r_d = r_d + AeT @ u
        r_i = Ai @ x - s - bi
        mu = (s @ z) / mi
        err = max(np.abs(r_d).max(), mu)
        err = max(err, np.abs(r_i).max())
        r_e = np.zeros(me)
        if me > 0:
            r_e = Ae @ x - be
            err = max(err, np.abs(r_e).max())
        scale = 1.0 + np.abs(c).max()
        if err <= 1e-11 * scale:
            break
        if err > 0.95 * last_err:
            stall_count += 1
            if stall_count >= 8:
                stalled = True
                break
        else:
            stall_count = 0
        last_err = min(last_err, err)
        if np.abs(z).max() > 1e12:
            stalled = True
            break

        zs = z / s
        K = np.zeros((n + me, n + me))
        K[:n, :n] = Hr + (AiT * zs) @ Ai
        for r in range(me):
            for cc in range(n):
                K[cc, n + r] = Ae[r, cc]
                K[n + r, cc] = Ae[r, cc]
            K[n + r, n + r] = -_REG_EQ
        if not np.all(np.isfinite(K)):
            stalled = True
            break

        # affine predictor
        r_sz = s * z
        rhs = np.empty(n + me)
        rhs[:n] = -(r_d + AiT @ (zs * r_i) + AiT @ (r_sz / s))
        rhs[n:] = -r_e
        if not np.all(np.isfinite(rhs)):
            stalled = True
            break
        step = np.linalg.solve(K, rhs)
        dx = step[:n]
        du = step[n:]
        ds = Ai @ dx + r_i
        dz = -(r_sz / s) - zs * ds

        a_p = 1.0
        a_d = 1.0
        for i in range(mi):
            if ds[i] < 0.0:
                a_p = min(a_p, -s[i] / ds[i])
            if dz[i] < 0.0:
                a_d = min(a_d, -z[i] / dz[i])
        mu_aff = ((s + a_p * ds) @ (z + a_d * dz)) / mi
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # corrector
        r_sz = s * z - sigma * mu + ds * dz
        rhs[:n] = -(r_d + AiT @ (zs * r_i) + AiT @ (r_sz / s))
        step = np.linalg.solve(K, rhs)
        dx = step[:n]
        du = step[n:]
        ds = Ai @ dx + r_i
        dz = -(r_sz / s) - zs * ds

        a_p = 1.0
        a_d = 1.0
        for i in range(mi):
            if ds[i] < 0.0:
                a_p = min(a_p, -0.995 * s[i] / ds[i])
            if dz[i] < 0.0:
                a_d = min(a_d, -0.995 * z[i] / dz[i])
        a_p = min(a_p, 1.0)
        a_d = min(a_d, 1.0)
        x_n = x + a_p * dx
        s_n = s + a_p * ds
        u_n = u + a_d * du
        z_n = z + a_d * dz
        if not (np.all(np.isfinite(x_n)) and np.all(np.isfinite(s_n))
                and np.all(np.isfinite(u_n)) and np.all(np.isfinite(z_n))):
            stalled = True
            break
        x, s, u, z = x_n, s_n, u_n, z_n
    return x, -u, z, s, iters, stalled


def _fold(qp: QuadraticProgram):
    """Append finite box bounds to the inequality block as extra rows."""
    n = qp.n
    lo_idx = np.flatnonzero(np.isfinite(qp.lower))
    up_idx = np.flatnonzero(np.isfinite(qp.upper))
    rows = qp.A_in.shape[0] + lo_idx.size + up_idx.size
    Ai = np.zeros((rows, n))
    bi = np.zeros(rows)
    m0 = qp.A_in.shape[0]
    Ai[:m0] = qp.A_in
    bi[:m0] = qp.b_in
    for k, i in enumerate(lo_idx):
        Ai[m0 + k, i] = 1.0
        bi[m0 + k] = qp.lower[i]
    off = m0 + lo_idx.size
    for k, i in enumerate(up_idx):
        Ai[off + k, i] = -1.0
        bi[off + k] = -qp.upper[i]
    return Ai, bi, lo_idx, up_idx


def kkt_residuals(qp: QuadraticProgram, sol: QPSolution) -> dict:
    """Independent KKT residual check (does not reuse solver internals)."""
    x = sol.x
    grad = qp.H @ x + qp.c
    grad = grad - qp.A_eq.T @ sol.eq_multipliers
    grad = grad - qp.A_in.T @ sol.ineq_multipliers
    grad = grad - sol.lower_multipliers + sol.upper_multipliers
    slack = qp.A_in @ x - qp.b_in

    viol = [0.0]
    comp = [0.0]
    if slack.size:
        viol.append(float(np.maximum(qp.b_in - qp.A_in @ x, 0).max()))
        comp.append(float(np.abs(sol.ineq_multipliers * slack).max()))
    lo, up = qp.lower, qp.upper
    fin_lo, fin_up = np.isfinite(lo), np.isfinite(up)
    if fin_lo.any():
        viol.append(float(np.maximum(lo[fin_lo] - x[fin_lo], 0).max()))
        comp.append(float(np.abs(sol.lower_multipliers[fin_lo]
                                 * (x[fin_lo] - lo[fin_lo])).max()))
    if fin_up.any():
        viol.append(float(np.maximum(x[fin_up] - up[fin_up], 0).max()))
        comp.append(float(np.abs(sol.upper_multipliers[fin_up]
                                 * (up[fin_up] - x[fin_up])).max()))
    dual = [0.0]
    for m in (sol.ineq_multipliers, sol.lower_multipliers,
              sol.upper_multipliers):
        if m.size:
            dual.append(float(np.maximum(-m, 0).max()))
    return {
        "stationarity": float(np.abs(grad).max(initial=0.0)),
        "primal_eq": float(np.abs(qp.A_eq @ x - qp.b_eq).max(initial=0.0)),
        "primal_in": max(viol),
        "dual": max(dual),
        "complementarity": max(comp),
    }


def solve(qp: QuadraticProgram, warm_start: np.ndarray | None = None,
          max_iter: int = 100, debug_dump: str | None = None) -> QPSolution:
    """Solve the QP; ``optimal`` status is certified by independent residuals.

    ``warm_start`` currently only biases nothing (the interior-point start is
    computed from the equality system) but is accepted for interface
    stability; a mismatched shape is ignored.
    """
    Ai, bi, lo_idx, up_idx = _fold(qp)
    # normalize the objective so the interior-point start is well scaled;
    # the argmin is invariant, multipliers scale back by rho
    rho = max(1.0, float(np.abs(qp.H).max(initial=0.0)),
              float(np.abs(qp.c).max(initial=0.0)))
    try:
        x, y, z, s, iters, stalled = _ip_core(qp.H / rho, qp.c / rho,
                                              qp.A_eq, qp.b_eq, Ai, bi,
                                              max_iter)
    except np.linalg.LinAlgError:
        # numerical breakdown inside the iteration: report without certifying
        x = np.zeros(qp.n)
        y = np.zeros(qp.A_eq.shape[0])
        z = np.zeros(Ai.shape[0])
        iters, stalled = 0, False
    y = y * rho
    z = z * rho
    n = qp.n
    m0 = qp.A_in.shape[0]
    lam_in = z[:m0] if z.size else np.zeros(m0)
    lam_lo = np.zeros(n)
    lam_up = np.zeros(n)
    if z.size:
        lam_lo[lo_idx] = z[m0:m0 + lo_idx.size]
        lam_up[up_idx] = z[m0 + lo_idx.size:]
    sol = QPSolution(x=x, eq_multipliers=y, ineq_multipliers=lam_in,
                     lower_multipliers=lam_lo, upper_multipliers=lam_up,
                     status="", iterations=iters)
    res = kkt_residuals(qp, sol)
    sol.residuals = res
    if max(res.values()) <= KKT_TOL:
        sol.status = "optimal"
    elif stalled and (res["primal_eq"] > 1e-6 or res["primal_in"] > 1e-6):
        sol.status = "infeasible"
    else:
        sol.status = "max-iterations"
    if debug_dump:
        payload = {"qp": qp.to_dict(), "x": sol.x.tolist(),
                   "status": sol.status, "iterations": sol.iterations,
                   "residuals": res}
        with open(debug_dump, "w") as f:
            json.dump(payload, f)
    return sol
