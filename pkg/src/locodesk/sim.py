"""Deterministic physics harness for the desk-scale humanoid.

Forward dynamics ``qdd = A^-1 (S^T tau - bias + Jc^T f)`` with penalty ground
contacts (Kelvin-Voigt normal force, tanh-regularized Coulomb friction),
integrated at 1 kHz under a 100 Hz torque zero-order hold.  Each substep is a
velocity-Verlet update — positions advance by ``v dt + qdd dt^2/2`` and
velocities by the average of accelerations at both endpoints — which
reproduces constant-acceleration trajectories exactly and keeps energy error
bounded on conservative motion.  The whole substep runs inside one compiled
kernel; only object coupling (grasp welds, hand pushes) stays in Python.

Objects are simple rigid bodies: ``static`` (held in place until grasped),
``free`` (point-like fall with ground contact), and ``planar`` (x, y, yaw
box sliding on the ground, pushed through hand contact).  Grasping welds an
object to a hand frame kinematically and transmits its weight to the arm.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .accel import jitted
from . import kinematics as kin
from .dynamics import crba, rnea
from .kinematics import fk_links, link_velocities, point_jacobian
from .model import RobotModel, RobotState, nominal_state
from .quat import (quat_conj, quat_from_rotvec, quat_mul, quat_normalize,
                   quat_to_mat)

GRASP_ATTACH_DISTANCE = 0.07


class SimError(RuntimeError):
    pass


@dataclass
class ContactModelParams:
    stiffness: float = 2.0e4      # N/m
    damping: float = 150.0        # N s/m
    friction: float = 0.8
    slip_velocity: float = 0.02   # m/s tanh regularization

    def __post_init__(self):
        if self.stiffness <= 0 or self.damping <= 0:
            raise SimError("contact stiffness and damping must be positive")
        if self.friction <= 0 or self.slip_velocity <= 0:
            raise SimError("friction parameters must be positive")


@dataclass
class SimParams:
    dt: float = 1.0e-3
    substeps: int = 10
    gravity: float = 9.81
    contact: ContactModelParams = field(default_factory=ContactModelParams)
    hand_radius: float = 0.05
    hand_stiffness: float = 4.0e3
    hand_damping: float = 60.0
    fall_height_fraction: float = 0.6
    fall_tilt_deg: float = 45.0
    velocity_limit: float = 1.0e3

    def __post_init__(self):
        if self.dt <= 0 or self.substeps < 1:
            raise SimError("dt must be positive and substeps >= 1")


@dataclass
class SimObject:
    """A task object. ``size`` holds box half-extents or (radius, 0, 0)."""

    name: str
    shape: str                    # 'box' | 'sphere'
    size: np.ndarray
    mass: float
    pos: np.ndarray
    quat: np.ndarray
    vel: np.ndarray = field(default_factory=lambda: np.zeros(6))
    mode: str = "free"            # 'free' | 'planar' | 'static'
    graspable: bool = False
    mu_ground: float = 0.4

    def __post_init__(self):
        self.size = np.asarray(self.size, dtype=float).reshape(3)
        self.pos = np.asarray(self.pos, dtype=float).reshape(3)
        self.quat = quat_normalize(np.asarray(self.quat, dtype=float).reshape(4))
        self.vel = np.asarray(self.vel, dtype=float).reshape(6)
        if self.shape not in ("box", "sphere"):
            raise SimError(f"unknown shape {self.shape!r}")
        if self.mode not in ("free", "planar", "static"):
            raise SimError(f"unknown object mode {self.mode!r}")
        if self.mass <= 0:
            raise SimError("object mass must be positive")

    def yaw_inertia(self) -> float:
        if self.shape == "box":
            a, b = self.size[0], self.size[1]
            return self.mass / 3.0 * (a * a + b * b)
        r = self.size[0]
        return 0.4 * self.mass * r * r

    def copy(self) -> "SimObject":
        return SimObject(name=self.name, shape=self.shape,
                         size=self.size.copy(), mass=self.mass,
                         pos=self.pos.copy(), quat=self.quat.copy(),
                         vel=self.vel.copy(), mode=self.mode,
                         graspable=self.graspable, mu_ground=self.mu_ground)


@dataclass
class Weld:
    side: str
    object_index: int
    rel_pos: np.ndarray
    rel_quat: np.ndarray


@dataclass
class WorldState:
    robot: RobotState
    objects: list[SimObject]
    welds: dict[str, Weld]
    time: float = 0.0
    tick: int = 0
    fallen: bool = False
    fault: bool = False


def _tanh_friction(v_t: np.ndarray, f_n: float, mu: float,
                   v_slip: float) -> np.ndarray:
    speed = float(np.linalg.norm(v_t))
    if speed < 1e-12:
        return np.zeros_like(v_t)
    return -mu * f_n * np.tanh(speed / v_slip) * (v_t / speed)


# ---------------------------------------------------------------------------
# compiled stepping core


@jitted
def _ground_tau(parent, jnt_dof, floating, n_v, R, p, axis_w, w, vp,
                pt_link, pt_off, k_n, d_n, mu, v_slip, tau, damp):
    """Accumulate J^T f for every penetrating contact corner into ``tau``.

    ``damp`` collects the generalized damping matrix J^T D J built from the
    slopes of the velocity-dependent force terms (normal damping and the
    stick-regime friction slope).  The caller folds it into the mass matrix
    as ``A + dt * damp`` so stiff contact damping is integrated implicitly;
    explicit integration of these slopes is unstable for light links.
    """
    for i in range(pt_link.shape[0]):
        li = pt_link[i]
        pw = p[li] + R[li] @ pt_off[i]
        pen = -pw[2]
        if pen <= 0.0:
            continue
        rx = pw[0] - p[li, 0]
        ry = pw[1] - p[li, 1]
        rz = pw[2] - p[li, 2]
        vx = vp[li, 0] + w[li, 1] * rz - w[li, 2] * ry
        vy = vp[li, 1] + w[li, 2] * rx - w[li, 0] * rz
        vz = vp[li, 2] + w[li, 0] * ry - w[li, 1] * rx
        f_n = k_n * pen - d_n * vz
        if f_n <= 0.0:
            continue
        fx = 0.0
        fy = 0.0
        speed = np.sqrt(vx * vx + vy * vy)
        if speed > 1e-12:
            mag = mu * f_n * np.tanh(speed / v_slip) / speed
            fx = -mag * vx
            fy = -mag * vy
        d_t = mu * f_n / v_slip
        J = point_jacobian(parent, jnt_dof, floating, n_v, p, axis_w, li, pw)
        for c in range(n_v):
            tau[c] += J[0, c] * fx + J[1, c] * fy + J[2, c] * f_n
        for c1 in range(n_v):
            jx = J[0, c1]
            jy = J[1, c1]
            jz = J[2, c1]
            if jx == 0.0 and jy == 0.0 and jz == 0.0:
                continue
            for c2 in range(n_v):
                damp[c1, c2] += d_t * (jx * J[0, c2] + jy * J[1, c2]) \
                    + d_n * jz * J[2, c2]
    return tau


@jitted
def _actuator_tau(floating, n_v, q, v, tau_ext, act, tau_act, q_cmd, qd_cmd,
                  kp, kd, tau_lim, damp):
    """Feedforward plus joint-servo PD against held setpoints, clipped to
    effort limits; external (unclipped) generalized forces are added on top.
    Unsaturated servo damping goes on the ``damp`` diagonal for implicit
    integration."""
    tau = tau_ext.copy()
    qoff = 1 if floating else 0
    for k in range(act.shape[0]):
        i = act[k]
        s = tau_act[k] + kp * (q_cmd[k] - q[i + qoff]) \
            + kd * (qd_cmd[k] - v[i])
        lim = tau_lim[k]
        if s > lim:
            s = lim
        elif s < -lim:
            s = -lim
        else:
            damp[i, i] += kd
        tau[i] += s
    return tau


@jitted
def _forward_accel(parent, jnt_dof, jnt_axis, jnt_pos, jnt_quat, mass, com_l,
                   inertia, floating, n_v, q, v, tau_ext, act, tau_act,
                   q_cmd, qd_cmd, kp, kd, tau_lim, pt_link, pt_off,
                   k_n, d_n, mu, v_slip, gravity, dt):
    R, p, axis_w = fk_links(parent, jnt_dof, jnt_axis, jnt_pos, jnt_quat,
                            floating, q)
    w, vp = link_velocities(parent, jnt_dof, floating, p, axis_w, v)
    damp = np.zeros((n_v, n_v))
    tau = _actuator_tau(floating, n_v, q, v, tau_ext, act, tau_act,
                        q_cmd, qd_cmd, kp, kd, tau_lim, damp)
    _ground_tau(parent, jnt_dof, floating, n_v, R, p, axis_w, w, vp,
                pt_link, pt_off, k_n, d_n, mu, v_slip, tau, damp)
    A = crba(parent, jnt_dof, jnt_axis, jnt_pos, jnt_quat, mass, com_l,
             inertia, floating, n_v, q)
    bias = rnea(parent, jnt_dof, jnt_axis, jnt_pos, jnt_quat, mass, com_l,
                inertia, floating, n_v, q, v, np.zeros(n_v), gravity)
    return np.linalg.solve(A + dt * damp, tau - bias)


@jitted
def _substep_kernel(parent, jnt_dof, jnt_axis, jnt_pos, jnt_quat, mass, com_l,
                    inertia, floating, n_v, q, v, tau_ext, act, tau_act,
                    q_cmd, qd_cmd, kp, kd, tau_lim, pt_link, pt_off,
                    k_n, d_n, mu, v_slip, gravity, dt):
    qdd1 = _forward_accel(parent, jnt_dof, jnt_axis, jnt_pos, jnt_quat, mass,
                          com_l, inertia, floating, n_v, q, v, tau_ext, act,
                          tau_act, q_cmd, qd_cmd, kp, kd, tau_lim,
                          pt_link, pt_off, k_n, d_n, mu, v_slip, gravity, dt)
    half = 0.5 * dt * dt
    q_new = q.copy()
    if floating:
        for i in range(3):
            q_new[i] += v[i] * dt + qdd1[i] * half
        rot = np.empty(3)
        for i in range(3):
            rot[i] = v[3 + i] * dt + qdd1[3 + i] * half
        q_new[3:7] = quat_normalize(quat_mul(quat_from_rotvec(rot), q[3:7]))
        for i in range(6, n_v):
            q_new[i + 1] += v[i] * dt + qdd1[i] * half
    else:
        for i in range(n_v):
            q_new[i] += v[i] * dt + qdd1[i] * half
    v_pred = v + qdd1 * dt
    qdd2 = _forward_accel(parent, jnt_dof, jnt_axis, jnt_pos, jnt_quat, mass,
                          com_l, inertia, floating, n_v, q_new, v_pred,
                          tau_ext, act, tau_act, q_cmd, qd_cmd, kp, kd,
                          tau_lim, pt_link, pt_off, k_n, d_n, mu, v_slip,
                          gravity, dt)
    v_new = v + 0.5 * (qdd1 + qdd2) * dt
    return q_new, v_new


class Simulator:
    """One deterministic world; stepping is synchronous."""

    def __init__(self, model: RobotModel, params: SimParams | None = None,
                 contact_frames: list[tuple[str, np.ndarray]] | None = None,
                 hand_frames: dict[str, str] | None = None):
        self.model = model
        self.params = params or SimParams()
        if contact_frames is None:
            contact_frames = []
            from .humanoid import FOOT_CORNERS, FOOT_FRAMES
            for side in sorted(FOOT_FRAMES):
                name = FOOT_FRAMES[side]
                if name in model.frame_names:
                    contact_frames.append((name, FOOT_CORNERS.copy()))
        self.contact_frames = [(f, np.asarray(pts, dtype=float))
                               for f, pts in contact_frames]
        if hand_frames is None:
            from .humanoid import HAND_FRAMES
            hand_frames = {s: f for s, f in HAND_FRAMES.items()
                           if f in model.frame_names}
        self.hand_frames = dict(hand_frames)
        self._arrays = model.arrays
        self._nominal_base_z = (float(nominal_state(model).q[2])
                                if model.floating else 0.0)
        self._act_dofs = np.asarray(model.actuated_dofs, dtype=np.int64)
        lim = model.effort_limits
        self._tau_lim = np.where(np.isfinite(lim), lim, 1e30)
        self._tau_zero = np.zeros(model.n_v)
        # contact corners as fixed points in link frames, flattened for the
        # stepping kernel
        a = self._arrays
        links, offs = [], []
        for frame, pts in self.contact_frames:
            k = model.frame_id(frame)
            Rf = quat_to_mat(a.frame_quat[k])
            for pt in pts:
                links.append(int(a.frame_link[k]))
                offs.append(a.frame_pos[k] + Rf @ pt)
        self._pt_link = np.asarray(links, dtype=np.int64).reshape(-1)
        self._pt_off = (np.asarray(offs, dtype=float).reshape(-1, 3)
                        if offs else np.zeros((0, 3)))
        self._hand_cache = {}
        for side, frame in self.hand_frames.items():
            k = model.frame_id(frame)
            self._hand_cache[side] = (int(a.frame_link[k]),
                                      a.frame_pos[k].copy())
        self.world: WorldState | None = None
        self._fall_reported = False
        self._has_planar = False

    # --- world management ----------------------------------------------------

    def reset(self, state: RobotState,
              objects: list[SimObject] = ()) -> WorldState:
        self.world = WorldState(
            robot=RobotState(q=state.q.copy(), v=state.v.copy()),
            objects=[o.copy() for o in objects], welds={})
        self._fall_reported = False
        self._has_planar = any(o.mode == "planar" and o.shape == "box"
                               for o in self.world.objects)
        return self.world

    def _require_world(self) -> WorldState:
        if self.world is None:
            raise SimError("reset() must be called before stepping")
        return self.world

    # --- kinematic helpers ---------------------------------------------------

    def _fk(self, q):
        a = self._arrays
        return fk_links(a.parent, a.jnt_dof, a.jnt_axis, a.jnt_pos,
                        a.jnt_quat, a.floating, q)

    def frame_pose(self, frame: str):
        world = self._require_world()
        return kin.frame_pose(self.model, world.robot.q, frame)

    def hand_pose(self, side: str):
        return self.frame_pose(self.hand_frames[side])

    def foot_poses(self) -> dict:
        world = self._require_world()
        out = {}
        from .humanoid import FOOT_FRAMES
        for side, frame in FOOT_FRAMES.items():
            if frame in self.model.frame_names:
                out[side] = kin.frame_pose(self.model, world.robot.q, frame)
        return out

    def com(self) -> np.ndarray:
        world = self._require_world()
        return kin.com_position(self.model, world.robot.q)

    def ground_forces(self) -> dict[str, np.ndarray]:
        """Current ground reaction per contact frame, one row per corner.

        Evaluates the same contact law as the stepping kernel at the present
        state; rows are world-frame forces, zero where a corner is airborne.
        """
        world = self._require_world()
        st = world.robot
        a = self._arrays
        cp = self.params.contact
        R, p, axis_w = self._fk(st.q)
        w, vp = link_velocities(a.parent, a.jnt_dof, a.floating, p, axis_w,
                                st.v)
        out = {}
        i = 0
        for frame, pts in self.contact_frames:
            rows = np.zeros((len(pts), 3))
            for k in range(len(pts)):
                li = self._pt_link[i]
                pw = p[li] + R[li] @ self._pt_off[i]
                i += 1
                pen = -pw[2]
                if pen <= 0.0:
                    continue
                r = pw - p[li]
                v_pt = vp[li] + np.cross(w[li], r)
                f_n = cp.stiffness * pen - cp.damping * v_pt[2]
                if f_n <= 0.0:
                    continue
                f_t = _tanh_friction(v_pt[:2], f_n, cp.friction,
                                     cp.slip_velocity)
                rows[k] = (f_t[0], f_t[1], f_n)
            out[frame] = rows
        return out

    # --- grasping ------------------------------------------------------------

    def try_grasp(self, side: str) -> bool:
        """Weld the nearest graspable object within reach to the hand."""
        world = self._require_world()
        if side in world.welds:
            return True
        pos, quat = self.hand_pose(side)
        best = None
        best_d = GRASP_ATTACH_DISTANCE
        for idx, obj in enumerate(world.objects):
            if not obj.graspable:
                continue
            if any(w.object_index == idx for w in world.welds.values()):
                continue
            d = float(np.linalg.norm(obj.pos - pos))
            if d <= best_d:
                best, best_d = idx, d
        if best is None:
            return False
        obj = world.objects[best]
        R = quat_to_mat(quat)
        world.welds[side] = Weld(
            side=side, object_index=best,
            rel_pos=R.T @ (obj.pos - pos),
            rel_quat=quat_mul(quat_conj(quat), obj.quat))
        return True

    def release(self, side: str):
        world = self._require_world()
        weld = world.welds.pop(side, None)
        if weld is None:
            return
        obj = world.objects[weld.object_index]
        if obj.mode == "static":
            obj.mode = "free"

    # --- object coupling (python side: rare, early-outed) ---------------------

    def _object_coupling(self, q, v):
        """Generalized force from hand pushes and carried-object weight.

        Evaluated once per substep at the pre-step state; also returns the
        planar reactions (fx, fy, tau_z) exerted on each pushed object.
        """
        a = self._arrays
        world = self.world
        prm = self.params
        R, p, axis_w = self._fk(q)
        w, vp = link_velocities(a.parent, a.jnt_dof, a.floating, p, axis_w, v)
        forces = []
        reactions = {}
        for side, (li, off) in self._hand_cache.items():
            pw = p[li] + R[li] @ off
            if side in world.welds:
                obj = world.objects[world.welds[side].object_index]
                forces.append(
                    (li, pw, np.array([0.0, 0.0, -obj.mass * prm.gravity])))
                continue
            if not self._has_planar:
                continue
            vel = vp[li] + np.cross(w[li], pw - p[li])
            for idx, obj in enumerate(world.objects):
                if obj.mode != "planar" or obj.shape != "box":
                    continue
                Rb = quat_to_mat(obj.quat)
                local = Rb.T @ (pw - obj.pos)
                closest = np.clip(local, -obj.size, obj.size)
                delta = local - closest
                dist = float(np.linalg.norm(delta))
                if dist >= prm.hand_radius or dist < 1e-12:
                    continue
                n = Rb @ (delta / dist)
                pen = prm.hand_radius - dist
                obj_vel_pt = np.array([obj.vel[0], obj.vel[1], 0.0])
                r = Rb @ closest
                obj_vel_pt[:2] += obj.vel[5] * np.array([-r[1], r[0]])
                v_rel = vel - obj_vel_pt
                f_n = prm.hand_stiffness * pen \
                    - prm.hand_damping * float(v_rel @ n)
                if f_n <= 0.0:
                    continue
                f = f_n * n
                v_t = v_rel - (v_rel @ n) * n
                f = f + _tanh_friction(v_t, f_n, 0.4,
                                       prm.contact.slip_velocity)
                forces.append((li, pw, f))
                acc = reactions.setdefault(idx, np.zeros(3))
                acc[:2] -= f[:2]
                lever = pw - obj.pos
                acc[2] -= lever[0] * f[1] - lever[1] * f[0]
        tau = np.zeros(a.n_v)
        for li, pw, f in forces:
            J = point_jacobian(a.parent, a.jnt_dof, a.floating, a.n_v,
                               p, axis_w, li, pw)
            tau += J[0:3].T @ f
        return tau, reactions

    # --- stepping ------------------------------------------------------------

    def step(self, tau_joint: np.ndarray, q_cmd: np.ndarray | None = None,
             qd_cmd: np.ndarray | None = None, kp: float = 0.0,
             kd: float = 0.0) -> WorldState:
        """Advance one control period (``substeps`` physics steps).

        ``tau_joint`` is feedforward actuator torque.  When setpoints and
        gains are given, a joint PD servo evaluated at every physics substep
        tracks them against the evolving state, emulating a local actuator
        loop running faster than the caller.  The total per-joint torque is
        clipped to the model's effort limits.
        """
        world = self._require_world()
        if world.fault:
            return world
        n_act = self.model.n_act
        tau_joint = np.asarray(tau_joint, dtype=float)
        if tau_joint.shape != (n_act,):
            raise SimError(f"torque vector must have shape ({n_act},)")
        q_cmd = (np.zeros(n_act) if q_cmd is None
                 else np.asarray(q_cmd, dtype=float).reshape(n_act))
        qd_cmd = (np.zeros(n_act) if qd_cmd is None
                  else np.asarray(qd_cmd, dtype=float).reshape(n_act))
        held = (tau_joint, q_cmd, qd_cmd, float(kp), float(kd))
        if not all(np.all(np.isfinite(h)) for h in held):
            world.fault = True
        else:
            for _ in range(self.params.substeps):
                self._substep(*held)
                if world.fault:
                    break
        world.tick += 1
        self._update_fall()
        return world

    def _substep(self, tau_act: np.ndarray, q_cmd: np.ndarray,
                 qd_cmd: np.ndarray, kp: float, kd: float):
        world = self.world
        prm = self.params
        a = self._arrays
        st = world.robot
        dt = prm.dt

        tau_ext = self._tau_zero
        reactions = {}
        if world.welds or self._has_planar:
            tau_ext, reactions = self._object_coupling(st.q, st.v)
            if not np.all(np.isfinite(tau_ext)):
                world.fault = True
                return

        cp = prm.contact
        try:
            q_new, v_new = _substep_kernel(
                a.parent, a.jnt_dof, a.jnt_axis, a.jnt_pos, a.jnt_quat,
                a.mass, a.com, a.inertia, a.floating, a.n_v,
                st.q, st.v, tau_ext, self._act_dofs, tau_act, q_cmd, qd_cmd,
                kp, kd, self._tau_lim, self._pt_link, self._pt_off,
                cp.stiffness, cp.damping, cp.friction, cp.slip_velocity,
                prm.gravity, dt)
        except np.linalg.LinAlgError:
            world.fault = True
            return
        st.q = q_new
        st.v = v_new

        self._step_objects(reactions, dt)
        self._sync_welds()

        if not (np.all(np.isfinite(st.q)) and np.all(np.isfinite(st.v))
                and np.abs(st.v).max(initial=0.0) < prm.velocity_limit):
            world.fault = True
        world.time += dt

    def _step_objects(self, reactions: dict, dt: float):
        world = self.world
        prm = self.params
        g = prm.gravity
        welded = {w.object_index for w in world.welds.values()}
        for idx, obj in enumerate(world.objects):
            if idx in welded or obj.mode == "static":
                continue
            if obj.mode == "planar":
                f = reactions.get(idx, np.zeros(3))
                v_xy = obj.vel[0:2]
                fric = _tanh_friction(v_xy, obj.mass * g, obj.mu_ground,
                                      prm.contact.slip_velocity)
                acc_xy = (f[:2] + fric) / obj.mass
                iz = obj.yaw_inertia()
                tz = f[2] - 0.2 * obj.mu_ground * obj.mass * g \
                    * obj.size[:2].mean() * np.tanh(
                        obj.vel[5] / prm.contact.slip_velocity)
                acc_yaw = tz / iz
                obj.pos[0:2] += v_xy * dt + 0.5 * acc_xy * dt * dt
                yaw_rate = obj.vel[5]
                dyaw = yaw_rate * dt + 0.5 * acc_yaw * dt * dt
                obj.quat = quat_normalize(quat_mul(
                    quat_from_rotvec(np.array([0.0, 0.0, dyaw])), obj.quat))
                obj.vel[0:2] = v_xy + acc_xy * dt
                obj.vel[5] = yaw_rate + acc_yaw * dt
            elif obj.mode == "free":
                acc = np.array([0.0, 0.0, -g])
                radius = obj.size[0] if obj.shape == "sphere" else obj.size[2]
                bottom = obj.pos[2] - radius
                if bottom < 0.0:
                    pen = -bottom
                    f_n = prm.contact.stiffness * pen \
                        - prm.contact.damping * obj.vel[2]
                    if f_n > 0.0:
                        acc[2] += f_n / obj.mass
                        acc[:2] += _tanh_friction(
                            obj.vel[:2], f_n, prm.contact.friction,
                            prm.contact.slip_velocity)[:2] / obj.mass
                obj.pos += obj.vel[:3] * dt + 0.5 * acc * dt * dt
                obj.vel[:3] += acc * dt
                if np.abs(obj.vel[3:]).max(initial=0.0) > 0:
                    rot = obj.vel[3:] * dt
                    obj.quat = quat_normalize(quat_mul(
                        quat_from_rotvec(rot), obj.quat))
            if not (np.all(np.isfinite(obj.pos))
                    and np.all(np.isfinite(obj.vel))):
                world.fault = True

    def _sync_welds(self):
        world = self.world
        for side, weld in world.welds.items():
            pos, quat = kin.frame_pose(self.model, world.robot.q,
                                       self.hand_frames[side])
            obj = world.objects[weld.object_index]
            R = quat_to_mat(quat)
            obj.pos = pos + R @ weld.rel_pos
            obj.quat = quat_mul(quat, weld.rel_quat)
            obj.vel[:] = 0.0

    # --- monitoring ----------------------------------------------------------

    def _update_fall(self):
        world = self.world
        if world.fallen or not self.model.floating:
            return
        height = float(world.robot.q[2])
        R = quat_to_mat(world.robot.q[3:7])
        tilt_ok = R[2, 2] >= np.cos(np.radians(self.params.fall_tilt_deg))
        height_ok = height >= self.params.fall_height_fraction \
            * self._nominal_base_z
        if not (tilt_ok and height_ok):
            world.fallen = True

    def poll_fall_event(self) -> bool:
        """True exactly once, on the first poll after the fall latched."""
        world = self._require_world()
        if world.fallen and not self._fall_reported:
            self._fall_reported = True
            return True
        return False

    def state_hash(self) -> str:
        """SHA-256 over the exact world state bytes (replay identity)."""
        world = self._require_world()
        h = hashlib.sha256()
        h.update(world.robot.q.astype(np.float64).tobytes())
        h.update(world.robot.v.astype(np.float64).tobytes())
        for obj in world.objects:
            h.update(obj.pos.astype(np.float64).tobytes())
            h.update(obj.quat.astype(np.float64).tobytes())
            h.update(obj.vel.astype(np.float64).tobytes())
        h.update(np.float64(world.time).tobytes())
        h.update(np.int64(world.tick).tobytes())
        h.update(np.int64(len(world.welds)).tobytes())
        return h.hexdigest()


def evaluate(episode_fn, trials: int = 25, seed0: int = 0) -> dict:
    """Run seeded trials and aggregate outcome rates.

    ``episode_fn(seed) -> str`` must return one of 'success', 'partial', or
    'failure'; exceptions count as failures.  With 25 trials the reported
    percentages are multiples of 4.
    """
    outcomes = []
    for k in range(trials):
        try:
            outcome = episode_fn(seed0 + k)
        except Exception as exc:    # agent fault counts as failure
            outcome = "failure"
            outcomes.append({"seed": seed0 + k, "outcome": outcome,
                             "error": repr(exc)})
            continue
        if outcome not in ("success", "partial", "failure"):
            raise SimError(f"episode outcome {outcome!r} not recognized")
        outcomes.append({"seed": seed0 + k, "outcome": outcome})
    n = max(trials, 1)
    succ = sum(1 for o in outcomes if o["outcome"] == "success")
    part = sum(1 for o in outcomes if o["outcome"] in ("success", "partial"))
    return {
        "trials": trials,
        "success_rate": 100.0 * succ / n,
        "partial_rate": 100.0 * part / n,
        "outcomes": outcomes,
    }
