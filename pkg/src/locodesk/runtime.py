"""Closed-loop runtime: commands -> gait plan -> whole-body control -> physics.

The runtime owns one simulator world plus the controller stack and advances
everything synchronously at 100 Hz.  Operator commands arrive at 20 Hz
through the command pipeline; hand setpoints live in a yaw-aligned base frame
and are converted to world targets each tick, so they travel with the robot.

Episodes are deterministic given (task, seed, command log): ``run_episode``
captures the command log and final state hash, and ``replay_episode``
reproduces the run bit for bit from the log alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .command import (COMMAND_PERIOD, CONTROL_PERIOD, CommandPipeline,
                      IngestResult, TaskSpaceCommand)
from .humanoid import FOOT_FRAMES, HAND_FRAMES, arm_joint_names
from .kinematics import frame_pose, resolve_point_ik
from .locomotion import GaitExecutor, LocomotionType, footstep_from_pose
from .model import RobotModel, RobotState, nominal_state
from .quat import (quat_conj, quat_from_yaw, quat_mul, quat_normalize,
                   quat_rotate, quat_yaw)
from .sim import SimParams, Simulator, WorldState
from .tasks import TaskDefinition, TaskMonitor, TaskSetup, reset_task
from .wbc import (PoseRef, ReferenceFrame, TorqueCommand, WBCConfig,
                  WholeBodyController)

TICKS_PER_COMMAND = int(round(COMMAND_PERIOD / CONTROL_PERIOD))

OBS_DIM = 89
_N_JOINTS = 20


@dataclass
class RuntimeConfig:
    wbc: WBCConfig = field(default_factory=WBCConfig)
    sim: SimParams = field(default_factory=SimParams)
    com_height: float = 0.575    # sets the divergent-component frequency


@dataclass
class RuntimeView:
    """Structured snapshot handed to agents at each command tick."""

    time: float
    goal: dict
    busy: bool
    gait_code: int
    fallen: bool
    base_pos: np.ndarray
    base_yaw: float
    com: np.ndarray
    hands_body: dict[str, PoseRef]       # current interpolated setpoints
    hand_meas_body: dict[str, tuple[np.ndarray, np.ndarray]]
    grasped: set[str]
    objects: dict[str, tuple[np.ndarray, np.ndarray]]
    obs: np.ndarray


class ControlRuntime:
    """One robot, one world, one controller stack."""

    def __init__(self, model: RobotModel, config: RuntimeConfig | None = None,
                 simulator: Simulator | None = None):
        self.model = model
        self.config = config or RuntimeConfig()
        self.sim = simulator or Simulator(model, self.config.sim)
        self.wbc = WholeBodyController(model, self.config.wbc)
        self._omega = float(np.sqrt(self.config.sim.gravity
                                    / self.config.com_height))
        self.gait = GaitExecutor(self._omega)
        self.pipeline = CommandPipeline()
        self._posture = nominal_state(model).joint_q(model)
        self._arm_dofs = {
            side: np.array([model.joint_dof(n) for n in arm_joint_names(side)])
            for side in HAND_FRAMES}
        act_pos = {int(d): i for i, d in enumerate(model.actuated_dofs)}
        self._arm_act = {
            side: np.array([act_pos[int(d)] for d in dofs])
            for side, dofs in self._arm_dofs.items()}
        self.tick_index = 0
        self._pending_start: LocomotionType | None = None
        self._stand_com = np.zeros(3)
        self._stand_torso = np.array([1.0, 0, 0, 0])
        self._stand_feet: dict[str, PoseRef] = {}
        self._com_z = self.config.com_height
        self._com_offset = np.zeros(2)
        self.command_log: list[tuple[int, dict]] = []
        self.last_command: TorqueCommand | None = None

    # --- frames ---------------------------------------------------------------

    def _anchor(self) -> tuple[np.ndarray, float]:
        q = self.sim.world.robot.q
        return q[0:3].copy(), float(quat_yaw(q[3:7]))

    def _body_to_world(self, ref: PoseRef, base_pos: np.ndarray,
                       yaw: float) -> PoseRef:
        qy = quat_from_yaw(yaw)
        return PoseRef(
            pos=base_pos + quat_rotate(qy, ref.pos),
            quat=quat_normalize(quat_mul(qy, ref.quat)),
            vel=np.concatenate([quat_rotate(qy, ref.vel[:3]),
                                quat_rotate(qy, ref.vel[3:])]),
            acc=np.concatenate([quat_rotate(qy, ref.acc[:3]),
                                quat_rotate(qy, ref.acc[3:])]))

    def _world_to_body(self, pos: np.ndarray, quat: np.ndarray,
                       base_pos: np.ndarray, yaw: float):
        qy_inv = quat_conj(quat_from_yaw(yaw))
        return (quat_rotate(qy_inv, np.asarray(pos) - base_pos),
                quat_normalize(quat_mul(qy_inv, quat)))

    # --- lifecycle ------------------------------------------------------------

    def reset(self, setup: TaskSetup | None = None,
              state: RobotState | None = None) -> WorldState:
        if state is None:
            state = nominal_state(self.model)
            # start at the static contact penetration so ground forces
            # balance gravity from the first substep (no drop transient)
            n_pts = self.sim._pt_link.size
            if self.model.floating and n_pts:
                settle = (self.model.total_mass * self.config.sim.gravity
                          / (self.config.sim.contact.stiffness * n_pts))
                state.q[2] -= settle
        objects = setup.objects if setup is not None else []
        world = self.sim.reset(state, objects)
        self.wbc.clear_fault()
        self.gait = GaitExecutor(self._omega)
        self.tick_index = 0
        self._pending_start = None
        self.command_log = []
        self.last_command = None

        feet = {}
        for side, frame in FOOT_FRAMES.items():
            pos, quat = self.sim.frame_pose(frame)
            feet[side] = footstep_from_pose(side, pos, quat)
        self.gait.set_stance(feet)

        com = self.sim.com()
        self._com_z = float(com[2])
        mid_xy = np.mean([f.pos[:2] for f in feet.values()], axis=0)
        yaw0 = float(np.mean([f.yaw for f in feet.values()]))
        rot = np.array([[np.cos(-yaw0), -np.sin(-yaw0)],
                        [np.sin(-yaw0), np.cos(-yaw0)]])
        self._com_offset = rot @ (com[:2] - mid_xy)
        self._stand_com = com.copy()
        self._stand_torso = quat_from_yaw(yaw0)
        self._stand_feet = {s: PoseRef(pos=f.pos.copy(), quat=f.quat())
                            for s, f in feet.items()}

        base_pos, yaw = self._anchor()
        hands = {}
        for side, frame in HAND_FRAMES.items():
            pos, quat = self.sim.frame_pose(frame)
            bp, bq = self._world_to_body(pos, quat, base_pos, yaw)
            hands[side] = PoseRef(pos=bp, quat=bq)
        self.pipeline.reset(hands)
        return world

    # --- command ingest -------------------------------------------------------

    @property
    def busy(self) -> bool:
        return self.gait.busy or self._pending_start is not None

    def ingest_command(self, cmd: TaskSpaceCommand) -> IngestResult:
        now = self.tick_index * CONTROL_PERIOD
        res = self.pipeline.ingest(cmd, now, busy=self.busy)
        if res.trigger_forwarded and res.locomotion is not None:
            self._pending_start = LocomotionType(res.locomotion)
        if res.accepted:
            self.command_log.append((self.tick_index, cmd.to_dict()))
        return res

    # --- reference assembly ---------------------------------------------------

    def _hand_refs(self) -> dict[str, PoseRef]:
        now = self.tick_index * CONTROL_PERIOD
        base_pos, yaw = self._anchor()
        return {side: self._body_to_world(ref, base_pos, yaw)
                for side, ref in self.pipeline.sample(now).items()}

    def _arm_posture(self, hands: dict[str, PoseRef]) -> np.ndarray:
        """Posture reference with arm entries resolved from the hand targets.

        A hanging arm is at a fold singularity for vertical hand motion, so
        the task-space acceleration loop alone stalls short of raised
        targets; position-level IK folded into the posture reference carries
        the arm through.  The commanded palm orientation is generally
        infeasible for a wristless arm, so each hand reference quaternion is
        replaced by the orientation the resolved configuration achieves --
        the orientation task then reinforces the position task instead of
        fighting it.
        """
        posture = self._posture.copy()
        q = self.sim.world.robot.q
        for side, ref in hands.items():
            dofs = self._arm_dofs[side]
            sol, _ = resolve_point_ik(self.model, HAND_FRAMES[side], ref.pos,
                                      q, dofs, iters=12)
            posture[self._arm_act[side]] = sol
            q_ik = q.copy()
            q_ik[dofs + 1] = sol
            _, ref.quat = frame_pose(self.model, q_ik, HAND_FRAMES[side])
        return posture

    def _references(self) -> ReferenceFrame:
        hands = self._hand_refs()
        grf = self.sim.ground_forces()
        if self.gait.busy:
            c, cdot, cddot, _, _ = self.gait.com_refs()
            base_pos, _ = self._anchor()
            return ReferenceFrame(
                com=c, torso=PoseRef(pos=base_pos,
                                     quat=self.gait.torso_quat()),
                feet=self.gait.foot_refs(), hands=hands,
                posture=self._posture, com_vel=cdot, com_acc=cddot,
                foot_scales=self.gait.foot_scales(), contact_forces=grf)
        base_pos, _ = self._anchor()
        feet = {s: PoseRef(pos=r.pos.copy(), quat=r.quat.copy())
                for s, r in self._stand_feet.items()}
        return ReferenceFrame(
            com=self._stand_com.copy(),
            torso=PoseRef(pos=base_pos, quat=self._stand_torso.copy()),
            feet=feet, hands=hands, posture=self._arm_posture(hands),
            foot_scales={s: 1.0 for s in self._stand_feet},
            contact_forces=grf)

    def _finish_walk(self):
        """Re-anchor the standing hold at the plan's final footholds."""
        plan = self.gait.plan
        feet = self.gait.feet
        if not feet:
            return
        mid_xy = np.mean([f.pos[:2] for f in feet.values()], axis=0)
        yaw_end = plan.yaw_end if plan is not None else \
            float(np.mean([f.yaw for f in feet.values()]))
        rot = np.array([[np.cos(yaw_end), -np.sin(yaw_end)],
                        [np.sin(yaw_end), np.cos(yaw_end)]])
        com_xy = mid_xy + rot @ self._com_offset
        self._stand_com = np.array([com_xy[0], com_xy[1], self._com_z])
        self._stand_torso = quat_from_yaw(yaw_end)
        self._stand_feet = {s: PoseRef(pos=f.pos.copy(), quat=f.quat())
                            for s, f in feet.items()}

    # --- grasp bridge ---------------------------------------------------------

    def _apply_grasp(self):
        world = self.sim.world
        for side, want in self.pipeline.grasp.items():
            held = side in world.welds
            if want and not held:
                self.sim.try_grasp(side)
            elif not want and held:
                self.sim.release(side)

    # --- main loop ------------------------------------------------------------

    def control_tick(self) -> TorqueCommand:
        world = self.sim.world
        if world is None:
            raise RuntimeError("reset() must be called first")
        if self._pending_start is not None and not self.gait.busy:
            self.gait.start(self._pending_start, self.sim.com())
            self._pending_start = None
        was_busy = self.gait.busy
        refs = self._references()
        cmd = self.wbc.control_tick(world.robot, refs, self.gait.mode)
        self._apply_grasp()
        wcfg = self.wbc.config
        self.sim.step(cmd.tau_cmd, q_cmd=cmd.q_cmd, qd_cmd=cmd.qd_cmd,
                      kp=wcfg.kp_joint, kd=wcfg.kd_joint)
        self.gait.advance(CONTROL_PERIOD)
        if was_busy and not self.gait.busy:
            self._finish_walk()
        self.tick_index += 1
        self.last_command = cmd
        return cmd

    # --- observation ----------------------------------------------------------

    def observe(self) -> np.ndarray:
        """Policy observation: foot and hand poses in the yaw-aligned base
        frame, gait code, joint sin/cos, and joint rates."""
        st = self.sim.world.robot
        base_pos, yaw = self._anchor()
        parts = []
        for side in ("left", "right"):
            pos, quat = self.sim.frame_pose(FOOT_FRAMES[side])
            bp, bq = self._world_to_body(pos, quat, base_pos, yaw)
            parts.append(bp)
            parts.append(bq)
        for side in ("left", "right"):
            pos, quat = self.sim.frame_pose(HAND_FRAMES[side])
            bp, bq = self._world_to_body(pos, quat, base_pos, yaw)
            parts.append(bp)
            parts.append(bq)
        parts.append(np.array([float(self.gait.gait_code)]))
        qj = st.joint_q(self.model)
        parts.append(np.sin(qj))
        parts.append(np.cos(qj))
        parts.append(st.joint_v(self.model))
        obs = np.concatenate(parts)
        assert obs.shape == (OBS_DIM,)
        return obs

    def view(self, goal: dict) -> RuntimeView:
        world = self.sim.world
        base_pos, yaw = self._anchor()
        now = self.tick_index * CONTROL_PERIOD
        hand_meas = {}
        for side, frame in HAND_FRAMES.items():
            pos, quat = self.sim.frame_pose(frame)
            hand_meas[side] = self._world_to_body(pos, quat, base_pos, yaw)
        objects = {o.name: (o.pos.copy(), o.quat.copy())
                   for o in world.objects}
        return RuntimeView(
            time=now, goal=goal, busy=self.busy,
            gait_code=self.gait.gait_code, fallen=world.fallen,
            base_pos=base_pos, base_yaw=yaw, com=self.sim.com(),
            hands_body=self.pipeline.sample(now),
            hand_meas_body=hand_meas,
            grasped=set(world.welds), objects=objects,
            obs=self.observe())


# --- episodes ----------------------------------------------------------------

@dataclass
class EpisodeResult:
    outcome: str
    ticks: int
    time: float
    state_hash: str
    seed: int
    goal: dict
    command_log: list[tuple[int, dict]]
    records: list[dict] = field(default_factory=list)
    log_rows: list[dict] = field(default_factory=list)
    # hand setpoints before the first command: the starting point of the
    # recorded action-delta chain
    initial_hands: dict = field(default_factory=dict)


def run_episode(model: RobotModel, task: TaskDefinition, seed: int, agent,
                runtime: ControlRuntime | None = None, record: bool = False,
                log_state: bool = False, early_stop: bool = True,
                max_time: float | None = None) -> EpisodeResult:
    """Drive one agent through one seeded task episode.

    ``max_time`` caps the episode below the task's own limit — demo
    collection uses it with ``early_stop=False`` to record a bounded hold
    period beyond the success latch.
    """
    runtime = runtime or ControlRuntime(model)
    setup = reset_task(task, seed)
    runtime.reset(setup)
    monitor = TaskMonitor(task, model, setup.goal)
    agent.reset(setup.goal)
    limit = task.time_limit if max_time is None else min(task.time_limit,
                                                         max_time)
    n_ticks = int(round(limit / CONTROL_PERIOD))
    records: list[dict] = []
    rows: list[dict] = []
    initial_hands: dict = {}
    ticks_done = 0
    for k in range(n_ticks):
        if k % TICKS_PER_COMMAND == 0:
            view = runtime.view(setup.goal)
            if k == 0:
                initial_hands = {
                    side: {"pos": ref.pos.tolist(),
                           "quat": ref.quat.tolist()}
                    for side, ref in view.hands_body.items()}
            cmd = agent.act(view)
            if cmd is not None:
                runtime.ingest_command(cmd)
                if record:
                    records.append({"t": view.time,
                                    "obs": view.obs.tolist(),
                                    "command": cmd.to_dict()})
        tc = runtime.control_tick()
        world = runtime.sim.world
        monitor.update(world)
        ticks_done = k + 1
        if log_state:
            rows.append({
                "t": world.time,
                "q": world.robot.q.tolist(),
                "v": world.robot.v.tolist(),
                "tau": tc.tau_joint.tolist(),
                "seq": runtime.pipeline.last_seq,
                "gait_phase": runtime.gait.phase,
                "gait_code": runtime.gait.gait_code,
            })
        if world.fault or world.fallen:
            break
        if early_stop and monitor.success_latched:
            break
    return EpisodeResult(
        outcome=monitor.outcome(runtime.sim.world), ticks=ticks_done,
        time=runtime.sim.world.time, state_hash=runtime.sim.state_hash(),
        seed=seed, goal=setup.goal, command_log=list(runtime.command_log),
        records=records, log_rows=rows, initial_hands=initial_hands)


def replay_episode(model: RobotModel, task: TaskDefinition, seed: int,
                   command_log: list[tuple[int, dict]], ticks: int,
                   runtime: ControlRuntime | None = None) -> str:
    """Re-run an episode from its command log; returns the final state hash."""
    runtime = runtime or ControlRuntime(model)
    setup = reset_task(task, seed)
    runtime.reset(setup)
    by_tick: dict[int, list[dict]] = {}
    for tick, cmd in command_log:
        by_tick.setdefault(int(tick), []).append(cmd)
    for k in range(ticks):
        for cmd in by_tick.get(k, ()):
            runtime.ingest_command(TaskSpaceCommand.from_dict(cmd))
        runtime.control_tick()
    return runtime.sim.state_hash()
