"""Robot model description, validation, and the flat-array form used by kernels.

Models are trees of rigid links connected by revolute joints, optionally
rooted on a 6-DOF floating base.  The on-disk format is a JSON document (see
``models/desk_humanoid.json``); :func:`load_model` rejects anything that is
not a tree.

Generalized coordinates:

* floating base: ``q = [base position (3), base quaternion wxyz (4), joint
  angles]``, ``v = [base linear velocity (world), base angular velocity
  (world), joint rates]``,
* fixed base: ``q`` and ``v`` are the joint vectors alone.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .quat import quat_from_rotvec, quat_mul, quat_normalize


class ModelError(ValueError):
    """Raised for malformed model documents or inconsistent states."""


def _rpy_to_quat(rpy) -> np.ndarray:
    r, p, y = rpy
    qx = quat_from_rotvec(np.array([r, 0.0, 0.0]))
    qy = quat_from_rotvec(np.array([0.0, p, 0.0]))
    qz = quat_from_rotvec(np.array([0.0, 0.0, y]))
    return quat_mul(qz, quat_mul(qy, qx))


def _parse_quat(spec: dict) -> np.ndarray:
    if "quat" in spec:
        return quat_normalize(np.asarray(spec["quat"], dtype=float))
    if "rpy" in spec:
        return _rpy_to_quat(spec["rpy"])
    return np.array([1.0, 0.0, 0.0, 0.0])


def _parse_inertia(value) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == (3,):
        arr = np.diag(arr)
    if arr.shape != (3, 3):
        raise ModelError(f"inertia must be a 3-vector or 3x3 matrix, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class Link:
    name: str
    mass: float
    com: np.ndarray          # COM offset in link frame
    inertia: np.ndarray      # rotational inertia about COM, link frame


@dataclass(frozen=True)
class Joint:
    name: str
    parent: str
    child: str
    axis: np.ndarray         # unit axis in the child (joint) frame
    origin_pos: np.ndarray   # parent-frame translation to the joint frame
    origin_quat: np.ndarray  # parent-frame rotation to the child zero pose
    effort: float = np.inf   # symmetric torque limit, +-effort


@dataclass(frozen=True)
class Frame:
    name: str
    link: str
    pos: np.ndarray
    quat: np.ndarray


class ModelArrays(NamedTuple):
    """Flat arrays consumed by the compiled kernels. Links are in topological
    order, index 0 is the base link."""

    parent: np.ndarray        # (n_links,) parent link index, -1 for the base
    jnt_dof: np.ndarray       # (n_links,) dof index in v of the driving joint, -1 for the base
    jnt_axis: np.ndarray      # (n_links, 3) joint axis in child frame
    jnt_pos: np.ndarray       # (n_links, 3) parent-frame joint origin
    jnt_quat: np.ndarray      # (n_links, 4) parent-frame joint zero rotation
    mass: np.ndarray          # (n_links,)
    com: np.ndarray           # (n_links, 3) link-frame COM offset
    inertia: np.ndarray       # (n_links, 3, 3) link-frame inertia about COM
    floating: bool
    n_v: int
    frame_link: np.ndarray    # (n_frames,)
    frame_pos: np.ndarray     # (n_frames, 3)
    frame_quat: np.ndarray    # (n_frames, 4)


@dataclass
class RobotModel:
    name: str
    links: list[Link]
    joints: list[Joint]
    frames: list[Frame]
    base_link: str
    floating: bool
    actuated: list[str]
    nominal: dict = field(default_factory=dict)

    def __post_init__(self):
        self._validate()
        self._link_index = {l.name: i for i, l in enumerate(self._ordered_links)}
        self._frame_index = {f.name: i for i, f in enumerate(self.frames)}
        self._arrays = self._build_arrays()

    # -- dimensions ------------------------------------------------------
    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def n_v(self) -> int:
        return (6 if self.floating else 0) + self.n_joints

    @property
    def n_q(self) -> int:
        return (7 if self.floating else 0) + self.n_joints

    @property
    def n_act(self) -> int:
        return len(self.actuated)

    @property
    def arrays(self) -> ModelArrays:
        return self._arrays

    @property
    def frame_names(self) -> list[str]:
        return [f.name for f in self.frames]

    def frame_id(self, name: str) -> int:
        try:
            return self._frame_index[name]
        except KeyError:
            raise ModelError(f"unknown frame {name!r}") from None

    def joint_dof(self, name: str) -> int:
        base = 6 if self.floating else 0
        for j, joint in enumerate(self.joints):
            if joint.name == name:
                return base + j
        raise ModelError(f"unknown joint {name!r}")

    @property
    def actuated_dofs(self) -> np.ndarray:
        """Indices into v selected by the actuation matrix."""
        return np.array([self.joint_dof(n) for n in self.actuated], dtype=np.int64)

    @property
    def floating_dofs(self) -> np.ndarray:
        """Indices into v of the unactuated floating-base rows."""
        return np.arange(6 if self.floating else 0, dtype=np.int64)

    @property
    def total_mass(self) -> float:
        return float(sum(l.mass for l in self.links))

    @property
    def effort_limits(self) -> np.ndarray:
        """Symmetric torque bound per actuated dof (inf when unspecified)."""
        by_name = {j.name: j.effort for j in self.joints}
        return np.array([by_name[n] for n in self.actuated])

    # -- validation ------------------------------------------------------
    def _validate(self):
        names = [l.name for l in self.links]
        if len(set(names)) != len(names):
            raise ModelError("duplicate link names")
        link_set = set(names)
        if self.base_link not in link_set:
            raise ModelError(f"base link {self.base_link!r} not among links")

        children: dict[str, list[str]] = {n: [] for n in names}
        parent_of: dict[str, str] = {}
        for j in self.joints:
            if j.parent not in link_set or j.child not in link_set:
                raise ModelError(f"joint {j.name!r} references unknown link")
            if j.child in parent_of:
                raise ModelError(f"link {j.child!r} has two parent joints (not a tree)")
            if j.child == self.base_link:
                raise ModelError("base link cannot be a joint child")
            parent_of[j.child] = j.parent
            children[j.parent].append(j.child)

        # reachability from the base establishes one root and no cycles
        seen = set()
        stack = [self.base_link]
        while stack:
            cur = stack.pop()
            if cur in seen:
                raise ModelError("cycle detected in link tree")
            seen.add(cur)
            stack.extend(children[cur])
        if seen != link_set:
            unreach = sorted(link_set - seen)
            raise ModelError(f"links not connected to the base: {unreach}")

        for l in self.links:
            # the anchored root of a fixed-base model is not a body and may
            # be massless; every movable link needs positive mass
            if l.name == self.base_link and not self.floating:
                if l.mass < 0.0:
                    raise ModelError(f"link {l.name!r} mass must be nonnegative")
            elif not l.mass > 0.0:
                raise ModelError(f"link {l.name!r} mass must be positive")
            if not np.allclose(l.inertia, l.inertia.T, atol=1e-9):
                raise ModelError(f"link {l.name!r} inertia not symmetric")
            if np.linalg.eigvalsh(l.inertia).min() < -1e-10:
                raise ModelError(f"link {l.name!r} inertia not positive semidefinite")
        for j in self.joints:
            if abs(np.linalg.norm(j.axis) - 1.0) > 1e-9:
                raise ModelError(f"joint {j.name!r} axis is not unit-norm")

        joint_names = {j.name for j in self.joints}
        unknown = set(self.actuated) - joint_names
        if unknown:
            raise ModelError(f"actuated set references unknown joints: {sorted(unknown)}")
        # actuated and floating selections must jointly cover every coordinate
        if set(self.actuated) != joint_names:
            missing = sorted(joint_names - set(self.actuated))
            raise ModelError(
                f"joints outside the actuated selection leave rows uncovered: {missing}"
            )

        for f in self.frames:
            if f.link not in link_set:
                raise ModelError(f"frame {f.name!r} attached to unknown link")

        # topological link order, base first
        order = []
        queue = [self.base_link]
        while queue:
            cur = queue.pop(0)
            order.append(cur)
            queue.extend(children[cur])
        by_name = {l.name: l for l in self.links}
        self._ordered_links = [by_name[n] for n in order]
        self._parent_of = parent_of
        self._joint_of_child = {j.child: j for j in self.joints}

    # -- arrays ----------------------------------------------------------
    def _build_arrays(self) -> ModelArrays:
        n = len(self._ordered_links)
        parent = np.full(n, -1, dtype=np.int64)
        jnt_dof = np.full(n, -1, dtype=np.int64)
        jnt_axis = np.zeros((n, 3))
        jnt_pos = np.zeros((n, 3))
        jnt_quat = np.tile(np.array([1.0, 0.0, 0.0, 0.0]), (n, 1))
        mass = np.zeros(n)
        com = np.zeros((n, 3))
        inertia = np.zeros((n, 3, 3))

        base_dofs = 6 if self.floating else 0
        joint_order = {j.name: k for k, j in enumerate(self.joints)}
        for i, link in enumerate(self._ordered_links):
            mass[i] = link.mass
            com[i] = link.com
            inertia[i] = link.inertia
            if link.name == self.base_link:
                continue
            joint = self._joint_of_child[link.name]
            parent[i] = self._link_index[joint.parent]
            jnt_dof[i] = base_dofs + joint_order[joint.name]
            jnt_axis[i] = joint.axis
            jnt_pos[i] = joint.origin_pos
            jnt_quat[i] = joint.origin_quat

        frame_link = np.array([self._link_index[f.link] for f in self.frames], dtype=np.int64)
        frame_pos = np.array([f.pos for f in self.frames]).reshape(-1, 3)
        frame_quat = np.array([f.quat for f in self.frames]).reshape(-1, 4)

        return ModelArrays(
            parent=parent, jnt_dof=jnt_dof, jnt_axis=jnt_axis, jnt_pos=jnt_pos,
            jnt_quat=jnt_quat, mass=mass, com=com, inertia=inertia,
            floating=self.floating, n_v=self.n_v,
            frame_link=frame_link, frame_pos=frame_pos, frame_quat=frame_quat,
        )

    # -- serialization ---------------------------------------------------
    @classmethod
    def from_dict(cls, doc: dict) -> "RobotModel":
        try:
            base = doc["base"]
            links = [
                Link(
                    name=l["name"],
                    mass=float(l["mass"]),
                    com=np.asarray(l.get("com", [0.0, 0.0, 0.0]), dtype=float),
                    inertia=_parse_inertia(l.get("inertia", [0.0, 0.0, 0.0])),
                )
                for l in doc["links"]
            ]
            joints = [
                Joint(
                    name=j["name"],
                    parent=j["parent"],
                    child=j["child"],
                    axis=np.asarray(j["axis"], dtype=float),
                    origin_pos=np.asarray(j.get("origin", {}).get("pos", [0, 0, 0]), dtype=float),
                    origin_quat=_parse_quat(j.get("origin", {})),
                    effort=float(j.get("effort", np.inf)),
                )
                for j in doc["joints"]
            ]
            frames = [
                Frame(
                    name=f["name"],
                    link=f["link"],
                    pos=np.asarray(f.get("pos", [0, 0, 0]), dtype=float),
                    quat=_parse_quat(f),
                )
                for f in doc.get("frames", [])
            ]
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed model document: {exc}") from exc

        actuated = doc.get("actuated", "all")
        if actuated == "all":
            actuated = [j.name for j in joints]
        return cls(
            name=doc.get("name", "robot"),
            links=links,
            joints=joints,
            frames=frames,
            base_link=base["link"],
            floating=bool(base.get("floating", False)),
            actuated=list(actuated),
            nominal=doc.get("nominal", {}),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "base": {"link": self.base_link, "floating": self.floating},
            "links": [
                {"name": l.name, "mass": l.mass, "com": l.com.tolist(),
                 "inertia": l.inertia.tolist()}
                for l in self.links
            ],
            "joints": [
                {"name": j.name, "parent": j.parent, "child": j.child,
                 "axis": j.axis.tolist(),
                 "origin": {"pos": j.origin_pos.tolist(), "quat": j.origin_quat.tolist()},
                 **({"effort": j.effort} if np.isfinite(j.effort) else {})}
                for j in self.joints
            ],
            "frames": [
                {"name": f.name, "link": f.link, "pos": f.pos.tolist(),
                 "quat": f.quat.tolist()}
                for f in self.frames
            ],
            "actuated": list(self.actuated),
            "nominal": self.nominal,
        }

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def load_model(path: str | Path) -> RobotModel:
    with open(path) as fh:
        doc = json.load(fh)
    return RobotModel.from_dict(doc)


def default_model_path() -> Path:
    return Path(__file__).parent / "models" / "desk_humanoid.json"


def load_default_model() -> RobotModel:
    return load_model(default_model_path())


@dataclass
class RobotState:
    """Generalized position and velocity. Values are plain arrays and are
    treated as immutable by every consumer."""

    q: np.ndarray
    v: np.ndarray

    @classmethod
    def zero(cls, model: RobotModel) -> "RobotState":
        q = np.zeros(model.n_q)
        if model.floating:
            q[3] = 1.0
        return cls(q=q, v=np.zeros(model.n_v))

    def validate(self, model: RobotModel):
        if self.q.shape != (model.n_q,):
            raise ModelError(
                f"state q has dimension {self.q.shape[0]}, model expects {model.n_q}"
            )
        if self.v.shape != (model.n_v,):
            raise ModelError(
                f"state v has dimension {self.v.shape[0]}, model expects {model.n_v}"
            )
        if model.floating:
            norm = np.linalg.norm(self.q[3:7])
            if abs(norm - 1.0) > 1e-9:
                raise ModelError(f"base quaternion norm {norm} is not 1 within 1e-9")

    def base_pos(self) -> np.ndarray:
        return self.q[0:3]

    def base_quat(self) -> np.ndarray:
        return self.q[3:7]

    def joint_q(self, model: RobotModel) -> np.ndarray:
        return self.q[7:] if model.floating else self.q

    def joint_v(self, model: RobotModel) -> np.ndarray:
        return self.v[6:] if model.floating else self.v


def nominal_state(model: RobotModel) -> RobotState:
    """State from the model's nominal posture block (identity if absent)."""
    st = RobotState.zero(model)
    nom = model.nominal
    if model.floating and "base_pos" in nom:
        st.q[0:3] = np.asarray(nom["base_pos"], dtype=float)
    if model.floating and "base_quat" in nom:
        st.q[3:7] = quat_normalize(np.asarray(nom["base_quat"], dtype=float))
    for name, angle in nom.get("joint_angles", {}).items():
        st.q[(7 if model.floating else 0) + [j.name for j in model.joints].index(name)] = float(angle)
    return st
