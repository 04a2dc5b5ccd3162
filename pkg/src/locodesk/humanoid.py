"""Construction of the desk-scale humanoid model document.

The robot is a floating pelvis/torso body with two 6-dof legs and two 4-dof
arms (20 actuated joints).  Leg chain: hip yaw (z), hip roll (x), hip pitch
(y), knee (y), ankle pitch (y), ankle roll (x).  Arm chain: shoulder pitch
(y), shoulder roll (x), shoulder yaw (z), elbow (y).  The shipped
``models/desk_humanoid.json`` is generated by :func:`build_desk_humanoid`;
regenerate it with ``python -m locodesk.humanoid``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import RobotModel, default_model_path

# geometry (m)
HIP_OFFSET_Y = 0.075
HIP_OFFSET_Z = -0.06
THIGH_LEN = 0.25
SHIN_LEN = 0.25
ANKLE_TO_SOLE = 0.06
FOOT_FORWARD = 0.02          # sole frame sits slightly ahead of the ankle
SHOULDER_OFFSET = np.array([0.0, 0.16, 0.22])
SHOULDER_ROLL_Y = 0.03
SHOULDER_YAW_Z = -0.04
UPPER_ARM_LEN = 0.14
FOREARM_TO_HAND = 0.20

# support polygon half-extents of one foot, in its sole frame
FOOT_HALF_LENGTH = 0.09
FOOT_HALF_WIDTH = 0.06
FOOT_CORNERS = np.array([
    [FOOT_HALF_LENGTH, FOOT_HALF_WIDTH, 0.0],
    [FOOT_HALF_LENGTH, -FOOT_HALF_WIDTH, 0.0],
    [-FOOT_HALF_LENGTH, FOOT_HALF_WIDTH, 0.0],
    [-FOOT_HALF_LENGTH, -FOOT_HALF_WIDTH, 0.0],
])

FOOT_FRAMES = {"left": "foot_left", "right": "foot_right"}
HAND_FRAMES = {"left": "hand_left", "right": "hand_right"}

LEG_JOINTS = ["hip_yaw", "hip_roll", "hip_pitch", "knee", "ankle_pitch",
              "ankle_roll"]
ARM_JOINTS = ["shoulder_pitch", "shoulder_roll", "shoulder_yaw", "elbow"]

NOMINAL_LEG = {"hip_yaw": 0.0, "hip_roll": 0.0, "hip_pitch": -0.25,
               "knee": 0.5, "ankle_pitch": -0.25, "ankle_roll": 0.0}
NOMINAL_ARM = {"shoulder_pitch": 0.4, "shoulder_roll": 0.1,
               "shoulder_yaw": 0.0, "elbow": -0.6}

EFFORT = {"hip_yaw": 60.0, "hip_roll": 60.0, "hip_pitch": 60.0, "knee": 60.0,
          "ankle_pitch": 40.0, "ankle_roll": 40.0,
          "shoulder_pitch": 25.0, "shoulder_roll": 25.0,
          "shoulder_yaw": 25.0, "elbow": 25.0}


def leg_joint_names(side: str) -> list[str]:
    return [f"{side[0]}_{j}" for j in LEG_JOINTS]


def arm_joint_names(side: str) -> list[str]:
    return [f"{side[0]}_{j}" for j in ARM_JOINTS]


def _rod_inertia(mass, length, radius=0.03):
    ii = mass * (3 * radius**2 + length**2) / 12.0
    return [ii, ii, mass * radius**2 / 2.0]


def _box_inertia(mass, lx, ly, lz):
    return [mass * (ly**2 + lz**2) / 12.0,
            mass * (lx**2 + lz**2) / 12.0,
            mass * (lx**2 + ly**2) / 12.0]


def _leg(side: str, sign: float):
    p = side[0] + "_"
    links = [
        {"name": p + "hip_yaw_link", "mass": 0.3, "com": [0, 0, 0],
         "inertia": [3e-4, 3e-4, 3e-4]},
        {"name": p + "hip_roll_link", "mass": 0.3, "com": [0, 0, 0],
         "inertia": [3e-4, 3e-4, 3e-4]},
        {"name": p + "thigh", "mass": 1.2, "com": [0, 0, -THIGH_LEN / 2],
         "inertia": _rod_inertia(1.2, THIGH_LEN)},
        {"name": p + "shin", "mass": 0.8, "com": [0, 0, -SHIN_LEN / 2],
         "inertia": _rod_inertia(0.8, SHIN_LEN)},
        {"name": p + "ankle_link", "mass": 0.2, "com": [0, 0, 0],
         "inertia": [2e-4, 2e-4, 2e-4]},
        {"name": p + "foot", "mass": 0.5,
         "com": [FOOT_FORWARD, 0, -ANKLE_TO_SOLE + 0.02],
         "inertia": _box_inertia(0.5, 2 * FOOT_HALF_LENGTH,
                                 2 * FOOT_HALF_WIDTH, 0.04)},
    ]
    joints = [
        {"name": p + "hip_yaw", "parent": "pelvis", "child": p + "hip_yaw_link",
         "axis": [0, 0, 1],
         "origin": {"pos": [0.0, sign * HIP_OFFSET_Y, HIP_OFFSET_Z]}},
        {"name": p + "hip_roll", "parent": p + "hip_yaw_link",
         "child": p + "hip_roll_link", "axis": [1, 0, 0]},
        {"name": p + "hip_pitch", "parent": p + "hip_roll_link",
         "child": p + "thigh", "axis": [0, 1, 0]},
        {"name": p + "knee", "parent": p + "thigh", "child": p + "shin",
         "axis": [0, 1, 0], "origin": {"pos": [0, 0, -THIGH_LEN]}},
        {"name": p + "ankle_pitch", "parent": p + "shin",
         "child": p + "ankle_link", "axis": [0, 1, 0],
         "origin": {"pos": [0, 0, -SHIN_LEN]}},
        {"name": p + "ankle_roll", "parent": p + "ankle_link",
         "child": p + "foot", "axis": [1, 0, 0]},
    ]
    frames = [{"name": FOOT_FRAMES[side], "link": p + "foot",
               "pos": [FOOT_FORWARD, 0.0, -ANKLE_TO_SOLE]}]
    return links, joints, frames


def _arm(side: str, sign: float):
    p = side[0] + "_"
    links = [
        {"name": p + "shoulder_link", "mass": 0.25, "com": [0, 0, 0],
         "inertia": [2e-4, 2e-4, 2e-4]},
        {"name": p + "shoulder_roll_link", "mass": 0.25, "com": [0, 0, 0],
         "inertia": [2e-4, 2e-4, 2e-4]},
        {"name": p + "upper_arm", "mass": 0.5,
         "com": [0, 0, -(abs(SHOULDER_YAW_Z) + UPPER_ARM_LEN) / 2],
         "inertia": _rod_inertia(0.5, UPPER_ARM_LEN, radius=0.025)},
        {"name": p + "forearm", "mass": 0.4, "com": [0, 0, -FOREARM_TO_HAND / 2],
         "inertia": _rod_inertia(0.4, FOREARM_TO_HAND, radius=0.02)},
    ]
    shoulder = SHOULDER_OFFSET * np.array([1.0, sign, 1.0])
    joints = [
        {"name": p + "shoulder_pitch", "parent": "pelvis",
         "child": p + "shoulder_link", "axis": [0, 1, 0],
         "origin": {"pos": shoulder.tolist()}},
        {"name": p + "shoulder_roll", "parent": p + "shoulder_link",
         "child": p + "shoulder_roll_link", "axis": [1, 0, 0],
         "origin": {"pos": [0.0, sign * SHOULDER_ROLL_Y, 0.0]}},
        {"name": p + "shoulder_yaw", "parent": p + "shoulder_roll_link",
         "child": p + "upper_arm", "axis": [0, 0, 1],
         "origin": {"pos": [0.0, 0.0, SHOULDER_YAW_Z]}},
        {"name": p + "elbow", "parent": p + "upper_arm", "child": p + "forearm",
         "axis": [0, 1, 0], "origin": {"pos": [0.0, 0.0, -UPPER_ARM_LEN]}},
    ]
    frames = [{"name": HAND_FRAMES[side], "link": p + "forearm",
               "pos": [0.0, 0.0, -FOREARM_TO_HAND]}]
    return links, joints, frames


def nominal_pelvis_height() -> float:
    knee = NOMINAL_LEG["knee"]
    drop = (THIGH_LEN * np.cos(NOMINAL_LEG["hip_pitch"])
            + SHIN_LEN * np.cos(NOMINAL_LEG["hip_pitch"] + knee))
    return float(ANKLE_TO_SOLE + drop - HIP_OFFSET_Z)


def build_desk_humanoid() -> dict:
    links = [{"name": "pelvis", "mass": 11.0, "com": [0.0, 0.0, 0.10],
              "inertia": _box_inertia(11.0, 0.20, 0.24, 0.35)}]
    joints: list[dict] = []
    frames = [{"name": "torso", "link": "pelvis", "pos": [0.0, 0.0, 0.0]}]
    for side, sign in (("left", 1.0), ("right", -1.0)):
        for part in (_leg, _arm):
            l, j, f = part(side, sign)
            links += l
            joints += j
            frames += f
    for j in joints:
        j["effort"] = EFFORT[j["name"][2:]]

    nominal_joints: dict[str, float] = {}
    for side, sign in (("left", 1.0), ("right", -1.0)):
        for name, val in NOMINAL_LEG.items():
            nominal_joints[f"{side[0]}_{name}"] = val
        for name, val in NOMINAL_ARM.items():
            v = val * (sign if name == "shoulder_roll" else 1.0)
            nominal_joints[f"{side[0]}_{name}"] = v

    return {
        "name": "desk_humanoid",
        "base": {"link": "pelvis", "floating": True},
        "links": links,
        "joints": joints,
        "frames": frames,
        "actuated": "all",
        "nominal": {
            "base_pos": [0.0, 0.0, nominal_pelvis_height()],
            "base_quat": [1.0, 0.0, 0.0, 0.0],
            "joint_angles": nominal_joints,
        },
    }


def write_default_model(path: str | Path | None = None) -> Path:
    path = Path(path) if path else default_model_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = build_desk_humanoid()
    path.write_text(json.dumps(doc, indent=1) + "\n")
    RobotModel.from_dict(doc)  # validate before shipping
    return path


if __name__ == "__main__":
    out = write_default_model()
    print(out)
