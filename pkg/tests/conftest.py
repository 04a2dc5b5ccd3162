import numpy as np
import pytest

from locodesk.dynamics import integrate_qv
from locodesk.model import RobotModel, RobotState


def make_pendulum(mass=1.3, length=0.7):
    """Point mass on a massless rod below a world-fixed y-axis hinge."""
    return RobotModel.from_dict({
        "name": "pendulum",
        "base": {"link": "world", "floating": False},
        "links": [
            {"name": "world", "mass": 0.0, "com": [0, 0, 0], "inertia": [0, 0, 0]},
            {"name": "rod", "mass": mass, "com": [0, 0, -length],
             "inertia": [0, 0, 0]},
        ],
        "joints": [
            {"name": "hinge", "parent": "world", "child": "rod",
             "axis": [0, 1, 0], "origin": {"pos": [0, 0, 0]}},
        ],
        "frames": [{"name": "tip", "link": "rod", "pos": [0, 0, -length]}],
    })


def make_double_pendulum(m1=1.0, m2=1.0, l1=1.0, l2=1.0):
    """Two point masses on massless unit rods, both y-axis hinges."""
    return RobotModel.from_dict({
        "name": "double_pendulum",
        "base": {"link": "world", "floating": False},
        "links": [
            {"name": "world", "mass": 0.0, "com": [0, 0, 0], "inertia": [0, 0, 0]},
            {"name": "upper", "mass": m1, "com": [0, 0, -l1],
             "inertia": [0, 0, 0]},
            {"name": "lower", "mass": m2, "com": [0, 0, -l2],
             "inertia": [0, 0, 0]},
        ],
        "joints": [
            {"name": "shoulder", "parent": "world", "child": "upper",
             "axis": [0, 1, 0], "origin": {"pos": [0, 0, 0]}},
            {"name": "elbow", "parent": "upper", "child": "lower",
             "axis": [0, 1, 0], "origin": {"pos": [0, 0, -l1]}},
        ],
        "frames": [{"name": "tip", "link": "lower", "pos": [0, 0, -l2]}],
    })


def make_floating_chain():
    """Floating box with a 2-dof arm and a skew-axis tail; full inertias."""
    return RobotModel.from_dict({
        "name": "floating_chain",
        "base": {"link": "body", "floating": True},
        "links": [
            {"name": "body", "mass": 4.0, "com": [0.02, -0.01, 0.05],
             "inertia": [[0.05, 0.001, 0.002], [0.001, 0.06, 0.003],
                         [0.002, 0.003, 0.04]]},
            {"name": "arm1", "mass": 1.2, "com": [0.1, 0.0, -0.02],
             "inertia": [0.004, 0.005, 0.003]},
            {"name": "arm2", "mass": 0.7, "com": [0.09, 0.01, 0.0],
             "inertia": [0.002, 0.0025, 0.0015]},
            {"name": "tail", "mass": 0.5, "com": [0.0, -0.08, -0.03],
             "inertia": [0.001, 0.0012, 0.0008]},
        ],
        "joints": [
            {"name": "shoulder", "parent": "body", "child": "arm1",
             "axis": [0, 0, 1],
             "origin": {"pos": [0.1, 0.05, 0.1], "rpy": [0.2, -0.1, 0.3]}},
            {"name": "elbow", "parent": "arm1", "child": "arm2",
             "axis": [0, 1, 0], "origin": {"pos": [0.2, 0.0, 0.0]}},
            {"name": "tail_joint", "parent": "body", "child": "tail",
             "axis": [0.6, 0.8, 0.0],
             "origin": {"pos": [-0.1, -0.05, 0.0], "rpy": [0.0, 0.4, 0.0]}},
        ],
        "frames": [
            {"name": "hand", "link": "arm2", "pos": [0.18, 0.02, 0.0]},
            {"name": "tail_tip", "link": "tail", "pos": [0.0, -0.15, -0.05]},
        ],
    })


def random_state(model, rng, pos_scale=0.5, vel_scale=1.0):
    """A valid random state: unit base quaternion, bounded joint values."""
    q = np.zeros(model.n_q)
    if model.floating:
        q[0:3] = rng.uniform(-pos_scale, pos_scale, 3)
        quat = rng.standard_normal(4)
        q[3:7] = quat / np.linalg.norm(quat)
        q[7:] = rng.uniform(-1.2, 1.2, model.n_q - 7)
    else:
        q[:] = rng.uniform(-1.2, 1.2, model.n_q)
    v = vel_scale * rng.standard_normal(model.n_v)
    return RobotState(q=q, v=v)


def perturb_q(model, q, direction, h):
    """Configuration displaced by ``h`` along a tangent direction."""
    return integrate_qv(q, np.asarray(direction, float), h, model.floating)


@pytest.fixture(scope="session")
def pendulum():
    return make_pendulum()


@pytest.fixture(scope="session")
def double_pendulum():
    return make_double_pendulum()


@pytest.fixture(scope="session")
def floating_chain():
    return make_floating_chain()
