"""Desk-scale humanoid locomotion and manipulation stack.

Layers, bottom to top: rigid-body model and dynamics, a dense convex QP
solver, a whole-body torque controller, a walking-pattern planner, a
deterministic physics simulation with benchmark tasks, an imitation-learning
policy, and a WebSocket teleoperation service.  Hot numerical kernels are
compiled with numba when ``LOCODESK_BACKEND=numba`` (the default) and run as
plain numpy otherwise.
"""

__version__ = "0.1.0"

from .accel import BACKEND

__all__ = ["BACKEND", "__version__"]
