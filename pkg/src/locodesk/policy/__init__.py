"""Hierarchical behavior-cloning policy.

A recurrent network maps proprioceptive observations to a mixture-of-
Gaussians distribution over hand-setpoint deltas plus Bernoulli grasp and
gait-trigger heads and a categorical locomotion-type head.  All gradients
are hand-derived and verified against finite differences.
"""

from .core import (PolicyAgent, PolicyConfig, init_params, forward,
                   loss_and_grads, load_checkpoint, save_checkpoint)
from .train import TrainConfig, TrainingFault, fit

__all__ = [
    "PolicyAgent", "PolicyConfig", "TrainConfig", "TrainingFault",
    "init_params", "forward", "loss_and_grads", "fit",
    "load_checkpoint", "save_checkpoint",
]
