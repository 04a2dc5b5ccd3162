"""Behavior-cloning trainer: Adam over chunked recurrent sequences.

Episodes are padded into batches; each epoch sweeps time in fixed-length
chunks, carrying hidden state forward between chunks but not gradients
(truncated backpropagation).  One optimizer step per chunk.  With a
``batch_size`` below the dataset size, each epoch shuffles episodes into
minibatches (more optimizer steps per sweep).  Fully deterministic for a
given seed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .core import PolicyConfig, init_params, loss_and_grads, param_names
from .nets import Params


class TrainingFault(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    chunk: int = 50               # BPTT truncation length, steps
    grad_clip: float = 10.0       # global-norm ceiling, 0 disables
    batch_size: int = 0           # episodes per minibatch, 0 = full batch
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.chunk < 1:
            raise ValueError("epochs and chunk must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.batch_size < 0:
            raise ValueError("batch_size must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    """Adaptive-moment gradient descent over a named parameter dict."""

    def __init__(self, params: Params, config: TrainConfig):
        self.cfg = config
        self.names = param_names(params)
        self.m = {n: np.zeros_like(params[n]) for n in self.names}
        self.v = {n: np.zeros_like(params[n]) for n in self.names}
        self.t = 0

    def step(self, params: Params, grads: Params):
        c = self.cfg
        if c.grad_clip > 0:
            norm = np.sqrt(sum(float(np.sum(grads[n] ** 2))
                               for n in self.names))
            if norm > c.grad_clip:
                scale = c.grad_clip / norm
                grads = {n: g * scale for n, g in grads.items()}
        self.t += 1
        bc1 = 1.0 - c.beta1 ** self.t
        bc2 = 1.0 - c.beta2 ** self.t
        for n in self.names:
            g = grads[n]
            self.m[n] = c.beta1 * self.m[n] + (1.0 - c.beta1) * g
            self.v[n] = c.beta2 * self.v[n] + (1.0 - c.beta2) * g * g
            params[n] = params[n] - c.learning_rate * (self.m[n] / bc1) / (
                np.sqrt(self.v[n] / bc2) + c.adam_eps)


def batch_episodes(episodes: list[dict]) -> dict:
    """Pad per-episode step arrays into one [B, T, ...] batch with a mask.

    Each episode dict maps obs/delta/grasp/trigger/loco to [T_i, ...]
    arrays.
    """
    if not episodes:
        raise ValueError("empty dataset")
    B = len(episodes)
    T = max(len(ep["obs"]) for ep in episodes)
    out = {"mask": np.zeros((B, T))}
    for key in ("obs", "delta", "grasp", "trigger", "loco"):
        proto = np.asarray(episodes[0][key])
        out[key] = np.zeros((B, T) + proto.shape[1:], dtype=proto.dtype)
    for b, ep in enumerate(episodes):
        n = len(ep["obs"])
        out["mask"][b, :n] = 1.0
        for key in ("obs", "delta", "grasp", "trigger", "loco"):
            out[key][b, :n] = np.asarray(ep[key])
    return out


def normalization_stats(batch: dict, key: str = "obs"
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean/std of a step array over valid steps, std floored."""
    mask = batch["mask"].astype(bool)
    rows = batch[key][mask]
    return rows.mean(axis=0), np.maximum(rows.std(axis=0), 1e-6)


def fit(episodes: list[dict], policy_config: PolicyConfig,
        train_config: TrainConfig,
        params: Params | None = None) -> tuple[Params, list[dict]]:
    """Train on a list of episode dicts; returns (params, per-epoch curve).

    The curve rows carry the epoch's mean loss and per-term means, weighted
    by valid steps.
    """
    if params is None:
        params = init_params(policy_config, seed=train_config.seed)
        full = batch_episodes(episodes)
        params["norm.mean"], params["norm.std"] = normalization_stats(full)
        (params["norm.delta_mean"],
         params["norm.delta_std"]) = normalization_stats(full, "delta")
    opt = Adam(params, train_config)
    rng = np.random.default_rng(train_config.seed)
    bs = train_config.batch_size or len(episodes)
    layers, width = policy_config.rnn_layers, policy_config.rnn_width
    curve: list[dict] = []
    for epoch in range(train_config.epochs):
        order = (rng.permutation(len(episodes)) if bs < len(episodes)
                 else np.arange(len(episodes)))
        total, weight = 0.0, 0.0
        sums: dict[str, float] = {}
        for i0 in range(0, len(episodes), bs):
            batch = batch_episodes([episodes[j] for j in order[i0:i0 + bs]])
            B, T = batch["mask"].shape
            h = np.zeros((layers, B, width))
            for start in range(0, T, train_config.chunk):
                stop = min(start + train_config.chunk, T)
                chunk = {k: v[:, start:stop] for k, v in batch.items()}
                n_valid = float(chunk["mask"].sum())
                if n_valid < 1:
                    break
                loss, grads, h, terms = loss_and_grads(params, policy_config,
                                                       chunk, h0=h)
                if not np.isfinite(loss):
                    raise TrainingFault(
                        f"non-finite loss at epoch {epoch}, step {start}: "
                        f"terms={ {k: float(v) for k, v in terms.items()} }")
                opt.step(params, grads)
                total += loss * n_valid
                weight += n_valid
                for k, v in terms.items():
                    sums[k] = sums.get(k, 0.0) + float(v) * n_valid
        row = {"epoch": epoch, "loss": total / weight}
        row.update({k: v / weight for k, v in sums.items()})
        curve.append(row)
    return params, curve
