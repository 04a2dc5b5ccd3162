"""Policy model: configuration, forward pass, loss gradients, action agent.

The network is encoder (2-layer tanh MLP) -> stacked gated-recurrent
layers -> trunk (2-layer tanh MLP) -> linear heads.  Heads parameterize a
diagonal-Gaussian mixture over the 14-dim two-hand setpoint delta, two
grasp Bernoullis, and either a trigger Bernoulli plus 6-way locomotion
categorical (``gait_head="split"``) or a single 7-way categorical whose
class 0 means "no step" (``gait_head="combined"``).

Hand deltas are expressed in the previous setpoint's frame: position deltas
rotate by the previous orientation before adding, quaternion deltas
right-multiply and renormalize.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..command import (WORKSPACE_LOWER, WORKSPACE_UPPER, HandSetpoint,
                       TaskSpaceCommand)
from ..quat import quat_conj, quat_mul, quat_normalize, quat_rotate
from . import nets
from .distributions import (bernoulli_log_prob, bernoulli_log_prob_backward,
                            categorical_log_prob,
                            categorical_log_prob_backward, categorical_sample,
                            gmm_log_prob, gmm_log_prob_backward, gmm_sample,
                            sigmoid, softmax, softplus)
from .nets import Params

N_LOCOMOTION_TYPES = 6
SIDES = ("left", "right")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PolicyConfig:
    """Network sizes and head layout; JSON round-trippable."""

    obs_dim: int = 89
    hand_dim: int = 14
    n_modes: int = 5
    encoder_width: int = 400
    rnn_width: int = 400
    rnn_layers: int = 2
    trunk_width: int = 1024
    gait_head: str = "split"
    std_floor: float = 1e-4

    def __post_init__(self):
        for name in ("obs_dim", "hand_dim", "n_modes", "encoder_width",
                     "rnn_width", "rnn_layers", "trunk_width"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.gait_head not in ("split", "combined"):
            raise ValueError(f"unknown gait_head {self.gait_head!r}")
        if self.std_floor <= 0:
            raise ValueError("std_floor must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyConfig":
        return cls(**d)


def trainable(name: str) -> bool:
    """Input normalization is frozen from dataset statistics, not learned."""
    return not name.startswith("norm.")


def param_names(params: Params) -> list[str]:
    return sorted(n for n in params if trainable(n))


def init_params(config: PolicyConfig, seed: int = 0) -> Params:
    rng = np.random.default_rng(seed)
    p: Params = {}
    p["norm.mean"] = np.zeros(config.obs_dim)
    p["norm.std"] = np.ones(config.obs_dim)
    # the mixture models hand deltas in per-dimension standardized units;
    # raw deltas are millimetres against unit-scale network outputs, and
    # that mismatch makes the likelihood badly conditioned
    p["norm.delta_mean"] = np.zeros(config.hand_dim)
    p["norm.delta_std"] = np.ones(config.hand_dim)
    nets.mlp_init(p, rng, "enc", config.obs_dim, config.encoder_width,
                  config.encoder_width)
    width = config.encoder_width
    for i in range(config.rnn_layers):
        nets.gru_init(p, rng, f"gru{i}", width, config.rnn_width)
        width = config.rnn_width
    nets.mlp_init(p, rng, "trunk", config.rnn_width, config.trunk_width,
                  config.trunk_width)
    kd = config.n_modes * config.hand_dim
    nets.linear_init(p, rng, "head.mode", config.trunk_width, config.n_modes)
    nets.linear_init(p, rng, "head.mean", config.trunk_width, kd)
    nets.linear_init(p, rng, "head.std", config.trunk_width, kd)
    nets.linear_init(p, rng, "head.grasp", config.trunk_width, 2)
    if config.gait_head == "split":
        nets.linear_init(p, rng, "head.trigger", config.trunk_width, 1)
        nets.linear_init(p, rng, "head.type", config.trunk_width,
                         N_LOCOMOTION_TYPES)
    else:
        nets.linear_init(p, rng, "head.gait", config.trunk_width,
                         N_LOCOMOTION_TYPES + 1)
    return p


# --- forward ------------------------------------------------------------------

def forward(params: Params, config: PolicyConfig, obs: np.ndarray,
            h0: np.ndarray | None = None
            ) -> tuple[dict, np.ndarray, dict]:
    """Run a [B, T, obs] batch (or a single [T, obs] sequence) through the
    network; returns per-step head outputs, final hidden [layers, B, H],
    and the caches the backward pass needs."""
    obs = np.asarray(obs, dtype=float)
    if obs.ndim == 2:
        heads, hT, caches = forward(params, config, obs[None], h0)
        return {k: v[0] for k, v in heads.items()}, hT, caches
    B, T, D = obs.shape
    if T < 1:
        raise ValueError("sequence length must be >= 1")
    if D != config.obs_dim:
        raise ValueError(f"expected obs dim {config.obs_dim}, got {D}")
    x = (obs - params["norm.mean"]) / params["norm.std"]
    enc, enc_cache = nets.mlp(params, "enc", x.reshape(B * T, D))
    enc = enc.reshape(B, T, -1)

    if h0 is None:
        h0 = np.zeros((config.rnn_layers, B, config.rnn_width))
    h = [h0[i] for i in range(config.rnn_layers)]
    step_caches: list[list[tuple]] = []
    outs = np.empty((B, T, config.rnn_width))
    for t in range(T):
        xt = enc[:, t]
        layer_caches = []
        for i in range(config.rnn_layers):
            h[i], cache = nets.gru_step(params, f"gru{i}", xt, h[i])
            layer_caches.append(cache)
            xt = h[i]
        step_caches.append(layer_caches)
        outs[:, t] = xt

    trunk, trunk_cache = nets.mlp(params, "trunk", outs.reshape(B * T, -1))
    K, HD = config.n_modes, config.hand_dim
    head_caches: dict[str, tuple] = {}

    def head(name, *shape):
        y, cache = nets.linear(params, name, trunk)
        head_caches[name] = cache
        return y.reshape(B, T, *shape)

    std_raw = head("head.std", K, HD)
    heads = {
        "mode_logits": head("head.mode", K),
        "means": head("head.mean", K, HD),
        "stds": config.std_floor + softplus(std_raw),
        "grasp_logits": head("head.grasp", 2),
    }
    if config.gait_head == "split":
        heads["trigger_logit"] = head("head.trigger", 1)[..., 0]
        heads["type_logits"] = head("head.type", N_LOCOMOTION_TYPES)
    else:
        heads["gait_logits"] = head("head.gait", N_LOCOMOTION_TYPES + 1)
    caches = {"enc": enc_cache, "steps": step_caches, "trunk": trunk_cache,
              "heads": head_caches, "std_raw": std_raw, "shape": (B, T)}
    return heads, np.stack(h), caches


# --- loss and gradients -------------------------------------------------------

def loss_and_grads(params: Params, config: PolicyConfig, batch: dict,
                   h0: np.ndarray | None = None
                   ) -> tuple[float, Params, np.ndarray, dict]:
    """Mean negative log-likelihood over valid steps plus its gradient.

    ``batch`` maps: obs [B,T,obs]; delta [B,T,hand]; grasp [B,T,2];
    trigger [B,T]; loco [B,T] ints; mask [B,T] validity.  Locomotion-type
    likelihood only counts steps whose demo trigger is 1.  Returns
    (loss, grads, final hidden, per-term means).
    """
    obs = np.asarray(batch["obs"], dtype=float)
    B, T = obs.shape[:2]
    delta = (np.asarray(batch["delta"], dtype=float)
             - params["norm.delta_mean"]) / params["norm.delta_std"]
    grasp = np.asarray(batch["grasp"], dtype=float)
    trigger = np.asarray(batch["trigger"], dtype=float)
    loco = np.asarray(batch["loco"], dtype=np.int64)
    mask = np.asarray(batch["mask"], dtype=float)
    n_valid = float(mask.sum())
    if n_valid < 1:
        raise ValueError("batch has no valid steps")

    heads, hT, caches = forward(params, config, obs, h0)
    gmm_lp, gmm_cache = gmm_log_prob(heads["mode_logits"], heads["means"],
                                     heads["stds"], delta)
    grasp_lp, grasp_cache = bernoulli_log_prob(heads["grasp_logits"], grasp)
    terms = {"gmm": -np.sum(mask * gmm_lp) / n_valid,
             "grasp": -np.sum(mask[..., None] * grasp_lp) / n_valid}
    if config.gait_head == "split":
        trig_lp, trig_cache = bernoulli_log_prob(heads["trigger_logit"],
                                                 trigger)
        type_lp, type_cache = categorical_log_prob(heads["type_logits"], loco)
        type_mask = mask * trigger
        terms["trigger"] = -np.sum(mask * trig_lp) / n_valid
        terms["type"] = -np.sum(type_mask * type_lp) / n_valid
    else:
        gait_idx = np.where(trigger > 0.5, loco + 1, 0)
        gait_lp, gait_cache = categorical_log_prob(heads["gait_logits"],
                                                   gait_idx)
        terms["gait"] = -np.sum(mask * gait_lp) / n_valid
    loss = float(sum(terms.values()))

    # backward: d(loss)/d(logp) = -mask / n_valid for each term
    grads: Params = {n: np.zeros_like(v) for n, v in params.items()
                     if trainable(n)}
    w = -mask / n_valid
    dmode, dmeans, dstds, _dx = gmm_log_prob_backward(w, gmm_cache)
    dgrasp = bernoulli_log_prob_backward(w[..., None], grasp_cache)
    head_grads = {"head.mode": dmode,
                  "head.mean": dmeans,
                  "head.std": dstds * sigmoid(caches["std_raw"]),
                  "head.grasp": dgrasp}
    if config.gait_head == "split":
        dtrig = bernoulli_log_prob_backward(w, trig_cache)
        dtype = categorical_log_prob_backward(-type_mask / n_valid,
                                              type_cache)
        head_grads["head.trigger"] = dtrig[..., None]
        head_grads["head.type"] = dtype
    else:
        head_grads["head.gait"] = categorical_log_prob_backward(w, gait_cache)

    dtrunk = None
    for name, dy in head_grads.items():
        dx = nets.linear_backward(params, grads, dy.reshape(B * T, -1),
                                  caches["heads"][name])
        dtrunk = dx if dtrunk is None else dtrunk + dx
    dgru_out = nets.mlp_backward(params, grads, dtrunk, caches["trunk"])
    dgru_out = dgru_out.reshape(B, T, -1)

    dh = [np.zeros((B, config.rnn_width))
          for _ in range(config.rnn_layers)]
    denc = np.empty((B, T, config.encoder_width))
    for t in reversed(range(T)):
        dxt = dgru_out[:, t]
        for i in reversed(range(config.rnn_layers)):
            dh[i] += dxt
            dxt, dh[i] = nets.gru_step_backward(params, grads, dh[i],
                                                caches["steps"][t][i])
        denc[:, t] = dxt
    nets.mlp_backward(params, grads, denc.reshape(B * T, -1), caches["enc"])
    return loss, grads, hT, terms


# --- acting -------------------------------------------------------------------

VARIANTS = ("stochastic", "deterministic", "categorical")


class PolicyAgent:
    """Drives the runtime from a trained policy at the 20 Hz command rate.

    Maintains recurrent state and the previous hand setpoints across calls;
    composes sampled deltas onto the previous setpoints; mirrors the gait
    gate by forcing the trigger to 0 while a step is in flight.

    Variants: ``stochastic`` samples the mixture and draws the trigger
    Bernoulli with argmax type selection; ``deterministic`` replaces the
    mixture sample by the highest-weight mode mean; ``categorical`` draws
    the gait from a single 7-way distribution (no-op + 6 types) — for a
    split-head model that distribution is the product of the trigger
    Bernoulli and the type categorical.
    """

    def __init__(self, params: Params, config: PolicyConfig, seed: int = 0,
                 variant: str = "stochastic"):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        self.params = params
        self.config = config
        self.rng = np.random.default_rng(seed)
        self.variant = variant
        self.reset({})

    def reset(self, goal: dict):
        self._h = np.zeros((self.config.rnn_layers, 1,
                            self.config.rnn_width))
        self._prev: dict[str, tuple[np.ndarray, np.ndarray]] | None = None
        self._seq = 0

    def act(self, view) -> TaskSpaceCommand | None:
        if view.fallen:
            return None
        if self._prev is None:
            self._prev = {side: (ref.pos.copy(), ref.quat.copy())
                          for side, ref in view.hands_body.items()}
        heads, self._h, _ = forward(self.params, self.config,
                                    view.obs[None, None, :], self._h)
        pick = lambda a: np.asarray(a[0, 0], dtype=float)
        delta = gmm_sample(self.rng, pick(heads["mode_logits"]),
                           pick(heads["means"]), pick(heads["stds"]),
                           deterministic=self.variant == "deterministic")
        delta = (self.params["norm.delta_mean"]
                 + self.params["norm.delta_std"] * delta)
        hands = {}
        for i, side in enumerate(SIDES):
            pos, quat = self._compose(side, delta[7 * i:7 * i + 7])
            hands[side] = HandSetpoint(pos=pos, quat=quat)
        grasp_p = sigmoid(pick(heads["grasp_logits"]))
        grasp = {side: bool(self.rng.random() < grasp_p[i])
                 for i, side in enumerate(SIDES)}
        trigger, loco = self._gait(heads, view.busy)
        self._seq += 1
        return TaskSpaceCommand(seq=self._seq, timestamp=view.time,
                                hands=hands, grasp=grasp, trigger=trigger,
                                locomotion=loco)

    def _compose(self, side: str, d: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray]:
        p_prev, q_prev = self._prev[side]
        pos = p_prev + quat_rotate(q_prev, d[0:3])
        pos = np.clip(pos, WORKSPACE_LOWER, WORKSPACE_UPPER)
        dq = d[3:7]
        n = float(np.linalg.norm(dq))
        quat = (quat_normalize(quat_mul(q_prev, dq / n)) if n > 1e-8
                else q_prev.copy())
        self._prev[side] = (pos, quat)
        return pos.copy(), quat.copy()

    def _gait(self, heads: dict, busy: bool) -> tuple[bool, int]:
        if self.config.gait_head == "split":
            p = float(sigmoid(heads["trigger_logit"][0, 0]))
            type_logits = np.asarray(heads["type_logits"][0, 0])
            if self.variant != "categorical":
                trigger = bool(self.rng.random() < p) and not busy
                loco = int(np.argmax(type_logits))
                return trigger, loco if trigger else 0
            # fold trigger and type into one 7-way draw: the factorized
            # heads define p(no-op) = 1-p and p(type k) = p * softmax_k
            probs = np.concatenate([[1.0 - p], p * softmax(type_logits)])
            k = int(self.rng.choice(probs.size, p=probs))
        else:
            k = categorical_sample(self.rng,
                                   np.asarray(heads["gait_logits"][0, 0]))
        if busy or k == 0:
            return False, 0
        return True, k - 1


def delta_between(p_prev: np.ndarray, q_prev: np.ndarray, p_new: np.ndarray,
                  q_new: np.ndarray) -> np.ndarray:
    """Inverse of the act-time composition: the 7-vector delta carrying the
    previous setpoint onto the new one, in the previous setpoint's frame."""
    dp = quat_rotate(quat_conj(q_prev), np.asarray(p_new) - p_prev)
    dq = quat_normalize(quat_mul(quat_conj(q_prev), q_new))
    if dq[0] < 0:
        dq = -dq
    return np.concatenate([dp, dq])


# --- checkpoints --------------------------------------------------------------

def save_checkpoint(path, params: Params, config: PolicyConfig,
                    extra: dict | None = None):
    """Versioned archive: JSON header (version, config, extras) plus the
    parameter arrays."""
    meta = {"version": CHECKPOINT_VERSION, "config": config.to_dict(),
            "extra": extra or {}}
    np.savez_compressed(path, __meta__=np.frombuffer(
        json.dumps(meta).encode(), dtype=np.uint8), **params)


def load_checkpoint(path) -> tuple[Params, PolicyConfig, dict]:
    with np.load(path) as z:
        meta = json.loads(bytes(z["__meta__"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version "
                             f"{meta.get('version')!r}")
        params = {k: z[k].copy() for k in z.files if k != "__meta__"}
    return params, PolicyConfig.from_dict(meta["config"]), meta["extra"]
