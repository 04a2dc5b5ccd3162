"""Log-densities, gradients, and samplers for the policy heads.

Every density comes as a forward returning ``(logp, cache)`` and a backward
mapping the upstream derivative of ``logp`` to derivatives of the inputs.
Shapes are batched on the leading axes; the mixture is diagonal-Gaussian.
"""

from __future__ import annotations

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def logsumexp(a: np.ndarray, axis: int = -1) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def log_softmax(a: np.ndarray, axis: int = -1) -> np.ndarray:
    return a - np.expand_dims(logsumexp(a, axis=axis), axis)


def softmax(a: np.ndarray, axis: int = -1) -> np.ndarray:
    return np.exp(log_softmax(a, axis=axis))


def sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a, dtype=float)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def softplus(a: np.ndarray) -> np.ndarray:
    return np.maximum(a, 0.0) + np.log1p(np.exp(-np.abs(a)))


# --- Gaussian mixture over deltas --------------------------------------------

def gmm_log_prob(logits: np.ndarray, means: np.ndarray, stds: np.ndarray,
                 x: np.ndarray) -> tuple[np.ndarray, dict]:
    """Log-density of ``x`` under a diagonal-Gaussian mixture.

    ``logits [..., K]``, ``means/stds [..., K, D]``, ``x [..., D]``.
    """
    z = (x[..., None, :] - means) / stds
    comp = -0.5 * np.sum(z * z + LOG_2PI, axis=-1) \
        - np.sum(np.log(stds), axis=-1)
    joint = log_softmax(logits, axis=-1) + comp
    logp = logsumexp(joint, axis=-1)
    cache = {"resp": np.exp(joint - logp[..., None]),
             "weights": softmax(logits, axis=-1), "z": z, "stds": stds}
    return logp, cache


def gmm_log_prob_backward(dlogp: np.ndarray, cache: dict
                          ) -> tuple[np.ndarray, np.ndarray, np.ndarray,
                                     np.ndarray]:
    """Returns (dlogits, dmeans, dstds, dx) given d/dlogp."""
    resp, w, z, stds = (cache["resp"], cache["weights"], cache["z"],
                        cache["stds"])
    dl = dlogp[..., None]
    dlogits = dl * (resp - w)
    dcomp = dl * resp
    dmeans = dcomp[..., None] * z / stds
    dstds = dcomp[..., None] * (z * z - 1.0) / stds
    dx = -np.sum(dmeans, axis=-2)
    return dlogits, dmeans, dstds, dx


def gmm_sample(rng: np.random.Generator, logits: np.ndarray,
               means: np.ndarray, stds: np.ndarray,
               deterministic: bool = False) -> np.ndarray:
    """Draw one vector: pick a mode by its weight, then its diagonal
    Gaussian; ``deterministic`` takes the highest-weight mode's mean."""
    if deterministic:
        k = int(np.argmax(logits))
        return means[k].copy()
    p = softmax(np.asarray(logits, dtype=float))
    k = int(rng.choice(len(p), p=p))
    return rng.normal(means[k], stds[k])


# --- Bernoulli ----------------------------------------------------------------

def bernoulli_log_prob(logit: np.ndarray, y: np.ndarray
                       ) -> tuple[np.ndarray, dict]:
    """``log p(y)`` for y in {0,1} with success probability sigmoid(logit)."""
    logp = y * logit - softplus(logit)
    return logp, {"p": sigmoid(logit), "y": y}


def bernoulli_log_prob_backward(dlogp: np.ndarray, cache: dict) -> np.ndarray:
    return dlogp * (cache["y"] - cache["p"])


# --- categorical --------------------------------------------------------------

def categorical_log_prob(logits: np.ndarray, idx: np.ndarray
                         ) -> tuple[np.ndarray, dict]:
    """``log p(idx)`` under softmax(logits); ``idx [...]`` integer."""
    ls = log_softmax(logits, axis=-1)
    idx = np.asarray(idx, dtype=np.int64)
    logp = np.take_along_axis(ls, idx[..., None], axis=-1)[..., 0]
    return logp, {"probs": np.exp(ls), "idx": idx}


def categorical_log_prob_backward(dlogp: np.ndarray, cache: dict
                                  ) -> np.ndarray:
    probs, idx = cache["probs"], cache["idx"]
    dlogits = -dlogp[..., None] * probs
    np.put_along_axis(dlogits, idx[..., None],
                      np.take_along_axis(dlogits, idx[..., None], axis=-1)
                      + dlogp[..., None], axis=-1)
    return dlogits


def categorical_sample(rng: np.random.Generator,
                       logits: np.ndarray) -> int:
    p = softmax(np.asarray(logits, dtype=float))
    return int(rng.choice(len(p), p=p))
