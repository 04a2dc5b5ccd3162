"""Network building blocks with hand-written backward passes.

Parameters live in a flat ``dict[str, np.ndarray]``; layer functions take
the dict plus a name prefix, return ``(output, cache)``, and their
backwards accumulate parameter gradients into a second dict keyed the same
way.  Activations are smooth (tanh/sigmoid) so finite-difference
verification is well conditioned.
"""

from __future__ import annotations

import numpy as np

from .distributions import sigmoid

Params = dict[str, np.ndarray]


def _uniform(rng: np.random.Generator, fan_in: int, *shape: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# --- linear -------------------------------------------------------------------

def linear_init(params: Params, rng: np.random.Generator, name: str,
                n_in: int, n_out: int, zero: bool = False):
    if zero:
        params[f"{name}.W"] = np.zeros((n_out, n_in))
        params[f"{name}.b"] = np.zeros(n_out)
    else:
        params[f"{name}.W"] = _uniform(rng, n_in, n_out, n_in)
        params[f"{name}.b"] = _uniform(rng, n_in, n_out)


def linear(params: Params, name: str, x: np.ndarray
           ) -> tuple[np.ndarray, tuple]:
    y = x @ params[f"{name}.W"].T + params[f"{name}.b"]
    return y, (name, x)


def linear_backward(params: Params, grads: Params, dy: np.ndarray,
                    cache: tuple) -> np.ndarray:
    name, x = cache
    grads[f"{name}.W"] += dy.T @ x
    grads[f"{name}.b"] += dy.sum(axis=0)
    return dy @ params[f"{name}.W"]


# --- tanh ---------------------------------------------------------------------

def tanh(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    y = np.tanh(x)
    return y, y


def tanh_backward(dy: np.ndarray, y: np.ndarray) -> np.ndarray:
    return dy * (1.0 - y * y)


# --- two-layer feedforward ----------------------------------------------------

def mlp_init(params: Params, rng: np.random.Generator, name: str,
             n_in: int, width: int, n_out: int):
    linear_init(params, rng, f"{name}.l0", n_in, width)
    linear_init(params, rng, f"{name}.l1", width, n_out)


def mlp(params: Params, name: str, x: np.ndarray) -> tuple[np.ndarray, tuple]:
    a0, c0 = linear(params, f"{name}.l0", x)
    h0, t0 = tanh(a0)
    a1, c1 = linear(params, f"{name}.l1", h0)
    h1, t1 = tanh(a1)
    return h1, (c0, t0, c1, t1)


def mlp_backward(params: Params, grads: Params, dy: np.ndarray,
                 cache: tuple) -> np.ndarray:
    c0, t0, c1, t1 = cache
    da1 = tanh_backward(dy, t1)
    dh0 = linear_backward(params, grads, da1, c1)
    da0 = tanh_backward(dh0, t0)
    return linear_backward(params, grads, da0, c0)


# --- gated recurrent cell -----------------------------------------------------
#
#   z = sigmoid(Wz x + Uz h + bz)           update gate
#   r = sigmoid(Wr x + Ur h + br)           reset gate
#   n = tanh(Wn x + bn + r * (Un h + bh))   candidate
#   h' = (1 - z) * n + z * h

def gru_init(params: Params, rng: np.random.Generator, name: str,
             n_in: int, width: int):
    for gate in ("z", "r", "n"):
        params[f"{name}.W{gate}"] = _uniform(rng, n_in, width, n_in)
        params[f"{name}.U{gate}"] = _uniform(rng, width, width, width)
        params[f"{name}.b{gate}"] = _uniform(rng, width, width)
    params[f"{name}.bh"] = _uniform(rng, width, width)


def gru_step(params: Params, name: str, x: np.ndarray, h: np.ndarray
             ) -> tuple[np.ndarray, tuple]:
    p = params
    z = sigmoid(x @ p[f"{name}.Wz"].T + h @ p[f"{name}.Uz"].T
                + p[f"{name}.bz"])
    r = sigmoid(x @ p[f"{name}.Wr"].T + h @ p[f"{name}.Ur"].T
                + p[f"{name}.br"])
    hn = h @ p[f"{name}.Un"].T + p[f"{name}.bh"]
    n = np.tanh(x @ p[f"{name}.Wn"].T + p[f"{name}.bn"] + r * hn)
    h_new = (1.0 - z) * n + z * h
    return h_new, (name, x, h, z, r, n, hn)


def gru_step_backward(params: Params, grads: Params, dh_new: np.ndarray,
                      cache: tuple) -> tuple[np.ndarray, np.ndarray]:
    """Returns (dx, dh) for one step given d/dh_new."""
    name, x, h, z, r, n, hn = cache
    p = params
    dz = dh_new * (h - n)
    dn = dh_new * (1.0 - z)
    dh = dh_new * z
    dan = dn * (1.0 - n * n)
    dr = dan * hn
    dhn = dan * r
    daz = dz * z * (1.0 - z)
    dar = dr * r * (1.0 - r)

    grads[f"{name}.Wz"] += daz.T @ x
    grads[f"{name}.Uz"] += daz.T @ h
    grads[f"{name}.bz"] += daz.sum(axis=0)
    grads[f"{name}.Wr"] += dar.T @ x
    grads[f"{name}.Ur"] += dar.T @ h
    grads[f"{name}.br"] += dar.sum(axis=0)
    grads[f"{name}.Wn"] += dan.T @ x
    grads[f"{name}.bn"] += dan.sum(axis=0)
    grads[f"{name}.Un"] += dhn.T @ h
    grads[f"{name}.bh"] += dhn.sum(axis=0)

    dx = daz @ p[f"{name}.Wz"] + dar @ p[f"{name}.Wr"] + dan @ p[f"{name}.Wn"]
    dh += daz @ p[f"{name}.Uz"] + dar @ p[f"{name}.Ur"] + dhn @ p[f"{name}.Un"]
    return dx, dh


# --- flattening (finite-difference checks, optimizer state) -------------------

def flatten(params: Params, names: list[str]) -> np.ndarray:
    return np.concatenate([params[n].ravel() for n in names])


def unflatten(vec: np.ndarray, params: Params, names: list[str]) -> Params:
    out = {}
    k = 0
    for n in names:
        size = params[n].size
        out[n] = vec[k:k + size].reshape(params[n].shape).copy()
        k += size
    assert k == vec.size
    return out
