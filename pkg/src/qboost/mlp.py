"""Boost predictor network: 4 -> 32 -> 16 -> 1 with manual backprop.

Hidden layers use ReLU with inverted dropout; the head is softplus plus a
0.01 floor so raw boosts are always strictly positive. Training state (Adam
moments, step count, learning rate) lives next to the weights so a single
object round-trips through JSON.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

LAYER_SIZES = (4, 32, 16, 1)
PARAM_KEYS = ("W1", "b1", "W2", "b2", "W3", "b3")
XAVIER_GAIN = 0.01
OUTPUT_FLOOR = 0.01
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class PredictorParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    adam_m: dict
    adam_v: dict
    step_count: int = 0
    lr: float = 1e-4
    dropout_p: float = 0.2

    def tensors(self):
        """Pairs (key, array) in fixed order."""
        return [(k, getattr(self, k)) for k in PARAM_KEYS]

    def l2_norm_sq(self) -> float:
        return float(sum((t * t).sum() for _, t in self.tensors()))

    def copy(self) -> "PredictorParams":
        return PredictorParams(
            **{k: getattr(self, k).copy() for k in PARAM_KEYS},
            adam_m={k: a.copy() for k, a in self.adam_m.items()},
            adam_v={k: a.copy() for k, a in self.adam_v.items()},
            step_count=self.step_count,
            lr=self.lr,
            dropout_p=self.dropout_p,
        )


def init_params(seed: int, lr: float = 1e-4, dropout_p: float = 0.2) -> PredictorParams:
    """Xavier-uniform weights with gain 0.01, zero biases, fresh Adam state."""
    rng = np.random.default_rng(seed)
    weights = {}
    for i, (fan_in, fan_out) in enumerate(zip(LAYER_SIZES[:-1], LAYER_SIZES[1:]), start=1):
        bound = XAVIER_GAIN * np.sqrt(6.0 / (fan_in + fan_out))
        weights[f"W{i}"] = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        weights[f"b{i}"] = np.zeros(fan_out)
    return PredictorParams(
        **weights,
        adam_m={k: np.zeros_like(weights[k]) for k in PARAM_KEYS},
        adam_v={k: np.zeros_like(weights[k]) for k in PARAM_KEYS},
        step_count=0,
        lr=lr,
        dropout_p=dropout_p,
    )


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def forward(params: PredictorParams, features: np.ndarray, train: bool, rng=None):
    """Raw boosts for a (rows, 4) feature batch.

    Returns (raw, tape) where raw has shape (rows,) and every entry is
    > OUTPUT_FLOOR thanks to the softplus head. In train mode dropout masks
    are drawn from rng (Bernoulli(1-p), scaled by 1/(1-p)); in eval mode the
    masks are ones and rng is unused.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[1] != LAYER_SIZES[0]:
        raise ValueError(f"features must have shape (rows, {LAYER_SIZES[0]})")
    p = params.dropout_p
    if train:
        if rng is None:
            raise ValueError("train mode needs an rng for dropout masks")
        keep = 1.0 - p
        mask1 = (rng.random((x.shape[0], LAYER_SIZES[1])) < keep) / keep
        mask2 = (rng.random((x.shape[0], LAYER_SIZES[2])) < keep) / keep
    else:
        mask1 = np.ones((x.shape[0], LAYER_SIZES[1]))
        mask2 = np.ones((x.shape[0], LAYER_SIZES[2]))

    pre1 = x @ params.W1 + params.b1
    h1 = np.maximum(pre1, 0.0) * mask1
    pre2 = h1 @ params.W2 + params.b2
    h2 = np.maximum(pre2, 0.0) * mask2
    pre3 = h2 @ params.W3 + params.b3
    raw = _softplus(pre3[:, 0]) + OUTPUT_FLOOR
    tape = {
        "x": x, "pre1": pre1, "mask1": mask1, "h1": h1,
        "pre2": pre2, "mask2": mask2, "h2": h2, "pre3": pre3,
    }
    return raw, tape


def backward(params: PredictorParams, tape: dict, upstream: np.ndarray) -> dict:
    """Gradients of sum(upstream * raw) for every parameter tensor."""
    u = np.asarray(upstream, dtype=float)
    if u.shape != (tape["x"].shape[0],):
        raise ValueError("upstream must have one entry per batch row")
    d_pre3 = u[:, None] * _sigmoid(tape["pre3"])
    gW3 = tape["h2"].T @ d_pre3
    gb3 = d_pre3.sum(axis=0)
    d_h2 = d_pre3 @ params.W3.T
    d_pre2 = d_h2 * tape["mask2"] * (tape["pre2"] > 0)
    gW2 = tape["h1"].T @ d_pre2
    gb2 = d_pre2.sum(axis=0)
    d_h1 = d_pre2 @ params.W2.T
    d_pre1 = d_h1 * tape["mask1"] * (tape["pre1"] > 0)
    gW1 = tape["x"].T @ d_pre1
    gb1 = d_pre1.sum(axis=0)
    return {"W1": gW1, "b1": gb1, "W2": gW2, "b2": gb2, "W3": gW3, "b3": gb3}


def add_grads(total: dict | None, grads: dict) -> dict:
    """Accumulate gradient dicts, used when a tick is split into chunks."""
    if total is None:
        return {k: g.copy() for k, g in grads.items()}
    for k, g in grads.items():
        total[k] += g
    return total


def optimizer_step(
    params: PredictorParams,
    gradients: dict,
    l2_lambda: float,
    clip_norm: float | None,
) -> PredictorParams:
    """One Adam step on loss-plus-L2 gradients with global norm clipping.

    The effective gradient is g + 2*l2_lambda*theta per tensor. If its global
    L2 norm exceeds clip_norm it is rescaled to clip_norm (pass None or a
    non-positive value to disable clipping). Updates params in place and
    returns it.
    """
    eff = {}
    sq = 0.0
    for key, theta in params.tensors():
        g = gradients[key] + 2.0 * l2_lambda * theta
        eff[key] = g
        sq += float((g * g).sum())
    norm = np.sqrt(sq)
    if clip_norm is not None and clip_norm > 0 and norm > clip_norm:
        scale = clip_norm / norm
        for key in eff:
            eff[key] = eff[key] * scale

    params.step_count += 1
    t = params.step_count
    bc1 = 1.0 - ADAM_BETA1 ** t
    bc2 = 1.0 - ADAM_BETA2 ** t
    for key, theta in params.tensors():
        g = eff[key]
        m = params.adam_m[key]
        vv = params.adam_v[key]
        m *= ADAM_BETA1
        m += (1.0 - ADAM_BETA1) * g
        vv *= ADAM_BETA2
        vv += (1.0 - ADAM_BETA2) * g * g
        theta -= params.lr * (m / bc1) / (np.sqrt(vv / bc2) + ADAM_EPS)
    return params


def grad_global_norm(params: PredictorParams, gradients: dict, l2_lambda: float) -> float:
    """Pre-clip global norm of the loss-plus-L2 gradient."""
    sq = 0.0
    for key, theta in params.tensors():
        g = gradients[key] + 2.0 * l2_lambda * theta
        sq += float((g * g).sum())
    return float(np.sqrt(sq))


@dataclass
class SchedulerDecision:
    lr_factor_applied: bool
    stop: bool


def schedule_and_stop(
    history: list,
    plateau_patience: int = 5,
    stop_patience: int = 30,
    rel_improvement: float = 1e-4,
) -> SchedulerDecision:
    """Reduce-on-plateau and early-stopping flags for the latest episode.

    An episode improves when its loss beats the best seen so far by a
    relative margin. The plateau counter resets on improvement and on every
    halving; the stop counter resets on improvement only. Pure function of
    the loss history, so replaying the same history gives the same flags.
    """
    best = np.inf
    plateau = 0
    stalled = 0
    halve = False
    stop = False
    for loss in history:
        if loss < best * (1.0 - rel_improvement):
            best = loss
            plateau = 0
            stalled = 0
            halve = False
        else:
            plateau += 1
            stalled += 1
            halve = False
            if plateau >= plateau_patience:
                halve = True
                plateau = 0
        stop = stalled >= stop_patience
    return SchedulerDecision(lr_factor_applied=halve, stop=stop)


def save_model(params: PredictorParams, seed: int, hyperparameters: dict, path) -> None:
    """Persist weights, Adam state, step count, seed and hyperparameters as JSON.

    Arrays are written with full repr precision so loading is bit-exact.
    """
    blob = {
        "layer_sizes": list(LAYER_SIZES),
        "weights": {k: t.tolist() for k, t in params.tensors()},
        "adam_m": {k: a.tolist() for k, a in params.adam_m.items()},
        "adam_v": {k: a.tolist() for k, a in params.adam_v.items()},
        "step_count": params.step_count,
        "lr": params.lr,
        "dropout_p": params.dropout_p,
        "seed": seed,
        "hyperparameters": hyperparameters,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blob, fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Inverse of save_model. Returns (params, seed, hyperparameters)."""
    with open(path, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    if tuple(blob.get("layer_sizes", ())) != LAYER_SIZES:
        raise ValueError(f"unexpected layer sizes in model file {path}")
    shapes = {
        "W1": (LAYER_SIZES[0], LAYER_SIZES[1]), "b1": (LAYER_SIZES[1],),
        "W2": (LAYER_SIZES[1], LAYER_SIZES[2]), "b2": (LAYER_SIZES[2],),
        "W3": (LAYER_SIZES[2], LAYER_SIZES[3]), "b3": (LAYER_SIZES[3],),
    }
    weights = {}
    for k, shape in shapes.items():
        arr = np.asarray(blob["weights"][k], dtype=float)
        if arr.shape != shape:
            raise ValueError(f"weight {k} has shape {arr.shape}, expected {shape}")
        weights[k] = arr
    params = PredictorParams(
        **weights,
        adam_m={k: np.asarray(blob["adam_m"][k], dtype=float) for k in PARAM_KEYS},
        adam_v={k: np.asarray(blob["adam_v"][k], dtype=float) for k in PARAM_KEYS},
        step_count=int(blob["step_count"]),
        lr=float(blob["lr"]),
        dropout_p=float(blob["dropout_p"]),
    )
    return params, blob.get("seed"), blob.get("hyperparameters", {})
