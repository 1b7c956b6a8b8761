"""Minimal dense-tensor neural toolkit with hand-written gradients.

Everything is float64 numpy; tensors are plain 2-D arrays.  The models
built on top are small and fixed, so each op ships an explicit backward
pass instead of a general autodiff tape, and every backward is validated
against central finite differences (see ``grad_check``).

Parameters live in an ordered dict (name -> array).  The concatenation of
all tensors in insertion order is the canonical flat view used by the
optimizer, the zeroth-order perturbations, and the checkpoint format.
"""

from __future__ import annotations

import base64
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

__all__ = [
    "dense_forward",
    "dense_backward",
    "relu",
    "relu_backward",
    "softmax",
    "layer_norm_forward",
    "layer_norm_backward",
    "attention",
    "attention_forward",
    "attention_backward",
    "flatten_params",
    "unflatten_params",
    "num_params",
    "AdamState",
    "adam_step",
    "GradCheckReport",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_MAGIC",
]

Params = dict[str, np.ndarray]


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

def dense_forward(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """x @ W + b with b broadcast over rows."""
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ValueError(f"dense shapes do not chain: x{x.shape} W{W.shape}")
    if b.shape != (W.shape[1],):
        raise ValueError(f"bias shape {b.shape} != ({W.shape[1]},)")
    return x @ W + b


def dense_backward(x, W, dout):
    dx = dout @ W.T
    dW = x.T @ dout
    db = dout.sum(axis=0)
    return dx, dW, db


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x, dout):
    return np.where(x > 0.0, dout, 0.0)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    m = x.max(axis=axis, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=axis, keepdims=True)


def layer_norm_forward(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
                       eps: float = 1e-5):
    """Row-wise layer normalization; returns (out, cache)."""
    mu = x.mean(axis=1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gain + bias
    return out, (xc, inv, xhat, gain)


def layer_norm_backward(cache, dout):
    xc, inv, xhat, gain = cache
    D = xc.shape[1]
    dgain = (dout * xhat).sum(axis=0)
    dbias = dout.sum(axis=0)
    dxhat = dout * gain
    # collapse the mean/variance chain into the standard two-correction form
    dx = inv * (
        dxhat
        - dxhat.mean(axis=1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)
    )
    return dx, dgain, dbias


def _masked_softmax(scores: np.ndarray, mask):
    """Row softmax treating masked-out entries as -inf; all-masked rows
    get an all-zero weight row instead of NaN."""
    if mask is None:
        return softmax(scores, axis=1)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != scores.shape:
        raise ValueError(f"mask shape {mask.shape} != scores shape {scores.shape}")
    neg = np.where(mask, scores, -np.inf)
    valid = mask.any(axis=1)
    P = np.zeros_like(scores)
    if valid.any():
        rows = neg[valid]
        m = rows.max(axis=1, keepdims=True)
        e = np.exp(rows - m)
        P[valid] = e / e.sum(axis=1, keepdims=True)
    return P


def attention_forward(Q: np.ndarray, K: np.ndarray, V: np.ndarray, mask=None):
    """Scaled dot-product attention; returns (out, cache).

    mask[i, j] = True lets query row i attend to key row j.  A query row
    whose mask is entirely False receives a zero output row.
    """
    if Q.ndim != 2 or K.ndim != 2 or V.ndim != 2:
        raise ValueError("Q, K, V must be 2-D")
    d = Q.shape[1]
    if d == 0:
        raise ValueError("attention dimension d must be >= 1")
    if K.shape[1] != d:
        raise ValueError(f"K dim {K.shape[1]} != Q dim {d}")
    if V.shape[0] != K.shape[0]:
        raise ValueError("V must have one row per key")
    scale = 1.0 / np.sqrt(d)
    scores = (Q @ K.T) * scale
    P = _masked_softmax(scores, mask)
    out = P @ V
    return out, (Q, K, V, P, scale)


def attention(Q, K, V, mask=None) -> np.ndarray:
    out, _ = attention_forward(Q, K, V, mask)
    return out


def attention_backward(cache, dout):
    Q, K, V, P, scale = cache
    dV = P.T @ dout
    dP = dout @ V.T
    # softmax jacobian per row; masked entries have P == 0 and drop out
    dS = P * (dP - (dP * P).sum(axis=1, keepdims=True))
    dQ = (dS @ K) * scale
    dK = (dS.T @ Q) * scale
    return dQ, dK, dV


# ---------------------------------------------------------------------------
# parameter containers
# ---------------------------------------------------------------------------

def flatten_params(params: Params) -> np.ndarray:
    """Concatenate all tensors in insertion order into one flat vector."""
    if not params:
        return np.zeros(0)
    return np.concatenate([params[k].ravel() for k in params])


def unflatten_params(flat: np.ndarray, template: Params) -> Params:
    total = sum(v.size for v in template.values())
    flat = np.asarray(flat, dtype=np.float64)
    if flat.shape != (total,):
        raise ValueError(f"flat vector length {flat.shape} != ({total},)")
    out: Params = {}
    pos = 0
    for k, v in template.items():
        out[k] = flat[pos:pos + v.size].reshape(v.shape).copy()
        pos += v.size
    return out


def num_params(params: Params) -> int:
    return sum(v.size for v in params.values())


def zeros_like_params(params: Params) -> Params:
    return {k: np.zeros_like(v) for k, v in params.items()}


def add_params(a: Params, b: Params, scale: float = 1.0) -> Params:
    return {k: a[k] + scale * b[k] for k in a}


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: Params
    v: Params
    step: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @staticmethod
    def init(params: Params, lr: float = 0.001) -> "AdamState":
        return AdamState(m=zeros_like_params(params), v=zeros_like_params(params), lr=lr)


def adam_step(params: Params, grads: Params, state: AdamState) -> tuple[Params, AdamState]:
    """Standard bias-corrected Adam update; returns fresh params and state."""
    if set(grads) != set(params):
        raise ValueError("gradient keys do not match parameter keys")
    t = state.step + 1
    new_m: Params = {}
    new_v: Params = {}
    new_p: Params = {}
    for k, theta in params.items():
        g = grads[k]
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape mismatch for {k}: {g.shape} vs {theta.shape}")
        m = state.beta1 * state.m[k] + (1 - state.beta1) * g
        v = state.beta2 * state.v[k] + (1 - state.beta2) * (g * g)
        mhat = m / (1 - state.beta1 ** t)
        vhat = v / (1 - state.beta2 ** t)
        new_m[k] = m
        new_v[k] = v
        new_p[k] = theta - state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return new_p, replace(state, m=new_m, v=new_v, step=t)


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_err: float
    worst_param: str
    worst_index: int
    checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} grad check: max rel err {self.max_rel_err:.3e} "
            f"(tol {self.tolerance:.1e}, worst {self.worst_param}[{self.worst_index}], "
            f"{self.checked} coords)"
        )


def grad_check(
    f: Callable[[Params], tuple[float, Params]],
    params: Params,
    tolerance: float = 1e-4,
    rng: np.random.Generator | None = None,
    samples_per_tensor: int = 8,
    h_scale: float = 1e-5,
) -> GradCheckReport:
    """Compare analytic gradients of scalar f against central differences.

    f maps params to (value, grads).  For each tensor a random coordinate
    sample is perturbed by h = h_scale * max(1, |theta|).
    """
    rng = rng or np.random.default_rng(0)
    _, grads = f(params)
    max_err = 0.0
    worst = ("", 0)
    checked = 0
    for name, theta in params.items():
        size = theta.size
        if size == 0:
            continue
        if size <= samples_per_tensor:
            coords = np.arange(size)
        else:
            coords = rng.choice(size, size=samples_per_tensor, replace=False)
        flat = theta.ravel()
        for i in coords:
            i = int(i)
            h = h_scale * max(1.0, abs(flat[i]))
            bumped = dict(params)
            up = theta.copy()
            up.ravel()[i] += h
            bumped[name] = up
            f_up, _ = f(bumped)
            down = theta.copy()
            down.ravel()[i] -= h
            bumped[name] = down
            f_down, _ = f(bumped)
            fd = (f_up - f_down) / (2 * h)
            ana = grads[name].ravel()[i]
            err = abs(ana - fd) / max(abs(ana), abs(fd), 1e-8)
            checked += 1
            if err > max_err:
                max_err = err
                worst = (name, i)
    return GradCheckReport(
        max_rel_err=max_err,
        worst_param=worst[0],
        worst_index=worst[1],
        checked=checked,
        tolerance=tolerance,
    )


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = "linksched checkpoint v1"


def save_checkpoint(path, params: Params, meta: dict) -> None:
    """Versioned text checkpoint: key=value meta block, tensor shapes,
    then the flat parameter vector as base64 float64 bytes (exact
    round-trip)."""
    flat = flatten_params(params)
    lines = [CHECKPOINT_MAGIC, "[meta]"]
    for k in sorted(meta):
        v = meta[k]
        if isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    lines.append("[shapes]")
    for name, tensor in params.items():
        dims = " ".join(str(d) for d in tensor.shape)
        lines.append(f"{name} {dims}")
    lines.append(f"[data] flat_len={flat.size}")
    payload = base64.b64encode(flat.astype("<f8").tobytes()).decode("ascii")
    lines.append(payload)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> tuple[Params, dict[str, str]]:
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC!r} file")
    try:
        meta_at = lines.index("[meta]")
        shapes_at = lines.index("[shapes]")
        data_at = next(i for i, ln in enumerate(lines) if ln.startswith("[data]"))
    except (ValueError, StopIteration):
        raise ValueError(f"{path}: missing checkpoint section") from None
    meta: dict[str, str] = {}
    for ln in lines[meta_at + 1:shapes_at]:
        key, _, val = ln.partition(" = ")
        meta[key] = val
    shapes: list[tuple[str, tuple[int, ...]]] = []
    for ln in lines[shapes_at + 1:data_at]:
        parts = ln.split()
        shapes.append((parts[0], tuple(int(d) for d in parts[1:])))
    flat_len = int(lines[data_at].split("flat_len=")[1])
    flat = np.frombuffer(base64.b64decode(lines[data_at + 1]), dtype="<f8").astype(np.float64)
    if flat.size != flat_len:
        raise ValueError(f"{path}: payload has {flat.size} values, header says {flat_len}")
    expected = sum(int(np.prod(s)) if s else 1 for _, s in shapes)
    if expected != flat_len:
        raise ValueError(f"{path}: shapes total {expected} values, header says {flat_len}")
    params: Params = {}
    pos = 0
    for name, shape in shapes:
        size = int(np.prod(shape)) if shape else 1
        params[name] = flat[pos:pos + size].reshape(shape).copy()
        pos += size
    return params, meta
