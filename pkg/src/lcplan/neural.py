"""Dense feed-forward networks with hand-rolled reverse-mode gradients.

The architecture needs here are fixed and small: rectifier hidden layers
with either a softmax head (actors) or a scalar linear head (critic), so
the gradients are written out directly instead of pulling in an autodiff
framework. Parameters live in float64 throughout.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

SOFTMAX = "softmax"
LINEAR = "linear"

CHECKPOINT_MAGIC = b"LCPLNET1"  # versioned: bump the trailing digit on change


class Mlp:
    """Fully connected network: affine -> ReLU ... -> affine -> head."""

    def __init__(self, weights, biases, head: str):
        if head not in (SOFTMAX, LINEAR):
            raise ValueError(f"unknown head {head!r}")
        if len(weights) != len(biases) or not weights:
            raise ValueError("weights and biases must align, one pair per layer")
        for k, (w, b) in enumerate(zip(weights, biases)):
            if w.shape[1] != b.shape[0]:
                raise ValueError(f"layer {k}: weight/bias shapes disagree")
            if k > 0 and weights[k - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {k}: input dim mismatch")
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.head = head

    @classmethod
    def create(cls, sizes, head: str, rng: np.random.Generator) -> "Mlp":
        """He-style scaled-uniform init for the rectifier layers; the output
        layer starts at zero so softmax heads begin uniform and linear heads
        begin at the bias."""
        weights, biases = [], []
        for k in range(len(sizes) - 1):
            fan_in, fan_out = sizes[k], sizes[k + 1]
            if k == len(sizes) - 2:
                w = np.zeros((fan_in, fan_out))
            else:
                limit = np.sqrt(6.0 / fan_in)
                w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            weights.append(w)
            biases.append(np.zeros(fan_out))
        return cls(weights, biases, head)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple([self.weights[0].shape[0]] + [w.shape[1] for w in self.weights])

    def parameters(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def forward(self, x: np.ndarray):
        """Returns ``(output, cache)``; accepts a single input vector or a
        batch of rows."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        h = np.atleast_2d(x)
        if h.shape[1] != self.weights[0].shape[0]:
            raise ValueError(
                f"input dim {h.shape[1]} does not match network ({self.weights[0].shape[0]})"
            )
        activations = [h]
        n_layers = len(self.weights)
        for k in range(n_layers - 1):
            h = np.maximum(h @ self.weights[k] + self.biases[k], 0.0)
            activations.append(h)
        logits = h @ self.weights[-1] + self.biases[-1]
        if self.head == SOFTMAX:
            shifted = logits - logits.max(axis=1, keepdims=True)
            exp = np.exp(shifted)
            out = exp / exp.sum(axis=1, keepdims=True)
        else:
            out = logits
        cache = (activations, out)
        return (out[0] if single else out), cache

    def backward(self, cache, grad_out: np.ndarray):
        """Exact gradients of the scalar objective whose output gradient is
        supplied; grad_out must match the forward output's batch shape.
        Returns one gradient array per parameter (weights/biases
        interleaved, as in ``parameters()``)."""
        activations, out = cache
        g = np.atleast_2d(np.asarray(grad_out, dtype=float))
        if g.shape != out.shape:
            raise ValueError(f"output gradient shape {g.shape} != {out.shape}")
        if self.head == SOFTMAX:
            # dL/dlogits through the softmax Jacobian.
            inner = (g * out).sum(axis=1, keepdims=True)
            delta = out * (g - inner)
        else:
            delta = g
        grads = []
        for k in range(len(self.weights) - 1, -1, -1):
            a = activations[k]
            grads.append(delta.sum(axis=0))  # bias
            grads.append(a.T @ delta)  # weight
            if k > 0:
                delta = (delta @ self.weights[k].T) * (a > 0.0)
        grads.reverse()
        return grads


def log_prob_output_grad(probs: np.ndarray, actions: np.ndarray, coef: np.ndarray):
    """Output-space gradient of sum_b coef_b * log probs_b[action_b].

    Composable with ``Mlp.backward`` on a softmax head; the composition
    yields the standard coef * (onehot - probs) logit gradient.
    """
    probs = np.atleast_2d(probs)
    grad = np.zeros_like(probs)
    rows = np.arange(probs.shape[0])
    grad[rows, actions] = np.asarray(coef) / probs[rows, actions]
    return grad


@dataclass
class AdamState:
    """Bias-corrected Adam accumulators, stored flat across all parameters."""

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray = field(default_factory=lambda: np.zeros(0))
    v: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def for_params(cls, params, lr: float) -> "AdamState":
        total = sum(p.size for p in params)
        state = cls(lr=lr)
        state.m = np.zeros(total)
        state.v = np.zeros(total)
        return state


def flatten_grads(grads) -> np.ndarray:
    return np.concatenate([np.ravel(g) for g in grads])


def adam_step_flat(params, flat_grad: np.ndarray, state: AdamState) -> None:
    """One in-place Adam descent step from an already-flattened gradient."""
    if flat_grad.shape != state.m.shape:
        raise ValueError("gradient size does not match the optimizer state")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    m, v = state.m, state.v
    m *= b1
    m += (1.0 - b1) * flat_grad
    v *= b2
    v += (1.0 - b2) * flat_grad * flat_grad
    delta = (state.lr / (1.0 - b1**t)) * m
    delta /= np.sqrt(v / (1.0 - b2**t)) + state.eps
    offset = 0
    for p in params:
        k = p.size
        p -= delta[offset : offset + k].reshape(p.shape)
        offset += k
    if offset != delta.size:
        raise ValueError("parameter list does not match the optimizer state")


def adam_step(params, grads, state: AdamState) -> None:
    """One in-place Adam descent step along the supplied gradients."""
    if len(params) != len(grads):
        raise ValueError("parameter/gradient lengths disagree")
    for p, g in zip(params, grads):
        if p.shape != np.shape(g):
            raise ValueError("gradient shape mismatch")
    adam_step_flat(params, flatten_grads(grads), state)


# -- checkpoint serialization ------------------------------------------

def save_arrays(path, metadata: dict, arrays) -> None:
    """Flat binary checkpoint: magic, JSON metadata block, then each array
    as a little-endian u32 shape header followed by row-major float64
    payload."""
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(meta)))
    buf.write(meta)
    buf.write(struct.pack("<I", len(arrays)))
    for arr in arrays:
        arr = np.asarray(arr, dtype="<f8", order="C")
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_arrays(path):
    """Inverse of ``save_arrays``; returns ``(metadata, arrays)``."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ValueError("not a recognized checkpoint file (bad magic)")
    offset = len(CHECKPOINT_MAGIC)
    (meta_len,) = struct.unpack_from("<I", data, offset)
    offset += 4
    metadata = json.loads(data[offset : offset + meta_len].decode("utf-8"))
    offset += meta_len
    (n_arrays,) = struct.unpack_from("<I", data, offset)
    offset += 4
    arrays = []
    for _ in range(n_arrays):
        (ndim,) = struct.unpack_from("<I", data, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}I", data, offset)
        offset += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += 8 * count
        arrays.append(arr.copy())
    return metadata, arrays
