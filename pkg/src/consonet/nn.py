"""Minimal dense neural-network engine on numpy.

Just what the operator models need: batched MLP forward/backward with an
explicit activation cache, Glorot-uniform initialization, Adam, and the
random Fourier feature embedding.  Training runs in float32 by default;
float64 is used by the gradient-check tests, which need the headroom.

All computations are deterministic for a fixed seed and platform: numpy
matmuls have a fixed reduction order, and every random draw comes from
an explicit PCG64 generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

_ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class MlpSpec:
    """Layer widths input -> hidden... -> output, plus hidden activation."""

    layer_widths: tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValidationError("an MLP needs at least input and output widths")
        if any(w < 1 for w in self.layer_widths):
            raise ValidationError(f"layer widths must be >= 1, got {self.layer_widths}")
        if self.activation not in _ACTIVATIONS:
            raise ValidationError(f"activation must be one of {_ACTIVATIONS}")

    @property
    def in_width(self) -> int:
        return self.layer_widths[0]

    @property
    def out_width(self) -> int:
        return self.layer_widths[-1]

    def to_dict(self) -> dict:
        return {"layer_widths": list(self.layer_widths), "activation": self.activation}

    @staticmethod
    def from_dict(d: dict) -> "MlpSpec":
        return MlpSpec(layer_widths=tuple(d["layer_widths"]), activation=d["activation"])


def hidden_stack(in_width: int, out_width: int, hidden: int = 30, depth: int = 6,
                 activation: str = "tanh") -> MlpSpec:
    """Convenience builder: depth hidden layers of constant width."""
    return MlpSpec((in_width,) + (hidden,) * depth + (out_width,), activation)


class MlpParams:
    """Weights, biases, and same-shaped gradient buffers for one MLP.

    Weight matrices are (out, in); forward computes x @ W.T + b.
    """

    def __init__(self, spec: MlpSpec, weights, biases):
        self.spec = spec
        self.weights = list(weights)
        self.biases = list(biases)
        widths = spec.layer_widths
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (widths[l + 1], widths[l]) or b.shape != (widths[l + 1],):
                raise ValidationError(
                    f"layer {l} shapes {w.shape}/{b.shape} inconsistent with spec {widths}"
                )
        self.grad_w = [np.zeros_like(w) for w in self.weights]
        self.grad_b = [np.zeros_like(b) for b in self.biases]

    @property
    def dtype(self):
        return self.weights[0].dtype

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def zero_grad(self):
        for g in self.grad_w:
            g[...] = 0
        for g in self.grad_b:
            g[...] = 0

    def arrays(self):
        """Trainable arrays in a fixed order (w0, b0, w1, b1, ...)."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def grads(self):
        out = []
        for gw, gb in zip(self.grad_w, self.grad_b):
            out.extend([gw, gb])
        return out

    def copy(self) -> "MlpParams":
        return MlpParams(
            self.spec,
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def astype(self, dtype) -> "MlpParams":
        return MlpParams(
            self.spec,
            [w.astype(dtype) for w in self.weights],
            [b.astype(dtype) for b in self.biases],
        )


def init_mlp(spec: MlpSpec, seed, dtype=np.float32) -> MlpParams:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights, biases = [], []
    widths = spec.layer_widths
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)).astype(dtype))
        biases.append(np.zeros(fan_out, dtype=dtype))
    return MlpParams(spec, weights, biases)


def mlp_forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, list]:
    """Batched forward pass; returns (output, cache) for the backward pass.

    The cache is the list of layer activations [a0=x, a1, ..., aL]; the
    final layer is affine only.
    """
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != params.spec.in_width:
        raise ValidationError(
            f"input batch shape {x.shape} does not match spec input width "
            f"{params.spec.in_width}"
        )
    acts = [x]
    a = x
    last = params.n_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = a @ w.T + b
        if l < last:
            a = np.tanh(z) if params.spec.activation == "tanh" else np.maximum(z, 0)
        else:
            a = z
        acts.append(a)
    return a, acts


def mlp_backward(params: MlpParams, cache: list, grad_out: np.ndarray) -> np.ndarray:
    """Accumulate parameter gradients for one cached forward pass.

    ``grad_out`` is dLoss/d(output), shape (batch, out_width).  Gradients
    are added into params.grad_w / grad_b; the returned array is
    dLoss/d(input).
    """
    if len(cache) != params.n_layers + 1:
        raise ValidationError("stale or mismatched forward cache")
    delta = np.asarray(grad_out)
    if delta.shape != cache[-1].shape:
        raise ValidationError(
            f"grad_out shape {delta.shape} does not match cached output {cache[-1].shape}"
        )
    for l in range(params.n_layers - 1, -1, -1):
        a_prev = cache[l]
        params.grad_w[l] += delta.T @ a_prev
        params.grad_b[l] += delta.sum(axis=0)
        if l > 0:
            delta = delta @ params.weights[l]
            a = cache[l]
            if params.spec.activation == "tanh":
                delta = delta * (1.0 - a * a)
            else:
                delta = delta * (a > 0)
        else:
            delta = delta @ params.weights[0]
    return delta


class AdamState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, arrays):
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]
        self.t = 0


def adam_update(
    arrays,
    grads,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam step with bias correction over a list of arrays."""
    if len(arrays) != len(state.m) or len(arrays) != len(grads):
        raise ValidationError("parameter/gradient/state list lengths differ")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        a -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


@dataclass(frozen=True)
class FourierEmbedding:
    """Frozen random Fourier features: v -> [sin(2 pi B v); cos(2 pi B v)].

    B is (m_freq, k), drawn once from N(0, sigma^2) at construction and
    never trained; the output width is 2 * m_freq.
    """

    b_matrix: np.ndarray
    sigma: float
    m_freq: int

    def __post_init__(self):
        b = np.asarray(self.b_matrix)
        object.__setattr__(self, "b_matrix", b)
        if b.ndim != 2 or b.shape[0] != self.m_freq:
            raise ValidationError(
                f"frequency matrix shape {b.shape} inconsistent with m_freq={self.m_freq}"
            )

    @property
    def in_width(self) -> int:
        return self.b_matrix.shape[1]

    @property
    def out_width(self) -> int:
        return 2 * self.m_freq

    @staticmethod
    def create(m_freq: int, k: int, sigma: float, seed, dtype=np.float32) -> "FourierEmbedding":
        if m_freq < 1 or k < 1:
            raise ValidationError("m_freq and k must be >= 1")
        if sigma < 0:
            raise ValidationError(f"sigma must be non-negative, got {sigma}")
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        b = (sigma * rng.standard_normal((m_freq, k))).astype(dtype)
        return FourierEmbedding(b_matrix=b, sigma=sigma, m_freq=m_freq)


def fourier_embed(embedding: FourierEmbedding, v: np.ndarray) -> np.ndarray:
    """Embed a vector (k,) or batch (batch, k) to width 2 * m_freq."""
    v = np.asarray(v)
    single = v.ndim == 1
    if single:
        v = v[None, :]
    if v.shape[1] != embedding.in_width:
        raise ValidationError(
            f"input width {v.shape[1]} does not match embedding width {embedding.in_width}"
        )
    args = (2.0 * np.pi) * (v @ embedding.b_matrix.T)
    out = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    return out[0] if single else out
