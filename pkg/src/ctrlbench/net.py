"""Two-hidden-layer tanh MLP with hand-written backprop, Adam, and the
identity-covariance Gaussian policy head.

Parameters always travel as one flat float64 vector; ``unflatten`` gives a
structured copy when the individual matrices are needed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from . import _kernels as K

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MlpSpec:
    in_dim: int
    hidden: int
    out_dim: int

    def __post_init__(self):
        if min(self.in_dim, self.hidden, self.out_dim) < 1:
            raise ValueError(f"all MLP dimensions must be >= 1, got {self}")

    @property
    def shapes(self):
        i, h, o = self.in_dim, self.hidden, self.out_dim
        return [("W1", (h, i)), ("b1", (h,)), ("W2", (h, h)), ("b2", (h,)),
                ("W3", (o, h)), ("b3", (o,))]

    @cached_property
    def layout(self):
        """``(start, stop, shape)`` of each block in the flat vector."""
        out, o = [], 0
        for _, shape in self.shapes:
            n = math.prod(shape)
            out.append((o, o + n, shape))
            o += n
        return tuple(out)

    @cached_property
    def n_params(self) -> int:
        return self.layout[-1][1]


@dataclass
class MlpParams:
    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray


def _views(spec: MlpSpec, flat: np.ndarray):
    if flat.shape != (spec.n_params,):
        raise ValueError(f"flat params have shape {flat.shape}, expected ({spec.n_params},)")
    return [flat[a:b].reshape(shape) for a, b, shape in spec.layout]


def flatten(params: MlpParams) -> np.ndarray:
    return np.concatenate([np.asarray(getattr(params, name), dtype=np.float64).ravel()
                           for name in ("W1", "b1", "W2", "b2", "W3", "b3")])


def unflatten(spec: MlpSpec, flat: np.ndarray) -> MlpParams:
    flat = np.asarray(flat, dtype=np.float64)
    return MlpParams(*(v.copy() for v in _views(spec, flat)))


def init_params(spec: MlpSpec, rng: np.random.Generator) -> np.ndarray:
    """Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases."""
    parts = []
    for name, shape in spec.shapes:
        fan_in = shape[1] if len(shape) == 2 else {"b1": spec.in_dim, "b2": spec.hidden,
                                                      "b3": spec.hidden}[name]
        bound = 1.0 / math.sqrt(fan_in)
        parts.append(rng.uniform(-bound, bound, size=shape).ravel())
    return np.concatenate(parts)


def forward(spec: MlpSpec, flat: np.ndarray, x: np.ndarray):
    """Return ``(y, cache)``; ``x`` may be one vector or a batch of rows."""
    w1, b1, w2, b2, w3, b3 = _views(spec, flat)
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.shape[1] != spec.in_dim:
        raise ValueError(f"input has {x2.shape[1]} features, expected {spec.in_dim}")
    h1 = np.tanh(x2 @ w1.T + b1)
    h2 = np.tanh(h1 @ w2.T + b2)
    y = h2 @ w3.T + b3
    return (y[0] if single else y), (x2, h1, h2, single)


def predict(spec: MlpSpec, flat: np.ndarray, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        out = np.empty(spec.out_dim)
        K.mlp_forward1(flat, spec.in_dim, spec.hidden, spec.out_dim, x, out)
        return out
    return forward(spec, flat, x)[0]


def backward(spec: MlpSpec, flat: np.ndarray, cache, upstream: np.ndarray,
             input_grad: bool = False):
    """Gradient of ``sum(upstream * y)`` w.r.t. the flat parameters.

    With ``input_grad`` the gradient w.r.t. the input rows is returned too.
    """
    w1, _, w2, _, w3, _ = _views(spec, flat)
    x2, h1, h2, single = cache
    g = np.asarray(upstream, dtype=np.float64)
    g = g.reshape(1, -1) if single else g
    if g.shape != (x2.shape[0], spec.out_dim):
        raise ValueError(f"upstream gradient shape {g.shape} does not match output")
    dz2 = (g @ w3) * (1.0 - h2 * h2)
    dz1 = (dz2 @ w2) * (1.0 - h1 * h1)
    grad = np.concatenate([
        (dz1.T @ x2).ravel(), dz1.sum(axis=0),
        (dz2.T @ h1).ravel(), dz2.sum(axis=0),
        (g.T @ h2).ravel(), g.sum(axis=0),
    ])
    if not input_grad:
        return grad
    dx = dz1 @ w1
    return grad, (dx[0] if single else dx)


@dataclass
class AdamState:
    n: int
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.m is None:
            self.m = np.zeros(self.n)
        if self.v is None:
            self.v = np.zeros(self.n)

    def copy(self) -> "AdamState":
        return AdamState(self.n, self.lr, self.beta1, self.beta2, self.eps, self.t,
                         self.m.copy(), self.v.copy())


def adam_step(state: AdamState, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """One bias-corrected Adam descent step; returns new params, updates ``state``.

    A non-finite gradient raises before anything is touched.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape or grad.shape != state.m.shape:
        raise ValueError(f"shape mismatch: params {params.shape}, grad {grad.shape}, "
                         f"state {state.m.shape}")
    if not np.all(np.isfinite(grad)):
        raise FloatingPointError("non-finite gradient passed to adam_step")
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def gaussian_log_prob(mean: np.ndarray, a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Identity-covariance Gaussian: log density and its gradient w.r.t. the mean.

    Works row-wise on batches; returns ``(logp, a - mean)``.
    """
    diff = np.asarray(a, dtype=np.float64) - mean
    d = diff.shape[-1]
    logp = -0.5 * np.sum(diff * diff, axis=-1) - 0.5 * d * LOG_2PI
    return logp, diff


@dataclass
class GaussianPolicy:
    """Mean network plus a fixed identity covariance (nothing else is learned)."""

    spec: MlpSpec
    params: np.ndarray

    def mean(self, s: np.ndarray) -> np.ndarray:
        return predict(self.spec, self.params, s)

    def log_prob(self, s: np.ndarray, a: np.ndarray):
        return gaussian_log_prob(self.mean(s), a)

    def sample(self, s: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        mu = self.mean(s)
        return mu + rng.standard_normal(mu.shape)

    def deterministic(self, s: np.ndarray) -> np.ndarray:
        return self.mean(s)

    def __call__(self, s, rng=None):
        return self.deterministic(s) if rng is None else self.sample(s, rng)
