"""Hot inner loops: environment dynamics, tiny-MLP inference, fused episode
rollouts, GAE recursion and batched Welford merges.

Every kernel exists twice. The ``*_loops`` variant is written in the scalar
subset numba understands and is compiled with ``@njit`` when numba is
importable. The ``*_np`` variant is a plain numpy implementation used when
numba is missing or when ``CTRLBENCH_NO_NUMBA=1`` is set in the environment.
The public names (``pendulum_step``, ``rollout_mlp`` ...) are bound to one or
the other at import time; ``benchmarks/bench_kernels.py`` times both.
"""
from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

NUMBA_AVAILABLE = numba is not None
NUMBA_ENABLED = NUMBA_AVAILABLE and os.environ.get("CTRLBENCH_NO_NUMBA", "0") in ("", "0")

ENV_PENDULUM = 0
ENV_LANDER = 1

# pendulum constants
PEND_G = 10.0
PEND_M = 1.0
PEND_L = 1.0
PEND_DT = 0.05
PEND_MAX_SPEED = 8.0
PEND_MAX_TORQUE = 2.0

# lander constants
LANDER_GRAVITY = 1.0
LANDER_THRUST = 2.0
LANDER_DT = 0.1
LANDER_SAFE_SPEED = 0.5
LANDER_BONUS = 100.0
LANDER_FUEL_COST = 0.1

OBS_CLIP = 10.0


def _jit(fn):
    if not NUMBA_AVAILABLE:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


# ---------------------------------------------------------------------------
# environment dynamics (scalar; identical in both backends)


def _pendulum_step_loops(state, u):
    if u > PEND_MAX_TORQUE:
        u = PEND_MAX_TORQUE
    elif u < -PEND_MAX_TORQUE:
        u = -PEND_MAX_TORQUE
    th = state[0]
    w = state[1]
    wrapped = ((th + math.pi) % (2.0 * math.pi)) - math.pi
    reward = -(wrapped * wrapped + 0.1 * w * w + 0.001 * u * u)
    w_new = w + (3.0 * PEND_G / (2.0 * PEND_L) * math.sin(th)
                 + 3.0 / (PEND_M * PEND_L * PEND_L) * u) * PEND_DT
    if w_new > PEND_MAX_SPEED:
        w_new = PEND_MAX_SPEED
    elif w_new < -PEND_MAX_SPEED:
        w_new = -PEND_MAX_SPEED
    state[0] = th + w_new * PEND_DT
    state[1] = w_new
    return reward, False


def _lander_step_loops(state, u):
    if u > 1.0:
        u = 1.0
    elif u < 0.0:
        u = 0.0
    v_new = state[1] + (LANDER_THRUST * u - LANDER_GRAVITY) * LANDER_DT
    h_new = state[0] + v_new * LANDER_DT
    if h_new < 0.0:
        h_new = 0.0
    reward = -LANDER_FUEL_COST * u
    terminal = h_new <= 0.0
    if terminal:
        if abs(v_new) <= LANDER_SAFE_SPEED:
            reward += LANDER_BONUS
        else:
            reward -= LANDER_BONUS
    state[0] = h_new
    state[1] = v_new
    return reward, terminal


_pendulum_step_jit = _jit(_pendulum_step_loops)
_lander_step_jit = _jit(_lander_step_loops)


def _env_step_loops(kind, state, action):
    if kind == ENV_PENDULUM:
        return _pendulum_step_jit(state, action[0])
    return _lander_step_jit(state, action[0])


def _env_obs_loops(kind, state, out):
    if kind == ENV_PENDULUM:
        out[0] = math.cos(state[0])
        out[1] = math.sin(state[0])
        out[2] = state[1]
    else:
        out[0] = state[0]
        out[1] = state[1]


_env_step_jit = _jit(_env_step_loops)
_env_obs_jit = _jit(_env_obs_loops)


# ---------------------------------------------------------------------------
# two-hidden-layer tanh MLP, single input vector
# flat layout: W1 (hidden, in) row-major, b1, W2 (hidden, hidden), b2, W3 (out, hidden), b3


def _mlp_forward1_loops(flat, in_dim, hidden, out_dim, x, out):
    h1 = np.empty(hidden)
    h2 = np.empty(hidden)
    o = 0
    b = hidden * in_dim
    for i in range(hidden):
        s = flat[b + i]
        for j in range(in_dim):
            s += flat[o + i * in_dim + j] * x[j]
        h1[i] = math.tanh(s)
    o = b + hidden
    b = o + hidden * hidden
    for i in range(hidden):
        s = flat[b + i]
        for j in range(hidden):
            s += flat[o + i * hidden + j] * h1[j]
        h2[i] = math.tanh(s)
    o = b + hidden
    b = o + out_dim * hidden
    for i in range(out_dim):
        s = flat[b + i]
        for j in range(hidden):
            s += flat[o + i * hidden + j] * h2[j]
        out[i] = s


def _mlp_forward1_np(flat, in_dim, hidden, out_dim, x, out):
    o = 0
    w1 = flat[o:o + hidden * in_dim].reshape(hidden, in_dim)
    o += hidden * in_dim
    b1 = flat[o:o + hidden]
    o += hidden
    w2 = flat[o:o + hidden * hidden].reshape(hidden, hidden)
    o += hidden * hidden
    b2 = flat[o:o + hidden]
    o += hidden
    w3 = flat[o:o + out_dim * hidden].reshape(out_dim, hidden)
    o += out_dim * hidden
    b3 = flat[o:o + out_dim]
    out[:] = w3 @ np.tanh(w2 @ np.tanh(w1 @ x + b1) + b2) + b3


_mlp_forward1_jit = _jit(_mlp_forward1_loops)


# ---------------------------------------------------------------------------
# fused deterministic episode: normalise obs -> MLP -> clip -> env step


def _rollout_mlp_loops(kind, flat, in_dim, hidden, out_dim, obs_mean, obs_std,
                       state, max_steps, low, high, obs_buf):
    obs = np.empty(in_dim)
    xn = np.empty(in_dim)
    act = np.empty(out_dim)
    ret = 0.0
    steps = 0
    _env_obs_jit(kind, state, obs)
    for _ in range(max_steps):
        for j in range(in_dim):
            obs_buf[steps, j] = obs[j]
            z = (obs[j] - obs_mean[j]) / obs_std[j]
            if z > OBS_CLIP:
                z = OBS_CLIP
            elif z < -OBS_CLIP:
                z = -OBS_CLIP
            xn[j] = z
        _mlp_forward1_jit(flat, in_dim, hidden, out_dim, xn, act)
        for k in range(out_dim):
            if act[k] > high[k]:
                act[k] = high[k]
            elif act[k] < low[k]:
                act[k] = low[k]
        r, term = _env_step_jit(kind, state, act)
        ret += r
        steps += 1
        _env_obs_jit(kind, state, obs)
        if term:
            break
    return ret, steps


def _rollout_mlp_np(kind, flat, in_dim, hidden, out_dim, obs_mean, obs_std,
                    state, max_steps, low, high, obs_buf):
    obs = np.empty(in_dim)
    act = np.empty(out_dim)
    ret = 0.0
    steps = 0
    _env_obs_loops(kind, state, obs)
    step = _pendulum_step_loops if kind == ENV_PENDULUM else _lander_step_loops
    for _ in range(max_steps):
        obs_buf[steps] = obs
        xn = np.clip((obs - obs_mean) / obs_std, -OBS_CLIP, OBS_CLIP)
        _mlp_forward1_np(flat, in_dim, hidden, out_dim, xn, act)
        np.clip(act, low, high, out=act)
        r, term = step(state, act[0])
        ret += r
        steps += 1
        _env_obs_loops(kind, state, obs)
        if term:
            break
    return ret, steps


# ---------------------------------------------------------------------------
# compiled NEAT network: positions [0, n_in) inputs, n_in bias, then nodes in
# topological order; incoming edges in CSR form (ptr, src, w); all non-input
# nodes are tanh units.


def _neat_forward_loops(n_in, ptr, src, w, out_pos, x, vals, out):
    n_nodes = ptr.shape[0] - 1
    for i in range(n_in):
        vals[i] = x[i]
    vals[n_in] = 1.0
    for p in range(n_in + 1, n_nodes):
        s = 0.0
        for c in range(ptr[p], ptr[p + 1]):
            s += w[c] * vals[src[c]]
        vals[p] = math.tanh(s)
    for k in range(out_pos.shape[0]):
        out[k] = vals[out_pos[k]]


def _neat_forward_np(n_in, ptr, src, w, out_pos, x, vals, out):
    n_nodes = ptr.shape[0] - 1
    vals[:n_in] = x
    vals[n_in] = 1.0
    for p in range(n_in + 1, n_nodes):
        lo, hi = ptr[p], ptr[p + 1]
        vals[p] = np.tanh(w[lo:hi] @ vals[src[lo:hi]])
    out[:] = vals[out_pos]


_neat_forward_jit = _jit(_neat_forward_loops)


def _rollout_neat_loops(kind, n_in, ptr, src, w, out_pos, obs_mean, obs_std,
                        state, max_steps, low, high, obs_buf):
    n_out = out_pos.shape[0]
    obs = np.empty(n_in)
    xn = np.empty(n_in)
    vals = np.zeros(ptr.shape[0] - 1)
    raw = np.empty(n_out)
    act = np.empty(n_out)
    ret = 0.0
    steps = 0
    _env_obs_jit(kind, state, obs)
    for _ in range(max_steps):
        for j in range(n_in):
            obs_buf[steps, j] = obs[j]
            z = (obs[j] - obs_mean[j]) / obs_std[j]
            if z > OBS_CLIP:
                z = OBS_CLIP
            elif z < -OBS_CLIP:
                z = -OBS_CLIP
            xn[j] = z
        _neat_forward_jit(n_in, ptr, src, w, out_pos, xn, vals, raw)
        for k in range(n_out):
            act[k] = low[k] + 0.5 * (raw[k] + 1.0) * (high[k] - low[k])
        r, term = _env_step_jit(kind, state, act)
        ret += r
        steps += 1
        _env_obs_jit(kind, state, obs)
        if term:
            break
    return ret, steps


def _rollout_neat_np(kind, n_in, ptr, src, w, out_pos, obs_mean, obs_std,
                     state, max_steps, low, high, obs_buf):
    obs = np.empty(n_in)
    vals = np.zeros(ptr.shape[0] - 1)
    raw = np.empty(out_pos.shape[0])
    ret = 0.0
    steps = 0
    _env_obs_loops(kind, state, obs)
    step = _pendulum_step_loops if kind == ENV_PENDULUM else _lander_step_loops
    for _ in range(max_steps):
        obs_buf[steps] = obs
        xn = np.clip((obs - obs_mean) / obs_std, -OBS_CLIP, OBS_CLIP)
        _neat_forward_np(n_in, ptr, src, w, out_pos, xn, vals, raw)
        act = low + 0.5 * (raw + 1.0) * (high - low)
        r, term = step(state, act[0])
        ret += r
        steps += 1
        _env_obs_loops(kind, state, obs)
        if term:
            break
    return ret, steps


# ---------------------------------------------------------------------------
# advantage recursion


def _gae_loops(rewards, v, v_next, terminals, ends, gamma, lam, adv, deltas):
    last = 0.0
    for t in range(rewards.shape[0] - 1, -1, -1):
        deltas[t] = rewards[t] + gamma * v_next[t] * (1.0 - terminals[t]) - v[t]
        last = deltas[t] + gamma * lam * (1.0 - ends[t]) * last
        adv[t] = last


def _gae_np(rewards, v, v_next, terminals, ends, gamma, lam, adv, deltas):
    deltas[:] = rewards + gamma * v_next * (1.0 - terminals) - v
    decay = gamma * lam * (1.0 - ends)
    last = 0.0
    for t in range(rewards.shape[0] - 1, -1, -1):
        last = deltas[t] + decay[t] * last
        adv[t] = last


# ---------------------------------------------------------------------------
# running moments: fold a batch of rows into (count, mean, m2) in place


def _welford_batch_loops(count, mean, m2, xs):
    n = count
    for i in range(xs.shape[0]):
        n += 1
        for j in range(xs.shape[1]):
            d = xs[i, j] - mean[j]
            mean[j] += d / n
            m2[j] += d * (xs[i, j] - mean[j])
    return n


def _welford_batch_np(count, mean, m2, xs):
    k = xs.shape[0]
    if k == 0:
        return count
    bmean = xs.mean(axis=0)
    bm2 = ((xs - bmean) ** 2).sum(axis=0)
    total = count + k
    delta = bmean - mean
    mean += delta * (k / total)
    m2 += bm2 + delta * delta * (count * k / total)
    return total


KERNELS_NP = {
    "pendulum_step": _pendulum_step_loops,
    "lander_step": _lander_step_loops,
    "mlp_forward1": _mlp_forward1_np,
    "rollout_mlp": _rollout_mlp_np,
    "neat_forward": _neat_forward_np,
    "rollout_neat": _rollout_neat_np,
    "gae": _gae_np,
    "welford_batch": _welford_batch_np,
}

if NUMBA_AVAILABLE:
    KERNELS_JIT = {
        "pendulum_step": _pendulum_step_jit,
        "lander_step": _lander_step_jit,
        "mlp_forward1": _mlp_forward1_jit,
        "rollout_mlp": _jit(_rollout_mlp_loops),
        "neat_forward": _neat_forward_jit,
        "rollout_neat": _jit(_rollout_neat_loops),
        "gae": _jit(_gae_loops),
        "welford_batch": _jit(_welford_batch_loops),
    }
else:  # pragma: no cover
    KERNELS_JIT = dict(KERNELS_NP)

_active = KERNELS_JIT if NUMBA_ENABLED else KERNELS_NP

pendulum_step = _active["pendulum_step"]
lander_step = _active["lander_step"]
mlp_forward1 = _active["mlp_forward1"]
rollout_mlp = _active["rollout_mlp"]
neat_forward = _active["neat_forward"]
rollout_neat = _active["rollout_neat"]
gae = _active["gae"]
welford_batch = _active["welford_batch"]
