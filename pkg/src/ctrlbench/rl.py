"""Gradient-based learners: advantage estimation, the clipped surrogate,
actor-critic and deterministic-policy-gradient gradients, exploration noise,
replay and target networks.

Everything here is single-threaded and pure apart from the explicitly
stateful containers (``OuNoise``, ``ReplayBuffer``, ``TargetNets``); the
harness serialises any sharing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import _kernels as K
from .net import MlpSpec, backward, forward, gaussian_log_prob


@dataclass
class AdvantageBatch:
    advantages: np.ndarray
    value_targets: np.ndarray
    td_errors: np.ndarray


def gae_segment(rewards, v, v_next, terminals, ends, gamma: float, lam: float) -> AdvantageBatch:
    """GAE over a segment that may span several episodes.

    ``terminals[t]`` stops bootstrapping from ``v_next[t]``; ``ends[t]`` stops
    the advantage sum from leaking into the following episode (set on
    terminals, timeouts and the last row of the segment).
    """
    rewards = np.ascontiguousarray(rewards, dtype=np.float64)
    n = rewards.shape[0]
    arrays = [np.ascontiguousarray(a, dtype=np.float64) for a in (v, v_next, terminals, ends)]
    if any(a.shape != (n,) for a in arrays):
        raise ValueError("gae_segment: all inputs must have the reward length")
    adv = np.empty(n)
    deltas = np.empty(n)
    K.gae(rewards, *arrays, float(gamma), float(lam), adv, deltas)
    return AdvantageBatch(adv, adv + arrays[0], deltas)


def compute_gae(rewards, values, dones, gamma: float, lam: float) -> AdvantageBatch:
    """Truncated GAE for one trajectory.

    ``values`` holds v(s_0..s_T): one more entry than ``rewards``, the last
    being the bootstrap value (0 if the episode terminated).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if values.shape != (rewards.shape[0] + 1,) or dones.shape != rewards.shape:
        raise ValueError(f"compute_gae: got {rewards.shape[0]} rewards, {values.shape[0]} values "
                         f"and {dones.shape[0]} done flags; values needs one extra entry")
    return gae_segment(rewards, values[:-1], values[1:], dones, dones, gamma, lam)


def clipped_surrogate(logp_new, logp_old, advantages, eps: float) -> Tuple[float, np.ndarray]:
    """Negated mean clipped objective and its gradient w.r.t. ``logp_new``."""
    if eps <= 0:
        raise ValueError("clip range eps must be positive")
    logp_new = np.asarray(logp_new, dtype=np.float64)
    adv = np.asarray(advantages, dtype=np.float64)
    ratio = np.exp(logp_new - np.asarray(logp_old, dtype=np.float64))
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    objective = np.minimum(unclipped, clipped)
    # d ratio / d logp_new = ratio; flat wherever the clipped term is the minimum
    dobj = np.where(unclipped <= clipped, ratio * adv, 0.0)
    n = logp_new.shape[0]
    return -float(objective.mean()), -dobj / n


def critic_td_target(r, v_next, done, gamma: float):
    return np.asarray(r, dtype=np.float64) + gamma * np.asarray(v_next) * (1.0 - np.asarray(done, dtype=np.float64))


def critic_loss(v, target) -> Tuple[float, np.ndarray]:
    """Mean of 1/2 (target - v)^2 and its gradient w.r.t. ``v`` (target held fixed)."""
    v = np.asarray(v, dtype=np.float64)
    diff = v - np.asarray(target, dtype=np.float64)
    n = max(diff.size, 1)
    return 0.5 * float(np.sum(diff * diff)) / n, diff / n


def a3c_actor_gradient(spec: MlpSpec, params: np.ndarray, states, actions, rewards,
                       v_s, v_next, dones, gamma: float) -> np.ndarray:
    """Ascent direction sum_t grad log pi(a_t|s_t) * delta_t with one-step TD errors."""
    states = np.atleast_2d(states)
    delta = critic_td_target(rewards, v_next, dones, gamma) - np.asarray(v_s)
    mu, cache = forward(spec, params, states)
    _, dmu = gaussian_log_prob(mu, np.asarray(actions).reshape(mu.shape))
    return backward(spec, params, cache, dmu * np.reshape(delta, (-1, 1)))


def ddpg_actor_gradient(actor_spec: MlpSpec, actor: np.ndarray, critic_spec: MlpSpec,
                        critic: np.ndarray, states) -> np.ndarray:
    """Ascent direction mean_s dq/da|_{a=mu(s)} * dmu/dtheta."""
    states = np.atleast_2d(states)
    n, obs_dim = states.shape
    mu, actor_cache = forward(actor_spec, actor, states)
    _, critic_cache = forward(critic_spec, critic, np.concatenate([states, mu], axis=1))
    _, dx = backward(critic_spec, critic, critic_cache, np.full((n, 1), 1.0 / n), input_grad=True)
    return backward(actor_spec, actor, actor_cache, dx[:, obs_dim:])


def ddpg_critic_gradient(critic_spec: MlpSpec, critic: np.ndarray, actor_spec: MlpSpec,
                         target_actor: np.ndarray, target_critic: np.ndarray,
                         s, a, r, s_next, done, gamma: float) -> Tuple[float, np.ndarray]:
    """Loss and descent gradient for the critic against target-network bootstraps."""
    a_next = forward(actor_spec, target_actor, s_next)[0]
    q_next = forward(critic_spec, target_critic, np.concatenate([s_next, a_next], axis=1))[0][:, 0]
    target = critic_td_target(r, q_next, done, gamma)
    q, cache = forward(critic_spec, critic, np.concatenate([s, a], axis=1))
    loss, dq = critic_loss(q[:, 0], target)
    return loss, backward(critic_spec, critic, cache, dq[:, None])


class OuNoise:
    """Ornstein-Uhlenbeck noise, x <- x - theta * x + sigma * z, unit time step."""

    def __init__(self, dim: int, theta: float = 0.15, sigma: float = 0.2, x0=None):
        self.theta = theta
        self.sigma = sigma
        self.x = np.zeros(dim) if x0 is None else np.array(x0, dtype=np.float64)

    def reset(self):
        self.x = np.zeros_like(self.x)

    def step(self, rng: np.random.Generator) -> np.ndarray:
        self.x = self.x + self.theta * (0.0 - self.x) + self.sigma * rng.standard_normal(self.x.shape)
        return self.x.copy()

    def stationary_std(self) -> float:
        return self.sigma / np.sqrt(2.0 * self.theta - self.theta ** 2)


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    done: np.ndarray

    def __len__(self):
        return self.r.shape[0]


class ReplayBuffer:
    """Fixed-capacity ring of transitions, sampled uniformly with replacement."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int):
        if capacity < 1:
            raise ValueError("replay capacity must be >= 1")
        self.capacity = int(capacity)
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self._s = np.empty((self.capacity, obs_dim))
        self._a = np.empty((self.capacity, action_dim))
        self._r = np.empty(self.capacity)
        self._s2 = np.empty((self.capacity, obs_dim))
        self._d = np.empty(self.capacity)
        self.cursor = 0
        self.size = 0
        self.pushes = 0

    def __len__(self):
        return self.size

    def push(self, s, a, r, s_next, done):
        i = self.cursor
        self._s[i] = s
        self._a[i] = a
        self._r[i] = r
        self._s2[i] = s_next
        self._d[i] = float(done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.pushes += 1

    def push_transition(self, t):
        self.push(t.s, t.a, t.r, t.s_next, t.done)

    def sample(self, batch: int, rng: np.random.Generator) -> Batch:
        if self.size < batch or batch < 1:
            raise ValueError(f"cannot sample {batch} transitions from a buffer holding {self.size}")
        idx = rng.integers(0, self.size, size=batch)
        return self.take(idx)

    def take(self, idx) -> Batch:
        idx = np.asarray(idx)
        return Batch(self._s[idx], self._a[idx], self._r[idx], self._s2[idx], self._d[idx])

    def oldest_first(self) -> Batch:
        if self.size < self.capacity:
            return self.take(np.arange(self.size))
        return self.take((np.arange(self.size) + self.cursor) % self.capacity)


def replay_push(buffer: ReplayBuffer, t) -> None:
    buffer.push_transition(t)


def replay_sample(buffer: ReplayBuffer, batch: int, rng: np.random.Generator) -> Batch:
    return buffer.sample(batch, rng)


@dataclass
class TargetNets:
    actor: np.ndarray
    critic: np.ndarray
    tau: float = 0.001

    def soft_update(self, live_actor: np.ndarray, live_critic: np.ndarray) -> "TargetNets":
        if live_actor.shape != self.actor.shape or live_critic.shape != self.critic.shape:
            raise ValueError("target and live network shapes differ")
        self.actor = self.tau * live_actor + (1.0 - self.tau) * self.actor
        self.critic = self.tau * live_critic + (1.0 - self.tau) * self.critic
        return self


def target_soft_update(targets: TargetNets, live_actor, live_critic, tau: Optional[float] = None) -> TargetNets:
    if tau is not None:
        targets.tau = tau
    return targets.soft_update(np.asarray(live_actor), np.asarray(live_critic))


# ---------------------------------------------------------------------------
# per-algorithm gradient bundles used by the training workers


@dataclass
class Segment:
    """On-policy experience with normalised observations and rewards."""

    obs: np.ndarray
    actions: np.ndarray
    logp: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    terminals: np.ndarray
    ends: np.ndarray

    def __len__(self):
        return self.rewards.shape[0]


def p3o_gradients(pol_spec: MlpSpec, pol: np.ndarray, val_spec: MlpSpec, val: np.ndarray,
                  seg: Segment, gamma: float, lam: float, eps: float,
                  normalize_advantages: bool = True):
    """Clipped-surrogate and value gradients over one whole segment (one batch)."""
    mu, pol_cache = forward(pol_spec, pol, seg.obs)
    logp_new, dmu = gaussian_log_prob(mu, seg.actions)
    v, val_cache = forward(val_spec, val, seg.obs)
    v = v[:, 0]
    v_next = forward(val_spec, val, seg.next_obs)[0][:, 0]
    batch = gae_segment(seg.rewards, v, v_next, seg.terminals, seg.ends, gamma, lam)
    adv = batch.advantages
    if normalize_advantages and adv.shape[0] > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    pol_loss, dlogp = clipped_surrogate(logp_new, seg.logp, adv, eps)
    g_pol = backward(pol_spec, pol, pol_cache, dmu * dlogp[:, None])
    val_loss, dv = critic_loss(v, batch.value_targets)
    g_val = backward(val_spec, val, val_cache, dv[:, None])
    return g_pol, g_val, {"policy_loss": pol_loss, "value_loss": val_loss}


def ca3c_gradients(pol_spec: MlpSpec, pol: np.ndarray, val_spec: MlpSpec, val: np.ndarray,
                   seg: Segment, gamma: float):
    """Descent gradients for the one-step-TD actor-critic over a short segment."""
    n = len(seg)
    v, val_cache = forward(val_spec, val, seg.obs)
    v = v[:, 0]
    v_next = forward(val_spec, val, seg.next_obs)[0][:, 0]
    g_pol = -a3c_actor_gradient(pol_spec, pol, seg.obs, seg.actions, seg.rewards,
                                v, v_next, seg.terminals, gamma) / n
    target = critic_td_target(seg.rewards, v_next, seg.terminals, gamma)
    val_loss, dv = critic_loss(v, target)
    g_val = backward(val_spec, val, val_cache, dv[:, None])
    return g_pol, g_val, {"value_loss": val_loss}


def d3pg_gradients(actor_spec: MlpSpec, actor: np.ndarray, critic_spec: MlpSpec,
                   critic: np.ndarray, targets: TargetNets, batch: Batch, gamma: float):
    """Descent gradients for actor and critic on one replay minibatch.

    ``batch`` must already carry normalised observations and rewards.
    """
    val_loss, g_critic = ddpg_critic_gradient(critic_spec, critic, actor_spec, targets.actor,
                                              targets.critic, batch.s, batch.a, batch.r,
                                              batch.s_next, batch.done, gamma)
    g_actor = -ddpg_actor_gradient(actor_spec, actor, critic_spec, critic, batch.s)
    return g_actor, g_critic, {"value_loss": val_loss}
