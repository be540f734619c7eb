"""Environments: a classic torque-limited pendulum and LanderLite, a 1-D
vertical lander whose hover behaviour is a local optimum.

Both keep their physical state in a small float64 array so the same state can
be handed to the fused rollout kernels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import _kernels as K


class EnvContractError(RuntimeError):
    """Raised when an environment is driven outside its contract."""


@dataclass(frozen=True)
class EnvSpec:
    name: str
    obs_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    max_episode_steps: int

    def __post_init__(self):
        if self.obs_dim < 1 or self.action_dim < 1:
            raise ValueError("obs_dim and action_dim must be positive")
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be >= 1")
        if not np.all(np.asarray(self.action_low) < np.asarray(self.action_high)):
            raise ValueError("action_low must be < action_high elementwise")


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    steps_elapsed: int
    # true only for a genuine terminal state; a timeout sets done but not terminal
    terminal: bool = False


class _Env:
    spec: EnvSpec
    kind: int

    def __init__(self, seed: Optional[int] = None):
        self._rng = np.random.default_rng(seed)
        self.state = np.zeros(2)
        self._t = 0
        self._done = True
        self.step_calls = 0

    def initial_state(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self.state = self.initial_state(self._rng)
        self._t = 0
        self._done = False
        return self.observation()

    def observation(self) -> np.ndarray:
        out = np.empty(self.spec.obs_dim)
        K._env_obs_loops(self.kind, self.state, out)
        return out

    def _dynamics(self, u: float):
        raise NotImplementedError

    def step(self, action) -> StepResult:
        if self._done:
            raise EnvContractError(f"{self.spec.name}: step() called on a finished episode")
        u = float(np.asarray(action, dtype=np.float64).reshape(-1)[0])
        if not math.isfinite(u):
            raise EnvContractError(f"{self.spec.name}: non-finite action {u!r}")
        reward, terminal = self._dynamics(u)
        self._t += 1
        self.step_calls += 1
        done = bool(terminal) or self._t >= self.spec.max_episode_steps
        self._done = done
        return StepResult(self.observation(), float(reward), done, self._t, bool(terminal))

    @property
    def steps_elapsed(self) -> int:
        return self._t


class Pendulum(_Env):
    """Swing-up pendulum; observation (cos th, sin th, omega), torque in [-2, 2]."""

    spec = EnvSpec("pendulum", 3, 1, np.array([-K.PEND_MAX_TORQUE]),
                   np.array([K.PEND_MAX_TORQUE]), 200)
    kind = K.ENV_PENDULUM

    def initial_state(self, rng):
        return np.array([rng.uniform(-math.pi, math.pi), rng.uniform(-1.0, 1.0)])

    def set_state(self, theta: float, omega: float) -> np.ndarray:
        """Test hook: force the physical state and start a fresh episode."""
        self.state = np.array([float(theta), float(omega)])
        self._t = 0
        self._done = False
        return self.observation()

    def _dynamics(self, u):
        return K.pendulum_step(self.state, u)


class LanderLite(_Env):
    """Vertical lander: observation (altitude, velocity), thrust in [0, 1].

    Every unit of thrust costs reward, touching down softly pays +100 and
    hitting the ground fast costs 100. Hovering forever is cheap and safe,
    which is exactly the trap a greedy learner falls into.
    """

    spec = EnvSpec("lander_lite", 2, 1, np.array([0.0]), np.array([1.0]), 500)
    kind = K.ENV_LANDER
    start_altitude = 5.0

    def initial_state(self, rng):
        return np.array([self.start_altitude, 0.0])

    def set_state(self, altitude: float, velocity: float) -> np.ndarray:
        self.state = np.array([float(altitude), float(velocity)])
        self._t = 0
        self._done = False
        return self.observation()

    def _dynamics(self, u):
        return K.lander_step(self.state, u)


ENVS = {"pendulum": Pendulum, "lander_lite": LanderLite}


def make_env(env_id: str, seed: Optional[int] = None) -> _Env:
    try:
        cls = ENVS[env_id]
    except KeyError:
        raise ValueError(f"unknown env id {env_id!r}; expected one of {sorted(ENVS)}") from None
    return cls(seed)


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    done: bool


@dataclass
class Trajectory:
    transitions: List[Transition] = field(default_factory=list)
    episode_return: float = 0.0

    def __len__(self):
        return len(self.transitions)


def rollout(env, policy: Callable, horizon: Optional[int] = None, stochastic: bool = False,
            rng: Optional[np.random.Generator] = None, seed: Optional[int] = None) -> Trajectory:
    """Run one episode (at most ``horizon`` steps) and collect its transitions.

    ``policy`` is called as ``policy(obs)`` for deterministic rollouts and as
    ``policy(obs, rng)`` when ``stochastic`` is set. Stored actions are the
    policy's raw output; clipping happens inside the environment.
    """
    if stochastic and rng is None:
        raise ValueError("stochastic rollout needs an rng")
    horizon = env.spec.max_episode_steps if horizon is None else horizon
    obs = env.reset(seed)
    traj = Trajectory()
    for _ in range(horizon):
        a = policy(obs, rng) if stochastic else policy(obs)
        a = np.atleast_1d(np.asarray(a, dtype=np.float64))
        res = env.step(a)
        traj.transitions.append(Transition(obs, a, res.reward, res.observation, res.terminal))
        traj.episode_return += res.reward
        obs = res.observation
        if res.done:
            break
    return traj
