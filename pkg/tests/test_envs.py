import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ctrlbench.envs import (EnvContractError, EnvSpec, LanderLite, Pendulum, make_env, rollout)

REWARD_FLOOR = -(math.pi ** 2 + 0.1 * 64 + 0.001 * 4)


def test_pendulum_reset_is_seeded():
    assert np.array_equal(Pendulum(7).reset(), Pendulum(7).reset())
    assert np.array_equal(Pendulum().reset(3), Pendulum().reset(3))


def test_pendulum_upright_observation():
    assert np.array_equal(Pendulum().set_state(0.0, 0.0), [1.0, 0.0, 0.0])


def test_pendulum_reset_angle_is_uniform():
    env = Pendulum(0)
    thetas = np.array([(env.reset(), env.state[0])[1] for _ in range(10_000)])
    assert -0.1 <= thetas.mean() <= 0.1
    assert thetas.min() >= -math.pi and thetas.max() <= math.pi


def test_pendulum_fixed_point():
    env = Pendulum()
    env.set_state(0.0, 0.0)
    res = env.step([0.0])
    assert res.reward == 0.0
    assert np.array_equal(env.state, [0.0, 0.0])


def test_pendulum_full_torque_from_rest():
    env = Pendulum()
    env.set_state(0.0, 0.0)
    res = env.step([2.0])
    assert env.state[1] == pytest.approx(0.3, abs=1e-12)
    assert env.state[0] == pytest.approx(0.015, abs=1e-12)
    assert res.reward == pytest.approx(-0.004, abs=1e-12)


def test_pendulum_hanging_reward():
    env = Pendulum()
    env.set_state(math.pi, 0.0)
    assert env.step([0.0]).reward == pytest.approx(-math.pi ** 2)


def test_pendulum_clips_torque():
    a, b = Pendulum(), Pendulum()
    a.set_state(0.3, 0.1)
    b.set_state(0.3, 0.1)
    assert a.step([50.0]).reward == b.step([2.0]).reward
    assert np.array_equal(a.state, b.state)


@given(st.floats(-math.pi, math.pi), st.floats(-8, 8),
       st.lists(st.floats(-5, 5), min_size=1, max_size=60))
def test_pendulum_state_and_reward_bounds(theta, omega, actions):
    env = Pendulum()
    env.set_state(theta, omega)
    for u in actions:
        res = env.step([u])
        assert abs(env.state[1]) <= 8.0
        wrapped = (env.state[0] + math.pi) % (2 * math.pi) - math.pi
        assert -math.pi <= wrapped <= math.pi
        assert REWARD_FLOOR <= res.reward <= 0.0
        assert np.all(np.isfinite(res.observation))


def test_pendulum_horizon():
    env = Pendulum(0)
    env.reset()
    for t in range(1, 201):
        res = env.step([0.0])
        assert res.steps_elapsed == t
        assert res.done == (t == 200)
    assert not res.terminal
    with pytest.raises(EnvContractError):
        env.step([0.0])


def test_step_before_reset_is_rejected():
    with pytest.raises(EnvContractError):
        Pendulum().step([0.0])


def test_non_finite_action_rejected():
    env = Pendulum(0)
    env.reset()
    with pytest.raises(EnvContractError):
        env.step([float("nan")])


def test_lander_reset():
    env = LanderLite(123)
    assert env.spec.obs_dim == 2
    assert np.array_equal(env.reset(), [5.0, 0.0])
    while not env.step([0.0]).done:
        pass
    assert np.array_equal(env.reset(), [5.0, 0.0])


def _lander_return(policy):
    env = LanderLite()
    obs = env.reset()
    total, steps = 0.0, 0
    while True:
        res = env.step([policy(obs)])
        total += res.reward
        steps += 1
        obs = res.observation
        if res.done:
            return total, steps, res


def test_lander_hover_times_out():
    total, steps, last = _lander_return(lambda o: 0.5)
    assert steps == 500
    assert total == pytest.approx(-25.0, abs=1e-9)
    assert last.done and not last.terminal


def _free_fall_oracle():
    # independent re-simulation of the free-fall episode
    h, v, t = 5.0, 0.0, 0
    while True:
        t += 1
        v -= 0.1
        h = max(h + v * 0.1, 0.0)
        if h == 0.0:
            return t, v


def test_lander_free_fall_crashes():
    total, steps, last = _lander_return(lambda o: 0.0)
    t, v = _free_fall_oracle()
    assert abs(v) > 0.5
    assert steps == t
    assert total == -100.0
    assert last.terminal


def test_lander_soft_touchdown_bonus():
    env = LanderLite()
    env.set_state(0.01, -0.2)
    res = env.step([1.0])
    assert res.terminal and res.done
    assert res.reward == pytest.approx(100.0 - 0.1)


def _scripted_lander(obs):
    h, v = obs
    # brake to a gentle sink rate; the target speed shrinks near the ground
    target = -min(0.4, 0.1 + 0.1 * h)
    return 1.0 if v < target else 0.5 if v < target + 0.05 else 0.0


def test_lander_trap_ordering():
    hover, _, _ = _lander_return(lambda o: 0.5)
    fall, _, _ = _lander_return(lambda o: 0.0)
    land, _, last = _lander_return(_scripted_lander)
    assert last.terminal
    assert land > hover > fall


def test_rollout_returns():
    from .stubs import CountingEnv

    class Zero(CountingEnv):
        reward = 0.0

    class Long(CountingEnv):
        spec = EnvSpec("long", 2, 1, np.array([-1.0]), np.array([1.0]), 200)

    assert rollout(Zero(0), lambda o: [0.0]).episode_return == 0
    traj = rollout(Long(0), lambda o: [0.0])
    assert traj.episode_return == 200
    assert len(traj.transitions) == 200
    assert len(rollout(Long(0), lambda o: [0.0], horizon=17).transitions) == 17


def test_rollout_is_deterministic():
    policy = lambda o: [np.tanh(o[2])]  # noqa: E731
    a = rollout(Pendulum(), policy, seed=5)
    b = rollout(Pendulum(), policy, seed=5)
    assert a.episode_return == b.episode_return
    for x, y in zip(a.transitions, b.transitions):
        assert np.array_equal(x.s, y.s) and np.array_equal(x.a, y.a) and x.r == y.r


def test_rollout_stochastic_needs_rng():
    with pytest.raises(ValueError):
        rollout(Pendulum(0), lambda o, r: [0.0], stochastic=True)
    traj = rollout(Pendulum(0), lambda o, r: r.normal(size=1), stochastic=True,
                   rng=np.random.default_rng(0), seed=1)
    assert len(traj.transitions) == 200


def test_env_spec_validation():
    with pytest.raises(ValueError):
        EnvSpec("bad", 2, 1, np.array([1.0]), np.array([0.0]), 10)
    with pytest.raises(ValueError):
        EnvSpec("bad", 2, 1, np.array([0.0]), np.array([1.0]), 0)


def test_make_env():
    assert isinstance(make_env("pendulum", 0), Pendulum)
    assert isinstance(make_env("lander_lite"), LanderLite)
    with pytest.raises(ValueError):
        make_env("cartpole")
