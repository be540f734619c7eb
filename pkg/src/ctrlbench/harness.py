"""Parallel training orchestration.

Gradient methods run N worker threads against one ``SharedStore``. Workers
collect experience and compute gradients on private copies, then take the
store's single lock to apply the update with Adam, fold their observations
into the shared running statistics, and bump the counters. Every computed
gradient is applied; nothing is dropped.

Evolutionary methods evaluate each generation's individuals on a thread pool,
wait for all of them, update the search distribution, and score the
generation's best individual on ``test_episodes`` deterministic episodes.
"""
from __future__ import annotations

import logging
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import _kernels as K
from .config import ExperimentConfig
from .envs import make_env
from .es import CmaesState, NesConfig, cmaes_ask, cmaes_tell, nes_sample, nes_update
from .metrics import LearningCurve
from .neat import Genome, NeatConfig, Population, activate
from .neat import dumps as neat_dumps, loads as neat_loads
from .net import LOG_2PI, AdamState, MlpSpec, adam_step, init_params, predict
from .normalize import RunningStats, normalize_reward
from .rl import (OuNoise, ReplayBuffer, Segment, TargetNets, Batch, ca3c_gradients,
                 d3pg_gradients, p3o_gradients)

log = logging.getLogger(__name__)


class LockViolation(RuntimeError):
    """Shared state was touched without holding the store lock."""


class RunFailure(RuntimeError):
    def __init__(self, message: str, result: "RunResult"):
        super().__init__(message)
        self.result = result


@dataclass
class Snapshot:
    policy: np.ndarray
    value: Optional[np.ndarray]
    obs_mean: np.ndarray
    obs_std: np.ndarray
    rew_stats: RunningStats
    env_steps: int
    targets: Optional[TargetNets] = None
    taken_at: float = 0.0


@dataclass
class RunResult:
    algo: str
    env: str
    seed: int
    curve: LearningCurve
    total_env_steps: int = 0
    total_updates: int = 0
    worker_gradients: List[int] = field(default_factory=list)
    worker_env_steps: List[int] = field(default_factory=list)
    evaluator_episodes: int = 0
    unlocked_mutations: int = 0
    generations: int = 0
    policy: Optional[np.ndarray] = None
    value: Optional[np.ndarray] = None
    genome: Optional[Genome] = None
    obs_stats: Optional[RunningStats] = None
    hidden: int = 16
    wall_ms: int = 0
    error: Optional[str] = None


class SharedStore:
    """All state shared by training workers, guarded by one exclusive lock.

    Mutators and snapshot reads verify that the calling thread holds the lock
    (via ``locked()``) and raise ``LockViolation`` otherwise.
    """

    def __init__(self, policy: np.ndarray, value: np.ndarray, lr: float, obs_dim: int,
                 max_steps: int, normalize_state: bool = True, normalize_reward: bool = True,
                 reward_center: bool = False, replay: Optional[ReplayBuffer] = None,
                 targets: Optional[TargetNets] = None, eval_interval: int = 0):
        self._lock = threading.Lock()
        self._owner: Optional[int] = None
        self.policy = policy
        self.value = value
        # equal initial learning rates for policy and value
        self.policy_opt = AdamState(policy.shape[0], lr)
        self.value_opt = AdamState(value.shape[0], lr)
        self.obs_stats = RunningStats(obs_dim)
        self.rew_stats = RunningStats(1)
        self.normalize_state = normalize_state
        self.normalize_reward = normalize_reward
        self.reward_center = reward_center
        self.replay = replay
        self.targets = targets
        self.max_steps = max_steps
        self.reserved_steps = 0
        self.total_env_steps = 0
        self.total_updates = 0
        self.unlocked_mutations = 0
        self.eval_interval = eval_interval
        self.eval_queue: "queue.Queue[Optional[Snapshot]]" = queue.Queue()
        self._next_eval = 0
        self.last_queued_steps = -1

    @contextmanager
    def locked(self):
        with self._lock:
            self._owner = threading.get_ident()
            try:
                yield self
            finally:
                self._owner = None

    def _require_lock(self):
        if self._owner != threading.get_ident():
            self.unlocked_mutations += 1
            raise LockViolation("shared store accessed without holding its lock")

    def reserve_steps(self, n: int) -> int:
        self._require_lock()
        granted = max(0, min(n, self.max_steps - self.reserved_steps))
        self.reserved_steps += granted
        return granted

    def record_steps(self, n: int):
        self._require_lock()
        self.total_env_steps += n
        if self.eval_interval:
            while self.total_env_steps >= self._next_eval:
                self._queue_eval()
                self._next_eval += self.eval_interval

    def _queue_eval(self):
        self.eval_queue.put(self.snapshot())
        self.last_queued_steps = self.total_env_steps

    def merge_observations(self, rows: np.ndarray):
        self._require_lock()
        self.obs_stats.update_batch(rows)

    def merge_rewards(self, rewards: np.ndarray):
        self._require_lock()
        self.rew_stats.update_batch(np.reshape(rewards, (-1, 1)))

    def apply_gradients(self, g_policy: np.ndarray, g_value: np.ndarray):
        self._require_lock()
        self.policy = adam_step(self.policy_opt, self.policy, g_policy)
        self.value = adam_step(self.value_opt, self.value, g_value)
        self.total_updates += 1

    def push_transition(self, s, a, r, s_next, done):
        self._require_lock()
        self.replay.push(s, a, r, s_next, done)

    def sample(self, batch: int, rng: np.random.Generator) -> Batch:
        self._require_lock()
        return self.replay.sample(batch, rng)

    def soft_update_targets(self):
        self._require_lock()
        self.targets.soft_update(self.policy, self.value)

    def snapshot(self, with_targets: bool = False) -> Snapshot:
        self._require_lock()
        if self.normalize_state:
            mean, std = self.obs_stats.mean.copy(), self.obs_stats.std
        else:
            mean, std = np.zeros(self.obs_stats.dim), np.ones(self.obs_stats.dim)
        targets = None
        if with_targets:
            targets = TargetNets(self.targets.actor.copy(), self.targets.critic.copy(),
                                 self.targets.tau)
        return Snapshot(self.policy.copy(), self.value.copy(), mean, std,
                        self.rew_stats.copy(), self.total_env_steps, targets, time.monotonic())

    def scale_rewards(self, snap: Snapshot, rewards: np.ndarray) -> np.ndarray:
        if not self.normalize_reward:
            return np.asarray(rewards, dtype=np.float64)
        return normalize_reward(snap.rew_stats, rewards, center=self.reward_center)

    def schedule_initial_eval(self):
        self._require_lock()
        if self.eval_interval:
            self._queue_eval()
            self._next_eval = self.eval_interval

    def queue_final_eval(self):
        """Queue the end-of-run snapshot unless one at this step count is queued."""
        self._require_lock()
        if self.last_queued_steps < self.total_env_steps:
            self._queue_eval()
        self.eval_queue.put(None)


def _normalize_rows(rows: np.ndarray, snap: Snapshot) -> np.ndarray:
    return np.clip((rows - snap.obs_mean) / snap.obs_std, -K.OBS_CLIP, K.OBS_CLIP)


class PolicyEvaluator:
    """Deterministic episodes for MLP weight vectors or NEAT genomes.

    Built-in environments go through the fused rollout kernels; anything else
    is stepped through its Python ``step`` method.
    """

    def __init__(self, env, spec: Optional[MlpSpec] = None):
        self.env = env
        self.spec = spec
        es = env.spec
        self.low = np.asarray(es.action_low, dtype=np.float64)
        self.high = np.asarray(es.action_high, dtype=np.float64)
        self.max_steps = es.max_episode_steps
        self.fused = getattr(env, "kind", None) in (K.ENV_PENDULUM, K.ENV_LANDER)
        self._obs_buf = np.empty((self.max_steps, es.obs_dim))

    def episode(self, policy, obs_mean, obs_std, rng: np.random.Generator):
        """Return ``(episode_return, steps, observations_seen)``."""
        ep_seed = int(rng.integers(2 ** 31))
        if self.fused:
            # same start state that reset(ep_seed) would produce
            state = self.env.initial_state(np.random.default_rng(ep_seed))
            if isinstance(policy, Genome):
                net = policy.compile()
                ret, steps = K.rollout_neat(self.env.kind, net.n_in, net.ptr, net.src, net.w,
                                            net.out_pos, obs_mean, obs_std, state,
                                            self.max_steps, self.low, self.high, self._obs_buf)
            else:
                s = self.spec
                ret, steps = K.rollout_mlp(self.env.kind, policy, s.in_dim, s.hidden, s.out_dim,
                                           obs_mean, obs_std, state, self.max_steps,
                                           self.low, self.high, self._obs_buf)
            return float(ret), int(steps), self._obs_buf[:steps].copy()
        obs = self.env.reset(ep_seed)
        rows, total = [], 0.0
        for _ in range(self.max_steps):
            rows.append(obs)
            xn = np.clip((obs - obs_mean) / obs_std, -K.OBS_CLIP, K.OBS_CLIP)
            if isinstance(policy, Genome):
                a = activate(policy, xn, self.low, self.high)
            else:
                a = np.clip(predict(self.spec, policy, xn), self.low, self.high)
            res = self.env.step(a)
            total += res.reward
            obs = res.observation
            if res.done:
                break
        return total, len(rows), np.array(rows).reshape(len(rows), -1)


def run_evaluator(store: SharedStore, evaluator: PolicyEvaluator, emit: Callable,
                  stop: threading.Event, rng: np.random.Generator, scheduled: bool = False) -> int:
    """Deterministic test episodes until stopped; returns the episode count.

    Continuous mode snapshots the store itself before every episode. Scheduled
    mode consumes the snapshots queued every ``eval_interval`` env steps until
    it reads the ``None`` sentinel.
    """
    episodes = 0
    while True:
        if scheduled:
            snap = store.eval_queue.get()
            if snap is None:
                break
        else:
            if stop.is_set():
                break
            with store.locked():
                snap = store.snapshot()
        ret, _, _ = evaluator.episode(snap.policy, snap.obs_mean, snap.obs_std, rng)
        episodes += 1
        emit(snap.env_steps, ret)
    return episodes


# ---------------------------------------------------------------------------
# gradient-method workers


class _Worker:
    def __init__(self, wid: int, store: SharedStore, cfg: ExperimentConfig, env,
                 rng: np.random.Generator, pol_spec: MlpSpec, val_spec: MlpSpec,
                 stop: threading.Event):
        self.wid = wid
        self.store = store
        self.cfg = cfg
        self.env = env
        self.rng = rng
        self.pol_spec = pol_spec
        self.val_spec = val_spec
        self.stop = stop
        self.gradients = 0
        self.env_steps = 0
        self.obs = env.reset(int(rng.integers(2 ** 31)))

    def _step(self, action):
        res = self.env.step(action)
        self.env_steps += 1
        return res

    def collect(self, n: int, snap: Snapshot):
        """Sample ``n`` steps from the Gaussian policy; raw observations are kept."""
        spec = self.env.spec
        d = spec.action_dim
        raw = np.empty((n, spec.obs_dim))
        nxt = np.empty((n, spec.obs_dim))
        acts = np.empty((n, d))
        logp = np.empty(n)
        rews = np.empty(n)
        terms = np.zeros(n)
        ends = np.zeros(n)
        for t in range(n):
            raw[t] = self.obs
            xn = np.clip((self.obs - snap.obs_mean) / snap.obs_std, -K.OBS_CLIP, K.OBS_CLIP)
            z = self.rng.standard_normal(d)
            a = predict(self.pol_spec, snap.policy, xn) + z
            res = self._step(a)
            acts[t] = a
            logp[t] = -0.5 * float(z @ z) - 0.5 * d * LOG_2PI
            rews[t] = res.reward
            nxt[t] = res.observation
            terms[t] = res.terminal
            ends[t] = res.done
            self.obs = self.env.reset() if res.done else res.observation
        ends[-1] = 1.0
        return raw, acts, logp, rews, nxt, terms, ends


class P3OWorker(_Worker):
    def run(self):
        cfg, store = self.cfg, self.store
        while not self.stop.is_set():
            with store.locked():
                n = store.reserve_steps(cfg.rollout_len)
                snap = store.snapshot()
            if n == 0:
                return
            raw, acts, logp, rews, nxt, terms, ends = self.collect(n, snap)
            with store.locked():
                store.merge_observations(raw)
                store.merge_rewards(rews)
                fresh = store.snapshot()
            seg = Segment(_normalize_rows(raw, snap), acts, logp, store.scale_rewards(fresh, rews),
                          _normalize_rows(nxt, snap), terms, ends)
            # gradient at the latest shared parameters: other workers' updates
            # since collection show up as a ratio != 1 in the clipped objective
            g_pol, g_val, _ = p3o_gradients(self.pol_spec, fresh.policy, self.val_spec,
                                            fresh.value, seg, cfg.gamma, cfg.gae_lambda,
                                            cfg.clip_eps, cfg.normalize_advantages)
            self.gradients += 1
            with store.locked():
                store.apply_gradients(g_pol, g_val)
                store.record_steps(n)


class CA3CWorker(_Worker):
    def run(self):
        cfg, store = self.cfg, self.store
        while not self.stop.is_set():
            with store.locked():
                n = store.reserve_steps(cfg.segment_len)
                snap = store.snapshot()
            if n == 0:
                return
            raw, acts, logp, rews, nxt, terms, ends = self.collect(n, snap)
            seg = Segment(_normalize_rows(raw, snap), acts, logp, store.scale_rewards(snap, rews),
                          _normalize_rows(nxt, snap), terms, ends)
            g_pol, g_val, _ = ca3c_gradients(self.pol_spec, snap.policy, self.val_spec,
                                             snap.value, seg, cfg.gamma)
            self.gradients += 1
            with store.locked():
                store.merge_observations(raw)
                store.merge_rewards(rews)
                store.apply_gradients(g_pol, g_val)
                store.record_steps(n)


class D3PGWorker(_Worker):
    def __init__(self, *args, **kw):
        super().__init__(*args, **kw)
        spec = self.env.spec
        self.noise = OuNoise(spec.action_dim, self.cfg.ou_theta, self.cfg.ou_sigma)
        self.low = np.asarray(spec.action_low, dtype=np.float64)
        self.high = np.asarray(spec.action_high, dtype=np.float64)
        self.half_range = 0.5 * (self.high - self.low)

    def run(self):
        cfg, store = self.cfg, self.store
        ready = max(cfg.warmup, cfg.batch_size)
        while not self.stop.is_set():
            with store.locked():
                if store.reserve_steps(1) == 0:
                    return
                actor = store.policy.copy()
                mean = store.obs_stats.mean.copy() if store.normalize_state else 0.0
                std = store.obs_stats.std if store.normalize_state else 1.0
            obs = self.obs
            xn = np.clip((obs - mean) / std, -K.OBS_CLIP, K.OBS_CLIP)
            # the replay keeps the pre-clip action; the env clips. Out-of-range
            # actions then look exactly like the bound to the critic, which
            # stops the linear actor output drifting off to infinity
            a = predict(self.pol_spec, actor, xn) + self.noise.step(self.rng) * self.half_range
            res = self._step(a)
            batch = None
            with store.locked():
                store.push_transition(obs, a, res.reward, res.observation, res.terminal)
                store.merge_observations(obs.reshape(1, -1))
                store.merge_rewards(np.array([res.reward]))
                store.record_steps(1)
                if store.replay.size >= ready:
                    batch = store.sample(cfg.batch_size, self.rng)
                    snap = store.snapshot(with_targets=True)
            if res.done:
                self.obs = self.env.reset()
                self.noise.reset()
            else:
                self.obs = res.observation
            if batch is None:
                continue
            nb = Batch(_normalize_rows(batch.s, snap), batch.a,
                       store.scale_rewards(snap, batch.r), _normalize_rows(batch.s_next, snap),
                       batch.done)
            g_actor, g_critic, _ = d3pg_gradients(self.pol_spec, snap.policy, self.val_spec,
                                                  snap.value, snap.targets, nb, cfg.gamma)
            self.gradients += 1
            with store.locked():
                store.apply_gradients(g_actor, g_critic)
                store.soft_update_targets()


WORKERS = {"p3o": P3OWorker, "ca3c": CA3CWorker, "d3pg": D3PGWorker}


def _rl_specs(algo: str, env_spec, hidden: int):
    pol = MlpSpec(env_spec.obs_dim, hidden, env_spec.action_dim)
    if algo == "d3pg":
        val = MlpSpec(env_spec.obs_dim + env_spec.action_dim, hidden, 1)
    else:
        val = MlpSpec(env_spec.obs_dim, hidden, 1)
    return pol, val


def run_parallel_rl(cfg: ExperimentConfig, seed: int,
                    env_factory: Optional[Callable] = None) -> RunResult:
    """Train one seed of CA3C, P3O or D3PG with ``cfg.workers`` threads."""
    algo = cfg.algo
    if algo not in WORKERS:
        raise ValueError(f"run_parallel_rl does not handle {algo!r}")
    env_factory = env_factory or (lambda s: make_env(cfg.env, s))
    root = np.random.SeedSequence(seed)
    init_ss, eval_ss, *worker_ss = root.spawn(2 + cfg.workers)
    eval_env = env_factory(int(eval_ss.generate_state(1)[0]))
    env_spec = eval_env.spec
    pol_spec, val_spec = _rl_specs(algo, env_spec, cfg.hidden)
    init_rng = np.random.default_rng(init_ss)
    policy = init_params(pol_spec, init_rng)
    value = init_params(val_spec, init_rng)
    replay = targets = None
    if algo == "d3pg":
        replay = ReplayBuffer(cfg.replay_capacity, env_spec.obs_dim, env_spec.action_dim)
        targets = TargetNets(policy.copy(), value.copy(), cfg.tau)
    store = SharedStore(policy, value, cfg.lr, env_spec.obs_dim, cfg.max_steps,
                        cfg.normalize_state, cfg.normalize_reward, cfg.reward_center,
                        replay, targets, cfg.eval_interval)

    stop = threading.Event()
    workers = []
    for wid, ss in enumerate(worker_ss):
        rng = np.random.default_rng(ss)
        env = env_factory(int(rng.integers(2 ** 31)))
        workers.append(WORKERS[algo](wid, store, cfg, env, rng, pol_spec, val_spec, stop))

    curve = LearningCurve([], f"{algo}-{cfg.env}-h{cfg.hidden}-s{seed}", algo, cfg.env, cfg.hidden)
    t0 = time.monotonic()
    curve_lock = threading.Lock()

    def emit(env_steps, ret):
        with curve_lock:
            curve.append(env_steps, int((time.monotonic() - t0) * 1000), ret)

    errors: List[str] = []

    def guarded(fn, name):
        def body():
            try:
                fn()
            except BaseException as exc:  # noqa: BLE001 - reported to the caller
                log.exception("%s failed", name)
                errors.append(f"{name}: {type(exc).__name__}: {exc}")
                stop.set()
        return body

    scheduled = cfg.eval_interval > 0
    with store.locked():
        store.schedule_initial_eval()
    evaluator = PolicyEvaluator(eval_env, pol_spec)
    eval_rng = np.random.default_rng(eval_ss)
    eval_count = [0]

    def eval_body():
        eval_count[0] = run_evaluator(store, evaluator, emit, eval_done, eval_rng, scheduled)

    eval_done = threading.Event()
    threads = [threading.Thread(target=guarded(w.run, f"worker {w.wid}"), daemon=True)
               for w in workers]
    eval_thread = threading.Thread(target=guarded(eval_body, "evaluator"), daemon=True)
    for t in threads:
        t.start()
    eval_thread.start()
    for t in threads:
        t.join()
    eval_done.set()
    with store.locked():
        final = store.snapshot()
        if scheduled:
            store.queue_final_eval()
    eval_thread.join()
    if not scheduled:
        # one closing point so every curve reaches the final step count
        ret, _, _ = evaluator.episode(final.policy, final.obs_mean, final.obs_std, eval_rng)
        eval_count[0] += 1
        emit(final.env_steps, ret)

    result = RunResult(
        algo, cfg.env, seed, curve.sorted(), store.total_env_steps, store.total_updates,
        [w.gradients for w in workers], [w.env_steps for w in workers], eval_count[0],
        store.unlocked_mutations, policy=final.policy, value=final.value,
        obs_stats=store.obs_stats.copy(), hidden=cfg.hidden,
        wall_ms=int((time.monotonic() - t0) * 1000))
    if errors:
        result.error = "; ".join(errors)
        raise RunFailure(result.error, result)
    return result


# ---------------------------------------------------------------------------
# evolutionary methods


def run_es(cfg: ExperimentConfig, seed: int, env_factory: Optional[Callable] = None) -> RunResult:
    """Train one seed of NES, CMA-ES or NEAT; one curve point per generation."""
    algo = cfg.algo
    if algo not in ("nes", "cmaes", "neat"):
        raise ValueError(f"run_es does not handle {algo!r}")
    env_factory = env_factory or (lambda s: make_env(cfg.env, s))
    root = np.random.SeedSequence(seed)
    init_ss, sample_ss, eval_ss = root.spawn(3)
    init_rng = np.random.default_rng(init_ss)
    sample_rng = np.random.default_rng(sample_ss)
    eval_rng = np.random.default_rng(eval_ss)
    probe = env_factory(0)
    env_spec = probe.spec
    pol_spec = MlpSpec(env_spec.obs_dim, cfg.hidden, env_spec.action_dim)
    stats = RunningStats(env_spec.obs_dim)

    local = threading.local()

    def evaluator() -> PolicyEvaluator:
        ev = getattr(local, "ev", None)
        if ev is None:
            ev = local.ev = PolicyEvaluator(env_factory(0), pol_spec)
        return ev

    def score(args):
        individual, ep_seed, episodes, mean, std = args
        rng = np.random.default_rng(ep_seed)
        ev = evaluator()
        total, steps, rows = 0.0, 0, []
        for _ in range(episodes):
            ret, n, obs = ev.episode(individual, mean, std, rng)
            total += ret
            steps += n
            rows.append(obs)
        return total / episodes, steps, np.concatenate(rows)

    if algo == "nes":
        nes_cfg = NesConfig(cfg.nes_sigma, cfg.nes_alpha, cfg.popsize, cfg.mirrored)
        theta = init_params(pol_spec, init_rng)
    elif algo == "cmaes":
        cma = CmaesState(init_params(pol_spec, init_rng), cfg.cmaes_sigma0, cfg.popsize or None)
    else:
        population = Population(env_spec.obs_dim, env_spec.action_dim, init_rng,
                                NeatConfig(pop_size=cfg.popsize))

    curve = LearningCurve([], f"{algo}-{cfg.env}-h{cfg.hidden}-s{seed}", algo, cfg.env, cfg.hidden)
    total_steps = 0
    generation = 0
    t0 = time.monotonic()
    pool = ThreadPoolExecutor(max_workers=cfg.workers) if cfg.workers > 1 else None
    try:
        while total_steps < cfg.max_steps:
            if algo == "nes":
                eps = nes_sample(theta.shape[0], nes_cfg, sample_rng)
                individuals = list(theta + nes_cfg.sigma * eps)
            elif algo == "cmaes":
                individuals = list(cmaes_ask(cma, sample_rng))
            else:
                individuals = population.genomes
                for g in individuals:
                    g.compile()
            if cfg.normalize_state:
                mean, std = stats.mean.copy(), stats.std
            else:
                mean, std = np.zeros(stats.dim), np.ones(stats.dim)
            seeds = eval_rng.integers(2 ** 63, size=len(individuals))
            jobs = [(ind, int(s), cfg.fitness_episodes, mean, std)
                    for ind, s in zip(individuals, seeds)]
            results = list(pool.map(score, jobs)) if pool else [score(j) for j in jobs]
            fitness = np.array([r[0] for r in results])
            for _, steps, rows in results:
                total_steps += steps
                stats.update_batch(rows)
            best = individuals[int(np.argmax(fitness))]

            test_rng = np.random.default_rng(eval_rng.integers(2 ** 63))
            test_total = 0.0
            for _ in range(cfg.test_episodes):
                ret, n, _ = evaluator().episode(best, mean, std, test_rng)
                test_total += ret
                total_steps += n
            curve.append(total_steps, int((time.monotonic() - t0) * 1000),
                         test_total / cfg.test_episodes)

            if algo == "nes":
                theta = nes_update(theta, eps, fitness, nes_cfg)
            elif algo == "cmaes":
                cmaes_tell(cma, np.array(individuals), fitness)
            else:
                population.tell(fitness, sample_rng)
            generation += 1
    except Exception as exc:
        result = RunResult(algo, cfg.env, seed, curve, total_steps, generations=generation,
                           hidden=cfg.hidden, error=f"{type(exc).__name__}: {exc}")
        raise RunFailure(result.error, result) from exc
    finally:
        if pool:
            pool.shutdown()

    result = RunResult(algo, cfg.env, seed, curve, total_steps, generations=generation,
                       obs_stats=stats.copy(), hidden=cfg.hidden,
                       wall_ms=int((time.monotonic() - t0) * 1000))
    if algo == "nes":
        result.policy = theta
    elif algo == "cmaes":
        result.policy = cma.mean.copy()
    else:
        result.genome = population.best
    return result


def run(cfg: ExperimentConfig, seed: int, env_factory: Optional[Callable] = None) -> RunResult:
    if cfg.is_rl:
        return run_parallel_rl(cfg, seed, env_factory)
    return run_es(cfg, seed, env_factory)


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    algo: str
    env: str
    hidden: int
    policy: object  # flat MLP weights or a NEAT Genome
    obs_mean: np.ndarray
    obs_std: np.ndarray


def save_checkpoint(path, result: RunResult, normalize_state: bool = True) -> None:
    stats = result.obs_stats
    if normalize_state and stats is not None:
        mean, std = stats.mean, stats.std
    else:
        dim = stats.dim if stats is not None else make_env(result.env).spec.obs_dim
        mean, std = np.zeros(dim), np.ones(dim)
    arrays = {"algo": np.array(result.algo), "env": np.array(result.env),
              "hidden": np.array(result.hidden), "obs_mean": mean, "obs_std": std}
    if result.genome is not None:
        arrays["genome"] = np.array(neat_dumps(result.genome))
    else:
        arrays["policy"] = result.policy
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path) -> Checkpoint:
    with np.load(path) as data:
        policy = neat_loads(str(data["genome"])) if "genome" in data else data["policy"].copy()
        return Checkpoint(str(data["algo"]), str(data["env"]), int(data["hidden"]), policy,
                          data["obs_mean"].copy(), data["obs_std"].copy())


def evaluate_checkpoint(ckpt: Checkpoint, episodes: int = 10, seed: int = 0,
                        env_factory: Optional[Callable] = None) -> np.ndarray:
    """Returns of ``episodes`` deterministic episodes with frozen statistics."""
    env = (env_factory or (lambda s: make_env(ckpt.env, s)))(seed)
    spec = MlpSpec(env.spec.obs_dim, ckpt.hidden, env.spec.action_dim)
    evaluator = PolicyEvaluator(env, spec)
    rng = np.random.default_rng(seed)
    return np.array([evaluator.episode(ckpt.policy, ckpt.obs_mean, ckpt.obs_std, rng)[0]
                     for _ in range(episodes)])
