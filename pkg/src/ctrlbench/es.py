"""Fixed-topology evolution strategies over flat weight vectors.

Both optimisers maximise fitness. NES follows the Gaussian-smoothing
gradient estimate with centered-rank shaping; CMA-ES is the standard
(mu/mu_w, lambda) algorithm with cumulative step-size adaptation and
rank-one plus rank-mu covariance updates.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .normalize import centered_ranks

log = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-14


class FitnessError(ValueError):
    pass


@dataclass
class NesConfig:
    sigma: float = 0.1
    alpha: float = 0.1
    popsize: int = 50
    mirrored: bool = True

    def __post_init__(self):
        if self.sigma <= 0 or self.alpha <= 0:
            raise ValueError("NES sigma and alpha must be positive")
        if self.popsize < 2:
            raise ValueError("NES population must hold at least 2 individuals")
        if self.mirrored and self.popsize % 2:
            raise ValueError("mirrored NES needs an even population size")


def nes_sample(dim: int, cfg: NesConfig, rng: np.random.Generator) -> np.ndarray:
    """Perturbation directions, one row per individual (mirrored pairs are +e then -e)."""
    if cfg.mirrored:
        half = rng.standard_normal((cfg.popsize // 2, dim))
        return np.concatenate([half, -half])
    return rng.standard_normal((cfg.popsize, dim))


def nes_update(theta: np.ndarray, eps: np.ndarray, fitness, cfg: NesConfig) -> np.ndarray:
    fitness = np.asarray(fitness, dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(fitness))
    if bad.size:
        raise FitnessError(f"non-finite fitness {fitness[bad[0]]!r} for individual {bad[0]}")
    # average ranks for ties: equal fitness must give an exactly zero step
    shaped = centered_ranks(fitness, ties="average")
    n = eps.shape[0]
    return theta + cfg.alpha / (n * cfg.sigma) * (shaped @ eps)


def nes_generation(theta: np.ndarray, cfg: NesConfig, fitness_fn: Callable[[np.ndarray], float],
                   rng: np.random.Generator) -> np.ndarray:
    eps = nes_sample(theta.shape[0], cfg, rng)
    fitness = [fitness_fn(theta + cfg.sigma * e) for e in eps]
    return nes_update(theta, eps, fitness, cfg)


@dataclass
class CmaesState:
    mean: np.ndarray
    sigma: float
    popsize: Optional[int] = None
    generation: int = 0
    evaluations: int = 0
    cov: np.ndarray = field(init=False)
    p_sigma: np.ndarray = field(init=False)
    p_c: np.ndarray = field(init=False)

    def __post_init__(self):
        self.mean = np.array(self.mean, dtype=np.float64)
        if self.sigma <= 0:
            raise ValueError("CMA-ES step size must be positive")
        n = self.dim
        lam = self.popsize or 4 + int(3 * math.log(n))
        self.popsize = lam
        self.mu = lam // 2
        w = math.log(self.mu + 0.5) - np.log(np.arange(1, self.mu + 1))
        self.weights = w / w.sum()
        self.mueff = 1.0 / np.sum(self.weights ** 2)
        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1,
                       2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.damps = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        self.cov = np.eye(n)
        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self.eig_basis = np.eye(n)
        self.eig_scale = np.ones(n)
        self.floored = False

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def _decompose(self):
        vals, vecs = np.linalg.eigh(self.cov)
        if vals.min() < EIGEN_FLOOR:
            if not self.floored:
                log.warning("CMA-ES covariance lost positive definiteness (min eigenvalue %.3g); "
                            "flooring at %g", vals.min(), EIGEN_FLOOR)
            self.floored = True
            vals = np.maximum(vals, EIGEN_FLOOR)
            self.cov = (vecs * vals) @ vecs.T
            self.cov = 0.5 * (self.cov + self.cov.T)
        self.eig_basis = vecs
        self.eig_scale = np.sqrt(vals)


def cmaes_ask(state: CmaesState, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal((state.popsize, state.dim))
    y = (z * state.eig_scale) @ state.eig_basis.T
    return state.mean + state.sigma * y


def cmaes_tell(state: CmaesState, population, fitnesses) -> CmaesState:
    population = np.asarray(population, dtype=np.float64)
    fitnesses = np.asarray(fitnesses, dtype=np.float64)
    if population.shape[0] != fitnesses.shape[0] or population.shape[1] != state.dim:
        raise ValueError(f"population {population.shape} and fitness {fitnesses.shape} "
                         f"do not line up with dimension {state.dim}")
    if not np.all(np.isfinite(fitnesses)):
        raise FitnessError("non-finite fitness passed to cmaes_tell")
    n = state.dim
    order = np.argsort(-fitnesses, kind="stable")[:state.mu]
    old_mean = state.mean
    y_sel = (population[order] - old_mean) / state.sigma
    y_w = state.weights @ y_sel
    state.mean = old_mean + state.sigma * y_w

    b, d = state.eig_basis, state.eig_scale
    inv_sqrt_c_y = b @ ((b.T @ y_w) / d)
    cs, cc = state.cs, state.cc
    state.p_sigma = (1 - cs) * state.p_sigma + math.sqrt(cs * (2 - cs) * state.mueff) * inv_sqrt_c_y
    state.generation += 1
    state.evaluations += population.shape[0]
    ps_norm = float(np.linalg.norm(state.p_sigma))
    hsig = (ps_norm / math.sqrt(1 - (1 - cs) ** (2 * state.generation)) / state.chi_n
            < 1.4 + 2 / (n + 1))
    state.p_c = (1 - cc) * state.p_c + hsig * math.sqrt(cc * (2 - cc) * state.mueff) * y_w

    c1, cmu = state.c1, state.cmu
    rank_mu = (y_sel.T * state.weights) @ y_sel
    state.cov = ((1 - c1 - cmu + (1 - hsig) * c1 * cc * (2 - cc)) * state.cov
                 + c1 * np.outer(state.p_c, state.p_c) + cmu * rank_mu)
    state.cov = 0.5 * (state.cov + state.cov.T)
    state.sigma *= math.exp((cs / state.damps) * (ps_norm / state.chi_n - 1))
    state._decompose()
    return state
