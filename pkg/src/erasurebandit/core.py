"""Bandit instances, reward sampling, pseudo-regret accounting and seeded streams.

Arms are 0-based everywhere in this package.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

GAUSSIAN = "gaussian"
BERNOULLI = "bernoulli"


def make_rng(base_seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 stream for ``(base_seed, *key)``.

    Substreams used by the harness (``run`` is the 0-based run index):

    ``(run, 0)``            per-run arm permutation
    ``(run, 1, m)``         erasure / delay draws of agent ``m``
    ``(run, 2, m)``         reward noise of agent ``m``
    ``(run, 3, m)``         initial action of agent ``m``
    ``(run, 4, policy_id)`` policy-internal randomness (scheduler shuffles, fillers)
    """
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))


@dataclass(frozen=True)
class BanditInstance:
    means: tuple[float, ...]
    noise: str = GAUSSIAN
    sigma: float = 1.0

    def __post_init__(self):
        means = tuple(float(m) for m in self.means)
        object.__setattr__(self, "means", means)
        if len(means) < 2:
            raise ValueError("a bandit instance needs at least 2 arms")
        if self.noise not in (GAUSSIAN, BERNOULLI):
            raise ValueError(f"unknown noise model {self.noise!r}")
        if self.noise == GAUSSIAN and not self.sigma >= 0:
            raise ValueError("sigma must be non-negative")
        if self.noise == BERNOULLI and not all(0.0 <= m <= 1.0 for m in means):
            raise ValueError("Bernoulli means must lie in [0, 1]")

    @property
    def num_arms(self) -> int:
        return len(self.means)

    @property
    def best_mean(self) -> float:
        return max(self.means)

    @property
    def mean_array(self) -> np.ndarray:
        return np.asarray(self.means, dtype=float)

    @property
    def gaps(self) -> np.ndarray:
        mu = self.mean_array
        return mu.max() - mu

    def permuted(self, perm: Sequence[int]) -> "BanditInstance":
        mu = self.mean_array[np.asarray(perm)]
        return BanditInstance(tuple(mu), self.noise, self.sigma)

    def rewards(self, arms: np.ndarray, noise: np.ndarray) -> np.ndarray:
        """Rewards for ``arms`` given pre-drawn base noise of the same shape.

        Gaussian noise is standard normal; Bernoulli noise is uniform on [0, 1).
        """
        mu = self.mean_array[arms]
        if self.noise == GAUSSIAN:
            return mu + self.sigma * noise
        return (noise < mu).astype(float)

    def draw_noise(self, rng: np.random.Generator, size) -> np.ndarray:
        if self.noise == GAUSSIAN:
            return rng.standard_normal(size)
        return rng.random(size)


def _check_arm(instance: BanditInstance, arm) -> None:
    if not 0 <= int(arm) < instance.num_arms:
        raise ValueError(f"arm {arm} out of range for K={instance.num_arms}")


def sample_reward(instance: BanditInstance, arm: int, rng: np.random.Generator) -> float:
    _check_arm(instance, arm)
    z = instance.draw_noise(rng, None)
    return float(instance.rewards(np.asarray(arm), np.asarray(z)))


def suboptimality_gap(instance: BanditInstance, arm: int) -> float:
    _check_arm(instance, arm)
    return instance.best_mean - instance.means[arm]


def regret_increment(instance: BanditInstance, played: Sequence[int]) -> float:
    """Pseudo-regret of one round: sum of the gaps of the arms actually played."""
    played = np.asarray(played, dtype=int)
    if played.size and (played.min() < 0 or played.max() >= instance.num_arms):
        raise ValueError(f"played arms {played.tolist()} out of range for K={instance.num_arms}")
    return float(instance.gaps[played].sum())


@dataclass
class RegretLedger:
    """Per-round pseudo-regret trace of one simulated run.

    ``play_counts[(i, a)]`` counts agent-rounds in which arm ``a`` was played because
    of an instruction the learner sent during batch ``i`` (0 for non-batched policies,
    -1 for the agents' random initial actions).
    """

    horizon: int
    increments: np.ndarray = field(init=False)
    realized: np.ndarray | None = field(init=False, default=None)
    play_counts: Counter = field(default_factory=Counter)
    violation_count: int = 0
    rounds: int = field(init=False, default=0)

    def __post_init__(self):
        self.increments = np.zeros(self.horizon)

    def record(self, gaps_played: np.ndarray, realized_block: np.ndarray | None = None) -> None:
        """Append per-round regret increments (one entry per round of the block)."""
        n = len(gaps_played)
        self.increments[self.rounds:self.rounds + n] = gaps_played
        if realized_block is not None:
            if self.realized is None:
                self.realized = np.zeros(self.horizon)
            self.realized[self.rounds:self.rounds + n] = realized_block
        self.rounds += n

    def count_plays(self, origin: np.ndarray, played: np.ndarray, num_arms: int) -> None:
        keys = (origin.astype(np.int64) + 1) * num_arms + played
        counts = np.bincount(keys.ravel())
        for key in np.flatnonzero(counts):
            self.play_counts[(int(key // num_arms) - 1, int(key % num_arms))] += int(counts[key])

    @property
    def cum_regret(self) -> np.ndarray:
        return np.cumsum(self.increments[:self.rounds])

    @property
    def cum_realized(self) -> np.ndarray | None:
        if self.realized is None:
            return None
        return np.cumsum(self.realized[:self.rounds])
