"""Learners behind one contract: an M-vector of arms out per round, an M-vector of rewards in.

Batch learners also expose ``next_block(limit)`` / ``observe_block(rewards)`` so the
harness can push a whole stretch of a batch through the channels at once; the
per-round methods are thin wrappers over a one-column block.

A policy only ever sees the rewards produced by whatever the agents actually
played, attributed to the arms it sent. It never touches the true means or the
erasure realizations.
"""
from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np
from numba import njit

from .scheduler import (EFFECTIVE, BatchSchedule, schedule, schedule_horizontal,
                        schedule_round_robin, schedule_vertical)

POLICY_NAMES = ("batchsp2", "ma-sae", "ma-lsae-v", "ma-lsae-h", "ma-ucb")


class Policy:
    name = "policy"

    def __init__(self, num_arms: int, num_agents: int, horizon: int):
        if num_arms < 1 or num_agents < 1 or horizon < 1:
            raise ValueError("need K >= 1, M >= 1 and T >= 1")
        self.num_arms = int(num_arms)
        self.num_agents = int(num_agents)
        self.horizon = int(horizon)
        self.t = 0

    def next_block(self, limit: int) -> tuple[np.ndarray, int]:
        """Up to ``limit`` rounds of sends (M x L) and the batch label they belong to."""
        raise NotImplementedError

    def observe_block(self, rewards: np.ndarray) -> None:
        raise NotImplementedError

    def next_actions(self, t: int) -> np.ndarray:
        if t != self.t:
            raise ValueError(f"expected round {self.t}, got {t}")
        sent, _ = self.next_block(1)
        return sent[:, 0]

    def observe(self, t: int, rewards: Sequence[float]) -> None:
        if t != self.t:
            raise ValueError(f"expected round {self.t}, got {t}")
        self.observe_block(np.asarray(rewards, dtype=float).reshape(self.num_agents, 1))


def elimination_threshold(batch: int, num_arms: int, num_agents: int, horizon: int) -> float:
    return 4.0 * math.sqrt(math.log(num_arms * num_agents * horizon) / (2.0 * 4 ** batch))


def empirical_means(sched: BatchSchedule, rewards: np.ndarray, batch: int,
                    active: Sequence[int] | None = None) -> dict[int, float]:
    """Per-arm mean of the rewards inside effective windows, normalised by 4^i."""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.shape != sched.matrix.shape:
        raise ValueError(f"rewards shape {rewards.shape} does not match schedule {sched.matrix.shape}")
    if active is None:
        active = sorted({arm for arm, _ in sched.effective_windows})
    mask = sched.roles == EFFECTIVE
    n = 4 ** batch
    sums = {int(a): 0.0 for a in active}
    arms = sched.matrix[mask]
    vals = rewards[mask]
    for a in sums:
        if not any(arm == a for arm, _ in sched.effective_windows):
            raise RuntimeError(f"active arm {a} has no effective window in the schedule")
        sums[a] = float(vals[arms == a].sum())
    return {a: s / n for a, s in sums.items()}


def eliminate(means: dict[int, float], active: Sequence[int], batch: int, num_arms: int,
              num_agents: int, horizon: int) -> list[int]:
    """Keep arms whose empirical gap to the leader is within the confidence width."""
    if not active:
        raise ValueError("active set is empty")
    thr = elimination_threshold(batch, num_arms, num_agents, horizon)
    best = max(means[a] for a in active)
    return [a for a in active if best - means[a] <= thr]


class BatchElimination(Policy):
    """Successive elimination over batches laid out by a pluggable scheduler.

    ``layout(active, batch)`` returns the :class:`BatchSchedule` of one batch. Means
    are running sums over EFFECTIVE slots; a batch cut short by the horizon never
    eliminates.
    """

    def __init__(self, num_arms: int, num_agents: int, horizon: int,
                 layout: Callable[[list[int], int], BatchSchedule], name: str = "batch"):
        super().__init__(num_arms, num_agents, horizon)
        self.layout = layout
        self.name = name
        self.active = list(range(self.num_arms))
        self.batch = 1
        self.history: list[list[int]] = [list(self.active)]
        self._start_batch()

    def _start_batch(self) -> None:
        self.sched = self.layout(list(self.active), self.batch)
        self.cursor = 0
        self.sums = np.zeros(self.num_arms)
        self.pending = 0

    def next_block(self, limit: int) -> tuple[np.ndarray, int]:
        if self.pending:
            raise RuntimeError("previous block not observed yet")
        stop = min(self.sched.end_time, self.cursor + max(1, int(limit)))
        self.pending = stop - self.cursor
        return self.sched.matrix[:, self.cursor:stop], self.batch

    def observe_block(self, rewards: np.ndarray) -> None:
        rewards = np.asarray(rewards, dtype=float)
        L = self.pending
        if rewards.shape != (self.num_agents, L):
            raise ValueError(f"expected rewards of shape {(self.num_agents, L)}")
        span = slice(self.cursor, self.cursor + L)
        mask = self.sched.roles[:, span] == EFFECTIVE
        self.sums += np.bincount(self.sched.matrix[:, span][mask], weights=rewards[mask],
                                 minlength=self.num_arms)
        self.cursor += L
        self.t += L
        self.pending = 0
        if self.cursor == self.sched.end_time:
            self._finish_batch()

    def _finish_batch(self) -> None:
        n = 4 ** self.batch
        means = {a: self.sums[a] / n for a in self.active}
        self.last_means = means
        self.active = eliminate(means, self.active, self.batch, self.num_arms,
                                self.num_agents, self.horizon)
        self.history.append(list(self.active))
        self.batch += 1
        if self.t < self.horizon:
            self._start_batch()


def batchsp2_policy(num_arms: int, alphas: Sequence[int], horizon: int,
                    rng: np.random.Generator) -> BatchElimination:
    alphas = [int(a) for a in alphas]
    return BatchElimination(num_arms, len(alphas), horizon,
                            lambda active, i: schedule(active, alphas, i, rng), "batchsp2")


def ma_sae_policy(num_arms: int, num_agents: int, horizon: int) -> BatchElimination:
    return BatchElimination(num_arms, num_agents, horizon,
                            lambda active, i: schedule_round_robin(active, num_agents, i), "ma-sae")


def ma_lsae_v_policy(num_arms: int, alphas: Sequence[int], horizon: int) -> BatchElimination:
    alphas = [int(a) for a in alphas]
    return BatchElimination(num_arms, len(alphas), horizon,
                            lambda active, i: schedule_vertical(active, alphas, i), "ma-lsae-v")


def ma_lsae_h_policy(num_arms: int, alphas: Sequence[int], horizon: int) -> BatchElimination:
    alphas = [int(a) for a in alphas]
    return BatchElimination(num_arms, len(alphas), horizon,
                            lambda active, i: schedule_horizontal(active, alphas, i), "ma-lsae-h")


SEQUENTIAL, SHARED = 0, 1


@njit(cache=True)
def ucb_select(counts, sums, num_agents, mode, out):
    """Fill ``out`` with one arm per agent.

    Sequential mode hands out arms one agent at a time, bumping a provisional count
    after each pick so later agents see the earlier picks. Untried arms come first
    (fewest provisional picks, then lowest index). Shared mode gives every agent
    the single best index.
    """
    K = counts.shape[0]
    total = 0.0
    for a in range(K):
        total += counts[a]
    logt = math.log(total) if total > 1.0 else 0.0
    prov = counts.copy()
    for m in range(num_agents):
        if mode == SHARED and m > 0:
            out[m] = out[0]
            continue
        best = -1
        for a in range(K):
            if counts[a] == 0.0 and (best < 0 or prov[a] < prov[best]):
                best = a
        if best < 0:
            best_val = -np.inf
            for a in range(K):
                val = sums[a] / counts[a] + math.sqrt(2.0 * logt / prov[a])
                if val > best_val:
                    best_val = val
                    best = a
        out[m] = best
        prov[best] += 1.0


@njit(cache=True)
def _ucb_update(counts, sums, sent, rewards):
    for m in range(sent.shape[0]):
        counts[sent[m]] += 1.0
        sums[sent[m]] += rewards[m]


class MultiAgentUCB(Policy):
    """UCB1 over pooled statistics; each reward credited to the arm that was sent."""

    name = "ma-ucb"

    def __init__(self, num_arms: int, num_agents: int, horizon: int, mode: str = "sequential"):
        super().__init__(num_arms, num_agents, horizon)
        if mode not in ("sequential", "shared"):
            raise ValueError(f"unknown UCB mode {mode!r}")
        self.mode = mode
        self.counts = np.zeros(self.num_arms)
        self.sums = np.zeros(self.num_arms)
        self._sent = np.zeros(self.num_agents, dtype=np.int64)
        self.pending = False

    @property
    def mode_id(self) -> int:
        return SEQUENTIAL if self.mode == "sequential" else SHARED

    def next_block(self, limit: int) -> tuple[np.ndarray, int]:
        if self.pending:
            raise RuntimeError("previous block not observed yet")
        ucb_select(self.counts, self.sums, self.num_agents, self.mode_id, self._sent)
        self.pending = True
        return self._sent.reshape(-1, 1).copy(), 0

    def observe_block(self, rewards: np.ndarray) -> None:
        rewards = np.asarray(rewards, dtype=float).reshape(self.num_agents, -1)
        if rewards.shape[1] != 1 or not self.pending:
            raise ValueError("UCB observes exactly one round per block")
        _ucb_update(self.counts, self.sums, self._sent, rewards[:, 0])
        self.pending = False
        self.t += 1


def ucb_policy(num_arms: int, num_agents: int, horizon: int, mode: str = "sequential") -> MultiAgentUCB:
    return MultiAgentUCB(num_arms, num_agents, horizon, mode)


def make_policy(name: str, num_arms: int, alphas: Sequence[int], horizon: int,
                rng: np.random.Generator, ucb_mode: str = "sequential") -> Policy:
    M = len(alphas)
    if name == "batchsp2":
        return batchsp2_policy(num_arms, alphas, horizon, rng)
    if name == "ma-sae":
        return ma_sae_policy(num_arms, M, horizon)
    if name == "ma-lsae-v":
        return ma_lsae_v_policy(num_arms, alphas, horizon)
    if name == "ma-lsae-h":
        return ma_lsae_h_policy(num_arms, alphas, horizon)
    if name == "ma-ucb":
        return ucb_policy(num_arms, M, horizon, ucb_mode)
    raise ValueError(f"unknown policy {name!r}; expected one of {', '.join(POLICY_NAMES)}")


@njit(cache=True)
def ucb_erasure_kernel(means, sigma, bernoulli, noise, erased, held, num_arms, mode):
    """Whole-horizon MA-UCB run over plain erasure channels.

    Same learner arithmetic as :class:`MultiAgentUCB` driven round by round through
    the channel bank; returns the played arms and whether each was ever delivered.
    """
    M, T = noise.shape
    counts = np.zeros(num_arms)
    sums = np.zeros(num_arms)
    sent = np.zeros(M, dtype=np.int64)
    rew = np.zeros(M)
    played = np.empty((M, T), dtype=np.int64)
    delivered = np.zeros(M, dtype=np.bool_)
    origin = np.empty((M, T), dtype=np.int64)
    cur = held.copy()
    for t in range(T):
        ucb_select(counts, sums, M, mode, sent)
        for m in range(M):
            if not erased[m, t]:
                cur[m] = sent[m]
                delivered[m] = True
            played[m, t] = cur[m]
            origin[m, t] = 0 if delivered[m] else -1
            if bernoulli:
                rew[m] = 1.0 if noise[m, t] < means[cur[m]] else 0.0
            else:
                rew[m] = means[cur[m]] + sigma * noise[m, t]
        _ucb_update(counts, sums, sent, rew)
    return played, origin
