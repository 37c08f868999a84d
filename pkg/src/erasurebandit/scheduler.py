"""Per-batch pull scheduling across agents with heterogeneous repetition budgets.

Slots are 0-based and windows are half-open ``(start, stop)`` pairs.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

FILLER, REPEAT, EFFECTIVE, IMITATE = 0, 1, 2, 3

Window = tuple[int, int]


@dataclass
class BatchSchedule:
    """Action matrix for one batch plus the bookkeeping needed to read its rewards.

    ``roles`` marks each slot as FILLER, REPEAT (repetition prefix), EFFECTIVE or
    IMITATE. ``stage1`` and ``parts`` are only filled in by :func:`schedule`.
    """

    matrix: np.ndarray
    roles: np.ndarray
    effective_windows: dict[tuple[int, int], list[Window]]
    batch: int
    stage1: list[list[int]] | None = None
    parts: list[tuple[int, int, int]] | None = None
    unassigned: int = 0

    @property
    def end_time(self) -> int:
        return self.matrix.shape[1]

    @property
    def num_agents(self) -> int:
        return self.matrix.shape[0]

    @property
    def filler_slots(self) -> set[tuple[int, int]]:
        return {(int(m), int(t)) for m, t in zip(*np.nonzero(self.roles == FILLER))}

    @property
    def effective_mask(self) -> np.ndarray:
        return self.roles == EFFECTIVE


class _Layout:
    """Append-only per-agent slot sequences, materialised into a BatchSchedule."""

    def __init__(self, num_agents: int):
        self.segments: list[list[tuple[int, int, int]]] = [[] for _ in range(num_agents)]
        self.cursor = [0] * num_agents
        self.windows: dict[tuple[int, int], list[Window]] = {}

    def add(self, m: int, arm: int, length: int, role: int) -> None:
        if length <= 0:
            return
        self.segments[m].append((int(arm), length, role))
        if role == EFFECTIVE:
            start = self.cursor[m]
            self.windows.setdefault((int(arm), m), []).append((start, start + length))
        self.cursor[m] += length

    def pull(self, m: int, arm: int, alpha: int, size: int) -> None:
        self.add(m, arm, alpha, REPEAT)
        self.add(m, arm, size, EFFECTIVE)

    def build(self, end: int, filler, batch: int) -> BatchSchedule:
        M = len(self.segments)
        matrix = np.full((M, end), -1, dtype=np.int64)
        roles = np.zeros((M, end), dtype=np.int8)
        for m, segs in enumerate(self.segments):
            t = 0
            for arm, length, role in segs:
                stop = min(t + length, end)
                if stop > t:
                    matrix[m, t:stop] = arm
                    roles[m, t:stop] = role
                t += length
        holes = matrix < 0
        if holes.any():
            matrix[holes] = filler(holes)
        return BatchSchedule(matrix, roles, self.windows, batch)


def lp_end_time_exact(alphas: Sequence[int], num_arms: int, batch: int) -> Fraction:
    n = 4 ** int(batch)
    return Fraction(n * int(num_arms)) / sum(Fraction(1) / (Fraction(int(a), n) + 1) for a in alphas)


def lp_end_time(alphas: Sequence[int], num_arms: int, batch: int) -> float:
    """Optimal value of the LP relaxation of the batch makespan program."""
    if len(alphas) < 1 or num_arms < 1 or batch < 1:
        raise ValueError("need M >= 1, K >= 1 and i >= 1")
    return float(lp_end_time_exact(alphas, num_arms, batch))


def lemma1_bound(alphas: Sequence[int], num_arms: int, batch: int) -> float:
    M = len(alphas)
    n = 4 ** batch
    return lp_end_time(alphas, num_arms, batch) + 6.0 * (sum(alphas) / M + 2.0 * num_arms * n / M)


def observation_end_time(alphas: Sequence[int], num_arms: int, batch: int) -> float:
    """End time of the LP-rounding reference scheduler: t* + max(2 alpha_{M-1}, alpha_M)."""
    a = sorted(alphas)
    slack = max(2 * a[-2], a[-1]) if len(a) > 1 else a[-1]
    return lp_end_time(a, num_arms, batch) + slack


def ilp_optimum(alphas: Sequence[int], num_arms: int, batch: int) -> int:
    """Exact minimum makespan by exhaustive enumeration (tiny instances only)."""
    M, n = len(alphas), 4 ** batch
    if M > 3 or num_arms > 4 or n > 16 or M < 1 or num_arms < 1:
        raise ValueError("ilp_optimum is an exhaustive oracle: needs M <= 3, K <= 4, 4^i <= 16")
    splits = np.array([c for c in itertools.product(range(n + 1), repeat=M) if sum(c) == n],
                      dtype=np.int32)
    alpha = np.asarray(alphas, dtype=np.int32)
    cost = splits + alpha * (splits > 0)
    loads = np.zeros((1, M), dtype=np.int32)
    for _ in range(num_arms):
        loads = (loads[:, None, :] + cost[None, :, :]).reshape(-1, M)
        loads = np.unique(loads, axis=0)
    return int(loads.max(axis=1).min())


def _check_inputs(active, alphas) -> tuple[list[int], list[int]]:
    active = [int(a) for a in active]
    alphas = [int(a) for a in alphas]
    if not active:
        raise ValueError("active arm set is empty")
    if not alphas:
        raise ValueError("need at least one agent")
    if any(x > y for x, y in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be sorted ascending")
    if min(alphas) < 0:
        raise ValueError("alphas must be non-negative")
    return active, alphas


def near_equal_parts(total: int, count: int) -> list[int]:
    q, r = divmod(total, count)
    return [q + 1 if j < r else q for j in range(count)]


def schedule(active: Sequence[int], alphas: Sequence[int], batch: int,
             rng: np.random.Generator) -> BatchSchedule:
    """Two-stage randomized batch schedule.

    Stage 1 gives whole arms (repetitions + all 4^i pulls) to agents in order while
    they finish within the LP bound. Stage 2 splits each leftover arm into parts
    handed round-robin to the first floor(M/2) agents; the other agents replay
    those part sequences with their own repetitions, rewards unused. Idle slots get
    uniformly random active arms.
    """
    active, alphas = _check_inputs(active, alphas)
    batch = int(batch)
    M, K, n = len(alphas), len(active), 4 ** batch
    budget = math.floor(lp_end_time_exact(alphas, K, batch))
    order = [int(a) for a in rng.permutation(active)]

    lay = _Layout(M)
    stage1: list[list[int]] = [[] for _ in range(M)]
    k = 0
    for m, alpha in enumerate(alphas):
        t_end, cost = 0, alpha + n
        while k < K and t_end + cost <= budget:
            lay.pull(m, order[k], alpha, n)
            stage1[m].append(order[k])
            k += 1
            t_end += cost
    stage1_end = max(lay.cursor)

    rest = order[k:]
    parts: list[tuple[int, int, int]] = []
    end = stage1_end
    if rest:
        half = max(1, M // 2)
        count = min(n, max(1, M // (2 * len(rest))))
        sizes = near_equal_parts(n, count)
        seq = [(arm, size) for arm in rest for size in sizes]
        per_agent: list[list[tuple[int, int]]] = [[] for _ in range(half)]
        for j, (arm, size) in enumerate(seq):
            m = j % half
            lay.pull(m, arm, alphas[m], size)
            per_agent[m].append((arm, size))
            parts.append((m, arm, size))
        end = max(end, max(lay.cursor[:half]))
        for m in range(half, M):
            for arm, size in per_agent[(m - half) % half]:
                if lay.cursor[m] >= end:
                    break
                lay.add(m, arm, alphas[m] + size, IMITATE)
    end = max(end, 1)

    sched = lay.build(end, lambda holes: rng.choice(active, size=int(holes.sum())), batch)
    sched.stage1 = stage1
    sched.parts = parts
    sched.unassigned = len(rest)
    return sched


def schedule_vertical(active: Sequence[int], alphas: Sequence[int], batch: int) -> BatchSchedule:
    """Every arm played in full on a single agent; leftovers go to the fastest agents.

    Idle slots repeat the agent's last scheduled arm (agents with no arm at all
    cycle through the active set by agent index).
    """
    active, alphas = _check_inputs(active, alphas)
    M, K, n = len(alphas), len(active), 4 ** batch
    q, r = divmod(K, M)
    lay = _Layout(M)
    arms = iter(active)
    last = [active[m % K] for m in range(M)]
    for m, alpha in enumerate(alphas):
        for _ in range(q + (m < r)):
            arm = next(arms)
            lay.pull(m, arm, alpha, n)
            last[m] = arm
    end = max(lay.cursor)
    for m in range(M):
        lay.add(m, last[m], end - lay.cursor[m], FILLER)
    return lay.build(end, None, batch)


def horizontal_width(alphas: Sequence[int], batch: int) -> int:
    """Number of fastest agents sharing each arm: argmin of (sum alpha + 4^i) / width."""
    n = 4 ** batch
    best, best_val, acc = 1, None, 0
    for w, alpha in enumerate(alphas, start=1):
        acc += alpha
        val = Fraction(acc + n, w)
        if best_val is None or val < best_val:
            best, best_val = w, val
    return best


def _horizontal_split(alphas: Sequence[int], n: int) -> tuple[int, list[int]]:
    """Block duration and per-agent effective counts (surplus trimmed from slow agents)."""
    lo, hi = 1, math.ceil((sum(alphas) + n) / len(alphas))
    while lo < hi:
        mid = (lo + hi) // 2
        if sum(max(0, mid - a) for a in alphas) >= n:
            hi = mid
        else:
            lo = mid + 1
    counts = [max(0, lo - a) for a in alphas]
    surplus = sum(counts) - n
    for m in reversed(range(len(counts))):
        cut = min(surplus, counts[m])
        counts[m] -= cut
        surplus -= cut
    return lo, counts


def schedule_horizontal(active: Sequence[int], alphas: Sequence[int], batch: int) -> BatchSchedule:
    """Arms one after another, each spread over the fastest agents in parallel.

    Agents outside the chosen width, and agents done with their share early, keep
    re-sending their current arm as filler.
    """
    active, alphas = _check_inputs(active, alphas)
    M, n = len(alphas), 4 ** batch
    width = horizontal_width(alphas, batch)
    duration, counts = _horizontal_split(alphas[:width], n)
    lay = _Layout(M)
    last = [active[0]] * M
    for arm in active:
        for m in range(M):
            if m < width and counts[m] > 0:
                lay.pull(m, arm, alphas[m], counts[m])
                lay.add(m, arm, duration - alphas[m] - counts[m], FILLER)
                last[m] = arm
            else:
                if m < width:
                    last[m] = arm
                lay.add(m, last[m], duration, FILLER)
    return lay.build(duration * len(active), None, batch)


def schedule_round_robin(active: Sequence[int], num_agents: int, batch: int) -> BatchSchedule:
    """Erasure-oblivious SAE layout: the arm-major pull list dealt column by column.

    Every pull is effective; no repetitions. The ragged tail repeats the last arm as
    filler.
    """
    active = [int(a) for a in active]
    if not active:
        raise ValueError("active arm set is empty")
    M, n = num_agents, 4 ** batch
    total = len(active) * n
    end = -(-total // M)
    flat = np.full(end * M, active[-1], dtype=np.int64)
    flat[:total] = np.repeat(active, n)
    role_flat = np.full(end * M, FILLER, dtype=np.int8)
    role_flat[:total] = EFFECTIVE
    matrix = flat.reshape(end, M).T.copy()
    roles = role_flat.reshape(end, M).T.copy()
    return BatchSchedule(matrix, roles, _runs_as_windows(matrix, roles), batch)


def _runs_as_windows(matrix: np.ndarray, roles: np.ndarray) -> dict[tuple[int, int], list[Window]]:
    windows: dict[tuple[int, int], list[Window]] = {}
    for m in range(matrix.shape[0]):
        eff = roles[m] == EFFECTIVE
        key = np.where(eff, matrix[m], -1)
        edges = np.flatnonzero(np.diff(key)) + 1
        starts = np.concatenate(([0], edges))
        stops = np.concatenate((edges, [len(key)]))
        for b, e in zip(starts, stops):
            if key[b] >= 0:
                windows.setdefault((int(key[b]), m), []).append((int(b), int(e)))
    return windows


def check_schedule(sched: BatchSchedule, active: Sequence[int], alphas: Sequence[int] | None,
                   batch: int) -> list[str]:
    """Structural violations of a schedule (empty list when it is sound).

    Repetition-prefix checks need ``alphas``; the stage-1/stage-2 checks only apply
    to schedules produced by :func:`schedule`.
    """
    out: list[str] = []
    M, T = sched.matrix.shape
    n = 4 ** batch
    active_set = set(int(a) for a in active)
    K = len(active_set)
    if T < 1:
        out.append("empty schedule")
    if not np.isin(sched.matrix, list(active_set)).all():
        out.append("slot holds an arm outside the active set (or is empty)")

    covered = np.zeros((M, T), dtype=bool)
    per_arm = {a: 0 for a in active_set}
    for (arm, m), wins in sched.effective_windows.items():
        if arm not in active_set:
            out.append(f"window for inactive arm {arm}")
            continue
        for b, e in wins:
            if not 0 <= b < e <= T:
                out.append(f"window {(b, e)} of arm {arm} on agent {m} outside [0, {T})")
                continue
            if covered[m, b:e].any():
                out.append(f"overlapping windows on agent {m} at {(b, e)}")
            covered[m, b:e] = True
            per_arm[arm] += e - b
            if (sched.matrix[m, b:e] != arm).any():
                out.append(f"window {(b, e)} on agent {m} does not carry arm {arm}")
            if alphas is not None:
                a = int(alphas[m])
                if b < a or (sched.roles[m, b - a:b] != REPEAT).any() \
                        or (sched.matrix[m, b - a:b] != arm).any():
                    out.append(f"window {(b, e)} of arm {arm} on agent {m} lacks its {a}-slot prefix")
    for arm, cnt in per_arm.items():
        if cnt != n:
            out.append(f"arm {arm} has {cnt} effective pulls, expected {n}")
    if not (covered == (sched.roles == EFFECTIVE)).all():
        out.append("effective windows do not match the EFFECTIVE slot roles")

    if sched.stage1 is not None:
        placed = sum(len(x) for x in sched.stage1)
        if placed < max(K - M, 0):
            out.append(f"stage 1 placed {placed} arms, fewer than (K-M)+ = {max(K - M, 0)}")
        khat = sched.unassigned
        if khat:
            cap = min(n, -(-4 * khat * n // M))
            per_agent: dict[int, int] = {}
            for m, arm, size in sched.parts:
                per_agent[m] = per_agent.get(m, 0) + 1
                if size > cap:
                    out.append(f"stage-2 part of size {size} exceeds {cap}")
                if m >= max(1, M // 2):
                    out.append(f"stage-2 part assigned to agent {m} outside the first floor(M/2)")
            if per_agent and max(per_agent.values()) > 3:
                out.append(f"an agent received {max(per_agent.values())} stage-2 parts")
    return out
