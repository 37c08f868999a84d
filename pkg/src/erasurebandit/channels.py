"""Downlink action-erasure channels, agent action persistence and good-event diagnostics."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np

ERASURE = "erasure"
GEOMETRIC_DELAY = "geometric-delay"


@dataclass(frozen=True)
class AgentChannel:
    epsilon: float
    alpha: int | None = None
    kind: str = ERASURE

    def __post_init__(self):
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"erasure probability must lie in [0, 1), got {self.epsilon}")
        if self.kind not in (ERASURE, GEOMETRIC_DELAY):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.alpha is not None and self.alpha < 0:
            raise ValueError("alpha must be non-negative")

    def bind(self, horizon: int, alpha: int | None = None) -> "AgentChannel":
        """Copy with the repetition budget fixed for ``horizon``.

        An explicit ``alpha`` may be given (e.g. derived from an upper bound on epsilon);
        it must not be smaller than what the exact epsilon requires.
        """
        need = repetitions_for(self.epsilon, horizon)
        if alpha is None:
            alpha = need
        elif alpha < need:
            raise ValueError(f"alpha={alpha} is below the required {need}")
        return replace(self, alpha=int(alpha))


@dataclass
class AgentState:
    last_received: int
    erasure_run: int = 0
    # delay channels only: the in-flight message and the slots left until delivery
    pending: int | None = None
    pending_wait: int = 0
    last_sent: int | None = None


def repetitions_for(epsilon: float, horizon: int) -> int:
    """Extra sends so an action gets through with probability ``1 - 1/poly(T)``."""
    if not 0.0 <= epsilon < 1.0:
        raise ValueError(f"erasure probability must lie in [0, 1), got {epsilon}")
    if horizon < 2:
        raise ValueError("horizon must be at least 2")
    if epsilon == 0.0:
        return 0
    return max(0, math.ceil(4.0 * math.log(horizon) / math.log(1.0 / epsilon)) - 1)


def delay_repetitions(survival: Callable[[int], float], horizon: int, max_delay: int = 10**7) -> int:
    """Smallest d with P(delay > d) <= T^-4 for a delay law given by its survival function.

    For a geometric delay P(D = d) = (1 - eps) eps^d this coincides with
    :func:`repetitions_for`.
    """
    target = float(horizon) ** -4
    lo, hi = 0, 1
    while survival(hi) > target:
        lo, hi = hi, 2 * hi
        if hi > max_delay:
            raise ValueError("delay distribution tail too heavy for the horizon")
    if survival(lo) <= target:
        return lo
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if survival(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi


def geometric_survival(epsilon: float) -> Callable[[int], float]:
    return lambda d: epsilon ** (d + 1)


def init_agent(rng: np.random.Generator, num_arms: int) -> AgentState:
    if num_arms < 1:
        raise ValueError("need at least one arm")
    return AgentState(last_received=int(rng.integers(num_arms)))


def transmit(channel: AgentChannel, state: AgentState, sent: int, rng: np.random.Generator) -> int:
    """Send one action over the channel; returns the action the agent plays this round."""
    if channel.kind == ERASURE:
        if rng.random() >= channel.epsilon:
            state.last_received = int(sent)
            state.erasure_run = 0
        else:
            state.erasure_run += 1
        return state.last_received

    # geometric delay: each new action is one message delivered after D ~ Geom slots,
    # superseded if the learner switches action before it arrives
    if sent != state.last_sent:
        state.pending = int(sent)
        state.pending_wait = int(rng.geometric(1.0 - channel.epsilon)) - 1
        state.erasure_run = 0
    state.last_sent = int(sent)
    if state.pending is not None:
        if state.pending_wait == 0:
            state.last_received = state.pending
            state.pending = None
            state.erasure_run = 0
        else:
            state.pending_wait -= 1
            state.erasure_run += 1
    return state.last_received


class DownlinkBank:
    """All M downlinks of one run, simulated a block of rounds at a time.

    Erasure-kind agents draw their per-round erasure flags for the whole horizon up
    front from their own stream; this is the same law as lazy per-round draws because
    erasures do not depend on the action sent.
    """

    def __init__(self, channels: Sequence[AgentChannel], states: Sequence[AgentState],
                 rngs: Sequence[np.random.Generator], horizon: int):
        self.channels = list(channels)
        self.states = list(states)
        self.rngs = list(rngs)
        self.horizon = horizon
        self.cursor = 0
        M = len(self.channels)
        self.erased = np.zeros((M, horizon), dtype=bool)
        self.fast = np.array([c.kind == ERASURE for c in self.channels])
        self.origin = np.full(M, -1, dtype=np.int64)
        self.pending_origin = np.full(M, -1, dtype=np.int64)
        for m in np.flatnonzero(self.fast):
            eps = self.channels[m].epsilon
            self.erased[m] = self.rngs[m].random(horizon) < eps

    @property
    def held(self) -> np.ndarray:
        return np.array([s.last_received for s in self.states])

    def deliver(self, sent: np.ndarray, label: np.ndarray | int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Push an M x L block of sends through the channels.

        ``label`` tags each block column (e.g. with the batch index of the
        instruction). Returns ``(played, origin)``: the arm each agent actually plays
        in each round and the label of the instruction it is playing (-1 for the
        random initial action).
        """
        M, L = sent.shape
        t0 = self.cursor
        if t0 + L > self.horizon:
            raise ValueError("block runs past the horizon")
        label = np.broadcast_to(np.asarray(label, dtype=np.int64), (L,))
        played = np.empty((M, L), dtype=np.int64)
        origin = np.empty((M, L), dtype=np.int64)
        if self.fast.any():
            rows = np.flatnonzero(self.fast)
            idx = np.where(~self.erased[rows, t0:t0 + L], np.arange(L), -1)
            np.maximum.accumulate(idx, axis=1, out=idx)
            hit = idx >= 0
            safe = np.where(hit, idx, 0)
            prev = np.array([self.states[m].last_received for m in rows])
            played[rows] = np.where(hit, np.take_along_axis(sent[rows], safe, axis=1), prev[:, None])
            origin[rows] = np.where(hit, label[safe], self.origin[rows, None])
            for row, m in enumerate(rows):
                st = self.states[m]
                last = int(idx[row, -1])
                if last >= 0:
                    st.last_received = int(sent[m, last])
                    st.erasure_run = L - 1 - last
                    self.origin[m] = label[last]
                else:
                    st.erasure_run += L
        for m in np.flatnonzero(~self.fast):
            st, ch, rng = self.states[m], self.channels[m], self.rngs[m]
            for t in range(L):
                arm = int(sent[m, t])
                if arm != st.last_sent:
                    self.pending_origin[m] = label[t]
                in_flight = arm != st.last_sent or st.pending is not None
                played[m, t] = transmit(ch, st, arm, rng)
                if in_flight and st.pending is None:
                    self.origin[m] = self.pending_origin[m]
                self.erased[m, t0 + t] = st.pending is not None
                origin[m, t] = self.origin[m]
        self.cursor += L
        return played, origin


def good_event_violations(trace: Sequence[Sequence[int]] | np.ndarray, alphas: Sequence[int]) -> int:
    """Count windows (m, t) in which agent m sees alpha_m consecutive erasures.

    ``trace[m]`` is agent m's 0/1 erasure indicator sequence. Agents with alpha_m = 0
    are scanned with windows of length 1 (every erasure is a misattribution risk).
    """
    total = 0
    for row, alpha in zip(trace, alphas):
        row = np.asarray(row, dtype=np.int64)
        w = max(int(alpha), 1)
        if len(row) < w:
            continue
        c = np.concatenate(([0], np.cumsum(row)))
        total += int(np.count_nonzero(c[w:] - c[:-w] == w))
    return total


def max_erasure_run(row: np.ndarray) -> int:
    row = np.asarray(row, dtype=bool)
    if not row.any():
        return 0
    edges = np.flatnonzero(np.diff(np.concatenate(([0], row.astype(np.int8), [0]))))
    return int((edges[1::2] - edges[::2]).max())
