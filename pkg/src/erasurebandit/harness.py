"""Experiment configs, seeded simulation runs, parallel execution and CSV output."""
from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .channels import (ERASURE, GEOMETRIC_DELAY, AgentChannel, DownlinkBank, good_event_violations,
                       init_agent)
from .core import BanditInstance, RegretLedger, make_rng
from .policies import (POLICY_NAMES, BatchElimination, MultiAgentUCB, make_policy,
                       ucb_erasure_kernel)

THREADS_ENV = "ERASUREBANDIT_THREADS"

_TOP_KEYS = {"instance", "agents", "channel", "horizon", "runs", "seed", "policies", "stride",
             "output", "c", "c_prime", "ucb_mode", "realized"}
_INSTANCE_KEYS = {"num_arms", "means", "noise", "sigma"}


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid config: " + "; ".join(problems))


@dataclass
class ExperimentConfig:
    instance: BanditInstance
    epsilons: list[float]
    horizon: int
    runs: int = 1
    seed: int = 0
    policies: list[str] = field(default_factory=lambda: list(POLICY_NAMES))
    stride: int = 100
    output: str | None = None
    c: float = 1.0
    c_prime: float = 1.0
    channel: str = ERASURE
    ucb_mode: str = "sequential"
    realized: bool = False

    def __post_init__(self):
        # agents are kept sorted by repetition budget; ties keep their listed order
        order = sorted(range(len(self.epsilons)), key=lambda m: self.alpha_of(self.epsilons[m]))
        self.epsilons = [float(self.epsilons[m]) for m in order]

    def alpha_of(self, eps: float) -> int:
        return AgentChannel(eps, kind=self.channel).bind(self.horizon).alpha

    @property
    def num_agents(self) -> int:
        return len(self.epsilons)

    @property
    def channels(self) -> list[AgentChannel]:
        return [AgentChannel(e, kind=self.channel).bind(self.horizon) for e in self.epsilons]

    @property
    def alphas(self) -> list[int]:
        return [ch.alpha for ch in self.channels]


def _expand_agents(entries, problems: list[str]) -> list[float]:
    out: list[float] = []
    if not isinstance(entries, list) or not entries:
        problems.append("agents: expected a non-empty list")
        return out
    for j, item in enumerate(entries):
        if isinstance(item, dict):
            extra = set(item) - {"value", "count"}
            if extra:
                problems.append(f"agents[{j}]: unknown keys {sorted(extra)}")
            value, count = item.get("value"), item.get("count", 1)
            if not isinstance(count, int) or isinstance(count, bool) or count < 1:
                problems.append(f"agents[{j}].count: expected a positive integer")
                count = 0
        else:
            value, count = item, 1
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not 0.0 <= value < 1.0:
            problems.append(f"agents[{j}]: erasure probability {value!r} not in [0, 1)")
            continue
        out.extend([float(value)] * count)
    return out


def parse_config(text: str | dict) -> ExperimentConfig:
    """Validate a JSON experiment description; every problem found is reported at once."""
    doc = json.loads(text) if isinstance(text, str) else dict(text)
    if not isinstance(doc, dict):
        raise ConfigError(["top level: expected a JSON object"])
    problems: list[str] = []
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        problems.append(f"unknown keys {sorted(unknown)}")
    for key in ("instance", "agents", "horizon"):
        if key not in doc:
            problems.append(f"{key}: required")

    inst = doc.get("instance", {})
    instance = None
    if not isinstance(inst, dict):
        problems.append("instance: expected an object")
        inst = {}
    bad = set(inst) - _INSTANCE_KEYS
    if bad:
        problems.append(f"instance: unknown keys {sorted(bad)}")
    means = inst.get("means")
    if "instance" in doc:
        if not isinstance(means, list) or len(means) < 2:
            problems.append("instance.means: expected a list of at least 2 numbers")
        elif "num_arms" in inst and inst["num_arms"] != len(means):
            problems.append(f"instance.num_arms={inst['num_arms']} but {len(means)} means given")
        else:
            try:
                instance = BanditInstance(tuple(means), inst.get("noise", "gaussian"),
                                          float(inst.get("sigma", 1.0)))
            except (TypeError, ValueError) as exc:
                problems.append(f"instance: {exc}")

    eps = _expand_agents(doc.get("agents"), problems) if "agents" in doc else []

    def integer(key, default, low):
        v = doc.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int) or v < low:
            problems.append(f"{key}: expected an integer >= {low}, got {v!r}")
            return default
        return v

    horizon = integer("horizon", 2, 2)
    runs = integer("runs", 1, 1)
    seed = integer("seed", 0, 0)
    stride = integer("stride", 100, 1)
    consts = {}
    for key in ("c", "c_prime"):
        v = doc.get(key, 1.0)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
            problems.append(f"{key}: expected a positive number, got {v!r}")
            v = 1.0
        consts[key] = float(v)
    policies = doc.get("policies", list(POLICY_NAMES))
    if not isinstance(policies, list) or not policies:
        problems.append("policies: expected a non-empty list")
        policies = []
    for p in policies:
        if p not in POLICY_NAMES:
            problems.append(f"policies: unknown policy {p!r}")
    channel = doc.get("channel", ERASURE)
    if channel not in (ERASURE, GEOMETRIC_DELAY):
        problems.append(f"channel: unknown kind {channel!r}")
    ucb_mode = doc.get("ucb_mode", "sequential")
    if ucb_mode not in ("sequential", "shared"):
        problems.append(f"ucb_mode: unknown mode {ucb_mode!r}")
    realized = doc.get("realized", False)
    if not isinstance(realized, bool):
        problems.append("realized: expected true or false")
    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        problems.append("output: expected a path string")
    if problems:
        raise ConfigError(problems)
    return ExperimentConfig(instance, eps, horizon, runs, seed, list(policies), stride, output,
                            consts["c"], consts["c_prime"], channel, ucb_mode, realized)


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"))


@dataclass
class RunOutput:
    ledger: RegretLedger
    violations: int
    final_active: list[int] | None
    batches: int | None
    permutation: np.ndarray
    learner: Any = None


def simulate(instance: BanditInstance, channels: Sequence[AgentChannel], horizon: int,
             policy: str, seed: int, run: int, ucb_mode: str = "sequential",
             realized: bool = False, fast: bool = True) -> RunOutput:
    """One full run of ``policy``.

    All randomness that is not the learner's own (arm shuffle, channels, noise,
    initial actions) comes from streams keyed by ``(seed, run)`` only, so every
    policy faces the same environment in a given run.
    """
    M, T = len(channels), int(horizon)
    alphas = [int(ch.alpha) for ch in channels]
    if any(x > y for x, y in zip(alphas, alphas[1:])):
        raise ValueError("agents must be sorted by alpha")
    perm = make_rng(seed, run, 0).permutation(instance.num_arms)
    inst = instance.permuted(perm)
    K = inst.num_arms
    gaps = inst.gaps
    states = [init_agent(make_rng(seed, run, 3, m), K) for m in range(M)]
    bank = DownlinkBank(channels, states, [make_rng(seed, run, 1, m) for m in range(M)], T)
    noise = np.stack([inst.draw_noise(make_rng(seed, run, 2, m), T) for m in range(M)])
    learner = make_policy(policy, K, alphas, T, make_rng(seed, run, 4, POLICY_NAMES.index(policy)),
                          ucb_mode)
    ledger = RegretLedger(T)

    def account(played, origin, rewards):
        ledger.record(gaps[played].sum(axis=0),
                      M * inst.best_mean - rewards.sum(axis=0) if realized else None)
        ledger.count_plays(origin, played, K)

    if fast and isinstance(learner, MultiAgentUCB) and bank.fast.all():
        played, origin = ucb_erasure_kernel(inst.mean_array, float(inst.sigma),
                                            inst.noise == "bernoulli", noise, bank.erased,
                                            bank.held.astype(np.int64), K, learner.mode_id)
        account(played, origin, inst.rewards(played, noise))
    else:
        t = 0
        while t < T:
            sent, label = learner.next_block(T - t)
            L = sent.shape[1]
            played, origin = bank.deliver(sent, label)
            rewards = inst.rewards(played, noise[:, t:t + L])
            learner.observe_block(rewards)
            account(played, origin, rewards)
            t += L
    violations = good_event_violations(bank.erased, alphas)
    ledger.violation_count = violations
    if isinstance(learner, BatchElimination):
        final, batches = list(learner.active), learner.batch - 1
    else:
        final, batches = None, None
    return RunOutput(ledger, violations, final, batches, perm, learner)


def sample_times(horizon: int, stride: int) -> np.ndarray:
    """1-based round counts at which cumulative regret is reported (always ends at T)."""
    t = np.arange(stride, horizon + 1, stride)
    if t.size == 0 or t[-1] != horizon:
        t = np.append(t, horizon)
    return t


@dataclass
class ExperimentResult:
    policies: list[str]
    runs: int
    times: np.ndarray
    raw: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)
    realized: dict[tuple[str, int], np.ndarray] = field(default_factory=dict)
    mean: dict[str, np.ndarray] = field(default_factory=dict)
    stderr: dict[str, np.ndarray] = field(default_factory=dict)
    diagnostics: dict[tuple[str, int], dict[str, Any]] = field(default_factory=dict)

    def final_mean(self, policy: str) -> float:
        return float(self.mean[policy][-1])

    def aggregate(self) -> None:
        for p in self.policies:
            rows = np.stack([self.raw[(p, r)] for r in range(self.runs)])
            self.mean[p] = rows.mean(axis=0)
            if self.runs > 1:
                self.stderr[p] = rows.std(axis=0, ddof=1) / math.sqrt(self.runs)
            else:
                self.stderr[p] = np.zeros(rows.shape[1])


def _task(args) -> tuple[str, int, np.ndarray, np.ndarray | None, dict[str, Any]]:
    cfg, policy, run = args
    out = simulate(cfg.instance, cfg.channels, cfg.horizon, policy, cfg.seed, run,
                   cfg.ucb_mode, cfg.realized)
    idx = sample_times(cfg.horizon, cfg.stride) - 1
    series = out.ledger.cum_regret[idx]
    real = out.ledger.cum_realized[idx] if cfg.realized else None
    diag = {"violations": out.violations, "final_active": out.final_active,
            "batches": out.batches}
    return policy, run, series, real, diag


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_experiment(cfg: ExperimentConfig, threads: int | None = None) -> ExperimentResult:
    """Every (policy, run) pair as an independent task; assembly is ordered by key."""
    threads = default_threads() if threads is None else max(1, int(threads))
    tasks = [(cfg, p, r) for p in cfg.policies for r in range(cfg.runs)]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(_task, tasks))
    else:
        outs = [_task(t) for t in tasks]
    res = ExperimentResult(list(cfg.policies), cfg.runs, sample_times(cfg.horizon, cfg.stride))
    for policy, run, series, real, diag in sorted(outs, key=lambda o: (cfg.policies.index(o[0]), o[1])):
        res.raw[(policy, run)] = series
        if real is not None:
            res.realized[(policy, run)] = real
        res.diagnostics[(policy, run)] = diag
    res.aggregate()
    return res


def aggregate_path(path: str | os.PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.stem + "_aggregate" + (path.suffix or ".csv"))


def write_csv(result: ExperimentResult, path: str | os.PathLike) -> tuple[Path, Path]:
    """Raw per-run series to ``path`` and per-policy mean/stderr to ``<stem>_aggregate.csv``."""
    path = Path(path)
    agg = aggregate_path(path)
    with_real = bool(result.realized)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["policy", "run", "t", "cum_regret"] + (["cum_realized"] if with_real else []))
            for (policy, run), series in result.raw.items():
                real = result.realized.get((policy, run))
                for j, t in enumerate(result.times[:len(series)]):
                    row = [policy, run, int(t), repr(float(series[j]))]
                    if with_real:
                        row.append(repr(float(real[j])))
                    w.writerow(row)
        with open(agg, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["policy", "t", "mean_regret", "stderr"])
            for policy in result.mean:
                for j, t in enumerate(result.times):
                    w.writerow([policy, int(t), repr(float(result.mean[policy][j])),
                                repr(float(result.stderr[policy][j]))])
    except OSError as exc:
        raise OSError(f"could not write results to {path}: {exc}") from exc
    return path, agg


def read_aggregate(path: str | os.PathLike) -> dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Inverse of the aggregate writer: policy -> (t, mean, stderr)."""
    rows: dict[str, list[tuple[int, float, float]]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.setdefault(rec["policy"], []).append(
                (int(rec["t"]), float(rec["mean_regret"]), float(rec["stderr"])))
    return {p: tuple(np.array(col) for col in zip(*r)) for p, r in rows.items()}


def write_diagnostics(result: ExperimentResult, path: str | os.PathLike) -> Path:
    path = Path(path)
    doc = [{"policy": p, "run": r, **d} for (p, r), d in result.diagnostics.items()]
    path.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return path
