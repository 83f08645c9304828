"""Seeded trial runner, CSV output and the experiment pipelines behind the CLI."""

from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import convert, decider, spanprog
from .apps import advice, trees
from .seeding import trial_rng

CSV_VERSION = 1
TRIAL_COLUMNS = ("trial", "seed", "input", "answer", "correct", "queries", "rounds", "wall_ms")
SEPARATION_COLUMNS = (
    "n", "support", "classical_mean", "quantum_mean", "quantum_std", "quantum_trials",
    "quantum_error_rate", "bound_reference", "status",
)
WORKERS_ENV = "QSPAN_WORKERS"


class HarnessError(ValueError):
    pass


class InfeasibleGrid(HarnessError):
    pass


@dataclass(frozen=True)
class TrialRow:
    trial: int
    seed: int
    input: str
    answer: str
    correct: bool
    queries: int
    rounds: int
    wall_ms: float = 0.0

    def as_list(self) -> list:
        return [self.trial, self.seed, self.input, self.answer, int(self.correct),
                self.queries, self.rounds, f"{self.wall_ms:.3f}"]


@dataclass(frozen=True)
class Summary:
    trials: int
    mean_queries: float
    std_queries: float
    error_rate: float
    total_queries: int

    def lines(self) -> list[str]:
        return [
            f"trials={self.trials}",
            f"mean_queries={self.mean_queries:.6g}",
            f"std_queries={self.std_queries:.6g}",
            f"error_rate={self.error_rate:.6g}",
            f"total_queries={self.total_queries}",
        ]


def worker_count(default: int = 1) -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise HarnessError(f"{WORKERS_ENV} must be an integer") from None
    if value < 1:
        raise HarnessError(f"{WORKERS_ENV} must be at least 1")
    return value


def run_trials(body: Callable[[int, np.random.Generator], TrialRow], trials: int, seed: int,
               workers: int | None = None) -> list[TrialRow]:
    """Run ``body(trial, rng)`` per trial; rows come back in trial order."""
    if trials < 1:
        raise HarnessError("trials must be at least 1")
    workers = worker_count() if workers is None else workers

    def one(k):
        return body(k, trial_rng(seed, k))

    if workers == 1:
        return [one(k) for k in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, range(trials)))


def summarize(rows: Sequence[TrialRow]) -> Summary:
    q = np.array([r.queries for r in rows], dtype=float)
    wrong = sum(not r.correct for r in rows)
    return Summary(
        trials=len(rows),
        mean_queries=float(q.mean()),
        std_queries=float(q.std(ddof=1)) if len(rows) > 1 else 0.0,
        error_rate=wrong / len(rows),
        total_queries=int(q.sum()),
    )


def _header(kind: str, meta: dict) -> str:
    extras = " ".join(f"{k}={meta[k]}" for k in sorted(meta))
    return f"# qspan-csv v{CSV_VERSION} kind={kind} {extras}".rstrip()


def format_csv(kind: str, columns: Sequence[str], rows: Sequence[Sequence], meta: dict) -> str:
    buf = io.StringIO()
    buf.write(_header(kind, meta) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def trials_csv(kind: str, rows: Sequence[TrialRow], meta: dict) -> str:
    return format_csv(kind, TRIAL_COLUMNS, [r.as_list() for r in rows], meta)


def _bits(x) -> str:
    return "".join(str(int(c)) for c in x)


class _Clock:
    def __init__(self, enabled: bool):
        self.enabled = enabled
        self.start = time.perf_counter() if enabled else 0.0

    def ms(self) -> float:
        return (time.perf_counter() - self.start) * 1e3 if self.enabled else 0.0


# -- decision ------------------------------------------------------------------------------


@dataclass
class DecideSetup:
    program: spanprog.SpanProgram
    dagger: spanprog.SpanProgram
    domain: list
    labels: list
    w_plus: float
    w_minus: float


def prepare_decision(p: spanprog.SpanProgram, domain: Sequence | None = None) -> DecideSetup:
    dom = list(domain) if domain is not None else list(p.inputs())
    if len(dom) > convert.MAX_DOMAIN:
        raise HarnessError(f"domain of {len(dom)} inputs exceeds {convert.MAX_DOMAIN}")
    labels = [spanprog.evaluate(p, x) for x in dom]
    wp, wm = spanprog.max_witnesses(p, dom, labels)
    return DecideSetup(p, spanprog.complement(p), dom, labels, wp, wm)


def decide_trials(setup: DecideSetup, cfg: decider.DecisionRunConfig, trials: int, seed: int,
                  inputs: Sequence | None = None, timing: bool = False) -> list[TrialRow]:
    """Span-program decision per trial; the input cycles through ``inputs`` or is drawn uniformly."""
    fixed = [spanprog.parse_input(x, setup.program.n, setup.program.q) for x in inputs] \
        if inputs else None
    truth = dict(zip(setup.domain, setup.labels))
    # inputs outside the enumerated domain are labelled by the program itself
    for x in fixed or []:
        truth.setdefault(x, spanprog.evaluate(setup.program, x))

    def body(k, rng):
        clock = _Clock(timing)
        x = fixed[k % len(fixed)] if fixed else setup.domain[int(rng.integers(len(setup.domain)))]
        res = decider.run_decision(setup.program, setup.dagger, setup.w_plus, setup.w_minus,
                                   x, cfg, rng)
        return TrialRow(k, seed, _bits(x), str(res.answer), res.answer == truth[x],
                        res.queries, res.round_stopped, clock.ms())

    return run_trials(body, trials, seed)


# -- conversion ----------------------------------------------------------------------------


def convert_trials(c: convert.VectorSetBase, inputs: Sequence, epsilon: float, delta: float,
                   trials: int, seed: int, timing: bool = False) -> list[TrialRow]:
    cdag = convert.complement_cvs(c)
    xs = [c.domain[c.index(x)] for x in inputs]

    def body(k, rng):
        clock = _Clock(timing)
        x = xs[k % len(xs)]
        res = convert.run_state_conversion(c, cdag, x, epsilon, delta, rng)
        return TrialRow(k, seed, _bits(x), f"{res.error:.6g}", res.error <= epsilon,
                        res.queries, res.final.round, clock.ms())

    return run_trials(body, trials, seed)


def verify_trials(c: convert.VectorSetBase, inputs: Sequence, delta: float, trials: int,
                  seed: int, timing: bool = False,
                  rng_input: Callable[[np.random.Generator], tuple] | None = None) -> list[TrialRow]:
    """Verified evaluation with an exact label check charged at two queries per guess."""
    cdag = convert.complement_cvs(c)
    xs = [c.domain[c.index(x)] for x in inputs] if inputs else None

    def body(k, rng):
        clock = _Clock(timing)
        x = tuple(int(b) for b in rng_input(rng)) if rng_input else xs[k % len(xs)]
        truth = int(np.argmax(np.abs(c.sigma[c.index(x)]))) - 1
        verifier = convert.Verifier(lambda lab, t=truth: lab == t)
        res = convert.run_verified_evaluation(c, cdag, x, verifier, delta, rng)
        answer = "none" if res.answer is None else str(res.answer)
        return TrialRow(k, seed, _bits(x), answer, res.answer == truth, res.queries,
                        res.round_stopped, clock.ms())

    return run_trials(body, trials, seed)


# -- advice separation ---------------------------------------------------------------------


@dataclass(frozen=True)
class SeparationConfig:
    ns: tuple
    k: float = -1.75
    mode: str = "find-both"
    p_plus: float = 1.0
    trials: int = 100
    seed: int = 0
    epsilon: float = 0.5
    delta: float = 0.25
    strict: bool = False
    timing: bool = False


@dataclass
class SeparationRecord:
    n: int
    support: int
    classical_mean: float
    quantum_mean: float
    quantum_std: float
    quantum_trials: int
    quantum_error_rate: float
    bound_reference: float
    status: str
    rows: list = field(default_factory=list)

    def as_list(self) -> list:
        def fmt(v):
            return "nan" if isinstance(v, float) and math.isnan(v) else f"{v:.6g}"
        return [self.n, self.support, fmt(self.classical_mean), fmt(self.quantum_mean),
                fmt(self.quantum_std), self.quantum_trials, fmt(self.quantum_error_rate),
                fmt(self.bound_reference), self.status]


def separation_point(cfg: SeparationConfig, n: int, quantum: bool = True) -> SeparationRecord:
    dist = advice.AdviceDistribution(n, cfg.k, cfg.p_plus, cfg.mode)
    support = len(advice.support_domain(n, cfg.mode))
    classical = advice.exact_classical_average(dist)
    bound = advice.quantum_reference_bound(dist)
    nan = float("nan")
    if not quantum:
        return SeparationRecord(n, support, classical, nan, nan, 0, nan, bound, "classical-only")
    if support > convert.MAX_DOMAIN:
        if cfg.strict:
            raise InfeasibleGrid(
                f"n={n}: support of {support} inputs exceeds the domain cap {convert.MAX_DOMAIN}")
        return SeparationRecord(n, support, classical, nan, nan, 0, nan, bound, "infeasible")
    tree = trees.build_search_tree(n, cfg.mode)
    domain = advice.support_domain(n, cfg.mode)
    c = trees.tree_to_cvs(tree, domain, check=False)
    sampler = lambda rng: advice.sample_advice(dist, rng)  # noqa: E731
    if cfg.mode == "find-both":
        rows = verify_trials(c, [], cfg.delta, cfg.trials, cfg.seed, cfg.timing, sampler)
    else:
        rows = _find_first_rows(c, dist, cfg)
    s = summarize(rows)
    return SeparationRecord(n, support, classical, s.mean_queries, s.std_queries, s.trials,
                            s.error_rate, bound, "ok", rows)


def _find_first_rows(c, dist, cfg: SeparationConfig) -> list[TrialRow]:
    cdag = convert.complement_cvs(c)

    def body(k, rng):
        clock = _Clock(cfg.timing)
        x = tuple(int(b) for b in advice.sample_advice(dist, rng))
        res = convert.run_state_conversion(c, cdag, x, cfg.epsilon, min(cfg.delta, 1 / 3), rng)
        return TrialRow(k, cfg.seed, _bits(x), f"{res.error:.6g}", res.error <= cfg.epsilon,
                        res.queries, res.final.round, clock.ms())

    return run_trials(body, cfg.trials, cfg.seed)


def advice_separation_experiment(cfg: SeparationConfig,
                                 quantum_ns: Sequence[int] | None = None) -> list[SeparationRecord]:
    """One record per n; quantum runs only for ``quantum_ns`` (default: every n)."""
    if cfg.mode not in advice.MODES:
        raise HarnessError(f"mode must be one of {advice.MODES}")
    chosen = set(cfg.ns if quantum_ns is None else quantum_ns)
    return [separation_point(cfg, int(n), int(n) in chosen) for n in cfg.ns]


def separation_csv(records: Sequence[SeparationRecord], cfg: SeparationConfig) -> str:
    meta = {"k": cfg.k, "mode": cfg.mode, "seed": cfg.seed, "trials": cfg.trials,
            "epsilon": cfg.epsilon, "delta": cfg.delta}
    return format_csv("advice-separation", SEPARATION_COLUMNS, [r.as_list() for r in records], meta)


def loglog_slope(ns: Sequence[float], values: Sequence[float]) -> float:
    ns, values = np.asarray(ns, float), np.asarray(values, float)
    keep = np.isfinite(values) & (values > 0)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(ns[keep]), np.log(values[keep]), 1)[0])
