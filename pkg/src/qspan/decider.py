"""Promise-free function decision with a span program and its complement.

Each round runs a one-sided test for f(x)=1 on U(P, x, alpha_+) and then one
for f(x)=0 on U(P^dagger, x, alpha_-), with alpha doubling per round and the
repetition count shrinking. Repetitions are simulated by drawing the number
of all-zero outcomes from a binomial law with the exact per-check
probability, which is distributionally identical to sampling each check.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import binom

from .phasesim import (
    PhaseCheckSpec,
    QueryLedger,
    SpectralState,
    check_probability,
    phase_check_cost,
    spectral_state,
)
from .seeding import trial_rng
from .spanprog import (
    ExtendedProgram,
    SpanProgram,
    SpanProgramError,
    algorithm_unitary,
    parse_input,
    witness,
)

EPS = 2 / 9
DUALITY_TOL = 1e-6


class DecisionError(ValueError):
    pass


@dataclass(frozen=True)
class DecisionRunConfig:
    delta: float
    eps: float = EPS
    max_round_override: int | None = None

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise DecisionError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class RoundRecord:
    round: int
    test: int  # the value the test can certify
    alpha: float
    repetitions: int
    zeros: int
    p_zero: float
    queries: int


@dataclass
class DecisionResult:
    answer: int
    round_stopped: int
    ledger: QueryLedger
    transcript: list = field(default_factory=list)

    @property
    def queries(self) -> int:
        return self.ledger.oracle_queries


def num_rounds(w_plus: float, w_minus: float) -> int:
    """T = ceil(log2 sqrt(3 W_+ W_-))."""
    return max(0, math.ceil(0.5 * math.log2(3 * w_plus * w_minus)))


def repetitions(i: int, big_t: int, delta: float) -> int:
    return 18 * (math.ceil(big_t + math.log2(3 / delta)) - i + 1)


def acceptance_threshold(reps: int) -> int:
    return math.ceil(reps / 2)


@dataclass(frozen=True)
class TestPlan:
    """Parameters of one one-sided test inside a round."""

    round: int
    test: int
    alpha: float
    spec: PhaseCheckSpec
    repetitions: int

    @property
    def cost(self) -> int:
        return self.repetitions * phase_check_cost(self.spec)


def plan(w_plus: float, w_minus: float, cfg: DecisionRunConfig) -> list[TestPlan]:
    big_t = num_rounds(w_plus, w_minus)
    last = big_t if cfg.max_round_override is None else cfg.max_round_override
    tests = []
    for i in range(last + 1):
        reps = repetitions(i, big_t, cfg.delta)
        if reps <= 0:
            raise DecisionError(f"round {i} would repeat {reps} times")
        for value, w_other in ((1, w_minus), (0, w_plus)):
            alpha = 2.0 ** i / math.sqrt(w_other)
            theta = math.sqrt(cfg.eps / (alpha ** 2 * w_other))
            spec = PhaseCheckSpec.from_precision(theta, cfg.eps)
            tests.append(TestPlan(i, value, alpha, spec, reps))
    return tests


# spectral data of U(P, x, alpha) applied to |0^>, shared by all trials
_SPECTRA: "weakref.WeakKeyDictionary[SpanProgram, dict]" = weakref.WeakKeyDictionary()


def start_state(p: SpanProgram, x, alpha: float) -> SpectralState:
    x = parse_input(x, p.n, p.q)
    cache = _SPECTRA.setdefault(p, {})
    key = (x, float(alpha))
    if key not in cache:
        e = ExtendedProgram(p, alpha)
        cache[key] = spectral_state(algorithm_unitary(e, x), e.zero_hat())
    return cache[key]


def acceptance_probability(p: SpanProgram, x, alpha: float, spec: PhaseCheckSpec) -> float:
    return check_probability(start_state(p, x, alpha), None, spec)


_DUALITY_OK: "weakref.WeakKeyDictionary[SpanProgram, set]" = weakref.WeakKeyDictionary()


def check_pair(p: SpanProgram, pdag: SpanProgram, x) -> None:
    """Raise unless P^dagger swaps the witness kind and size of P at x."""
    x = parse_input(x, p.n, p.q)
    seen = _DUALITY_OK.setdefault(p, set())
    if (id(pdag), x) in seen:
        return
    try:
        a, b = witness(p, x), witness(pdag, x)
    except SpanProgramError as exc:
        raise DecisionError(f"witness solve failed at {x}: {exc}") from exc
    if a.kind == b.kind or abs(a.size - b.size) > DUALITY_TOL * max(1.0, a.size):
        raise DecisionError(f"P and P^dagger are not complementary at input {x}")
    seen.add((id(pdag), x))


def run_decision(p: SpanProgram, pdag: SpanProgram, w_plus: float, w_minus: float, x,
                 cfg: DecisionRunConfig, rng: np.random.Generator) -> DecisionResult:
    check_pair(p, pdag, x)
    ledger = QueryLedger()
    transcript = []
    tests = plan(w_plus, w_minus, cfg)
    for tp in tests:
        prog = p if tp.test == 1 else pdag
        prob = acceptance_probability(prog, x, tp.alpha, tp.spec)
        zeros = int(rng.binomial(tp.repetitions, prob))
        ledger.charge(tp.cost, f"round{tp.round}/test{tp.test}")
        transcript.append(
            RoundRecord(tp.round, tp.test, tp.alpha, tp.repetitions, zeros, prob, tp.cost)
        )
        if zeros >= acceptance_threshold(tp.repetitions):
            return DecisionResult(tp.test, tp.round, ledger, transcript)
    return DecisionResult(1, tests[-1].round if tests else 0, ledger, transcript)


@dataclass(frozen=True)
class ExactDecision:
    """Closed-form outcome law of one decision run."""

    expected_queries: float
    p_answer_one: float
    stop_probabilities: np.ndarray  # per test, in plan order; last entry adds exhaustion

    def error(self, fx: int) -> float:
        return 1 - self.p_answer_one if fx else self.p_answer_one


def exact_decision(p: SpanProgram, pdag: SpanProgram, w_plus: float, w_minus: float, x,
                   cfg: DecisionRunConfig) -> ExactDecision:
    check_pair(p, pdag, x)
    tests = plan(w_plus, w_minus, cfg)
    alive = 1.0
    spent = 0.0
    expected = 0.0
    p_one = 0.0
    stops = np.zeros(len(tests))
    for k, tp in enumerate(tests):
        prog = p if tp.test == 1 else pdag
        prob = acceptance_probability(prog, x, tp.alpha, tp.spec)
        accept = float(binom.sf(acceptance_threshold(tp.repetitions) - 1, tp.repetitions, prob))
        spent += tp.cost
        stop = alive * accept
        stops[k] = stop
        expected += stop * spent
        if tp.test == 1:
            p_one += stop
        alive -= stop
    expected += alive * spent
    p_one += alive
    stops[-1] += alive
    return ExactDecision(expected, p_one, stops)


def average_queries(p: SpanProgram, pdag: SpanProgram, w_plus: float, w_minus: float, x,
                    cfg: DecisionRunConfig, trials: int, seed: int):
    """Monte-Carlo mean and standard deviation of the query count."""
    if trials < 1:
        raise DecisionError("trials must be at least 1")
    results = [
        run_decision(p, pdag, w_plus, w_minus, x, cfg, trial_rng(seed, k)) for k in range(trials)
    ]
    counts = np.array([r.queries for r in results], dtype=float)
    std = float(counts.std(ddof=1)) if trials > 1 else 0.0
    return float(counts.mean()), std, [r.ledger for r in results]
