import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom

from qspan.apps.programs import build_or_program
from qspan.decider import (
    DecisionError,
    DecisionRunConfig,
    acceptance_probability,
    acceptance_threshold,
    average_queries,
    exact_decision,
    num_rounds,
    plan,
    repetitions,
    run_decision,
)
from qspan.phasesim import PhaseCheckSpec
from qspan.seeding import trial_rng
from qspan.spanprog import complement, witness

OR4, OR8 = build_or_program(4), build_or_program(8)
OR4D, OR8D = complement(OR4), complement(OR8)

# expected query counts on OR(8), delta = 0.1, from the oracle below
FROZEN_M4 = 74592.78846397149
FROZEN_M1 = 173812.1346768702


def _oracle_expected(p, pd, wp, wm, x, delta):
    """Independent closed-form E[Q] from dense matrix powers, with the plan written out longhand."""
    eps = 2 / 9
    big_t = math.ceil(math.log2(math.sqrt(3 * wp * wm)))
    alive, spent, total = 1.0, 0, 0.0
    for i in range(big_t + 1):
        n_i = 18 * (math.ceil(big_t + math.log2(3 / delta)) - i + 1)
        for prog, w_other in ((p, wm), (pd, wp)):
            alpha = 2 ** i / math.sqrt(w_other)
            theta = math.sqrt(eps / (alpha ** 2 * w_other))
            t = max(1, math.ceil(math.log2(2 * math.pi / theta)))
            m = math.ceil(math.log2(1 / eps)) + 1
            a_alpha = np.hstack([prog.a, (prog.tau / alpha)[:, None]])
            _, s, vh = np.linalg.svd(a_alpha)
            rank = int(np.sum(s > 1e-10 * s[0]))
            lam = vh[rank:].conj().T @ vh[rank:]
            avail = prog.input_space(x).columns
            dim = a_alpha.shape[1]
            cols = np.zeros((dim, avail.shape[1] + 1), dtype=complex)
            cols[:-1, :-1] = avail
            cols[-1, -1] = 1
            pi = cols @ cols.conj().T
            u = (2 * pi - np.eye(dim)) @ (2 * lam - np.eye(dim))
            # one-copy zero-outcome operator K = mean of U^j; m copies give ||K^m e||^2
            k_op = sum(np.linalg.matrix_power(u, j) for j in range(2 ** t)) / 2 ** t
            prob = float(np.linalg.norm(np.linalg.matrix_power(k_op, m)[:, -1]) ** 2)
            accept = sum(math.comb(n_i, k) * prob ** k * (1 - prob) ** (n_i - k)
                         for k in range(math.ceil(n_i / 2), n_i + 1))
            spent += n_i * 2 * m * (2 ** t - 1)
            total += alive * accept * spent
            alive *= 1 - accept
    return total + alive * spent


def test_frozen_values_match_oracle():
    assert _oracle_expected(OR8, OR8D, 1.0, 8.0, "11110000", 0.1) == pytest.approx(FROZEN_M4, rel=1e-6)
    assert _oracle_expected(OR8, OR8D, 1.0, 8.0, "10000000", 0.1) == pytest.approx(FROZEN_M1, rel=1e-6)


@pytest.mark.parametrize("x, frozen", [("11110000", FROZEN_M4), ("10000000", FROZEN_M1)])
def test_exact_expected_queries(x, frozen):
    ex = exact_decision(OR8, OR8D, 1.0, 8.0, x, DecisionRunConfig(0.1))
    assert ex.expected_queries == pytest.approx(frozen, rel=1e-9)
    assert ex.p_answer_one == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("x", ["0000", "0100", "1111", "1010"])
def test_exact_mode_agrees_with_oracle(x):
    ex = exact_decision(OR4, OR4D, 1.0, 4.0, x, DecisionRunConfig(0.3))
    assert ex.expected_queries == pytest.approx(_oracle_expected(OR4, OR4D, 1.0, 4.0, x, 0.3),
                                                rel=1e-6)
    assert ex.stop_probabilities.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("wp, wm, rounds", [(1, 1, 1), (1, 4, 2), (1, 8, 3), (2, 1, 2), (0.25, 1, 0)])
def test_round_count(wp, wm, rounds):
    assert num_rounds(wp, wm) == rounds


def test_repetition_counts_are_multiples_of_18():
    cfg = DecisionRunConfig(0.1)
    big_t = num_rounds(1, 8)
    for i in range(big_t + 1):
        n_i = repetitions(i, big_t, cfg.delta)
        assert n_i % 18 == 0
        assert acceptance_threshold(n_i) * 2 == n_i
    assert acceptance_threshold(7) == 4


def test_plan_shapes():
    tests = plan(1.0, 4.0, DecisionRunConfig(0.1))
    assert [(t.round, t.test) for t in tests] == [(0, 1), (0, 0), (1, 1), (1, 0), (2, 1), (2, 0)]
    assert tests[2].alpha == pytest.approx(2 * tests[0].alpha)
    assert all(t.repetitions > 0 for t in tests)


def test_plan_override():
    assert len(plan(1.0, 1.0, DecisionRunConfig(0.1, max_round_override=3))) == 8


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.2])
def test_config_rejects_delta(delta):
    with pytest.raises(DecisionError):
        DecisionRunConfig(delta)


def test_mismatched_complement_rejected():
    with pytest.raises(DecisionError):
        run_decision(OR4, OR4, 1.0, 4.0, "0100", DecisionRunConfig(0.1), np.random.default_rng(0))


@pytest.mark.parametrize("x, truth", [("1111", 1), ("0000", 0)])
def test_or4_monte_carlo(x, truth):
    cfg = DecisionRunConfig(0.1)
    hits = sum(run_decision(OR4, OR4D, 1.0, 4.0, x, cfg, trial_rng(9, k)).answer == truth
               for k in range(500))
    assert hits >= 450


@pytest.mark.parametrize("x", ["0000", "0001", "0110", "1111"])
def test_ledger_equals_transcript(x):
    res = run_decision(OR4, OR4D, 1.0, 4.0, x, DecisionRunConfig(0.1), np.random.default_rng(3))
    assert res.queries == sum(r.queries for r in res.transcript)
    assert res.queries == sum(res.ledger.breakdown.values())


def test_single_trial_average():
    mean, std, ledgers = average_queries(OR4, OR4D, 1.0, 4.0, "0010", DecisionRunConfig(0.1), 1, 5)
    assert mean == ledgers[0].oracle_queries
    assert std == 0.0


def test_same_seed_same_run():
    cfg = DecisionRunConfig(0.3)
    a = run_decision(OR8, OR8D, 1.0, 8.0, "00000001", cfg, trial_rng(1, 2))
    b = run_decision(OR8, OR8D, 1.0, 8.0, "00000001", cfg, trial_rng(1, 2))
    assert a.transcript == b.transcript


@settings(max_examples=20, deadline=None)
@given(bits=st.lists(st.integers(0, 1), min_size=8, max_size=8))
def test_soundness_on_or8(bits):
    """Zero inputs never pass a 1-test with probability above 1/3."""
    x = tuple(bits)
    if any(x):
        wp = witness(OR8, x).size
        for tp in plan(1.0, 8.0, DecisionRunConfig(0.1)):
            if tp.test == 1 and tp.alpha ** 2 >= 3 * wp:
                assert acceptance_probability(OR8, x, tp.alpha, tp.spec) >= 2 / 3 - 1e-6
        return
    for tp in plan(1.0, 8.0, DecisionRunConfig(0.1)):
        if tp.test == 1:
            assert acceptance_probability(OR8, x, tp.alpha, tp.spec) <= 1 / 3 + 1e-6


def test_binomial_stop_law_matches_sampling():
    # the per-test stop probability used in exact mode is the binomial tail
    tp = plan(1.0, 4.0, DecisionRunConfig(0.1))[0]
    p = acceptance_probability(OR4, "1100", tp.alpha, tp.spec)
    tail = binom.sf(acceptance_threshold(tp.repetitions) - 1, tp.repetitions, p)
    ex = exact_decision(OR4, OR4D, 1.0, 4.0, "1100", DecisionRunConfig(0.1))
    assert ex.stop_probabilities[0] == pytest.approx(tail)


def test_spec_for_first_test():
    tp = plan(1.0, 4.0, DecisionRunConfig(0.1))[0]
    assert tp.spec == PhaseCheckSpec.from_precision(math.sqrt((2 / 9) / (tp.alpha ** 2 * 4)), 2 / 9)
