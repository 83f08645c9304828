"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line."""

import itertools
import math

import numpy as np
import pytest

from circuit_oracle import embed, phase_check_circuit, reflection_circuit
from qspan import cli, harness
from qspan.apps.advice import AdviceDistribution, support_domain, verify_sum_bounds
from qspan.apps.programs import Graph, build_or_program, build_st_connectivity, effective_resistance
from qspan.apps.trees import (
    build_search_tree,
    path_witness_bounds,
    or_tree,
    random_tree,
    colored_weights,
    tree_to_cvs,
)
from qspan.convert import (
    complement_cvs,
    conversion_error,
    conversion_state,
    gram_residual,
    run_state_conversion,
    stage_params,
    start_vector,
    t_vector,
    witness_sizes,
)
from qspan.decider import DecisionRunConfig, acceptance_probability, plan, run_decision
from qspan.numerics import unitary_eigensystem
from qspan.phasesim import (
    PhaseCheckSpec,
    check_probability,
    measurement_distribution,
    reflection_overlaps,
)
from qspan.randomized import random_projector, random_span_program, random_state, random_unitary
from qspan.seeding import trial_rng
from qspan.spanprog import complement, max_witnesses, witness


def report(number: int, title: str, passed: bool, detail: str = "") -> None:
    mark = "PASS" if passed else "FAIL"
    print(f"{mark} criterion {number:>2} {title}: {detail}".rstrip())
    assert passed, f"criterion {number} failed: {detail}"


def binomial_slack(delta: float, trials: int) -> float:
    return delta + 2 * math.sqrt(delta * (1 - delta) / trials)


def test_criterion_01_witness_duality():
    worst, count = 0.0, 0
    for seed in range(50):
        rng = np.random.default_rng([1, seed])
        p = random_span_program(rng, n=int(rng.integers(1, 5)), q=int(rng.choice([2, 3])))
        d = complement(p)
        for x in p.inputs():
            a, b = witness(p, x), witness(d, x)
            worst = max(worst, math.inf if a.kind == b.kind else abs(a.size - b.size))
            count += 1
    report(1, "witness duality", worst <= 1e-6, f"{count} inputs, worst gap {worst:.2e}")


def test_criterion_02_effective_spectral_gap():
    worst = -math.inf
    for seed in range(200):
        rng = np.random.default_rng([2, seed])
        dim = int(rng.integers(2, 7))
        pi, lam = random_projector(rng, dim), random_projector(rng, dim)
        u = (2 * pi - np.eye(dim)) @ (2 * lam - np.eye(dim))
        es = unitary_eigensystem(u)
        w = (np.eye(dim) - lam) @ random_state(rng, dim)
        for theta in (0.01, 0.1, 0.5):
            lhs = np.linalg.norm(es.low_phase_projector(theta) @ pi @ w)
            worst = max(worst, lhs - theta / 2 * np.linalg.norm(w))
    report(2, "effective spectral gap", worst <= 1e-8, f"max excess {worst:.2e}")


def test_criterion_03_phase_checking():
    sandwich_ok = True
    for seed in range(100):
        rng = np.random.default_rng([3, seed])
        dim = int(rng.integers(2, 7))
        u, psi = random_unitary(rng, dim), random_state(rng, dim)
        spec = PhaseCheckSpec.from_precision(float(rng.uniform(0.05, 1.5)),
                                             float(rng.uniform(0.01, 0.5)))
        es = unitary_eigensystem(u)
        p = check_probability(es, psi, spec)
        low = np.linalg.norm(es.low_phase_projector(0.0) @ psi) ** 2
        high = np.linalg.norm(es.low_phase_projector(spec.theta) @ psi) ** 2 + spec.eps
        sandwich_ok &= bool(low - 1e-12 <= p <= high + 1e-12)
    worst = 0.0
    for seed, (t, m) in itertools.product(range(5), [(1, 1), (1, 2), (2, 1), (2, 2)]):
        rng = np.random.default_rng([33, seed])
        dim = int(rng.integers(2, 5))
        u, psi = random_unitary(rng, dim), random_state(rng, dim)
        spec = PhaseCheckSpec(0.5, 0.1, t, m)
        a_dim = 2 ** (t * m)
        out = phase_check_circuit(u, t, m) @ embed(psi, t, m)
        brute_p = sum(abs(out[k * a_dim]) ** 2 for k in range(dim))
        worst = max(worst, abs(check_probability(u, psi, spec) - brute_p))
        refl = reflection_circuit(u, t, m) @ embed(psi, t, m)
        (ov,), _ = reflection_overlaps(u, psi, [psi], spec)
        worst = max(worst, abs(np.vdot(embed(psi, t, m), refl) - ov))
        brute_dist = [np.sum(np.abs(refl[k * a_dim:(k + 1) * a_dim]) ** 2) for k in range(dim)]
        dist = measurement_distribution(u, psi, spec, [[k] for k in range(dim)])
        worst = max(worst, float(np.max(np.abs(dist - brute_dist))))
    report(3, "phase checking", sandwich_ok and worst <= 1e-8,
           f"sandwich {'holds' if sandwich_ok else 'broken'}, circuit gap {worst:.2e}")


def test_criterion_04_one_sided_tests():
    p = build_or_program(8)
    cfg = DecisionRunConfig(0.1)
    tests = [tp for tp in plan(1.0, 8.0, cfg) if tp.test == 1]
    worst_zero, worst_one = 0.0, 1.0
    for x in itertools.product((0, 1), repeat=8):
        if not any(x):
            for tp in tests:
                worst_zero = max(worst_zero, acceptance_probability(p, x, tp.alpha, tp.spec))
            continue
        wp = witness(p, x).size
        for tp in tests:
            if tp.alpha ** 2 >= 3 * wp:
                worst_one = min(worst_one, acceptance_probability(p, x, tp.alpha, tp.spec))
    ok = worst_zero <= 1 / 3 + 1e-6 and worst_one >= 2 / 3 - 1e-6
    report(4, "one-sided test probabilities", ok,
           f"max on f=0 {worst_zero:.4f}, min on f=1 {worst_one:.4f}")


def test_criterion_05_decision_error():
    trials = 500
    lines, ok = [], True
    for n, delta in itertools.product((4, 8), (0.1, 0.3)):
        p = build_or_program(n)
        d = complement(p)
        cfg = DecisionRunConfig(delta)
        for name, x, truth in (("zero", (0,) * n, 0), ("one", (1,) + (0,) * (n - 1), 1)):
            wrong = sum(run_decision(p, d, 1.0, float(n), x, cfg, trial_rng(n * 100 + k, k)).answer
                        != truth for k in range(trials))
            rate = wrong / trials
            ok &= rate <= binomial_slack(delta, trials)
            lines.append(f"n={n} delta={delta} {name}:{rate:.3f}")
    report(5, "decision error", ok, " ".join(lines))


def test_criterion_06_easy_input_advantage():
    p = build_or_program(8)
    d = complement(p)
    cfg = DecisionRunConfig(0.1)

    def mean(x, seed):
        return np.mean([run_decision(p, d, 1.0, 8.0, x, cfg, trial_rng(seed, k)).queries
                        for k in range(500)])

    easy, hard = mean((1, 1, 1, 1, 0, 0, 0, 0), 61), mean((1, 0, 0, 0, 0, 0, 0, 0), 62)
    ratio = easy / hard
    report(6, "easy-input advantage", ratio <= 0.7,
           f"M=4 mean {easy:.0f}, M=1 mean {hard:.0f}, ratio {ratio:.3f}")


def test_criterion_07_st_connectivity():
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng([7, seed])
        nv = int(rng.integers(2, 8))
        pairs = [e for e in itertools.combinations(range(nv), 2) if rng.random() < 0.5] or [(0, 1)]
        g = Graph(nv, pairs, 0, nv - 1)
        for _ in range(3):
            x = tuple(int(b) for b in rng.integers(0, 2, size=len(pairs)))
            r = effective_resistance(g, x)
            if math.isinf(r):
                continue
            worst = max(worst, abs(witness(build_st_connectivity(g), x).size - r))
    g = Graph(4, ((0, 1), (1, 2), (2, 3)), 0, 3)
    prog = build_st_connectivity(g)
    dom = list(prog.inputs())
    labels = [int(all(x)) for x in dom]
    wp, wm = max_witnesses(prog, dom, labels)
    dag = complement(prog)
    delta, per_input = 0.1, 100
    cfg = DecisionRunConfig(delta)
    wrong = 0
    for idx, (x, fx) in enumerate(zip(dom, labels)):
        wrong += sum(run_decision(prog, dag, wp, wm, x, cfg, trial_rng(700 + idx, k)).answer != fx
                     for k in range(per_input))
    total = per_input * len(dom)
    rate = wrong / total
    ok = worst <= 1e-6 and rate <= binomial_slack(delta, total)
    report(7, "st-connectivity", ok, f"resistance gap {worst:.2e}, path/cut error {rate:.4f}")


def _criterion8_sets():
    yield tree_to_cvs(or_tree(4), list(itertools.product((0, 1), repeat=4)))
    for n in (4, 5, 6):
        yield tree_to_cvs(build_search_tree(n, "find-both"), support_domain(n, "find-both"))
    rng = np.random.default_rng(8)
    for _ in range(3):
        t = colored_weights(random_tree(4, 2, 3, rng))
        yield tree_to_cvs(t, list(itertools.product((0, 1), repeat=4)))


def test_criterion_08_conversion_guarantees():
    eps_hat = 0.5 ** 2 / 36
    part1 = part2a = part2b = break_err = -math.inf
    breaks = 0
    for base in _criterion8_sets():
        for c in (base, complement_cvs(base)):
            wm = c.w_minus_max
            for x in c.domain:
                k = c.index(x)
                wp, _ = witness_sizes(c, x)
                for i in range(8):
                    sp = stage_params(i, False, wm, eps_hat)
                    a, spec = sp.alpha, sp.spec
                    if a >= wp:
                        st = conversion_state(c, x, a, eps_hat, t_vector(c, k, +1))
                        part1 = max(part1, (1 - eps_hat) - check_probability(st, None, spec))
                    if wm > 0 and a >= 1 / wm:
                        st = conversion_state(c, x, a, eps_hat, t_vector(c, k, -1))
                        low = float(np.sum(np.abs(st.coeffs[np.abs(st.phases) <= spec.theta]) ** 2))
                        part2a = max(part2a, low - eps_hat ** 2 / 2)
                        amp = math.sqrt(check_probability(st, None, spec))
                        part2b = max(part2b, amp - eps_hat * (1 + 1 / math.sqrt(2)))
                    st = conversion_state(c, x, a, eps_hat, start_vector(c, x))
                    if check_probability(st, None, spec) - 0.5 > -11 / 4 * eps_hat:
                        breaks += 1
                        err = conversion_error(c, x, sp, eps_hat)
                        break_err = max(break_err, err - 6 * math.sqrt(eps_hat))
    ok = part1 < 0 and part2a <= 1e-8 and part2b <= 1e-6 and break_err <= 1e-6
    report(8, "conversion guarantees", ok,
           f"part1 {part1:.2e}, part2 {part2a:.2e}/{part2b:.2e}, "
           f"break error {break_err:.2e} over {breaks} breaks")


def test_criterion_09_state_conversion():
    c = tree_to_cvs(or_tree(4), list(itertools.product((0, 1), repeat=4)))
    cd = complement_cvs(c)
    trials, eps = 200, 0.5
    good = sum(run_state_conversion(c, cd, (1, 0, 0, 0), eps, 0.1, trial_rng(9, k)).error <= eps
               for k in range(trials))
    report(9, "state conversion", good / trials >= 0.9, f"{good}/{trials} within epsilon")


def test_criterion_10_tree_compiler():
    worst_res, ok = 0.0, True
    t = build_search_tree(5, "find-both")
    cases = [(t, support_domain(5, "find-both"))]
    for seed in range(20):
        rng = np.random.default_rng([10, seed])
        q = int(rng.integers(2, 4))
        cases.append((random_tree(3, q, 3, rng), list(itertools.product(range(q), repeat=3))))
    for tree, dom in cases:
        c = tree_to_cvs(tree, dom, check=False)
        worst_res = max(worst_res, gram_residual(c))
        for x in dom:
            wp, wm = witness_sizes(c, x)
            bp, bm = path_witness_bounds(tree, x)
            ok &= wp <= bp + 1e-9 and wm <= bm + 1e-9
    report(10, "tree compiler bounds", ok and worst_res <= 1e-9,
           f"{len(cases)} trees, residual {worst_res:.2e}, bounds {'hold' if ok else 'broken'}")


def test_criterion_11_advice_separation():
    k = -1.75
    classical_ns = [2 ** e for e in range(6, 17)]
    rep = verify_sum_bounds(k, classical_ns)
    quantum_ns = [2 ** e for e in range(6, 11)]
    cfg = harness.SeparationConfig(ns=tuple(quantum_ns), k=k, trials=10, seed=11)
    records = harness.advice_separation_experiment(cfg, quantum_ns)
    q_slope = harness.loglog_slope(quantum_ns, [r.quantum_mean for r in records])
    statuses = ",".join(f"{r.n}:{r.status}" if r.status != "ok" else f"{r.n}:{r.quantum_mean:.3g}"
                        for r in records)
    ok = rep.passed and abs(rep.slope - (k + 2)) <= 0.15 and q_slope <= 0.05
    report(11, "advice separation", ok,
           f"classical slope {rep.slope:.3f}, sum bounds {'pass' if rep.passed else 'fail'}, "
           f"quantum slope {q_slope:.3f} [{statuses}]")


def test_criterion_12_determinism(tmp_path, capsys):
    runs = [
        ["decide", "--or", "4", "--trials", "25", "--seed", "12"],
        ["experiment", "verify-search", "--n", "6", "--ones", "0,3", "--trials", "5", "--seed", "12"],
        ["experiment", "advice-separation", "--n", "8", "--n", "16", "--trials", "4", "--seed", "12"],
    ]
    same = True
    for argv in runs:
        blobs = []
        for rep in range(2):
            path = tmp_path / f"out{rep}.csv"
            assert cli.main(argv + ["--out", str(path)]) == 0
            blobs.append(path.read_bytes())
        same &= blobs[0] == blobs[1]
    capsys.readouterr()
    with capsys.disabled():
        report(12, "determinism", same, f"{len(runs)} commands byte-identical" if same else "")
