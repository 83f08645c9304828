"""Quick randomized property checks, one group per module, for ``check-invariants``."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import convert, decider, numerics, phasesim, spanprog
from .apps import advice, programs, trees
from .randomized import (
    random_cvs,
    random_projector,
    random_span_program,
    random_state,
    random_unitary,
)


@dataclass(frozen=True)
class CheckResult:
    module: str
    name: str
    passed: bool
    detail: str = ""


def _numerics(rng):
    worst_proj = worst_eig = 0.0
    for _ in range(20):
        dim = int(rng.integers(2, 7))
        vecs = rng.normal(size=(dim, int(rng.integers(1, dim + 1)))) + 0j
        p = numerics.projector_onto(numerics.orthonormalize(vecs))
        worst_proj = max(worst_proj, numerics.max_abs(p @ p - p), numerics.max_abs(p - p.conj().T))
        u = random_unitary(rng, dim)
        es = numerics.unitary_eigensystem(u)
        worst_eig = max(worst_eig, numerics.max_abs(es.reconstruct() - u))
    yield "projectors idempotent and Hermitian", worst_proj <= 1e-9, f"{worst_proj:.2e}"
    yield "eigensystem round trip", worst_eig <= 1e-8, f"{worst_eig:.2e}"


def _spanprog(rng):
    worst = 0.0
    for _ in range(10):
        p = random_span_program(rng, n=int(rng.integers(1, 4)))
        pd = spanprog.complement(p)
        for x in p.inputs():
            a, b = spanprog.witness(p, x), spanprog.witness(pd, x)
            gap = abs(a.size - b.size) if a.kind != b.kind else math.inf
            worst = max(worst, gap)
    yield "witness duality under complement", worst <= 1e-6, f"{worst:.2e}"
    worst_u = 0.0
    for _ in range(5):
        p = random_span_program(rng, n=2)
        e = spanprog.ExtendedProgram(p, float(rng.uniform(0.2, 3)))
        for x in p.inputs():
            u = spanprog.algorithm_unitary(e, x)
            worst_u = max(worst_u, numerics.max_abs(u.conj().T @ u - np.eye(u.shape[0])))
    yield "algorithm unitary is unitary", worst_u <= 1e-8, f"{worst_u:.2e}"


def _phasesim(rng):
    ok = True
    for _ in range(20):
        dim = int(rng.integers(2, 6))
        u, psi = random_unitary(rng, dim), random_state(rng, dim)
        spec = phasesim.PhaseCheckSpec.from_precision(float(rng.uniform(0.05, 1.0)),
                                                      float(rng.uniform(0.05, 0.4)))
        es = numerics.unitary_eigensystem(u)
        p = phasesim.check_probability(es, psi, spec)
        low = np.linalg.norm(es.low_phase_projector(0.0) @ psi) ** 2
        high = np.linalg.norm(es.low_phase_projector(spec.theta) @ psi) ** 2 + spec.eps
        ok &= low - 1e-12 <= p <= high + 1e-12
    yield "phase checking sandwich", bool(ok), ""
    ok = True
    for _ in range(10):
        dim = int(rng.integers(2, 5))
        pi, lam = random_projector(rng, dim), random_projector(rng, dim)
        u = (2 * pi - np.eye(dim)) @ (2 * lam - np.eye(dim))
        w = (np.eye(dim) - lam) @ random_state(rng, dim)
        es = numerics.unitary_eigensystem(u)
        for theta in (0.01, 0.1, 0.5):
            lhs = np.linalg.norm(es.low_phase_projector(theta) @ pi @ w)
            ok &= lhs <= theta / 2 * np.linalg.norm(w) + 1e-8
    yield "effective spectral gap", bool(ok), ""


def _decider(rng):
    p = programs.build_or_program(4)
    pd = spanprog.complement(p)
    cfg = decider.DecisionRunConfig(0.1)
    worst = 0.0
    for x in [(0, 0, 0, 0), (1, 0, 0, 0), (1, 1, 1, 1)]:
        ex = decider.exact_decision(p, pd, 1.0, 4.0, x, cfg)
        worst = max(worst, ex.error(int(any(x))))
    yield "exact error below delta on OR(4)", worst <= 0.1, f"{worst:.2e}"
    res = decider.run_decision(p, pd, 1.0, 4.0, (0, 1, 0, 0), cfg, rng)
    yield "ledger equals transcript sum", res.queries == sum(r.queries for r in res.transcript), ""


def _convert(rng):
    worst = 0.0
    for _ in range(5):
        c = random_cvs(rng, n=2, q=int(rng.choice([2, 3])), d=2)
        worst = max(worst, convert.gram_residual(c), convert.gram_residual(convert.complement_cvs(c)),
                    convert.gram_residual(convert.rescale_balanced(c)))
    yield "Gram constraint kept by complement and rescale", worst <= 1e-9, f"{worst:.2e}"
    c = random_cvs(rng, n=2, q=2, d=2)
    x = c.domain[0]
    u, space = convert.conversion_unitary(c, x, 0.8, 0.05)
    st = convert.start_vector(c, x)
    full = np.zeros(space.dim, dtype=complex)
    full[: st.shape[0]] = st
    spec = phasesim.PhaseCheckSpec.from_precision(0.3, 0.1)
    gap = abs(phasesim.check_probability(u, full, spec)
              - phasesim.check_probability(convert.conversion_state(c, x, 0.8, 0.05, st), None, spec))
    yield "reduced and dense conversion agree", gap <= 1e-8, f"{gap:.2e}"
    phi = convert.phi_certificate(c, space, x, 0.8, 0.05)
    _, cols = convert.psi_vectors(c, 0.8, 0.05)
    orth = float(np.max(np.abs(cols.conj().T @ phi)))
    yield "phi certificate orthogonal to psi", orth <= 1e-8, f"{orth:.2e}"


def _apps(rng):
    worst = 0.0
    for _ in range(10):
        nv = int(rng.integers(2, 6))
        pairs = [(a, b) for a, b in itertools.combinations(range(nv), 2) if rng.random() < 0.6]
        if not pairs:
            pairs = [(0, 1)]
        g = programs.Graph(nv, pairs, 0, nv - 1)
        p = programs.build_st_connectivity(g)
        x = tuple(int(b) for b in rng.integers(0, 2, size=len(pairs)))
        rep = spanprog.witness(p, x)
        if rep.kind == "positive":
            worst = max(worst, abs(rep.size - programs.effective_resistance(g, x)))
    yield "st-connectivity witness equals resistance", worst <= 1e-6, f"{worst:.2e}"
    t = trees.build_search_tree(5, "find-both")
    dom = advice.support_domain(5, "find-both")
    c = trees.tree_to_cvs(t, dom)
    ok = True
    for x in dom:
        wp, wm = convert.witness_sizes(c, x)
        bp, bm = trees.path_witness_bounds(t, x)
        ok &= wp <= bp + 1e-9 and wm <= bm + 1e-9
    yield "tree compiler meets witness bounds", bool(ok), ""
    rep = advice.verify_sum_bounds(-1.75, [2 ** e for e in range(6, 13)])
    yield "advice sum bounds", rep.passed, f"slope={rep.slope:.3f}"


REGISTRY: dict[str, Callable] = {
    "numerics": _numerics,
    "spanprog": _spanprog,
    "phasesim": _phasesim,
    "decider": _decider,
    "convert": _convert,
    "apps": _apps,
}


def run_all(seed: int = 0, modules=None) -> list[CheckResult]:
    out = []
    for k, (module, fn) in enumerate(REGISTRY.items()):
        if modules and module not in modules:
            continue
        rng = np.random.default_rng([seed, k])
        try:
            for name, passed, detail in fn(rng):
                out.append(CheckResult(module, name, bool(passed), detail))
        except Exception as exc:  # a crash counts as a failed check
            out.append(CheckResult(module, "raised", False, f"{type(exc).__name__}: {exc}"))
    return out
