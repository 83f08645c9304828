"""Parallel phase estimation simulated in the eigenbasis of the walk unitary.

One copy of phase estimation with ``t`` bits maps an eigenvector with phase
``theta`` to an ancilla state whose all-zero amplitude is
``a(theta) = 2^-t sum_j exp(i j theta)``. With ``m`` parallel copies the
amplitude becomes ``a^m``, and every quantity we need (check probability,
reflection overlaps, measurement statistics after the reflection) is a closed
form in ``a`` over the spectral decomposition of the input state. The
``2^(t m)``-dimensional ancilla is never built.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .numerics import EigenSystem, check_unitary, unitary_eigensystem

NORM_TOL = 1e-8


class PhaseSimError(ValueError):
    pass


@dataclass(frozen=True)
class PhaseCheckSpec:
    theta: float
    eps: float
    t: int
    m: int

    def __post_init__(self):
        if self.t < 1 or self.m < 1:
            raise PhaseSimError("t and m must be at least 1")

    @classmethod
    def from_precision(cls, theta: float, eps: float, m: int | None = None) -> "PhaseCheckSpec":
        """Default discretisation: 2^t >= 2 pi / theta, m = ceil(log2 1/eps) + 1."""
        if not theta > 0:
            raise PhaseSimError("precision must be positive")
        if not 0 < eps < 1:
            raise PhaseSimError("accuracy must lie in (0, 1)")
        t = max(1, math.ceil(math.log2(2 * math.pi / theta)))
        if m is None:
            m = math.ceil(math.log2(1 / eps)) + 1
        return cls(theta, eps, t, m)


@dataclass
class QueryLedger:
    """Oracle-query counter; one application of the walk unitary costs two queries."""

    oracle_queries: int = 0
    breakdown: dict = field(default_factory=lambda: defaultdict(int))

    def charge(self, queries: int, label: str = "other") -> None:
        if queries < 0:
            raise PhaseSimError("cannot charge a negative number of queries")
        self.oracle_queries += int(queries)
        self.breakdown[label] += int(queries)

    def merge(self, other: "QueryLedger") -> None:
        for k, v in other.breakdown.items():
            self.charge(v, k)


@dataclass(frozen=True)
class CheckOutcome:
    p_zero: float
    sampled: bool
    queries_charged: int


@dataclass(frozen=True)
class SpectralState:
    """A state written as ``sum_k coeffs[k] |u_k>`` with ``U|u_k> = e^{i phases[k]}|u_k>``.

    ``vectors`` holds the ``u_k`` as columns. Reduced representations may keep
    only the coordinates that targets and projectors can see; the formulas
    below never need the rest.
    """

    phases: np.ndarray
    coeffs: np.ndarray
    vectors: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


def spectral_state(u, psi) -> SpectralState:
    """Expand ``psi`` in the eigenbasis of the unitary ``u`` (matrix or EigenSystem)."""
    es = u if isinstance(u, EigenSystem) else unitary_eigensystem(u)
    psi = np.asarray(psi, dtype=complex).ravel()
    if psi.shape[0] != es.vectors.shape[0]:
        raise PhaseSimError("state and unitary dimensions differ")
    if abs(np.linalg.norm(psi) - 1.0) > NORM_TOL:
        raise PhaseSimError("state must be normalised")
    return SpectralState(es.phases, es.vectors.conj().T @ psi, es.vectors)


def _as_state(u, psi) -> SpectralState:
    if isinstance(u, SpectralState):
        return u
    if psi is None:
        raise PhaseSimError("a state vector is required with a dense unitary")
    if not isinstance(u, EigenSystem):
        check_unitary(u)
    return spectral_state(u, psi)


def _wrap(theta):
    theta = np.asarray(theta, dtype=float)
    return theta - 2 * np.pi * np.round(theta / (2 * np.pi))


def kernel_amplitude(theta, t: int):
    """Amplitude of outcome 0 for one copy of t-bit phase estimation."""
    if t < 1:
        raise PhaseSimError("t must be at least 1")
    n = 2.0 ** t
    th = _wrap(theta)
    half = th / 2
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.sin(n * half) / (n * np.sin(half))
    ratio = np.where(th == 0.0, 1.0, ratio)
    out = np.exp(1j * (n - 1) * half) * ratio
    return complex(out) if np.ndim(out) == 0 else out


def phase_check_cost(spec: PhaseCheckSpec) -> int:
    """Oracle queries for one Phase Checking circuit D(U)."""
    return 2 * spec.m * (2 ** spec.t - 1)


def phase_reflection_cost(spec: PhaseCheckSpec) -> int:
    return 2 * phase_check_cost(spec)


def _zero_weights(state: SpectralState, spec: PhaseCheckSpec) -> np.ndarray:
    return np.abs(kernel_amplitude(state.phases, spec.t)) ** (2 * spec.m)


def check_probability(u, psi, spec: PhaseCheckSpec) -> float:
    """Probability that D(U) leaves every phase register at zero on ``psi|0>``."""
    state = _as_state(u, psi)
    p = float(np.sum(np.abs(state.coeffs) ** 2 * _zero_weights(state, spec)))
    return min(max(p, 0.0), 1.0)


def sample_phase_check(u, psi, spec: PhaseCheckSpec, rng: np.random.Generator,
                       ledger: QueryLedger | None = None, label: str = "check") -> CheckOutcome:
    p = check_probability(u, psi, spec)
    cost = phase_check_cost(spec)
    if ledger is not None:
        ledger.charge(cost, label)
    return CheckOutcome(p, bool(rng.random() < p), cost)


def reflection_overlaps(u, psi, targets: Sequence, spec: PhaseCheckSpec,
                        ledger: QueryLedger | None = None, label: str = "reflect"):
    """Overlaps ``<target, 0_B | R(U) |psi, 0_B>`` and the B=0 coefficients.

    The reflection multiplies the B=0 part of the k-th eigencomponent by
    ``2|a_k|^{2m} - 1``; the rest of the output lies outside B=0 and is
    invisible to targets of the form ``|target>|0_B>``.
    """
    state = _as_state(u, psi)
    zero = state.coeffs * (2 * _zero_weights(state, spec) - 1)
    tmat = np.atleast_2d(np.asarray(targets, dtype=complex))
    if tmat.shape[1] != state.vectors.shape[0]:
        raise PhaseSimError("target dimension does not match the state")
    overlaps = (tmat.conj() @ state.vectors) @ zero
    if ledger is not None:
        ledger.charge(phase_reflection_cost(spec), label)
    return overlaps, zero


def reflection_gram(phases: np.ndarray, spec: PhaseCheckSpec) -> np.ndarray:
    """Inner products of the ancilla states ``chi_k = 2 a_k^m d_k - |0>``."""
    am = kernel_amplitude(phases, spec.t) ** spec.m
    w = np.abs(am) ** 2
    cross = kernel_amplitude(phases[:, None] - phases[None, :], spec.t) ** spec.m
    return 4 * np.conj(am)[:, None] * am[None, :] * cross - 2 * w[:, None] - 2 * w[None, :] + 1


def _is_index_partition(projectors) -> bool:
    return all(np.ndim(p) == 1 for p in projectors)


def measurement_distribution(u, psi, spec: PhaseCheckSpec, basis_projectors: Sequence,
                             check_complete: bool = True) -> np.ndarray:
    """Outcome probabilities of measuring the A register after R(U).

    ``basis_projectors`` is either a list of projector matrices or a list of
    index arrays, each naming the standard-basis states of one outcome.
    """
    state = _as_state(u, psi)
    dim = state.vectors.shape[0]
    gram = reflection_gram(state.phases, spec)
    weighted = state.vectors * state.coeffs[None, :]
    if _is_index_partition(basis_projectors):
        groups = [np.asarray(g, dtype=int) for g in basis_projectors]
        if check_complete:
            covered = np.sort(np.concatenate(groups)) if groups else np.array([], dtype=int)
            if covered.shape[0] != dim or np.any(covered != np.arange(dim)):
                raise PhaseSimError("index groups must partition the register")
        per_row = np.real(np.sum((weighted.conj() @ gram) * weighted, axis=1))
        probs = np.array([per_row[g].sum() for g in groups])
    else:
        mats = [np.asarray(p, dtype=complex) for p in basis_projectors]
        if check_complete and np.max(np.abs(sum(mats) - np.eye(dim)), initial=0.0) > 1e-8:
            raise PhaseSimError("projectors do not resolve the identity")
        probs = np.array([
            np.real(np.sum((weighted.conj().T @ p @ weighted) * gram)) for p in mats
        ])
    return np.clip(probs, 0.0, None)
