"""Span programs over [q]^n: witnesses, complements and the walk unitary.

A program stores every ``H_{j,a}`` as an explicit orthonormal basis inside a
shared ambient space ``H = C^dim_h``. The blocks ``H_j`` (span of the
``H_{j,a}`` over letters ``a``) together with ``H_true`` and ``H_false`` must be
mutually orthogonal and fill ``H``.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from . import _serial
from .numerics import (
    RANK_TOL,
    SubspaceBasis,
    intersect_with_complement,
    kernel_projector,
    max_abs,
    min_norm_solution,
    null_space,
    orthonormalize,
    projector_onto,
)

FEASIBILITY_TOL = 1e-8
ORTHO_TOL = 1e-9


class SpanProgramError(ValueError):
    pass


class WitnessError(SpanProgramError):
    """An input has the wrong kind of witness for the claimed function."""


def parse_input(x, n: int, q: int) -> tuple[int, ...]:
    if isinstance(x, str):
        x = [int(c) for c in x.strip()]
    x = tuple(int(v) for v in x)
    if len(x) != n:
        raise SpanProgramError(f"input has length {len(x)}, expected {n}")
    if any(v < 0 or v >= q for v in x):
        raise SpanProgramError(f"input letters must lie in [0, {q})")
    return x


@dataclass(frozen=True, eq=False)
class SpanProgram:
    n: int
    q: int
    a: np.ndarray
    tau: np.ndarray
    blocks: tuple  # blocks[j][letter] -> SubspaceBasis
    h_true: SubspaceBasis
    h_false: SubspaceBasis
    _h_j: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=complex))
        tau = np.asarray(self.tau, dtype=complex).ravel()
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "blocks", tuple(tuple(b) for b in self.blocks))
        self._validate()

    @property
    def dim_h(self) -> int:
        return self.a.shape[1]

    @property
    def dim_v(self) -> int:
        return self.a.shape[0]

    def _validate(self) -> None:
        dim_h = self.dim_h
        if self.tau.shape[0] != self.dim_v:
            raise SpanProgramError("tau does not live in V")
        if len(self.blocks) != self.n:
            raise SpanProgramError(f"expected {self.n} index blocks, got {len(self.blocks)}")
        h_j = []
        for j, letters in enumerate(self.blocks):
            if len(letters) != self.q:
                raise SpanProgramError(f"block {j} lists {len(letters)} letters, expected {self.q}")
            for b in letters:
                if b.ambient_dim != dim_h:
                    raise SpanProgramError(f"block {j} basis has the wrong ambient dimension")
                if not b.is_orthonormal(ORTHO_TOL):
                    raise SpanProgramError(f"block {j} basis is not orthonormal")
            cols = [b.columns for b in letters if b.dim]
            h_j.append(
                orthonormalize(np.hstack(cols)) if cols else SubspaceBasis.empty(dim_h)
            )
        parts = h_j + [self.h_true, self.h_false]
        for b in (self.h_true, self.h_false):
            if b.ambient_dim != dim_h or not b.is_orthonormal(ORTHO_TOL):
                raise SpanProgramError("H_true/H_false must be orthonormal bases in H")
        stacked = np.hstack([p.columns for p in parts])
        gram = stacked.conj().T @ stacked
        if stacked.shape[1] != dim_h or max_abs(gram - np.eye(dim_h)) > ORTHO_TOL:
            raise SpanProgramError(
                "H_1..H_n, H_true, H_false must be mutually orthogonal and sum to H"
            )
        object.__setattr__(self, "_h_j", tuple(h_j))

    def index_space(self, j: int) -> SubspaceBasis:
        return self._h_j[j]

    def input_space(self, x) -> SubspaceBasis:
        """Orthonormal basis of H(x) = (+)_j H_{j,x_j} (+) H_true."""
        x = parse_input(x, self.n, self.q)
        cols = [self.blocks[j][xj].columns for j, xj in enumerate(x)]
        cols.append(self.h_true.columns)
        return SubspaceBasis(np.hstack(cols))

    def inputs(self) -> Iterable[tuple[int, ...]]:
        return itertools.product(range(self.q), repeat=self.n)


@dataclass(frozen=True)
class WitnessReport:
    kind: str  # "positive" | "negative" | "none"
    size: float
    witness: np.ndarray
    residual: float


def positive_witness(p: SpanProgram, x) -> WitnessReport:
    w, residual = min_norm_solution(p.a, p.tau, p.input_space(x))
    if residual > FEASIBILITY_TOL:
        return WitnessReport("none", float("inf"), w, residual)
    return WitnessReport("positive", float(np.vdot(w, w).real), w, residual)


def negative_witness(p: SpanProgram, x) -> WitnessReport:
    """Optimal negative witness as the row vector ``omega`` over V.

    ``omega^H`` ranges over the left null space of ``A Pi_{H(x)}``; inside it
    the size ``||omega A||^2`` is a quadratic form minimised under the single
    linear constraint ``omega tau = 1``.
    """
    b = p.a @ p.input_space(x).columns
    if b.shape[1]:
        null = null_space(b.conj().T, RANK_TOL * float(np.linalg.norm(p.a, 2)))
    else:
        null = np.eye(p.dim_v, dtype=complex)
    proj_tau = null.conj().T @ p.tau
    residual = float(np.linalg.norm(proj_tau))
    if residual <= FEASIBILITY_TOL:
        return WitnessReport("none", float("inf"), np.zeros(p.dim_v, dtype=complex), residual)
    na = null.conj().T @ p.a
    m = na @ na.conj().T
    evals, evecs = np.linalg.eigh(m)
    live = evals > RANK_TOL * float(np.linalg.norm(p.a, 2)) ** 2
    coeff = evecs.conj().T @ proj_tau
    dead_part = coeff[~live]
    if np.linalg.norm(dead_part) > FEASIBILITY_TOL:
        # omega A = 0 is reachable: tau lies outside the range of A
        y = evecs[:, ~live] @ dead_part / np.vdot(dead_part, dead_part)
        size = 0.0
    else:
        inv = coeff[live] / evals[live]
        s = float(np.vdot(coeff[live], inv).real)
        y = evecs[:, live] @ inv / s
        size = 1.0 / s
    o = null @ y
    omega = o.conj()
    return WitnessReport("negative", size, omega, residual)


def witness(p: SpanProgram, x) -> WitnessReport:
    """Whichever witness exists for ``x``; both or neither is an error."""
    pos = positive_witness(p, x)
    neg = negative_witness(p, x)
    if (pos.kind == "positive") == (neg.kind == "negative"):
        raise WitnessError(f"input {x} has {'both' if pos.kind == 'positive' else 'no'} witnesses")
    return pos if pos.kind == "positive" else neg


def evaluate(p: SpanProgram, x) -> int:
    return 1 if witness(p, x).kind == "positive" else 0


def complement(p: SpanProgram) -> SpanProgram:
    """Program for the negated function with positive/negative sizes swapped.

    The ambient space stays ``H``. Directions of ``H_j`` that lie in no
    ``H_j cap H_{j,a}^perp`` can never be available, so they join the
    always-unavailable block.
    """
    dim_h = p.dim_h
    w0, residual = min_norm_solution(p.a, p.tau, SubspaceBasis.full(dim_h))
    if residual > FEASIBILITY_TOL:
        raise SpanProgramError("tau is not in the range of A; the complement is undefined")
    blocks = []
    leftovers = [p.h_true.columns]
    for j in range(p.n):
        h_j = p.index_space(j)
        letters = [intersect_with_complement(h_j, b) for b in p.blocks[j]]
        blocks.append(letters)
        cols = [b.columns for b in letters if b.dim]
        if cols:
            covered = orthonormalize(np.hstack(cols))
            rest = intersect_with_complement(h_j, covered)
        else:
            rest = h_j
        if rest.dim:
            leftovers.append(rest.columns)
    h_false = SubspaceBasis(np.hstack(leftovers))
    a_new = np.vstack([kernel_projector(p.a), w0.conj()[None, :]])
    tau_new = np.zeros(dim_h + 1, dtype=complex)
    tau_new[-1] = 1.0
    return SpanProgram(
        n=p.n, q=p.q, a=a_new, tau=tau_new, blocks=blocks, h_true=p.h_false, h_false=h_false
    )


@dataclass(frozen=True, eq=False)
class ExtendedProgram:
    """A program with the extra coordinate |0^> appended to H (last index)."""

    base: SpanProgram
    alpha: float
    a_alpha: np.ndarray = field(init=False, repr=False)
    lambda_alpha: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.alpha > 0:
            raise SpanProgramError("alpha must be positive")
        a_alpha = np.hstack([self.base.a, (self.base.tau / self.alpha)[:, None]])
        object.__setattr__(self, "a_alpha", a_alpha)
        object.__setattr__(self, "lambda_alpha", kernel_projector(a_alpha))

    @property
    def dim(self) -> int:
        return self.base.dim_h + 1

    def zero_hat(self) -> np.ndarray:
        e = np.zeros(self.dim, dtype=complex)
        e[-1] = 1.0
        return e

    def input_projector(self, x) -> np.ndarray:
        cols = self.base.input_space(x).columns
        full = np.zeros((self.dim, cols.shape[1] + 1), dtype=complex)
        full[:-1, :-1] = cols
        full[-1, -1] = 1.0
        return projector_onto(SubspaceBasis(full))


def algorithm_unitary(e: ExtendedProgram, x) -> np.ndarray:
    """(2 Pi_x - I)(2 Lambda^alpha - I); each application costs two oracle queries."""
    eye = np.eye(e.dim)
    return (2 * e.input_projector(x) - eye) @ (2 * e.lambda_alpha - eye)


def max_witnesses(p: SpanProgram, domain: Sequence, labels: Sequence[int]) -> tuple[float, float]:
    """(W_+, W_-): largest positive size over 1-inputs, negative over 0-inputs."""
    w_plus = w_minus = 0.0
    for x, fx in zip(domain, labels):
        rep = witness(p, x)
        if (rep.kind == "positive") != bool(fx):
            raise WitnessError(f"program does not decide f at input {x}")
        if fx:
            w_plus = max(w_plus, rep.size)
        else:
            w_minus = max(w_minus, rep.size)
    return w_plus, w_minus


# -- structured text (JSON) format ------------------------------------------


def _encode_basis(b: SubspaceBasis):
    cols = b.columns
    idx = []
    for c in range(cols.shape[1]):
        nz = np.flatnonzero(np.abs(cols[:, c]) > 1e-15)
        if len(nz) != 1 or abs(cols[nz[0], c] - 1.0) > 1e-15:
            return {"basis": _serial.encode(cols.T)}
        idx.append(int(nz[0]))
    return idx


def _decode_basis(obj, dim_h: int) -> SubspaceBasis:
    if isinstance(obj, dict):
        cols = _serial.decode(obj["basis"])
        if cols.size == 0:
            return SubspaceBasis.empty(dim_h)
        return SubspaceBasis(np.atleast_2d(cols).T)
    return SubspaceBasis.coordinates(dim_h, [int(i) for i in obj])


def to_dict(p: SpanProgram) -> dict:
    return {
        "n": p.n,
        "q": p.q,
        "dimH": p.dim_h,
        "dimV": p.dim_v,
        "A": _serial.encode(p.a),
        "tau": _serial.encode(p.tau),
        "blocks": [[_encode_basis(b) for b in letters] for letters in p.blocks],
        "h_true": _encode_basis(p.h_true),
        "h_false": _encode_basis(p.h_false),
    }


def from_dict(d: dict) -> SpanProgram:
    dim_h, dim_v = int(d["dimH"]), int(d["dimV"])
    a = np.asarray(_serial.decode(d["A"]), dtype=complex).reshape(dim_v, dim_h)
    tau = np.asarray(_serial.decode(d["tau"]), dtype=complex).reshape(dim_v)
    blocks = [[_decode_basis(b, dim_h) for b in letters] for letters in d["blocks"]]
    return SpanProgram(
        n=int(d["n"]),
        q=int(d["q"]),
        a=a,
        tau=tau,
        blocks=blocks,
        h_true=_decode_basis(d.get("h_true", []), dim_h),
        h_false=_decode_basis(d.get("h_false", []), dim_h),
    )


def save(p: SpanProgram, path) -> None:
    Path(path).write_text(json.dumps(to_dict(p), indent=1))


def load(path) -> SpanProgram:
    try:
        return from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError) as exc:
        raise SpanProgramError(f"malformed span program file {path}: {exc}") from exc
