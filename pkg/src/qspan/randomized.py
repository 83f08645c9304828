"""Random instances for property checks: programs, vector sets, unitaries, projectors."""

from __future__ import annotations

import itertools

import numpy as np

from .convert import ConvertingVectorSet
from .numerics import SubspaceBasis
from .spanprog import SpanProgram


def random_unitary(rng: np.random.Generator, dim: int) -> np.ndarray:
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))[None, :]


def random_state(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def random_projector(rng: np.random.Generator, dim: int, rank: int | None = None) -> np.ndarray:
    rank = int(rng.integers(0, dim + 1)) if rank is None else rank
    basis = random_unitary(rng, dim)[:, :rank]
    return basis @ basis.conj().T


def random_span_program(rng: np.random.Generator, n: int | None = None, q: int | None = None,
                        dim_h: int | None = None) -> SpanProgram:
    """Rotated coordinate decomposition of H with a random A and tau."""
    n = int(rng.integers(1, 5)) if n is None else n
    q = int(rng.choice([2, 3])) if q is None else q
    dim_h = int(rng.integers(max(2, n), 9)) if dim_h is None else dim_h
    rot = random_unitary(rng, dim_h) if rng.random() < 0.5 else np.eye(dim_h, dtype=complex)
    # part n*q is H_true and n*q+1 is H_false
    owner = rng.integers(0, n * q + 2, size=dim_h)

    def basis(part):
        return SubspaceBasis(rot[:, np.flatnonzero(owner == part)])

    blocks = [[basis(j * q + a) for a in range(q)] for j in range(n)]
    dim_v = int(rng.integers(1, min(3, dim_h) + 1))
    a = rng.normal(size=(dim_v, dim_h)) + 1j * rng.normal(size=(dim_v, dim_h))
    w = rng.normal(size=dim_h) * (rng.random(dim_h) < 0.6)
    tau = a @ w if np.any(w) else a[:, 0]
    return SpanProgram(n=n, q=q, a=a, tau=tau, blocks=blocks,
                       h_true=basis(n * q), h_false=basis(n * q + 1))


def _psd_split(d: np.ndarray):
    evals, evecs = np.linalg.eigh(d)
    pos = (evecs * np.clip(evals, 0, None)) @ evecs.conj().T
    return pos, pos - d


def _gram_factor(g: np.ndarray) -> np.ndarray:
    """Rows whose Gram matrix is g (g PSD)."""
    evals, evecs = np.linalg.eigh((g + g.conj().T) / 2)
    return (evecs * np.sqrt(np.clip(evals, 0, None))).conj()


def random_cvs(rng: np.random.Generator, n: int = 2, q: int = 2, d: int = 2,
               scale: float | None = None, domain=None) -> ConvertingVectorSet:
    """Random valid set with u = v, so the Gram-difference target is Hermitian.

    The target ``D`` is split as ``P - N`` with both parts PSD and equal
    diagonals; adding ``I - diag(P)`` to both gives unit-norm state Grams.
    """
    dom = list(domain) if domain is not None else list(itertools.product(range(q), repeat=n))
    size = len(dom)
    u = rng.normal(size=(size, n, d)) + 1j * rng.normal(size=(size, n, d))
    dom_arr = np.array(dom)
    target = np.zeros((size, size), dtype=complex)
    for j in range(n):
        differ = dom_arr[:, j][:, None] != dom_arr[:, j][None, :]
        target += np.where(differ, u[:, j, :].conj() @ u[:, j, :].T, 0)
    pos, neg = _psd_split(target)
    top = max(float(np.max(np.real(np.diag(pos)), initial=0.0)), 1e-12)
    s = scale if scale is not None else float(rng.uniform(0.3, 0.95)) / top
    u *= np.sqrt(s)
    pos, neg = pos * s, neg * s
    fill = np.diag(1.0 - np.real(np.diag(pos)))
    rho = _gram_factor(pos + fill)
    sigma = _gram_factor(neg + fill)
    return ConvertingVectorSet(n=n, q=q, domain=tuple(map(tuple, dom)), rho=rho, sigma=sigma,
                               u=u, v=u.copy())
