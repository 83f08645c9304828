"""Converting vector sets and the state-conversion algorithms built on them.

A converting vector set is accessed only through per-index Gram blocks
``<a_yj|b_zj>`` for ``a, b`` in ``{u, v}``. That lets explicit vector arrays
and symbolically factored families (see ``apps.trees``) share every routine.

The conversion unitary ``U = (2 Pi_x - I)(2 Lambda - I)`` acts on
``(C^2 (x) H_state) (+) (C^n (x) C^q (x) C^d)``. Start states and targets live
in the first summand, where ``Pi_x`` is the identity, and that lets the
spectral data come from a two-projector (Jordan) reduction in the span of
the ``psi_y`` vectors. The dense route in ``conversion_unitary`` builds the
matrix outright and serves as a cross-check on small instances.
"""

from __future__ import annotations

import json
import math
import threading
import weakref
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _serial
from .numerics import orthonormalize
from .phasesim import (
    PhaseCheckSpec,
    QueryLedger,
    SpectralState,
    check_probability,
    kernel_amplitude,
    measurement_distribution,
    phase_check_cost,
    phase_reflection_cost,
    reflection_overlaps,
)

GRAM_TOL = 1e-9
MAX_DOMAIN = 2 ** 12
PSI_RANK_TOL = 1e-11


class ConversionError(ValueError):
    pass


# -- gadget vectors ------------------------------------------------------------


@dataclass(frozen=True)
class GadgetVectors:
    q: int
    mu: np.ndarray  # rows are mu_a
    nu: np.ndarray

    @property
    def mu_gram(self) -> np.ndarray:
        return self.mu.conj() @ self.mu.T

    @property
    def mu_nu(self) -> np.ndarray:
        return self.mu.conj() @ self.nu.T


def build_gadget(q: int) -> GadgetVectors:
    """Unit vectors with <mu_a|nu_b> = q / (2(q-1)) for a != b and 0 for a = b."""
    if q < 2:
        raise ConversionError("alphabet size must be at least 2")
    # regular simplex: centred standard basis, written in an orthonormal basis
    # of the sum-zero hyperplane
    centred = np.eye(q) - 1.0 / q
    basis = np.linalg.svd(centred)[0][:, : q - 1]
    f = centred @ basis
    f /= np.linalg.norm(f, axis=1, keepdims=True)
    e0 = np.zeros((q, q))
    e0[:, 0] = 1.0
    pad = np.hstack([np.zeros((q, 1)), f])
    mu = (e0 + pad) / np.sqrt(2)
    nu = (e0 - pad) / np.sqrt(2)
    return GadgetVectors(q, mu, nu)


# -- converting vector sets ------------------------------------------------------


def _other(kind: str) -> str:
    return "v" if kind == "u" else "u"


@dataclass(frozen=True, eq=False)
class VectorSetBase:
    """Shared behaviour; subclasses supply ``_raw_gram`` and ``_raw_norms2``.

    ``swap`` and the two scale factors implement complements and rescalings
    without touching the underlying vectors.
    """

    n: int
    q: int
    domain: tuple
    rho: np.ndarray    # |X| x s, row y is |rho_y>
    sigma: np.ndarray
    swap: bool = False
    scale_u: float = 1.0
    scale_v: float = 1.0
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        dom = tuple(tuple(int(c) for c in x) for x in self.domain)
        if not dom:
            raise ConversionError("empty domain")
        if len(dom) > MAX_DOMAIN:
            raise ConversionError(f"domain of size {len(dom)} exceeds the cap {MAX_DOMAIN}")
        if any(len(x) != self.n or min(x) < 0 or max(x) >= self.q for x in dom):
            raise ConversionError("domain inputs must lie in [q]^n")
        object.__setattr__(self, "domain", dom)
        object.__setattr__(self, "rho", np.atleast_2d(np.asarray(self.rho, dtype=complex)))
        object.__setattr__(self, "sigma", np.atleast_2d(np.asarray(self.sigma, dtype=complex)))
        if self.rho.shape != self.sigma.shape or self.rho.shape[0] != len(dom):
            raise ConversionError("rho and sigma need one state per domain input")
        index = {x: k for k, x in enumerate(dom)}
        if len(index) != len(dom):
            raise ConversionError("domain lists an input twice")
        object.__setattr__(self, "_index", index)

    def _raw_gram(self, a: str, b: str, j: int) -> np.ndarray:
        raise NotImplementedError

    def _raw_norms2(self, kind: str) -> np.ndarray:
        raise NotImplementedError

    def _role(self, kind: str) -> tuple[str, float]:
        raw = _other(kind) if self.swap else kind
        return raw, (self.scale_u if kind == "u" else self.scale_v)

    def gram(self, a: str, b: str, j: int) -> np.ndarray:
        """Matrix ``[y, z] -> <a_yj | b_zj>`` over the domain."""
        ra, sa = self._role(a)
        rb, sb = self._role(b)
        return sa * sb * self._raw_gram(ra, rb, j)

    def _raw_gram_groups(self, a: str, b: str, j: int):
        return [(np.arange(self.size), self._raw_gram(a, b, j))]

    def gram_groups(self, a: str, b: str, j: int):
        """``(idx, block)`` pairs with ``gram[ix_(idx, idx)] = block``; zero elsewhere.

        Families whose Gram blocks are block-diagonal under some grouping of
        the domain override ``_raw_gram_groups`` to skip the zeros.
        """
        ra, sa = self._role(a)
        rb, sb = self._role(b)
        return [(idx, sa * sb * blk) for idx, blk in self._raw_gram_groups(ra, rb, j)]

    def norms2(self, kind: str) -> np.ndarray:
        """``|X| x n`` array of squared norms of the u or v family."""
        raw, s = self._role(kind)
        return s * s * self._raw_norms2(raw)

    @property
    def size(self) -> int:
        return len(self.domain)

    @property
    def state_dim(self) -> int:
        return self.rho.shape[1]

    def index(self, x) -> int:
        key = tuple(int(c) for c in (x if not isinstance(x, str) else list(x)))
        try:
            return self._index[key]
        except KeyError:
            raise ConversionError(f"input {x} is not in the domain") from None

    @property
    def w_plus_max(self) -> float:
        return float(self.norms2("v").sum(axis=1).max())

    @property
    def w_minus_max(self) -> float:
        return float(self.norms2("u").sum(axis=1).max())


@dataclass(frozen=True, eq=False)
class ConvertingVectorSet(VectorSetBase):
    """Explicit families: ``u[y, j]`` and ``v[y, j]`` are vectors in C^d."""

    u: np.ndarray = None
    v: np.ndarray = None

    def __post_init__(self):
        super().__post_init__()
        u = np.asarray(self.u, dtype=complex)
        v = np.asarray(self.v, dtype=complex)
        if u.ndim != 3 or u.shape != v.shape or u.shape[:2] != (self.size, self.n):
            raise ConversionError("u and v must both have shape (|X|, n, d)")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @property
    def d(self) -> int:
        return self.u.shape[2]

    def _raw(self, kind: str) -> np.ndarray:
        return self.u if kind == "u" else self.v

    def _raw_gram(self, a, b, j):
        return self._raw(a)[:, j, :].conj() @ self._raw(b)[:, j, :].T

    def _raw_norms2(self, kind):
        return np.sum(np.abs(self._raw(kind)) ** 2, axis=2)

    def vectors(self, kind: str) -> np.ndarray:
        raw, s = self._role(kind)
        return s * self._raw(raw)


def gram_residual(c: VectorSetBase) -> float:
    """max over x, y of |(rho - sigma)_xy - sum_{j: x_j != y_j} <u_xj|v_yj>|."""
    dom = np.array(c.domain)
    target = c.rho.conj() @ c.rho.T - c.sigma.conj() @ c.sigma.T
    total = np.zeros_like(target)
    for j in range(c.n):
        differ = dom[:, j][:, None] != dom[:, j][None, :]
        for idx, blk in c.gram_groups("u", "v", j):
            sub = np.ix_(idx, idx)
            total[sub] += np.where(differ[sub], blk, 0.0)
    return float(np.max(np.abs(target - total)))


def validate(c: VectorSetBase, tol: float = GRAM_TOL) -> VectorSetBase:
    res = gram_residual(c)
    if res > tol:
        raise ConversionError(f"Gram-difference residual {res:.3e} exceeds {tol:g}")
    return c


def witness_sizes(c: VectorSetBase, x) -> tuple[float, float]:
    k = c.index(x)
    return float(c.norms2("v")[k].sum()), float(c.norms2("u")[k].sum())


def complement_cvs(c: VectorSetBase) -> VectorSetBase:
    """Exchange the u and v families; positive and negative sizes swap."""
    out = replace(c, swap=not c.swap, scale_u=c.scale_v, scale_v=c.scale_u)
    return validate(out)


def rescale_balanced(c: VectorSetBase) -> VectorSetBase:
    """Scale v by (W_-/W_+)^(1/4) and u by the inverse; both maxima become sqrt(W_+ W_-)."""
    wp, wm = c.w_plus_max, c.w_minus_max
    if wp <= 0 or wm <= 0:
        raise ConversionError("rescaling needs positive W_+ and W_-")
    f = (wm / wp) ** 0.25
    return replace(c, scale_v=c.scale_v * f, scale_u=c.scale_u / f)


# -- conversion space layout -------------------------------------------------------


@dataclass(frozen=True)
class ConversionSpace:
    """Index map for (C^2 (x) H_state) (+) (C^n (x) C^q (x) C^dj) with per-j widths."""

    state_dim: int
    n: int
    q: int
    widths: tuple  # compressed dimension of each j block

    @property
    def first_dim(self) -> int:
        return 2 * self.state_dim

    @property
    def offsets(self) -> np.ndarray:
        sizes = [self.q * w for w in self.widths]
        return self.first_dim + np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    @property
    def dim(self) -> int:
        return int(self.offsets[-1])

    def first(self, bit: int, state: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dim, dtype=complex)
        s = self.state_dim
        out[bit * s:(bit + 1) * s] = state
        return out

    def block(self, j: int, letter: int) -> slice:
        start = int(self.offsets[j]) + letter * self.widths[j]
        return slice(start, start + self.widths[j])


def t_vector(c: VectorSetBase, k: int, sign: int) -> np.ndarray:
    """|t_{y+-}> in the first summand (length 2 s)."""
    return np.concatenate([c.rho[k], sign * c.sigma[k]]) / np.sqrt(2)


def _compressed(c: ConvertingVectorSet):
    """Per-j orthonormal bases of span{u_yj, v_yj} and coordinates in them."""
    u, v = c.vectors("u"), c.vectors("v")
    bases, uc, vc = [], [], []
    for j in range(c.n):
        stack = np.vstack([u[:, j, :], v[:, j, :]])
        if np.max(np.abs(stack), initial=0.0) == 0.0:
            b = np.zeros((c.d, 0), dtype=complex)
        else:
            b = orthonormalize(stack.T).columns
        bases.append(b)
        uc.append(u[:, j, :] @ b.conj())
        vc.append(v[:, j, :] @ b.conj())
    return bases, uc, vc


def conversion_space(c: ConvertingVectorSet) -> ConversionSpace:
    bases, _, _ = _compressed(c)
    return ConversionSpace(c.state_dim, c.n, c.q, tuple(b.shape[1] for b in bases))


def psi_vectors(c: ConvertingVectorSet, alpha: float, eps_hat: float):
    """Columns |psi_{y,alpha,eps_hat}> in the compressed conversion space."""
    g = build_gadget(c.q)
    _, uc, _ = _compressed(c)
    space = conversion_space(c)
    cols = np.zeros((space.dim, c.size), dtype=complex)
    amp = math.sqrt(eps_hat / alpha)
    for k, y in enumerate(c.domain):
        cols[: space.first_dim, k] = amp * t_vector(c, k, -1)
        for j in range(c.n):
            w = space.widths[j]
            if not w:
                continue
            # |j>|mu_{y_j}>|u_yj>, laid out letter-major inside block j
            chunk = np.kron(g.mu[y[j]], uc[j][k])
            cols[space.block(j, 0).start:space.block(j, 0).start + c.q * w, k] -= chunk
    return space, cols


def input_projector(c: ConvertingVectorSet, space: ConversionSpace, x) -> np.ndarray:
    """Pi_x = I - sum_j |j><j| (x) |mu_{x_j}><mu_{x_j}| (x) I."""
    g = build_gadget(c.q)
    x = c.domain[c.index(x)]
    pi = np.eye(space.dim, dtype=complex)
    for j in range(c.n):
        w = space.widths[j]
        if not w:
            continue
        start = space.block(j, 0).start
        blk = np.kron(np.outer(g.mu[x[j]], g.mu[x[j]].conj()), np.eye(w))
        pi[start:start + c.q * w, start:start + c.q * w] -= blk
    return pi


def conversion_unitary(c: ConvertingVectorSet, x, alpha: float, eps_hat: float):
    """Dense ``U(P, x, alpha, eps_hat)``; returns ``(U, space)``."""
    if not alpha > 0:
        raise ConversionError("alpha must be positive")
    space, cols = psi_vectors(c, alpha, eps_hat)
    basis = orthonormalize(cols).columns if np.any(cols) else np.zeros((space.dim, 0))
    lam = np.eye(space.dim) - basis @ basis.conj().T
    pi = input_projector(c, space, x)
    eye = np.eye(space.dim)
    return (2 * pi - eye) @ (2 * lam - eye), space


def phi_certificate(c: ConvertingVectorSet, space: ConversionSpace, x, alpha: float,
                    eps_hat: float) -> np.ndarray:
    """|t_{x+}> plus the scaled nu (x) v sum; orthogonal to every psi_y."""
    g = build_gadget(c.q)
    _, _, vc = _compressed(c)
    k = c.index(x)
    xs = c.domain[k]
    out = np.zeros(space.dim, dtype=complex)
    out[: space.first_dim] = t_vector(c, k, +1)
    scale = math.sqrt(eps_hat) / (2 * math.sqrt(alpha)) * 2 * (c.q - 1) / c.q
    for j in range(c.n):
        w = space.widths[j]
        if w:
            start = space.block(j, 0).start
            out[start:start + c.q * w] += scale * np.kron(g.nu[xs[j]], vc[j][k])
    return out


# -- reduced spectral route -----------------------------------------------------------


def _realify(a: np.ndarray) -> np.ndarray:
    # real families give real Gram matrices; real eigh is several times faster
    if np.iscomplexobj(a) and np.max(np.abs(a.imag), initial=0.0) <= 1e-14 * max(
            1.0, float(np.max(np.abs(a.real), initial=0.0))):
        return np.ascontiguousarray(a.real)
    return a


class _BoundedCache:
    """Insertion-ordered cache that evicts the oldest entries past a byte budget."""

    def __init__(self, budget: float = 4e8):
        self.budget = budget
        self.items: dict = {}
        self.used = 0
        self.lock = threading.Lock()

    def get(self, key):
        with self.lock:
            return self.items.get(key)

    def put(self, key, value, nbytes: int) -> None:
        with self.lock:
            if key in self.items:
                return
            while self.items and self.used + nbytes > self.budget:
                old = next(iter(self.items))
                self.used -= self.items.pop(old)[1]
            self.items[key] = (value, nbytes)
            self.used += nbytes


@dataclass(frozen=True)
class _PsiFrame:
    """Orthonormal frame of span{psi_y}: coefficients over psi_y and first-summand parts."""

    coeff: np.ndarray   # |X| x r, Q_Psi = Psi @ coeff
    first: np.ndarray   # 2s x r, first-summand part of each frame vector
    mu_gram: np.ndarray


_FRAMES: "weakref.WeakKeyDictionary[VectorSetBase, _BoundedCache]" = weakref.WeakKeyDictionary()
_SPECTRA: "weakref.WeakKeyDictionary[VectorSetBase, _BoundedCache]" = weakref.WeakKeyDictionary()


def _frame(c: VectorSetBase, alpha: float, eps_hat: float) -> _PsiFrame:
    cache = _FRAMES.setdefault(c, _BoundedCache())
    key = (float(alpha), float(eps_hat))
    hit = cache.get(key)
    if hit is not None:
        return hit[0]
    mg = _realify(build_gadget(c.q).mu_gram)
    dom = np.array(c.domain)
    tminus = _realify(np.hstack([c.rho, -c.sigma]) / np.sqrt(2))  # rows are t_{y-}
    amp2 = eps_hat / alpha
    gram = amp2 * (tminus.conj() @ tminus.T)
    for j in range(c.n):
        for idx, blk in c.gram_groups("u", "u", j):
            col = dom[idx, j]
            term = mg[col[:, None], col[None, :]] * _realify(blk)
            if np.iscomplexobj(term) and not np.iscomplexobj(gram):
                gram = gram.astype(complex)
            gram[np.ix_(idx, idx)] += term
    gram = (gram + gram.conj().T) / 2
    evals, evecs = np.linalg.eigh(gram)
    top = evals[-1] if evals.size else 0.0
    keep = evals > PSI_RANK_TOL * max(top, 0.0) if top > 0 else np.zeros_like(evals, bool)
    coeff = evecs[:, keep] / np.sqrt(evals[keep])
    first = math.sqrt(amp2) * (tminus.T @ coeff)
    frame = _PsiFrame(coeff, first, mg)
    cache.put(key, frame, coeff.nbytes + first.nbytes)
    return frame


@dataclass(frozen=True)
class JordanBlocks:
    """Per-block data of U restricted to the input's reachable subspace.

    Only first-summand coordinates listed in ``rows`` can be nonzero in the
    visible parts; the others are dropped.
    """

    gamma: np.ndarray   # rotation half-angles; eigenphases are +-2 gamma
    bhat: np.ndarray    # len(rows) x r, first-summand part of the unit vectors b_i
    rows: np.ndarray
    first_dim: int

    def embed(self, vec: np.ndarray) -> np.ndarray:
        return np.asarray(vec)[self.rows]


def jordan_blocks(c: VectorSetBase, x, alpha: float, eps_hat: float) -> JordanBlocks:
    cache = _SPECTRA.setdefault(c, _BoundedCache())
    k = c.index(x)
    key = (k, float(alpha), float(eps_hat))
    hit = cache.get(key)
    if hit is not None:
        return hit[0]
    fr = _frame(c, alpha, eps_hat)
    xs = c.domain[k]
    dom = np.array(c.domain)
    m = np.zeros((c.size, c.size), dtype=fr.coeff.dtype)
    for j in range(c.n):
        gj = fr.mu_gram[dom[:, j], xs[j]]  # <mu_{y_j}|mu_{x_j}>
        # Gram blocks are recomputed: storing all n of them costs n |X|^2 memory
        for idx, blk in c.gram_groups("u", "u", j):
            term = np.outer(gj[idx], gj[idx].conj()) * _realify(blk)
            if np.iscomplexobj(term) and not np.iscomplexobj(m):
                m = m.astype(complex)
            m[np.ix_(idx, idx)] += term
    g = fr.coeff.conj().T @ m @ fr.coeff
    g = (g + g.conj().T) / 2
    cos2, z = np.linalg.eigh(g)
    cos2 = np.clip(cos2, 0.0, 1.0)
    sin = np.sqrt(1.0 - cos2)
    live = sin > 1e-12
    rows = np.flatnonzero(np.any(fr.first != 0, axis=1))
    first = fr.first[rows] @ z[:, live]
    blocks = JordanBlocks(np.arccos(np.sqrt(cos2[live])), first / sin[live], rows,
                          fr.first.shape[0])
    cache.put(key, blocks, blocks.bhat.nbytes)
    return blocks


def _split(blocks: JordanBlocks, start: np.ndarray):
    start = blocks.embed(start).astype(complex)
    beta = blocks.bhat.conj().T @ start
    rest = start - blocks.bhat @ beta
    rest_norm = math.sqrt(max(0.0, 1.0 - float(np.sum(np.abs(beta) ** 2))))
    return beta, rest, rest_norm


def reduced_state(blocks: JordanBlocks, start: np.ndarray) -> SpectralState:
    """Spectral form of a first-summand start state, visible coordinates only."""
    beta, rest, rest_norm = _split(blocks, start)
    vis = np.zeros((blocks.first_dim, blocks.bhat.shape[1]), dtype=complex)
    vis[blocks.rows] = 1j * blocks.bhat / np.sqrt(2)
    phases = np.concatenate([2 * blocks.gamma, -2 * blocks.gamma, [0.0]])
    coeffs = np.concatenate([-1j * beta / np.sqrt(2), 1j * beta / np.sqrt(2), [rest_norm]])
    rest_vec = np.zeros(blocks.first_dim, dtype=complex)
    if rest_norm > 1e-14:
        rest_vec[blocks.rows] = rest / rest_norm
    vectors = np.hstack([vis, -vis, rest_vec[:, None]])
    phases = np.where(phases <= -np.pi, np.pi, phases)
    return SpectralState(phases, coeffs, vectors)


def folded_reflection_terms(blocks: JordanBlocks, start: np.ndarray, spec: PhaseCheckSpec):
    """Row weights and folded reflection Gram for the measurement after R(U).

    The +-2 gamma partners carry identical weighted visible vectors
    ``h = bhat beta / 2``, so their four Gram blocks add up to one r x r
    matrix. Returns ``(h, rest, g_hh, g_hr, g_rr)`` with the per-row
    probability ``h^H g_hh h + 2 Re(h^H g_hr) rest + |rest|^2 g_rr``.
    """
    beta, rest, rest_norm = _split(blocks, start)
    am = kernel_amplitude(2 * blocks.gamma, spec.t) ** spec.m
    w = np.abs(am) ** 2
    plus, minus = am, np.conj(am)  # a(-theta) = conj(a(theta))
    g2 = 2 * blocks.gamma
    diff = g2[:, None] - g2[None, :]
    summ = g2[:, None] + g2[None, :]
    xd = kernel_amplitude(diff, spec.t) ** spec.m
    xs = kernel_amplitude(summ, spec.t) ** spec.m
    base = 1 - 2 * w[:, None] - 2 * w[None, :]
    g_hh = (4 * np.conj(plus)[:, None] * plus[None, :] * xd
            + 4 * np.conj(plus)[:, None] * minus[None, :] * xs
            + 4 * np.conj(minus)[:, None] * plus[None, :] * np.conj(xs)
            + 4 * np.conj(minus)[:, None] * minus[None, :] * np.conj(xd)
            + 4 * base)
    # rest component has phase 0 and amplitude a(0) = 1
    g_hr = (4 * np.conj(plus) * kernel_amplitude(g2, spec.t) ** spec.m
            + 4 * np.conj(minus) * np.conj(kernel_amplitude(g2, spec.t) ** spec.m)
            + 2 * (1 - 2 * w - 2))
    g_rr = 4 - 2 - 2 + 1.0
    h = blocks.bhat * (beta / 2)[None, :]
    return h, rest, g_hh, g_hr, g_rr


def _row_probs(h, rest, g_hh, g_hr, g_rr, rows) -> np.ndarray:
    hr = h[rows]
    quad = np.real(np.sum((hr.conj() @ g_hh) * hr, axis=1))
    cross = 2 * np.real((hr.conj() @ g_hr) * rest[rows])
    return quad + cross + np.abs(rest[rows]) ** 2 * g_rr


def visible_total(h, rest, g_hh, g_hr, g_rr) -> float:
    """Probability summed over every visible coordinate."""
    s = h.conj().T @ h
    quad = np.real(np.sum(s * g_hh))
    cross = 2 * np.real(np.dot(g_hr, h.conj().T @ rest))
    return float(quad + cross + np.vdot(rest, rest).real * g_rr)


def conversion_state(c: VectorSetBase, x, alpha: float, eps_hat: float,
                     start: np.ndarray) -> SpectralState:
    return reduced_state(jordan_blocks(c, x, alpha, eps_hat), start)


def start_vector(c: VectorSetBase, x) -> np.ndarray:
    """(|0>|rho_x>) in the first summand."""
    k = c.index(x)
    return np.concatenate([c.rho[k], np.zeros(c.state_dim, dtype=complex)])


def target_vector(c: VectorSetBase, x) -> np.ndarray:
    k = c.index(x)
    return np.concatenate([np.zeros(c.state_dim, dtype=complex), c.sigma[k]])


# -- amplitude estimation model -------------------------------------------------------


@dataclass(frozen=True)
class AmplitudeEstimateModel:
    delta_est: float
    p_fail: float
    cost_constant: float = 50.0

    def __post_init__(self):
        if not 0 < self.delta_est < 1:
            raise ConversionError("additive error must lie in (0, 1)")
        if not 0 <= self.p_fail < 1:
            raise ConversionError("failure probability must lie in [0, 1)")

    @property
    def calls(self) -> int:
        """Phase Checking circuits used by one estimate."""
        p = max(self.p_fail, 1e-300)
        inner = (1 / p) * math.log2(1 / self.delta_est)
        return max(1, math.ceil(self.cost_constant / self.delta_est * math.log(max(inner, math.e))))


def estimate_amplitude(true_p: float, model: AmplitudeEstimateModel, rng: np.random.Generator,
                       ledger: QueryLedger | None = None, per_call_cost: int = 0,
                       label: str = "estimate") -> float:
    if not -1e-12 <= true_p <= 1 + 1e-12:
        raise ConversionError("probability outside [0, 1]")
    if ledger is not None:
        ledger.charge(model.calls * per_call_cost, label)
    if rng.random() < model.p_fail:
        return float(rng.random())
    lo = max(0.0, true_p - model.delta_est)
    hi = min(1.0, true_p + model.delta_est)
    return float(rng.uniform(lo, hi))


# -- Algorithms 2 and 3 -------------------------------------------------------------------


def _positive(w: float) -> float:
    # an all-zero family has no natural scale; 1 keeps alpha finite
    return w if w > 0 else 1.0


def _rounds(c: VectorSetBase) -> int:
    prod = _positive(c.w_plus_max) * _positive(c.w_minus_max)
    return max(0, math.ceil(math.log2(prod))) if prod > 1 else 0


@dataclass(frozen=True)
class StageParams:
    round: int
    dagger: bool
    alpha: float
    spec: PhaseCheckSpec


def stage_params(i: int, dagger: bool, w_minus: float, eps_hat: float) -> StageParams:
    wm = _positive(w_minus)
    alpha = 2.0 ** i / wm
    theta = eps_hat ** 1.5 / math.sqrt(alpha * wm)
    spec = PhaseCheckSpec.from_precision(theta, min(eps_hat ** 2, 0.5))
    return StageParams(i, dagger, alpha, spec)


@dataclass(frozen=True)
class ProbeRecord:
    round: int
    dagger: bool
    alpha: float
    p_zero: float
    estimate: float
    queries: int


@dataclass
class ConversionResult:
    error: float
    ledger: QueryLedger
    transcript: list
    exhausted: bool
    final: StageParams

    @property
    def queries(self) -> int:
        return self.ledger.oracle_queries


def run_state_conversion(c: VectorSetBase, cdag: VectorSetBase, x, epsilon: float, delta: float,
                         rng: np.random.Generator, cost_constant: float = 50.0) -> ConversionResult:
    """Probe with amplitude estimation, then apply the phase reflection once."""
    if delta > 1 / 3:
        raise ConversionError("delta must be at most 1/3")
    eps_hat = epsilon ** 2 / 36
    big_t = _rounds(c)
    ledger = QueryLedger()
    transcript = []
    start = start_vector(c, x)
    chosen = None
    for i in range(big_t + 1):
        delta_i = delta * 2.0 ** (i - big_t - 1)
        for prog, dagger in ((c, False), (cdag, True)):
            sp = stage_params(i, dagger, prog.w_minus_max, eps_hat)
            state = conversion_state(prog, x, sp.alpha, eps_hat, start)
            p0 = check_probability(state, None, sp.spec)
            model = AmplitudeEstimateModel(eps_hat / 4, delta_i, cost_constant)
            before = ledger.oracle_queries
            est = estimate_amplitude(p0, model, rng, ledger, phase_check_cost(sp.spec),
                                     f"probe{i}/{'dag' if dagger else 'p'}")
            transcript.append(ProbeRecord(i, dagger, sp.alpha, p0, est,
                                          ledger.oracle_queries - before))
            if est - 0.5 > -11 / 4 * eps_hat:
                chosen = (prog, sp)
                break
        if chosen:
            break
    exhausted = chosen is None
    if exhausted:
        chosen = (cdag, stage_params(big_t, True, cdag.w_minus_max, eps_hat))
    prog, sp = chosen
    state = conversion_state(prog, x, sp.alpha, eps_hat, start)
    (overlap,), _ = reflection_overlaps(state, None, [target_vector(c, x)], sp.spec,
                                        ledger, "convert")
    err = math.sqrt(max(0.0, 2 - 2 * overlap.real))
    return ConversionResult(err, ledger, transcript, exhausted, sp)


def conversion_error(c: VectorSetBase, x, sp: StageParams, eps_hat: float) -> float:
    """Error of the conversion stage run with the given parameters."""
    state = conversion_state(c, x, sp.alpha, eps_hat, start_vector(c, x))
    (overlap,), _ = reflection_overlaps(state, None, [target_vector(c, x)], sp.spec)
    return math.sqrt(max(0.0, 2 - 2 * overlap.real))


@dataclass(frozen=True)
class Verifier:
    """Exact check of a guessed label that costs a fixed number of queries."""

    check: Callable[[int], bool]
    queries: int = 2


@dataclass
class EvaluationResult:
    answer: int | None  # None marks the error sentinel
    ledger: QueryLedger
    round_stopped: int
    guesses: int

    @property
    def queries(self) -> int:
        return self.ledger.oracle_queries


def label_groups(c: VectorSetBase) -> list[np.ndarray]:
    """Visible coordinates per label: value-register index l+1 under either control bit."""
    s = c.state_dim
    return [np.array([lab, s + lab]) for lab in range(1, s)]


def _folded(c: VectorSetBase, x, sp: StageParams, eps_hat: float):
    blocks = jordan_blocks(c, x, sp.alpha, eps_hat)
    terms = folded_reflection_terms(blocks, start_vector(c, x), sp.spec)
    pos = np.full(blocks.first_dim, -1)
    pos[blocks.rows] = np.arange(len(blocks.rows))
    return terms, pos


def guess_distribution(c: VectorSetBase, x, sp: StageParams, eps_hat: float) -> np.ndarray:
    """Probabilities of reading each label after the reflection (index l -> label l)."""
    terms, pos = _folded(c, x, sp, eps_hat)
    s = c.state_dim
    rows = pos[np.arange(1, 2 * s)]
    probs = np.zeros(2 * s - 1)
    live = rows >= 0
    probs[live] = _row_probs(*terms, rows[live])
    per_label = probs[: s - 1] + probs[s:]
    return np.clip(per_label, 0.0, None)


def outcome_split(c: VectorSetBase, x, sp: StageParams, eps_hat: float, label: int):
    """(P[read label], P[read any other label], P[no label]) after the reflection."""
    terms, pos = _folded(c, x, sp, eps_hat)
    s = c.state_dim

    def rows_prob(idx):
        r = pos[np.asarray(idx)]
        r = r[r >= 0]
        return float(_row_probs(*terms, r).sum()) if r.size else 0.0

    total = visible_total(*terms)
    labelled = total - rows_prob([0, s])
    hit = rows_prob([label + 1, s + label + 1])
    hit = min(max(hit, 0.0), 1.0)
    other = min(max(labelled - hit, 0.0), 1.0 - hit)
    return hit, other, max(0.0, 1.0 - hit - other)


def run_verified_evaluation(c: VectorSetBase, cdag: VectorSetBase, x, verifier: Verifier,
                            delta: float, rng: np.random.Generator) -> EvaluationResult:
    """Reflect, measure a label, verify; no probing stage.

    Labels are value-register indices minus one; an outcome outside the
    value register (start state or workspace) yields no guess and no
    verifier charge. A wrong guess is rejected by the verifier, so only the
    split between the true label, some other label and no label matters.
    """
    if not delta < 2 ** -0.5:
        raise ConversionError("delta must be below 2^(-1/2)")
    k = c.index(x)
    truth = int(np.argmax(np.abs(c.sigma[k]))) - 1
    if truth < 0 or not verifier.check(truth):
        raise ConversionError("verifier rejects the true value")
    eps_hat = delta / 36
    big_t = _rounds(c)
    ledger = QueryLedger()
    guesses = 0
    for i in range(big_t + 1):
        for prog, dagger in ((c, False), (cdag, True)):
            sp = stage_params(i, dagger, prog.w_minus_max, eps_hat)
            hit, other, _ = outcome_split(prog, x, sp, eps_hat, truth)
            ledger.charge(phase_reflection_cost(sp.spec), f"reflect{i}/{'dag' if dagger else 'p'}")
            draw = rng.random()
            if draw >= hit + other:
                continue
            guesses += 1
            ledger.charge(verifier.queries, "verify")
            if draw < hit and verifier.check(truth):
                return EvaluationResult(truth, ledger, i, guesses)
    return EvaluationResult(None, ledger, big_t, guesses)


# -- structured text format ------------------------------------------------------------


def to_dict(c: ConvertingVectorSet) -> dict:
    return {
        "n": c.n,
        "q": c.q,
        "d": c.d,
        "domain": [list(x) for x in c.domain],
        "rho": _serial.encode(c.rho),
        "sigma": _serial.encode(c.sigma),
        "u": _serial.encode(c.vectors("u")),
        "v": _serial.encode(c.vectors("v")),
    }


def from_dict(d: dict) -> ConvertingVectorSet:
    size, n, dim = len(d["domain"]), int(d["n"]), int(d["d"])
    c = ConvertingVectorSet(
        n=n, q=int(d["q"]), domain=tuple(tuple(x) for x in d["domain"]),
        rho=_serial.decode(d["rho"]).reshape(size, -1),
        sigma=_serial.decode(d["sigma"]).reshape(size, -1),
        u=_serial.decode(d["u"]).reshape(size, n, dim),
        v=_serial.decode(d["v"]).reshape(size, n, dim),
    )
    return validate(c)


def save(c: ConvertingVectorSet, path) -> None:
    Path(path).write_text(json.dumps(to_dict(c)))


def load(path) -> ConvertingVectorSet:
    try:
        return from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConversionError(f"malformed converting vector set {path}: {exc}") from exc
