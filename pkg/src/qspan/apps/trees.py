"""Decision trees and their compilation into converting vector sets.

The compiled families are products of a vertex basis vector, a colour
vector in C^2, a child-vertex gadget and an output-label gadget. The
gadgets are ``mu~_i = e_0 + e_{i+1}`` and ``nu~_i = e_0 - e_{i+1}`` so that
``<mu~_i|nu~_j> = 1 - delta_ij`` and both have squared norm 2. Every inner
product therefore factors, and ``TreeVectorSet`` evaluates Gram blocks from
the factors without building the (large) ambient space. ``materialize``
produces the explicit vectors for small trees.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..convert import ConvertingVectorSet, VectorSetBase, validate

RED, BLACK = "red", "black"
_COLOR_INDEX = {RED: 0, BLACK: 1}


class TreeError(ValueError):
    pass


@dataclass(frozen=True)
class Edge:
    parent: int
    child: int
    letters: frozenset
    color: str | None = None
    weight: float | None = None


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """``queries[v]`` is J(v) for internal vertices and None for leaves."""

    n: int
    q: int
    m: int
    queries: tuple
    labels: tuple  # leaf label or None
    edges: tuple
    root: int = 0
    _out: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "queries", tuple(self.queries))
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "edges", tuple(self.edges))
        self._validate()

    @property
    def n_vertices(self) -> int:
        return len(self.queries)

    def out_edges(self, v: int) -> list[int]:
        return self._out.get(v, [])

    def _validate(self) -> None:
        nv = self.n_vertices
        if len(self.labels) != nv:
            raise TreeError("labels and queries must cover the same vertices")
        out: dict[int, list[int]] = {}
        parents = {}
        for k, e in enumerate(self.edges):
            if not (0 <= e.parent < nv and 0 <= e.child < nv):
                raise TreeError(f"edge {k} leaves the vertex range")
            if e.child in parents:
                raise TreeError(f"vertex {e.child} has two parents")
            parents[e.child] = e.parent
            out.setdefault(e.parent, []).append(k)
            if e.color not in (None, RED, BLACK):
                raise TreeError(f"edge {k} has unknown colour {e.color!r}")
            if e.weight is not None and not e.weight > 0:
                raise TreeError(f"edge {k} needs a positive weight")
        object.__setattr__(self, "_out", out)
        if self.root in parents:
            raise TreeError("the root has a parent")
        for v in range(nv):
            leaving = out.get(v, [])
            if self.queries[v] is None:
                if leaving:
                    raise TreeError(f"leaf {v} has outgoing edges")
                if self.labels[v] is None or not 0 <= self.labels[v] < self.m:
                    raise TreeError(f"leaf {v} needs a label in [0, {self.m})")
                continue
            if not 0 <= self.queries[v] < self.n:
                raise TreeError(f"vertex {v} queries an index outside [0, {self.n})")
            letters = [a for k in leaving for a in self.edges[k].letters]
            if sorted(letters) != list(range(self.q)):
                raise TreeError(f"edges leaving vertex {v} do not partition the alphabet")
            colours = [self.edges[k].color for k in leaving]
            if None not in colours:
                if colours.count(BLACK) != 1:
                    raise TreeError(f"vertex {v} needs exactly one black edge")
                reds = {self.edges[k].weight for k in leaving if self.edges[k].color == RED}
                if len(reds) > 1:
                    raise TreeError(f"red edges leaving vertex {v} differ in weight")
        # reachability and repeated queries along root-leaf paths
        seen = set()
        stack = [(self.root, frozenset())]
        while stack:
            v, asked = stack.pop()
            seen.add(v)
            j = self.queries[v]
            if j is not None:
                if j in asked:
                    raise TreeError(f"index {j} is queried twice on a root-leaf path")
                for k in out.get(v, []):
                    stack.append((self.edges[k].child, asked | {j}))
        if len(seen) != nv:
            raise TreeError("some vertices are unreachable from the root")

    def path(self, x) -> list[int]:
        """Edge indices followed on input x."""
        v, edges = self.root, []
        while self.queries[v] is not None:
            a = int(x[self.queries[v]])
            k = next(k for k in self.out_edges(v) if a in self.edges[k].letters)
            edges.append(k)
            v = self.edges[k].child
        return edges

    def evaluate(self, x) -> int:
        p = self.path(x)
        leaf = self.edges[p[-1]].child if p else self.root
        return self.labels[leaf]

    def depths(self) -> dict[int, int]:
        """l(e): number of edges from the root through e, keyed by edge index."""
        out = {}
        stack = [(self.root, 0)]
        while stack:
            v, d = stack.pop()
            for k in self.out_edges(v):
                out[k] = d + 1
                stack.append((self.edges[k].child, d + 1))
        return out

    def weight(self, v: int, color: str) -> float:
        """r(v, colour); infinite when no edge of that colour leaves v."""
        for k in self.out_edges(v):
            if self.edges[k].color == color:
                return float(self.edges[k].weight)
        return math.inf

    def max_red(self) -> int:
        best = 0
        stack = [(self.root, 0)]
        while stack:
            v, reds = stack.pop()
            best = max(best, reds)
            for k in self.out_edges(v):
                stack.append((self.edges[k].child, reds + (self.edges[k].color == RED)))
        return best


def colored_weights(tree: DecisionTree) -> DecisionTree:
    """Black edges weigh G (the largest red count on a path), red edges their depth."""
    if any(e.color is None for e in tree.edges):
        raise TreeError("every edge needs a colour before weights can be assigned")
    g = max(1, tree.max_red())
    depth = tree.depths()
    edges = [
        replace(e, weight=float(g if e.color == BLACK else depth[k]))
        for k, e in enumerate(tree.edges)
    ]
    return replace(tree, edges=tuple(edges))


# -- search trees for the advice problems ------------------------------------------------


def pair_label(i1: int, i2: int, n: int) -> int:
    """Label of the output {i1, i2} (0-indexed, i1 < i2) in lexicographic order."""
    return i1 * n - i1 * (i1 + 1) // 2 + (i2 - i1 - 1)


def label_pair(label: int, n: int) -> tuple[int, int]:
    for i1 in range(n - 1):
        span = n - 1 - i1
        if label < span:
            return i1, i1 + 1 + label
        label -= span
    raise TreeError("label out of range")


class _Builder:
    def __init__(self):
        self.queries, self.labels, self.edges = [], [], []

    def vertex(self, query=None, label=None) -> int:
        self.queries.append(query)
        self.labels.append(label)
        return len(self.queries) - 1

    def edge(self, parent, child, letter, color):
        self.edges.append(Edge(parent, child, frozenset([letter]), color))


def build_search_tree(n: int, mode: str) -> DecisionTree:
    """Query bits in order; edges taken on reading a 1 are red.

    ``find-both`` stops at the second 1 and outputs the pair label;
    ``find-first`` stops at the first 1 and outputs its index. Branches no
    input of the advice support can reach end in leaves labelled 0.
    """
    if n < 2:
        raise TreeError("n must be at least 2")
    b = _Builder()
    if mode == "find-first":
        prev = None
        for i in range(n):
            v = b.vertex(query=i)
            if prev is not None:
                b.edge(prev, v, 0, BLACK)
            b.edge(v, b.vertex(label=i), 1, RED)
            prev = v
        b.edge(prev, b.vertex(label=0), 0, BLACK)
        return colored_weights(DecisionTree(n, 2, n, b.queries, b.labels, b.edges))
    if mode != "find-both":
        raise TreeError(f"unknown mode {mode!r}")
    m = n * (n - 1) // 2
    prev = None
    for i in range(n - 1):
        v = b.vertex(query=i)
        if prev is not None:
            b.edge(prev, v, 0, BLACK)
        prev = v
        # first 1 found at i: scan the rest for the second
        inner_prev, letter = v, 1
        for i2 in range(i + 1, n):
            w = b.vertex(query=i2)
            b.edge(inner_prev, w, letter, RED if letter else BLACK)
            b.edge(w, b.vertex(label=pair_label(i, i2, n)), 1, RED)
            inner_prev, letter = w, 0
        b.edge(inner_prev, b.vertex(label=0), 0, BLACK)
    b.edge(prev, b.vertex(label=0), 0, BLACK)
    return colored_weights(DecisionTree(n, 2, m, b.queries, b.labels, b.edges))


def or_tree(n: int) -> DecisionTree:
    """In-order OR: stop with label 1 at the first 1, label 0 after n zeros."""
    b = _Builder()
    prev = None
    for i in range(n):
        v = b.vertex(query=i)
        if prev is not None:
            b.edge(prev, v, 0, BLACK)
        b.edge(v, b.vertex(label=1), 1, RED)
        prev = v
    b.edge(prev, b.vertex(label=0), 0, BLACK)
    return colored_weights(DecisionTree(n, 2, 2, b.queries, b.labels, b.edges))


def random_tree(n: int, q: int, m: int, rng: np.random.Generator, max_depth: int = 3,
                leaf_prob: float = 0.3) -> DecisionTree:
    """Random coloured, weighted tree that never repeats an index on a path."""
    b = _Builder()
    weights = []

    def grow(asked: frozenset, depth: int) -> int:
        free = [j for j in range(n) if j not in asked]
        if not free or depth >= max_depth or (depth and rng.random() < leaf_prob):
            return b.vertex(label=int(rng.integers(m)))
        j = int(rng.choice(free))
        v = b.vertex(query=j)
        letters = rng.permutation(q)
        cuts = sorted(rng.choice(np.arange(1, q), size=int(rng.integers(0, q)), replace=False)) \
            if q > 1 else []
        parts = [p for p in np.split(letters, cuts) if len(p)]
        black = int(rng.integers(len(parts)))
        w_black, w_red = float(rng.uniform(0.5, 3)), float(rng.uniform(0.5, 3))
        for idx, part in enumerate(parts):
            child = grow(asked | {j}, depth + 1)
            colour = BLACK if idx == black else RED
            b.edges.append(Edge(v, child, frozenset(int(a) for a in part), colour,
                                w_black if colour == BLACK else w_red))
        return v

    grow(frozenset(), 0)
    return DecisionTree(n, q, m, b.queries, b.labels, b.edges)


# -- structured text format -----------------------------------------------------------


def tree_to_dict(t: DecisionTree) -> dict:
    return {
        "n": t.n, "q": t.q, "m": t.m, "root": t.root,
        "vertices": [
            {"query": j} if j is not None else {"label": lab}
            for j, lab in zip(t.queries, t.labels)
        ],
        "edges": [
            {"from": e.parent, "to": e.child, "letters": sorted(e.letters),
             "color": e.color, "weight": e.weight}
            for e in t.edges
        ],
    }


def tree_from_dict(d: dict) -> DecisionTree:
    verts = d["vertices"]
    return DecisionTree(
        n=int(d["n"]), q=int(d["q"]), m=int(d["m"]),
        queries=[v.get("query") for v in verts],
        labels=[v.get("label") for v in verts],
        edges=[
            Edge(int(e["from"]), int(e["to"]), frozenset(int(a) for a in e["letters"]),
                 e.get("color"), None if e.get("weight") is None else float(e["weight"]))
            for e in d["edges"]
        ],
        root=int(d.get("root", 0)),
    )


def save_tree(t: DecisionTree, path) -> None:
    Path(path).write_text(json.dumps(tree_to_dict(t), indent=1))


def load_tree(path) -> DecisionTree:
    try:
        return tree_from_dict(json.loads(Path(path).read_text()))
    except (KeyError, TypeError, ValueError) as exc:
        raise TreeError(f"malformed tree file {path}: {exc}") from exc


# -- compiler --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TreeVectorSet(VectorSetBase):
    """Factored families from a decision tree; see the module docstring."""

    vert: np.ndarray = None    # |X| x n, vertex querying j on the path, -1 if none
    child: np.ndarray = None   # |X| x n, the vertex the path moves to
    label: np.ndarray = None   # |X|, output label
    ucoef: np.ndarray = None   # |X| x n x 2 colour coefficients (red, black)
    vcoef: np.ndarray = None
    n_vertices: int = 0
    m: int = 0

    def _coef(self, kind):
        return self.ucoef if kind == "u" else self.vcoef

    def _block(self, a, b, j, idx):
        coef = self._coef(a)[idx, j, :].conj() @ self._coef(b)[idx, j, :].T
        child = self.child[idx, j]
        label = self.label[idx]
        ch = (child[:, None] == child[None, :]).astype(float)
        lab = (label[:, None] == label[None, :]).astype(float)
        if a == b:
            return coef * (1 + ch) * (1 + lab)
        return coef * (1 - ch) * (1 - lab)

    def _raw_gram_groups(self, a, b, j):
        # vectors at index j only overlap when the paths query j at the same vertex
        vert = self.vert[:, j]
        order = np.argsort(vert, kind="stable")
        keys, starts = np.unique(vert[order], return_index=True)
        bounds = list(starts[1:]) + [len(order)]
        return [
            (order[lo:hi], self._block(a, b, j, order[lo:hi]))
            for key, lo, hi in zip(keys, starts, bounds) if key >= 0
        ]

    def _raw_gram(self, a, b, j):
        out = np.zeros((self.size, self.size), dtype=np.result_type(self.ucoef, self.vcoef))
        for idx, blk in self._raw_gram_groups(a, b, j):
            out[np.ix_(idx, idx)] = blk
        return out

    def _raw_norms2(self, kind):
        c = self._coef(kind)
        return 4.0 * np.sum(np.abs(c) ** 2, axis=2) * (self.vert >= 0)

    def materialize(self) -> ConvertingVectorSet:
        """Explicit vectors in C^|V| (x) C^2 (x) C^(|V|+1) (x) C^(m+1)."""
        nv, m = self.n_vertices, self.m
        d = nv * 2 * (nv + 1) * (m + 1)
        if self.size * self.n * d > 5e7:
            raise TreeError("tree too large to materialise")
        u = np.zeros((self.size, self.n, d))
        v = np.zeros_like(u)
        for y in range(self.size):
            lab_plus = np.zeros(m + 1)
            lab_plus[0] = 1.0
            lab_plus[self.label[y] + 1] = 1.0
            lab_minus = lab_plus.copy()
            lab_minus[self.label[y] + 1] = -1.0
            for j in range(self.n):
                if self.vert[y, j] < 0:
                    continue
                ev = np.zeros(nv)
                ev[self.vert[y, j]] = 1.0
                ch_plus = np.zeros(nv + 1)
                ch_plus[0] = 1.0
                ch_plus[self.child[y, j] + 1] = 1.0
                ch_minus = ch_plus.copy()
                ch_minus[self.child[y, j] + 1] = -1.0
                v[y, j] = np.kron(np.kron(np.kron(ev, self.vcoef[y, j]), ch_plus), lab_plus)
                u[y, j] = np.kron(np.kron(np.kron(ev, self.ucoef[y, j]), ch_minus), lab_minus)
        out = ConvertingVectorSet(
            n=self.n, q=self.q, domain=self.domain, rho=self.rho, sigma=self.sigma,
            swap=self.swap, scale_u=self.scale_u, scale_v=self.scale_v, u=u, v=v,
        )
        return out


def tree_to_cvs(tree: DecisionTree, domain: Sequence, labels: Sequence[int] | None = None,
                check: bool = True) -> TreeVectorSet:
    """Converting vector set from |0> to |f(x)> built from a weighted, coloured tree.

    States live in C^(m+1): index 0 is the start state and label l sits at l+1.
    """
    if any(e.color is None or e.weight is None for e in tree.edges):
        raise TreeError("tree needs colours and weights on every edge")
    domain = [tuple(int(c) for c in x) for x in domain]
    size, n = len(domain), tree.n
    vert = -np.ones((size, n), dtype=int)
    child = np.zeros((size, n), dtype=int)
    label = np.zeros(size, dtype=int)
    ucoef = np.zeros((size, n, 2))
    vcoef = np.zeros((size, n, 2))
    for y, x in enumerate(domain):
        fx = tree.evaluate(x)
        if labels is not None and fx != int(labels[y]):
            raise TreeError(f"tree outputs {fx} on {x}, expected {labels[y]}")
        label[y] = fx
        for k in tree.path(x):
            e = tree.edges[k]
            j = tree.queries[e.parent]
            vert[y, j], child[y, j] = e.parent, e.child
            vcoef[y, j, _COLOR_INDEX[e.color]] = math.sqrt(e.weight)
            r_red = tree.weight(e.parent, RED)
            r_black = tree.weight(e.parent, BLACK)
            inv_red = 0.0 if math.isinf(r_red) else 1 / math.sqrt(r_red)
            ucoef[y, j, 0] = inv_red
            if e.color == RED:
                ucoef[y, j, 1] = 1 / math.sqrt(r_black)
    m = tree.m
    rho = np.zeros((size, m + 1))
    rho[:, 0] = 1.0
    sigma = np.zeros((size, m + 1))
    sigma[np.arange(size), label + 1] = 1.0
    out = TreeVectorSet(
        n=n, q=tree.q, domain=tuple(domain), rho=rho, sigma=sigma,
        vert=vert, child=child, label=label, ucoef=ucoef, vcoef=vcoef,
        n_vertices=tree.n_vertices, m=m,
    )
    return validate(out) if check else out


def path_witness_bounds(tree: DecisionTree, x) -> tuple[float, float]:
    """Right-hand sides of the positive and negative witness bounds on the path of x."""
    plus = minus = 0.0
    for k in tree.path(x):
        e = tree.edges[k]
        plus += 4 * e.weight
        minus += 4 / tree.weight(e.parent, RED)
        if e.color == RED:
            minus += 4 / tree.weight(e.parent, BLACK)
    return plus, minus
