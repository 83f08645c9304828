"""Concrete span programs: OR and st-connectivity."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..numerics import SubspaceBasis
from ..spanprog import SpanProgram


class GraphError(ValueError):
    pass


def build_or_program(n: int) -> SpanProgram:
    """V = C, tau = 1, one unit generator per index available when x_i = 1."""
    if n < 1:
        raise ValueError("n must be at least 1")
    blocks = [
        [SubspaceBasis.empty(n), SubspaceBasis.coordinates(n, [i])] for i in range(n)
    ]
    return SpanProgram(
        n=n, q=2, a=np.ones((1, n)), tau=np.ones(1), blocks=blocks,
        h_true=SubspaceBasis.empty(n), h_false=SubspaceBasis.empty(n),
    )


@dataclass(frozen=True)
class Graph:
    n_vertices: int
    edges: tuple  # (u, v) pairs; the edge index is the input position
    s: int
    t: int

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(u), int(v)) for u, v in self.edges))
        if self.s == self.t:
            raise GraphError("s and t must differ")
        for u, v in self.edges:
            if u == v:
                raise GraphError(f"self-loop at vertex {u}")
            if not (0 <= u < self.n_vertices and 0 <= v < self.n_vertices):
                raise GraphError(f"edge ({u}, {v}) leaves the vertex range")
        if not (0 <= self.s < self.n_vertices and 0 <= self.t < self.n_vertices):
            raise GraphError("s or t outside the vertex range")

    @property
    def n_edges(self) -> int:
        return len(self.edges)


def load_edge_list(path) -> Graph:
    """First line ``n s t``, then one ``u v`` pair per line, 0-indexed."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines or len(lines[0]) != 3:
        raise GraphError(f"{path}: header must read 'n s t'")
    try:
        n, s, t = (int(v) for v in lines[0])
        edges = [(int(a), int(b)) for a, b in lines[1:]]
    except ValueError as exc:
        raise GraphError(f"{path}: {exc}") from exc
    return Graph(n, tuple(edges), s, t)


def incidence(g: Graph) -> np.ndarray:
    a = np.zeros((g.n_vertices, g.n_edges))
    for k, (u, v) in enumerate(g.edges):
        a[u, k] = 1.0
        a[v, k] = -1.0
    return a


def build_st_connectivity(g: Graph) -> SpanProgram:
    """Edge k is available when x_k = 1; A e_k = e_u - e_v and tau = e_s - e_t."""
    m = g.n_edges
    tau = np.zeros(g.n_vertices)
    tau[g.s], tau[g.t] = 1.0, -1.0
    blocks = [[SubspaceBasis.empty(m), SubspaceBasis.coordinates(m, [k])] for k in range(m)]
    return SpanProgram(
        n=m, q=2, a=incidence(g), tau=tau, blocks=blocks,
        h_true=SubspaceBasis.empty(m), h_false=SubspaceBasis.empty(m),
    )


def effective_resistance(g: Graph, x) -> float:
    """R_st of the subgraph of present edges via the Laplacian pseudo-inverse; inf if cut."""
    keep = [k for k, b in enumerate(x) if int(b)]
    a = incidence(g)[:, keep]
    lap = a @ a.T
    tau = np.zeros(g.n_vertices)
    tau[g.s], tau[g.t] = 1.0, -1.0
    pot = np.linalg.pinv(lap) @ tau
    if np.linalg.norm(lap @ pot - tau) > 1e-8:
        return float("inf")
    return float(tau @ pot)
