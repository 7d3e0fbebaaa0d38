"""State-dependent interaction graph: open/border edge sets and Laplacians.

Agents i and j interact when |x_i - x_j| < 1 (an *open* edge).  Pairs at
distance exactly 1 (within a tolerance band) form the *border* set, where
the vector field is discontinuous.  The closed graph adds border edges to
the open ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BetaMismatchError, InvalidStateError

# An opinion state is a plain 1-D float vector, one entry per agent.
OpinionState = np.ndarray

# Unordered agent pair, stored as (i, j) with i < j, 0-based.
Edge = tuple[int, int]

# Map border edge -> weight in [0, 1].
EdgeWeightAssignment = dict[Edge, float]

DEFAULT_TOL = 1e-9


def as_state(x) -> OpinionState:
    """Validate and normalize an opinion vector."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1 or arr.size < 1:
        raise InvalidStateError(f"opinion state must be a nonempty 1-D vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidStateError("opinion state contains non-finite entries")
    return arr


def edge(i: int, j: int) -> Edge:
    """Normalize a pair to (min, max) order."""
    if i == j:
        raise ValueError(f"self-loop ({i},{i}) is not an edge")
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class InteractionGraph:
    """Open and border edge sets of the interaction graph at a state."""

    n: int
    open_edges: frozenset[Edge]
    border_edges: frozenset[Edge]

    def closed_edges(self) -> frozenset[Edge]:
        return self.open_edges | self.border_edges


def gap_matrix(x: OpinionState) -> np.ndarray:
    """All pairwise |x_i - x_j| as a symmetric matrix."""
    return np.abs(x[:, None] - x[None, :])


def build_graph(x, tol: float = DEFAULT_TOL) -> InteractionGraph:
    """Classify every pair as open (< 1 - tol), border (within tol of 1) or absent.

    tol is an absolute band half-width around gap = 1; exact threshold
    comparisons are not realizable in floating point.
    """
    x = as_state(x)
    if tol < 0:
        raise ValueError("tol must be >= 0")
    n = x.size
    gaps = gap_matrix(x)
    iu, ju = np.triu_indices(n, k=1)
    g = gaps[iu, ju]
    border = np.abs(g - 1.0) <= tol
    open_ = (g < 1.0 - tol) & ~border
    open_edges = frozenset((int(i), int(j)) for i, j in zip(iu[open_], ju[open_]))
    border_edges = frozenset((int(i), int(j)) for i, j in zip(iu[border], ju[border]))
    return InteractionGraph(n=n, open_edges=open_edges, border_edges=border_edges)


def _check_beta(g: InteractionGraph, beta: EdgeWeightAssignment | None) -> EdgeWeightAssignment:
    beta = beta or {}
    for e, w in beta.items():
        e = edge(*e)
        if e not in g.border_edges:
            raise BetaMismatchError(f"beta key {e} is not a border edge of the graph")
        if not (0.0 <= w <= 1.0):
            raise BetaMismatchError(f"beta[{e}] = {w} outside [0, 1]")
    return {edge(*e): float(w) for e, w in beta.items()}


def weight_matrix(g: InteractionGraph, beta: EdgeWeightAssignment | None = None) -> np.ndarray:
    """Symmetric edge-weight matrix: 1 on open edges, beta on border edges.

    Border edges missing from beta get weight 0 (edge switched off).
    """
    beta = _check_beta(g, beta)
    w = np.zeros((g.n, g.n))
    for i, j in g.open_edges:
        w[i, j] = w[j, i] = 1.0
    for e in g.border_edges:
        b = beta.get(e, 0.0)
        i, j = e
        w[i, j] = w[j, i] = b
    return w


def laplacian(g: InteractionGraph, beta: EdgeWeightAssignment | None = None) -> np.ndarray:
    """Laplacian of the weighted graph: degree minus adjacency, zero row sums."""
    w = weight_matrix(g, beta)
    return np.diag(w.sum(axis=1)) - w


def connected_components(g: InteractionGraph, closed: bool = False) -> list[set[int]]:
    """Partition agents by path-connectivity.

    closed=True also walks border edges (the closed graph); closed=False
    uses open edges only.
    """
    edges = g.closed_edges() if closed else g.open_edges
    adj: list[list[int]] = [[] for _ in range(g.n)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = [False] * g.n
    parts: list[set[int]] = []
    for root in range(g.n):
        if seen[root]:
            continue
        comp = {root}
        seen[root] = True
        stack = [root]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    comp.add(v)
                    stack.append(v)
        parts.append(comp)
    return parts
