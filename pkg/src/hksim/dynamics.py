"""Discontinuous vector field and its convexification at border configurations.

Away from border pairs the velocity is the state-dependent Laplacian flow
-L(x)x.  At a border pair the set of admissible velocities is the convex
hull over all on/off choices for the border edges.  Because the field is
affine in each border edge's indicator, that hull equals the image of the
box [0,1]^{border} under per-edge weights beta, which is the coordinate
used throughout this package; subset enumeration is kept as a brute-force
oracle (`hull_vertices`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import lsq_linear

from .errors import DegenerateSurfaceError, HullSizeError
from .graph import (
    Edge,
    EdgeWeightAssignment,
    InteractionGraph,
    OpinionState,
    as_state,
    build_graph,
    edge,
    laplacian,
    weight_matrix,
)

HULL_CAP = 16

TRANSVERSAL = "transversal_crossing"
SLIDING = "sliding"
BRANCHING = "branching"

# Rates within this of zero count as "on the surface" when classifying.
_ZERO_RATE_TOL = 1e-10


@dataclass(frozen=True)
class SurfaceClass:
    """Classification of one discontinuity surface (one border edge).

    kind is one of {transversal_crossing, sliding, branching}.  For a
    sliding surface, ``beta`` holds the stationarity weight; ``rate_off``
    and ``rate_on`` are the gap growth rates with the edge fully off/on
    (all other active edges held at their jointly solved weights).
    """

    kind: str
    beta: float | None
    rate_off: float
    rate_on: float


def vector_field(x, beta: EdgeWeightAssignment | None = None, graph: InteractionGraph | None = None) -> np.ndarray:
    """Velocity -L(x)x with border edges weighted by beta (missing keys = 0).

    Component i equals sum over open neighbors j of (x_j - x_i) plus
    sum over border neighbors of beta_ij (x_j - x_i); components sum to
    zero by symmetry of the interaction graph.
    """
    x = as_state(x)
    g = graph if graph is not None else build_graph(x)
    return -(laplacian(g, beta) @ x)


def hull_vertices(x, cap: int = HULL_CAP) -> list[np.ndarray]:
    """Velocities for every on/off subset of border edges (2^{|border|} of them).

    Brute-force oracle for the beta-box parametrization; refuses when the
    border set exceeds ``cap``.
    """
    x = as_state(x)
    g = build_graph(x)
    border = sorted(g.border_edges)
    if len(border) > cap:
        raise HullSizeError(f"{len(border)} border edges exceed enumeration cap {cap}")
    out = []
    for mask in range(2 ** len(border)):
        beta = {border[b]: 1.0 for b in range(len(border)) if mask >> b & 1}
        out.append(vector_field(x, beta, graph=g))
    return out


def in_hull(x, v, cap: int = HULL_CAP, tol: float = 1e-9) -> bool:
    """True iff velocity v is attainable, i.e. v = -L^beta(x) x for some beta in the box.

    Solved as a bounded least-squares feasibility problem in beta, which is
    valid because the hull is the affine image of the beta hypercube.
    """
    x = as_state(x)
    v = np.asarray(v, dtype=float)
    g = build_graph(x)
    border = sorted(g.border_edges)
    if len(border) > cap:
        raise HullSizeError(f"{len(border)} border edges exceed cap {cap}")
    v0 = vector_field(x, {}, graph=g)
    if not border:
        return bool(np.linalg.norm(v - v0, np.inf) <= tol)
    cols = np.zeros((x.size, len(border)))
    for k, (i, j) in enumerate(border):
        cols[i, k] = x[j] - x[i]
        cols[j, k] = x[i] - x[j]
    res = lsq_linear(cols, v - v0, bounds=(0.0, 1.0))
    return bool(np.linalg.norm(cols @ res.x - (v - v0), np.inf) <= tol)


def _border_sign(x: OpinionState, e: Edge) -> float:
    i, j = e
    return 1.0 if x[j] >= x[i] else -1.0


def surface_system(x, active: list[Edge], background_weights: np.ndarray | None = None):
    """Linear system for the gap rates of the active border pairs.

    Returns (M, c) with rate_e(beta) = c_e + (M beta)_e, where rate_e is
    d|x_j - x_i|/dt for active pair e.  M has -2 on the diagonal; off
    diagonals are +/-1 for active pairs sharing an agent.  background_weights
    optionally replaces the default open-edge weight matrix (used by the
    integrator, whose edge statuses override plain gap classification).
    """
    x = as_state(x)
    active = [edge(*e) for e in active]
    k = len(active)
    if background_weights is None:
        w = weight_matrix(build_graph(x), None)
    else:
        w = background_weights
    v0 = w @ x - w.sum(axis=1) * x
    signs = [_border_sign(x, e) for e in active]
    c = np.array([s * (v0[j] - v0[i]) for (i, j), s in zip(active, signs)])
    m = np.zeros((k, k))
    for a, ((i, j), s) in enumerate(zip(active, signs)):
        for b, (p, q) in enumerate(active):
            eff = np.zeros(2)  # contribution of edge b's weight to (v_j, v_i)
            if j == p:
                eff[0] += x[q] - x[p]
            elif j == q:
                eff[0] += x[p] - x[q]
            if i == p:
                eff[1] += x[q] - x[p]
            elif i == q:
                eff[1] += x[p] - x[q]
            m[a, b] = s * (eff[0] - eff[1])
    return m, c


def solve_box_stationarity(m: np.ndarray, c: np.ndarray, iters: int = 500):
    """Stationarity weights for the stacked surfaces, clamped to [0,1]^k.

    Solves rate(beta) = c + M beta = 0 when the unconstrained solution fits
    the box; otherwise runs a projected coordinate iteration (each diagonal
    entry is -2, so the per-coordinate Newton step is rate/2).  Returns
    (beta, rates_at_beta).
    """
    k = c.size
    if k == 0:
        return np.zeros(0), np.zeros(0)
    try:
        beta = np.linalg.solve(m, -c)
    except np.linalg.LinAlgError:
        beta, *_ = np.linalg.lstsq(m, -c, rcond=None)
        if np.linalg.norm(m @ beta + c, np.inf) > 1e-8:
            raise DegenerateSurfaceError("singular surface-normal system with no stationary point")
    if np.all((beta >= 0.0) & (beta <= 1.0)):
        return beta, m @ beta + c
    beta = np.clip(beta, 0.0, 1.0)
    for _ in range(iters):
        prev = beta.copy()
        for a in range(k):
            r = c[a] + m[a] @ beta
            beta[a] = min(1.0, max(0.0, beta[a] + r / 2.0))
        if np.max(np.abs(beta - prev)) < 1e-15:
            break
    return beta, m @ beta + c


def classify_edge(beta: float, rate: float, rate_off: float, rate_on: float, tol: float = _ZERO_RATE_TOL) -> str:
    """Surface class from the clamped stationarity weight and one-sided rates."""
    if tol < beta < 1.0 - tol and abs(rate) <= tol:
        return SLIDING
    if abs(rate_off) <= tol or abs(rate_on) <= tol:
        # stationary exactly at an on/off extreme: several continuations exist
        return BRANCHING
    if rate_off > 0.0 and rate_on < 0.0:
        # strictly opposite one-sided rates but clamped stationarity
        # (multi-edge interference): a zero lies inside, keep sliding label
        return SLIDING
    return TRANSVERSAL


def sliding_weights(x, active, tol: float = _ZERO_RATE_TOL, background_weights: np.ndarray | None = None) -> dict[Edge, SurfaceClass]:
    """Classify the active discontinuity surfaces and solve for sliding weights.

    Solves d|x_j - x_i|/dt = 0 jointly over the active border pairs,
    restricted to the weight box.  Edges whose solved weight is strictly
    interior slide with that weight; edges pinned at 0/1 are classified by
    the signs of their one-sided gap rates (zero at an extreme means both
    the stay and the cross continuation exist: branching).
    """
    x = as_state(x)
    active = [edge(*e) for e in active]
    g = build_graph(x, tol=1e-7)
    for e in active:
        if e not in g.border_edges:
            raise ValueError(f"active pair {e} is not a border edge")
    m, c = surface_system(x, active, background_weights=background_weights)
    beta, rates = solve_box_stationarity(m, c)
    out: dict[Edge, SurfaceClass] = {}
    for a, e in enumerate(active):
        off = beta.copy()
        off[a] = 0.0
        on = beta.copy()
        on[a] = 1.0
        rate_off = float(c[a] + m[a] @ off)
        rate_on = float(c[a] + m[a] @ on)
        kind = classify_edge(float(beta[a]), float(rates[a]), rate_off, rate_on, tol=tol)
        out[e] = SurfaceClass(
            kind=kind,
            beta=float(beta[a]) if kind == SLIDING else None,
            rate_off=rate_off,
            rate_on=rate_on,
        )
    return out
