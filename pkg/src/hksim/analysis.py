"""Equilibrium membership, cluster extraction, limit prediction, trajectory audits.

A state is an equilibrium of the flow exactly when every agent pair is
either equal or at distance >= 1; `f_residual` measures the worst pairwise
violation of that condition and is zero precisely on the equilibrium set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components as _cc

from .graph import OpinionState, as_state, gap_matrix


def f_residual(x) -> float:
    """Worst pairwise distance to the equilibrium condition.

    Per pair: min(|gap|, max(0, 1 - |gap|)); the max over pairs is zero
    iff every pair is equal or separated by at least 1.
    """
    x = as_state(x)
    if x.size == 1:
        return 0.0
    g = gap_matrix(x)
    r = np.minimum(g, np.maximum(0.0, 1.0 - g))
    return float(np.max(r))


def is_equilibrium(x, tol: float = 1e-9, strong: bool = False) -> bool:
    """Equilibrium membership; strong additionally requires strict gaps > 1.

    Weak: f_residual(x) <= tol.  Strong: every pair differing by more than
    tol must be separated by at least 1 + tol (strict-gap subset, which is
    strongly invariant).
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    x = as_state(x)
    if f_residual(x) > tol:
        return False
    if not strong:
        return True
    g = gap_matrix(x)
    iu, ju = np.triu_indices(x.size, k=1)
    gv = g[iu, ju]
    nonequal = gv > tol
    return bool(np.all(gv[nonequal] >= 1.0 + tol))


@dataclass
class ClusterPartition:
    """Agents grouped by (near-)equal opinion value."""

    blocks: list[list[int]]
    values: np.ndarray
    sizes: list[int]
    certified: bool  # distinct values pairwise separated by >= 1 - merge_tol
    ambiguous: bool  # some chain-merged block spreads wider than 2 * merge_tol

    @property
    def k(self) -> int:
        return len(self.blocks)


def extract_clusters(x, merge_tol: float = 1e-6) -> ClusterPartition:
    """Group agents whose opinions chain together within merge_tol.

    Blocks are the transitive closure of |x_i - x_j| <= merge_tol; block
    values are means.  The partition is flagged ambiguous when closure
    merged points spread out beyond 2 * merge_tol.
    """
    if not (0 <= merge_tol < 0.5):
        raise ValueError("merge_tol must be in [0, 0.5)")
    x = as_state(x)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    blocks: list[list[int]] = [[int(order[0])]]
    for prev, idx in zip(range(x.size - 1), range(1, x.size)):
        if xs[idx] - xs[prev] <= merge_tol:
            blocks[-1].append(int(order[idx]))
        else:
            blocks.append([int(order[idx])])
    values = np.array([float(np.mean(x[b])) for b in blocks])
    sizes = [len(b) for b in blocks]
    ambiguous = any(float(np.ptp(x[b])) > 2 * merge_tol for b in blocks)
    certified = bool(np.all(np.diff(values) >= 1.0 - merge_tol)) if len(values) > 1 else True
    return ClusterPartition(blocks=blocks, values=values, sizes=sizes, certified=certified, ambiguous=ambiguous)


def predict_limit(x, sizes, labels=None) -> np.ndarray:
    """Limit cluster values for sorted groups with given disconnection labels.

    ``sizes`` lists group cardinalities left to right along the sorted
    state; ``labels`` gives one entry per boundary between consecutive
    groups: "finite" (groups disconnect at the given state's time, each
    side settles at its mean) or "asymptotic" (the boundary gap tends to
    the unit threshold, never disconnecting).  A maximal run of groups
    joined by asymptotic boundaries shares one average constraint with
    consecutive limit values exactly 1 apart, which pins every value:
    with run sizes a_1..a_r, total A and mean m, the leftmost value is
    m - (sum_i a_i (i-1)) / A.
    """
    x = as_state(x)
    sizes = [int(s) for s in sizes]
    if any(s <= 0 for s in sizes) or sum(sizes) != x.size:
        raise ValueError(f"group sizes {sizes} inconsistent with {x.size} agents")
    k = len(sizes)
    if labels is None:
        labels = ["finite"] * (k - 1)
    labels = list(labels)
    if len(labels) != k - 1:
        raise ValueError(f"need {k - 1} boundary labels, got {len(labels)}")
    if any(l not in ("finite", "asymptotic") for l in labels):
        raise ValueError("labels must be 'finite' or 'asymptotic'")
    xs = np.sort(x)
    bounds = np.cumsum([0] + sizes)
    groups = [xs[bounds[i]:bounds[i + 1]] for i in range(k)]

    values = np.empty(k)
    start = 0
    while start < k:
        stop = start
        while stop < k - 1 and labels[stop] == "asymptotic":
            stop += 1
        run_sizes = sizes[start:stop + 1]
        members = np.concatenate(groups[start:stop + 1])
        m = float(np.mean(members))
        total = sum(run_sizes)
        offset = sum(a * i for i, a in enumerate(run_sizes))
        v0 = m - offset / total
        for i in range(len(run_sizes)):
            values[start + i] = v0 + i
        start = stop + 1
    return values


@dataclass
class InvariantReport:
    """Worst-case drift of the conserved/monotone quantities over a run."""

    max_average_drift: float
    max_hull_expansion: float
    order_violations: int
    max_lyapunov_increase: float
    component_count_decreases: int

    def clean(
        self,
        avg_tol: float = 1e-10,
        hull_tol: float = 1e-9,
        lyap_tol: float = 1e-9,
    ) -> bool:
        return (
            self.max_average_drift <= avg_tol
            and self.max_hull_expansion <= hull_tol
            and self.order_violations == 0
            and self.max_lyapunov_increase <= lyap_tol
            and self.component_count_decreases == 0
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "max_average_drift": self.max_average_drift,
                "max_hull_expansion": self.max_hull_expansion,
                "order_violations": self.order_violations,
                "max_lyapunov_increase": self.max_lyapunov_increase,
                "component_count_decreases": self.component_count_decreases,
            }
        )


def closed_component_count(x, band: float = 1e-7) -> int:
    """Number of connected components counting pairs within ``band`` of the threshold."""
    x = as_state(x)
    adj = gap_matrix(x) <= 1.0 + band
    np.fill_diagonal(adj, False)
    n, _ = _cc(adj, directed=False)
    return int(n)


def monitor_invariants(traj, order_margin: float = 1e-9) -> InvariantReport:
    """Audit a trajectory for violations of the model's conservation laws.

    Checks, between consecutive samples: average preservation, hull
    contractivity (min nondecreasing / max nonincreasing), strict order
    preservation beyond ``order_margin``, monotone decrease of the
    quadratic Lyapunov function, and monotone growth of the closed-graph
    component count.
    """
    samples = traj.samples
    if not samples:
        raise ValueError("trajectory has no samples")
    xs = np.stack([as_state(s) for _, s in samples])  # (T, N)
    t_count = xs.shape[0]

    means = xs.mean(axis=1)
    max_avg = float(np.max(np.abs(means - means[0])))

    max_hull = 0.0
    order_viol = 0
    max_lyap = 0.0
    if t_count > 1:
        mins, maxs = xs.min(axis=1), xs.max(axis=1)
        max_hull = float(max(np.max(np.diff(maxs)), np.max(-np.diff(mins)), 0.0))
        diff = xs[:, :, None] - xs[:, None, :]  # x_i - x_j per sample
        below = diff[:-1] < -order_margin
        flipped = diff[1:] >= 0.0
        order_viol = int(np.count_nonzero(below & flipped))
        v = 0.5 * np.einsum("ti,ti->t", xs, xs)
        max_lyap = float(max(np.max(np.diff(v)), 0.0))

    # component count only changes when the closed adjacency pattern does
    comp_dec = 0
    prev_adj = None
    prev_comp = None
    for x in xs:
        adj = gap_matrix(x) <= 1.0 + 1e-7
        if prev_adj is not None and np.array_equal(adj, prev_adj):
            continue
        work = adj.copy()
        np.fill_diagonal(work, False)
        comp, _ = _cc(work, directed=False)
        if prev_comp is not None and comp < prev_comp:
            comp_dec += 1
        prev_adj, prev_comp = adj, int(comp)
    return InvariantReport(
        max_average_drift=max_avg,
        max_hull_expansion=max_hull,
        order_violations=order_viol,
        max_lyapunov_increase=max_lyap,
        component_count_decreases=comp_dec,
    )
