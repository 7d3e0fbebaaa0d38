"""Shared test helpers and the acceptance-criteria summary hook."""

import numpy as np

from hksim.graph import build_graph


def make_bordered_state(rng, n, k_border, low=0.0, high=4.0, max_tries=200):
    """Random state with between 1 and k_border pairs at exactly unit distance."""
    for _ in range(max_tries):
        x = rng.uniform(low, high, size=n)
        for _ in range(k_border):
            i, j = rng.choice(n, size=2, replace=False)
            x[j] = x[i] + rng.choice([-1.0, 1.0])
        g = build_graph(x)  # library default tolerance, as the operations use
        if 1 <= len(g.border_edges) <= k_border:
            return x, g
    raise RuntimeError("could not build a bordered state")


def convex_hull_contains(points, v, tol=1e-9):
    """Membership of v in the convex hull of the point list (nnls feasibility).

    Independent of the package's box-parametrized test: solves for simplex
    weights over the explicit vertex list.
    """
    from scipy.optimize import nnls

    pts = np.asarray(points, dtype=float)
    a = np.vstack([pts.T, np.ones(len(pts))])
    b = np.concatenate([np.asarray(v, dtype=float), [1.0]])
    w, resid = nnls(a, b)
    return resid <= tol


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from test_acceptance import CRITERION_LINES
    except ImportError:
        return
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
