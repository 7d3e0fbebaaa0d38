"""Cluster robustness against a single perturbing agent.

An equilibrium is robust when no placement of one extra agent can make two
clusters merge.  For an adjacent cluster pair with sizes n_A <= n_B at
distance d, robustness holds iff d exceeds a threshold: 2 for equal sizes,
otherwise (1 + n_A/n_B)(1 + 1/(n_A+n_B)) e^{-t*} with t* <= 0 the root of
a two-exponential equation.  The threshold comes from a reduced planar
system in (x, y) = (agent-to-A distance, B-to-agent distance): the merge
happens exactly when the reduced trajectory converges to the origin, and
the set of such initial conditions is the unit square cut off by an
explicit solution curve of the linear part.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import analysis
from .graph import as_state
from .integrator import SolverConfig, integrate


def _tstar_lhs(na: int, nb: int, u: float) -> float:
    # u = e^{-t} >= 1
    s = na + nb
    return (u ** (s + 1)) / s + (na / nb) * (1.0 + 1.0 / s) * u


def solve_tstar(na: int, nb: int, residual_tol: float = 1e-12) -> float:
    """Root t* <= 0 of the threshold equation, by bisection on e^{-t}.

    The left-hand side is strictly increasing in -t, so the root is unique;
    it lies in [-log(na+nb)/(na+nb+1), 0] because the first term alone may
    not exceed 1.
    """
    na, nb = int(na), int(nb)
    if not (1 <= na < nb):
        raise ValueError(f"need 1 <= n_A < n_B, got ({na}, {nb})")
    if nb == na + 1:
        return 0.0  # the left-hand side equals 1 exactly at t = 0
    s = na + nb
    lo, hi = 1.0, s ** (1.0 / (s + 1))
    if _tstar_lhs(na, nb, lo) >= 1.0:
        return 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # bracket at machine resolution
        if _tstar_lhs(na, nb, mid) < 1.0:
            lo = mid
        else:
            hi = mid
    u = 0.5 * (lo + hi)
    # one Newton polish in u wipes out the remaining bracket-midpoint error
    d = ((s + 1) * u**s) / s + (na / nb) * (1.0 + 1.0 / s)
    u -= (_tstar_lhs(na, nb, u) - 1.0) / d
    return -math.log(u)


def threshold(na: int, nb: int) -> float:
    """Critical cluster distance d-bar; gaps above it resist any single perturber."""
    na, nb = int(na), int(nb)
    if na <= 0 or nb <= 0:
        raise ValueError("cluster sizes must be positive")
    if na > nb:
        na, nb = nb, na
    if na == nb:
        return 2.0
    t = solve_tstar(na, nb)
    s = na + nb
    return (1.0 + na / nb) * (1.0 + 1.0 / s) * math.exp(-t)


def asymptotic_threshold(na: int, nb: int) -> float:
    """Large-population limit of the threshold: 1 + n_A/n_B."""
    na, nb = int(na), int(nb)
    if na <= 0 or nb <= 0:
        raise ValueError("cluster sizes must be positive")
    if na > nb:
        na, nb = nb, na
    return 1.0 + na / nb


@dataclass
class PairRecord:
    n_a: int
    n_b: int
    gap: float
    t_star: float | None
    threshold: float
    robust: bool
    verdict: str  # robust | not_robust | boundary


@dataclass
class RobustnessReport:
    pairs: list[PairRecord]
    overall: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "pairs": [
                    {
                        "nA": p.n_a,
                        "nB": p.n_b,
                        "gap": p.gap,
                        "tstar": p.t_star,
                        "threshold": p.threshold,
                        "robust": p.robust,
                        "verdict": p.verdict,
                    }
                    for p in self.pairs
                ],
                "overall": self.overall,
            }
        )


def is_robust(x_star, tol: float = 1e-9, merge_tol: float = 1e-6) -> RobustnessReport:
    """Check every adjacent cluster pair of an equilibrium against its threshold.

    The input must be an equilibrium within tol.  Gaps within tol of the
    threshold are reported as "boundary" (the theory uses a strict
    inequality and does not classify the exact threshold).
    """
    x = as_state(x_star)
    if not analysis.is_equilibrium(x, tol=max(tol, merge_tol)):
        raise ValueError(f"input is not an equilibrium within {max(tol, merge_tol)}: residual={analysis.f_residual(x)}")
    part = analysis.extract_clusters(x, merge_tol=merge_tol)
    order = np.argsort(part.values)
    records: list[PairRecord] = []
    for a, b in zip(order[:-1], order[1:]):
        size_a, size_b = part.sizes[a], part.sizes[b]
        gap = float(abs(part.values[b] - part.values[a]))
        na, nb = min(size_a, size_b), max(size_a, size_b)
        d_bar = threshold(na, nb)
        t_star = solve_tstar(na, nb) if na < nb else None
        if abs(gap - d_bar) <= tol:
            verdict = "boundary"
            robust = False
        elif gap > d_bar + tol:
            verdict = "robust"
            robust = True
        else:
            verdict = "not_robust"
            robust = False
        records.append(
            PairRecord(n_a=na, n_b=nb, gap=gap, t_star=t_star, threshold=d_bar, robust=robust, verdict=verdict)
        )
    return RobustnessReport(pairs=records, overall=all(r.robust for r in records))


# -- reduced planar system ---------------------------------------------------


def _s(tau: float) -> float:
    return 1.0 if abs(tau) < 1.0 else 0.0


def reduced_field(state, na: int, nb: int) -> tuple[float, float]:
    """Planar field for (x, y) = (perturber-to-A, B-to-perturber) distances."""
    x, y = float(state[0]), float(state[1])
    sx, sy = _s(x), _s(y)
    dx = -(na + 1) * sx * x + nb * sy * y
    dy = na * sx * x - (nb + 1) * sy * y
    return dx, dy


def boundary_curve(na: int, nb: int, t: float) -> tuple[float, float]:
    """Point of the region-bounding solution curve at parameter t in [t*, 0].

    The curve is the solution of the linear part passing through
    (1, (n_A+1)/n_B) at t = 0, written with decay exponents 1 and
    n_A+n_B+1; its second component reaches 1 exactly at t = t*.
    """
    na, nb = int(na), int(nb)
    if not (1 <= na < nb):
        raise ValueError(f"need 1 <= n_A < n_B, got ({na}, {nb})")
    t_star = solve_tstar(na, nb)
    if not (t_star - 1e-12 <= t <= 1e-12):
        raise ValueError(f"t={t} outside [t*, 0] = [{t_star}, 0]")
    s = na + nb
    e_fast = math.exp(-(s + 1) * t)
    e_slow = math.exp(-t)
    xc = -e_fast / s + (1.0 + 1.0 / s) * e_slow
    yc = e_fast / s + (na / nb) * (1.0 + 1.0 / s) * e_slow
    return xc, yc


def region_contains(state, na: int, nb: int) -> bool:
    """Membership in the merge basin of the reduced system.

    Inside the open unit square, points below the corner anchor
    y0 = (n_A+1)/n_B always belong; above it, the bounding curve is
    inverted in its (monotone) second component by bisection and the
    point must not lie to the right of it.  For n_A = n_B the anchor
    exceeds 1 and the whole open square belongs.
    """
    x, y = float(state[0]), float(state[1])
    na, nb = int(na), int(nb)
    if na > nb:
        raise ValueError("need n_A <= n_B")
    if not (0.0 < x < 1.0 and 0.0 < y < 1.0):
        return False
    if na == nb:
        return True
    y0 = (na + 1) / nb
    if y < y0:
        return True
    t_star = solve_tstar(na, nb)
    if t_star == 0.0:
        # curve degenerates to the corner: full square
        return True
    # invert yc(t) = y for t in [t_star, 0]; yc decreases in t
    lo, hi = t_star, 0.0
    if y > boundary_curve(na, nb, lo)[1]:
        return False
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if boundary_curve(na, nb, mid)[1] >= y:
            lo = mid
        else:
            hi = mid
    t_y = 0.5 * (lo + hi)
    x_curve, _ = boundary_curve(na, nb, t_y)
    return x <= x_curve


def integrate_reduced(
    x0: float,
    y0: float,
    na: int,
    nb: int,
    dt: float = 1e-2,
    t_max: float = 50.0,
    stop_norm: float = 1e-9,
    stop_on_exit: bool = False,
):
    """Trajectory of the reduced system with on/off edge handling.

    Border starts (a coordinate exactly 1) take the continuation that
    engages the edge whenever the engaged field moves the coordinate into
    the square, matching the case analysis for a perturber placed exactly
    at the confidence threshold.  A coordinate crossing 1 from below
    switches its edge off at the end of the crossing step (once off, the
    coordinate only grows, so the overshoot cannot change any outcome).
    Returns (xs, ys, ts) arrays.
    """
    if x0 < 0 or y0 < 0:
        raise ValueError("reduced coordinates must be nonnegative")
    x, y = float(x0), float(y0)
    sx = 1.0 if x < 1.0 else 0.0
    sy = 1.0 if y < 1.0 else 0.0
    if x == 1.0:
        sx = 1.0 if (-(na + 1) + nb * sy * y) < 0 else 0.0
    if y == 1.0:
        sy = 1.0 if (na * sx * x - (nb + 1)) < 0 else 0.0

    xs, ys, ts = [x], [y], [0.0]
    t = 0.0
    a1, b1 = na + 1.0, nb + 1.0
    while t < t_max:
        h = min(dt, t_max - t)

        def fx(px, py):
            return -a1 * sx * px + nb * sy * py

        def fy(px, py):
            return na * sx * px - b1 * sy * py

        k1x, k1y = fx(x, y), fy(x, y)
        k2x, k2y = fx(x + 0.5 * h * k1x, y + 0.5 * h * k1y), fy(x + 0.5 * h * k1x, y + 0.5 * h * k1y)
        k3x, k3y = fx(x + 0.5 * h * k2x, y + 0.5 * h * k2y), fy(x + 0.5 * h * k2x, y + 0.5 * h * k2y)
        k4x, k4y = fx(x + h * k3x, y + h * k3y), fy(x + h * k3x, y + h * k3y)
        nx = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        ny = y + (h / 6.0) * (k1y + 2 * k2y + 2 * k3y + k4y)
        if sx == 1.0 and x < 1.0 <= nx:
            sx = 0.0
        if sy == 1.0 and y < 1.0 <= ny:
            sy = 0.0
        x, y = nx, ny
        t += h
        xs.append(x)
        ys.append(y)
        ts.append(t)
        if abs(x) + abs(y) < stop_norm:
            break
        if stop_on_exit and sx == 0.0 and x > 1.0:
            break
    return np.array(xs), np.array(ys), np.array(ts)


def simulate_perturbation(
    x_a: float,
    x_b: float,
    na: int,
    nb: int,
    x0: float,
    cfg: SolverConfig | None = None,
    full_system: bool = False,
) -> bool:
    """Whether a perturbing agent at x0 makes the two clusters merge.

    Reduced mode integrates the co-moving three-population model in the
    planar coordinates; the verdict is decided as soon as either the
    perturber-to-A distance leaves the unit square (the A side detaches,
    no merge) or the A-to-B distance drops below the confidence threshold
    (merge certain: inside the square the distance decays exponentially
    and the square cannot be left any more).  full_system=True instead
    integrates all n_A + n_B + 1 agents with the event-driven solver.
    """
    if not (x_a < x0 < x_b):
        raise ValueError(f"need x_A < x0 < x_B, got {x_a}, {x0}, {x_b}")
    cfg = cfg or SolverConfig()
    if full_system:
        state = np.concatenate([np.full(na, x_a), [x0], np.full(nb, x_b)])
        traj = integrate(state, cfg)
        xf = traj.final_state
        mean_a = float(np.mean(xf[:na]))
        mean_b = float(np.mean(xf[na + 1:]))
        return bool(abs(mean_b - mean_a) < 1.0)

    x = x0 - x_a
    y = x_b - x0
    # analytic short-circuits: a detached side can never re-engage
    if x > 1.0 and y > 1.0:
        return False
    if x > 1.0 or y > 1.0:
        return False  # only one cluster interacts; it absorbs the perturber
    sx = sy = 1.0
    if x == 1.0:
        sx = 1.0 if (-(na + 1) + nb * y) < 0 else 0.0
        if sx == 0.0:
            return False
    if y == 1.0:
        sy = 1.0 if (na * x - (nb + 1)) < 0 else 0.0
        if sy == 0.0:
            return False

    # inside the square both couplings are active and x+y decays like e^{-t},
    # so either x crosses out (no merge, irreversible) or x+y drops below 1
    # (merge certain: an exit would need x = 1 > x+y); decision by t = log(x+y)
    a1, b1 = na + 1.0, nb + 1.0
    t = 0.0
    h = cfg.dt_max
    t_cap = 4.0 + 2.0 * math.log(max(2.0, x + y))
    while t < t_cap:
        k1x, k1y = -a1 * x + nb * y, na * x - b1 * y
        x2, y2 = x + 0.5 * h * k1x, y + 0.5 * h * k1y
        k2x, k2y = -a1 * x2 + nb * y2, na * x2 - b1 * y2
        x3, y3 = x + 0.5 * h * k2x, y + 0.5 * h * k2y
        k3x, k3y = -a1 * x3 + nb * y3, na * x3 - b1 * y3
        x4, y4 = x + h * k3x, y + h * k3y
        k4x, k4y = -a1 * x4 + nb * y4, na * x4 - b1 * y4
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        y = y + (h / 6.0) * (k1y + 2 * k2y + 2 * k3y + k4y)
        if x >= 1.0:
            return False  # crossed out: A detaches and the gap only grows
        if x + y < 1.0:
            return True
        t += h
    # undecided within the cap only when starting on the separating curve
    return bool(x + y < 1.0)


def find_merge_witness(
    na: int,
    nb: int,
    gap: float,
    grid_step: float = 1e-3,
    cfg: SolverConfig | None = None,
    budget: int | None = None,
):
    """Search perturber placements for one that merges the clusters.

    Scans a uniform grid over the open interval between the cluster values
    plus the two threshold placements (exactly 1 away from either cluster).
    Returns (x0, tried) with x0 = None when no placement merges; ``tried``
    counts simulations run (capped by ``budget`` when given).
    """
    if gap <= 0:
        raise ValueError("gap must be positive")
    x_a, x_b = 0.0, gap
    placements = []
    for special in (x_a + 1.0, x_b - 1.0):  # threshold placements first
        if x_a < special < x_b:
            placements.append(special)
    placements.extend(np.arange(x_a + grid_step, x_b - grid_step / 2, grid_step))
    tried = 0
    for x0 in placements:
        if budget is not None and tried >= budget:
            break
        tried += 1
        if simulate_perturbation(x_a, x_b, na, nb, float(x0), cfg=cfg):
            return float(x0), tried
    return None, tried
