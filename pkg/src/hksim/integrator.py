"""Event-driven integration of Krasovskii solutions of the opinion flow.

Between events the interaction topology is frozen, so the flow is smooth
(piecewise linear in the state) and is integrated with classical RK4 plus
cubic Hermite dense output.  Crossings of the unit-gap threshold are
localized on the dense output by bisection, the touched surfaces are
classified jointly (dynamics.sliding_weights machinery), and the
continuation is chosen by policy:

* ``proper``   - drop border edges (the raw discontinuous field), keeping
                 state equalities co-moving;
* ``sliding``  - stay engaged with the surface: adopt the stationarity
                 weight while it is strictly interior, otherwise cross;
* ``sampled``  - at branch points draw one of the consistent
                 continuations (stay / cross / detach) with a seeded RNG.

Each pair carries a status (off / open / sliding) that defines the active
field; statuses change only at events.  Pairs sitting on a surface are
"pinned": crossing detection is suppressed for them until they leave a
small band around the surface, which prevents event chatter from roundoff.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .analysis import predict_limit
from .dynamics import solve_box_stationarity, surface_system
from .errors import DegenerateSurfaceError, EventCascadeError, NoEventError
from .graph import Edge, as_state, build_graph, edge, gap_matrix

OFF, OPEN, SLID = 0, 1, 2

EDGE_ACTIVATE = "edge_activate"
EDGE_DEACTIVATE = "edge_deactivate"
SLIDE_ENTER = "slide_enter"
SLIDE_EXIT = "slide_exit"
BRANCH_TAKEN = "branch_taken"

CONVERGED = "converged"
ASYMPTOTIC_BOUNDARY = "asymptotic_boundary"
T_MAX_REACHED = "t_max_reached"

POLICIES = ("proper", "sliding", "sampled")

# Rates within this of zero are treated as stationary when resolving events.
_ZTOL = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    dt_max: float = 1e-2
    event_tol: float = 1e-9
    conv_tol: float = 1e-8
    t_max: float = 200.0
    policy: str = "proper"
    seed: int = 0
    boundary_band: float = 1e-3
    record_every: int = 1

    def __post_init__(self):
        if self.dt_max <= 0 or self.event_tol <= 0 or self.conv_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.t_max <= 0 or self.boundary_band <= 0:
            raise ValueError("t_max and boundary_band must be positive")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    edge: Edge


@dataclass
class Trajectory:
    times: list[float]
    states: list[np.ndarray]
    events: list[Event]
    terminal: str
    predicted_limit: np.ndarray | None = None

    @property
    def samples(self) -> list[tuple[float, np.ndarray]]:
        return list(zip(self.times, self.states))

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    @property
    def final_time(self) -> float:
        return self.times[-1]

    def state_at(self, t: float) -> np.ndarray:
        """Sampled state nearest to t (no interpolation)."""
        k = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.states[k]

    def to_csv(self, path) -> None:
        write_trajectory_csv(self, path)

    def events_to_jsonl(self, path) -> None:
        write_events_jsonl(self.events, path)


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """CSV export: header t,x1,...,xN and 17-significant-digit values."""
    n = traj.states[0].size
    with open(path, "w") as fh:
        fh.write("t," + ",".join(f"x{i + 1}" for i in range(n)) + "\n")
        for t, x in zip(traj.times, traj.states):
            fh.write(f"{t:.17g}," + ",".join(f"{v:.17g}" for v in x) + "\n")


def write_events_jsonl(events: list[Event], path) -> None:
    """JSON-lines export; agent ids are 1-based to match the CSV column names."""
    with open(path, "w") as fh:
        for ev in events:
            fh.write(
                json.dumps({"t": ev.time, "kind": ev.kind, "i": ev.edge[0] + 1, "j": ev.edge[1] + 1})
                + "\n"
            )


def flow_exact(x, L, dt: float) -> np.ndarray:
    """Exact fixed-topology propagation e^{-L dt} x (oracle for the stepper)."""
    x = as_state(x)
    L = np.asarray(L, dtype=float)
    return expm(-L * dt) @ x


class DenseSegment:
    """Cubic Hermite interpolant of one integration step."""

    def __init__(self, t0: float, x0: np.ndarray, f0: np.ndarray, t1: float, x1: np.ndarray, f1: np.ndarray):
        if not t1 > t0:
            raise ValueError("segment must have positive length")
        self.t0, self.t1 = float(t0), float(t1)
        self.x0, self.x1 = x0, x1
        self.f0, self.f1 = f0, f1

    @property
    def h(self) -> float:
        return self.t1 - self.t0

    def state(self, t: float) -> np.ndarray:
        th = (t - self.t0) / self.h
        h00 = (1 + 2 * th) * (1 - th) ** 2
        h10 = th * (1 - th) ** 2
        h01 = th * th * (3 - 2 * th)
        h11 = th * th * (th - 1)
        return h00 * self.x0 + h10 * self.h * self.f0 + h01 * self.x1 + h11 * self.h * self.f1

    def gap(self, pair: Edge, t: float) -> float:
        i, j = pair
        x = self.state(t)
        return abs(x[j] - x[i])


def locate_event(segment: DenseSegment, pair, event_tol: float = 1e-9) -> float:
    """Earliest time in the segment where the pair's gap meets the unit threshold.

    Ties break to the segment start (a gap resting on the threshold).
    Raises NoEventError when the residual gap-1 neither changes sign nor
    touches zero on the segment.
    """
    pair = edge(*pair)
    res = lambda t: segment.gap(pair, t) - 1.0
    if abs(res(segment.t0)) <= event_tol:
        return segment.t0
    # coarse scan for the first touch or sign-change bracket
    ts = np.linspace(segment.t0, segment.t1, 33)
    prev_t, r_prev = ts[0], res(ts[0])
    lo = hi = None
    for tk in ts[1:]:
        r = res(tk)
        if abs(r) <= event_tol:
            return float(tk)
        if r_prev * r < 0:
            lo, hi, r_lo = prev_t, tk, r_prev
            break
        prev_t, r_prev = tk, r
    if lo is None:
        raise NoEventError(f"gap of {pair} does not meet the threshold on [{segment.t0}, {segment.t1}]")
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        r_mid = res(mid)
        if abs(r_mid) <= event_tol * 1e-2:
            return float(mid)
        if r_lo * r_mid <= 0:
            hi = mid
        else:
            lo, r_lo = mid, r_mid
        if hi - lo < 1e-15 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def _rk4(x: np.ndarray, h: float, f, k1: np.ndarray | None = None) -> np.ndarray:
    if k1 is None:
        k1 = f(x)
    k2 = f(x + 0.5 * h * k1)
    k3 = f(x + 0.5 * h * k2)
    k4 = f(x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class _Run:
    """Mutable integration state for one trajectory."""

    def __init__(self, x0, cfg: SolverConfig):
        self.cfg = cfg
        self.x = as_state(x0).copy()
        self.n = self.x.size
        self.status = np.full((self.n, self.n), OFF, dtype=np.int8)
        self.pinned = np.zeros((self.n, self.n), dtype=bool)
        self.iu, self.ju = np.triu_indices(self.n, k=1)
        self.rng = np.random.default_rng(cfg.seed)
        self.events: list[Event] = []
        self.times: list[float] = []
        self.states: list[np.ndarray] = []
        self.surf_band = max(10.0 * cfg.event_tol, 1e-12)
        self.snap_target = cfg.event_tol * 1e-2
        self.W = np.zeros((self.n, self.n))
        self.deg = np.zeros(self.n)
        self.sliding: list[Edge] = []
        self._event_count = 0
        self._stall_count = 0
        self._last_event_t = -np.inf

    # -- topology bookkeeping ------------------------------------------------

    def _set_status(self, e: Edge, s: int) -> None:
        i, j = e
        self.status[i, j] = self.status[j, i] = s

    def _get_status(self, e: Edge) -> int:
        return int(self.status[e[0], e[1]])

    def _rebuild(self) -> None:
        self.W = (self.status == OPEN).astype(float)
        self.deg = self.W.sum(axis=1)
        self.sliding = [
            (int(i), int(j))
            for i, j in zip(self.iu, self.ju)
            if self.status[i, j] == SLID
        ]

    def field(self, x: np.ndarray) -> np.ndarray:
        v = self.W @ x - self.deg * x
        if self.sliding:
            beta = self.sliding_beta(x)
            for b, (i, j) in zip(beta, self.sliding):
                d = x[j] - x[i]
                v[i] += b * d
                v[j] -= b * d
        return v

    def sliding_beta(self, x: np.ndarray) -> np.ndarray:
        """Unconstrained stationarity weights of the current sliding set."""
        m, c = surface_system(x, self.sliding, background_weights=self.W)
        try:
            return np.linalg.solve(m, -c)
        except np.linalg.LinAlgError as err:
            raise DegenerateSurfaceError(f"sliding surface system singular: {err}") from err

    # -- recording -----------------------------------------------------------

    def record(self, t: float, x: np.ndarray) -> None:
        if self.times and t <= self.times[-1]:
            return
        self.times.append(t)
        self.states.append(x.copy())

    def emit(self, t: float, kind: str, e: Edge) -> None:
        self.events.append(Event(time=t, kind=kind, edge=e))

    # -- event resolution ----------------------------------------------------

    def snap(self, x: np.ndarray, actives: list[Edge]) -> None:
        # symmetric per-pair projection onto the surface keeps the average exact
        for _ in range(3):
            worst = 0.0
            for i, j in actives:
                d = x[j] - x[i]
                err = (abs(d) - 1.0) * (1.0 if d >= 0 else -1.0)
                x[j] -= err / 2.0
                x[i] += err / 2.0
                worst = max(worst, abs(abs(d) - 1.0))
            if worst < 1e-15:
                break

    def resolve(self, x: np.ndarray, actives: list[Edge], t: float) -> None:
        """Classify the touched surfaces jointly and apply the policy."""
        actives = sorted(set(edge(*e) for e in actives))
        if not actives:
            return
        w_bg = (self.status == OPEN).astype(float)
        for i, j in actives:
            w_bg[i, j] = w_bg[j, i] = 0.0
        m, c = surface_system(x, actives, background_weights=w_bg)
        policy = self.cfg.policy
        new: dict[Edge, tuple[int, float]] = {}
        if policy == "proper":
            w = np.zeros(len(actives))
            for _ in range(2 * len(actives) + 2):
                rates = c + m @ w
                changed = False
                for a in range(len(actives)):
                    if w[a] == 0.0 and rates[a] < -_ZTOL:
                        w[a] = 1.0
                        changed = True
                if not changed:
                    break
            for a, e in enumerate(actives):
                new[e] = (OPEN, 1.0) if w[a] == 1.0 else (OFF, 0.0)
        else:
            beta, rates = solve_box_stationarity(m, c)
            for a, e in enumerate(actives):
                off = beta.copy()
                off[a] = 0.0
                on = beta.copy()
                on[a] = 1.0
                rate_off = float(c[a] + m[a] @ off)
                rate_on = float(c[a] + m[a] @ on)
                b = float(beta[a])
                r = float(rates[a])
                if policy == "sliding":
                    if _ZTOL < b < 1.0 - _ZTOL and abs(r) <= _ZTOL:
                        new[e] = (SLID, b)
                    elif b <= _ZTOL:
                        new[e] = (OPEN, 1.0) if rate_off <= _ZTOL else (OFF, 0.0)
                    elif b >= 1.0 - _ZTOL:
                        new[e] = (OFF, 0.0) if rate_on >= -_ZTOL else (OPEN, 1.0)
                    else:
                        new[e] = (OPEN, 1.0) if r < 0 else (OFF, 0.0)
                else:  # sampled
                    options: list[tuple[int, float]] = []
                    if abs(r) <= _ZTOL and _ZTOL < b < 1.0 - _ZTOL:
                        options.append((SLID, b))
                    elif abs(rate_off) <= _ZTOL:
                        options.append((OFF, 0.0))  # stay frozen on the surface
                    if rate_on < -_ZTOL:
                        options.append((OPEN, 1.0))
                    if rate_off > _ZTOL:
                        options.append((OFF, 0.0))
                    options = list(dict.fromkeys(options))
                    if not options:
                        options.append((OPEN, 1.0) if rate_on < 0 else (OFF, 0.0))
                    pick = options[int(self.rng.integers(len(options)))] if len(options) > 1 else options[0]
                    if len(options) > 1:
                        self.emit(t, BRANCH_TAKEN, e)
                    new[e] = pick
        for e, (s, _) in new.items():
            old = self._get_status(e)
            if old == s:
                continue
            if old == SLID:
                self.emit(t, SLIDE_EXIT, e)
            if s == OPEN:
                self.emit(t, EDGE_ACTIVATE, e)
            elif s == OFF and old != OFF:
                self.emit(t, EDGE_DEACTIVATE, e)
            elif s == SLID:
                self.emit(t, SLIDE_ENTER, e)
            self._set_status(e, s)
        for e in actives:
            i, j = e
            self.pinned[i, j] = self.pinned[j, i] = True
        self._rebuild()

    # -- terminal classification ----------------------------------------------

    def terminal_status(self, x: np.ndarray, v: np.ndarray, gaps: np.ndarray | None = None) -> str | None:
        if gaps is None:
            gaps = gap_matrix(x)
        g = gaps[self.iu, self.ju]
        residual = float(np.max(np.minimum(g, np.maximum(0.0, 1.0 - g)))) if g.size else 0.0
        vel = float(np.max(np.abs(v))) if v.size else 0.0
        if residual < self.cfg.conv_tol and vel < self.cfg.conv_tol:
            return CONVERGED
        delta = self.cfg.boundary_band
        in_band = (g > 1.0 - delta) & (g < 1.0)
        if np.any(in_band):
            lyap_rate = abs(float(x @ v))
            others = np.minimum(g[~in_band], np.maximum(0.0, 1.0 - g[~in_band]))
            others_ok = bool(np.all(others <= delta)) if others.size else True
            if lyap_rate < self.cfg.conv_tol and others_ok:
                return ASYMPTOTIC_BOUNDARY
        return None

    def predicted_boundary_limit(self, x: np.ndarray) -> np.ndarray:
        """Per-agent limit prediction for an asymptotic-boundary terminal."""
        order = np.argsort(x, kind="stable")
        xs = x[order]
        gaps = np.diff(xs)
        delta = self.cfg.boundary_band
        sizes: list[int] = []
        labels: list[str] = []
        count = 1
        for gp in gaps:
            if gp > 1.0 - delta:
                sizes.append(count)
                count = 1
                labels.append("asymptotic" if gp < 1.0 else "finite")
            else:
                count += 1
        sizes.append(count)
        values = predict_limit(x, sizes, labels)
        out = np.empty_like(x)
        pos = 0
        for size, val in zip(sizes, values):
            out[order[pos:pos + size]] = val
            pos += size
        return out


def integrate(x0, cfg: SolverConfig | None = None) -> Trajectory:
    """Integrate one Krasovskii solution from x0 under the configured policy."""
    cfg = cfg or SolverConfig()
    run = _Run(x0, cfg)
    n = run.n
    x, t = run.x, 0.0

    # initial topology: strict interior pairs by gap, border pairs by policy
    g0 = build_graph(x, tol=cfg.event_tol)
    for e in g0.open_edges:
        run._set_status(e, OPEN)
    run._rebuild()
    border0 = sorted(g0.border_edges)
    if border0:
        run.snap(x, border0)
        run.resolve(x, border0, 0.0)
    run.record(0.0, x)

    v = run.field(x)
    gaps = gap_matrix(x)
    terminal = run.terminal_status(x, v, gaps)
    steps = 0
    while terminal is None:
        if t >= cfg.t_max:
            terminal = T_MAX_REACHED
            break
        h = min(cfg.dt_max, cfg.t_max - t)
        x1 = _rk4(x, h, run.field, k1=v)
        v1 = run.field(x1)
        seg = DenseSegment(t, x, v, t + h, x1, v1)

        event_time, event_pairs, gaps1 = _detect(run, seg, gaps)
        if event_time is not None:
            if event_time <= t + 1e-15 * max(1.0, abs(t)):
                xe = x.copy()
                te = t
            else:
                xe = _rk4(x, event_time - t, run.field, k1=v)
                te = event_time
            gaps_e = gap_matrix(xe)
            actives = set(event_pairs)
            for i, j in zip(run.iu, run.ju):
                if abs(gaps_e[i, j] - 1.0) <= run.surf_band:
                    actives.add((int(i), int(j)))
            actives |= set(run.sliding)
            actives = sorted(actives)
            run.snap(xe, actives)
            run.record(te, xe)
            run.resolve(xe, actives, te)
            x, t = xe, te
            v = run.field(x)
            gaps = gap_matrix(x)
            run._event_count += 1
            if te - run._last_event_t < cfg.event_tol:
                run._stall_count += 1
            else:
                run._stall_count = 0
            run._last_event_t = te
            if run._stall_count > 60 or run._event_count > 200000:
                raise EventCascadeError(
                    f"event cluster denser than event_tol near t={te}",
                    trajectory=Trajectory(run.times, run.states, run.events, T_MAX_REACHED),
                )
            terminal = run.terminal_status(x, v, gaps)
            continue

        # commit the step
        x, t, v = x1, t + h, v1
        gaps = gaps1
        if run.sliding:
            run.snap(x, run.sliding)
            v = run.field(x)
            gaps = gap_matrix(x)
        run.pinned &= np.abs(gaps - 1.0) <= run.surf_band
        steps += 1
        if steps % cfg.record_every == 0:
            run.record(t, x)
        terminal = run.terminal_status(x, v, gaps)

    run.record(t, x)
    predicted = run.predicted_boundary_limit(x) if terminal == ASYMPTOTIC_BOUNDARY else None
    return Trajectory(
        times=run.times,
        states=run.states,
        events=run.events,
        terminal=terminal,
        predicted_limit=predicted,
    )


def _detect(run: _Run, seg: DenseSegment, g0: np.ndarray):
    """Earliest threshold crossing / sliding-weight exit on the segment.

    Returns (t_event, pairs, gaps_at_end).  Unpinned pairs fire on any
    sign change of gap-1 across the step (endpoints and midpoint); pinned
    pairs fire only when they leave the surface band on the side
    inconsistent with their status.
    """
    g1 = gap_matrix(seg.x1)
    gm = gap_matrix(seg.state(seg.t0 + 0.5 * seg.h))
    r0, r1, rm = g0 - 1.0, g1 - 1.0, gm - 1.0

    crossing = (r0 * rm < 0) | (rm * r1 < 0) | (r0 * r1 < 0) | (np.abs(r1) <= run.snap_target)
    crossing &= ~run.pinned
    # pinned pairs: fire only on drifting out of band against their status
    bad_open = run.pinned & (run.status == OPEN) & (r1 > run.surf_band)
    bad_off = run.pinned & (run.status == OFF) & (r1 < -run.surf_band)
    crossing |= bad_open | bad_off

    mask = crossing[run.iu, run.ju]
    if not mask.any() and not run.sliding:
        return None, None, g1
    candidates = [(int(i), int(j)) for i, j in zip(run.iu[mask], run.ju[mask])]
    best_t, best_pairs = None, []
    for pair in candidates:
        try:
            te = locate_event(seg, pair, run.cfg.event_tol)
        except NoEventError:
            continue
        if best_t is None or te < best_t - 1e-15:
            best_t, best_pairs = te, [pair]
        elif abs(te - best_t) <= 1e-15:
            best_pairs.append(pair)

    # sliding-weight box exit
    if run.sliding:
        beta1 = run.sliding_beta(seg.x1)
        for k, e in enumerate(run.sliding):
            if -1e-12 <= beta1[k] <= 1.0 + 1e-12:
                continue
            bound = 0.0 if beta1[k] < 0 else 1.0
            te = _bisect_beta_exit(run, seg, k, bound)
            if best_t is None or te < best_t - 1e-15:
                best_t, best_pairs = te, [e]
            elif abs(te - best_t) <= 1e-15 and e not in best_pairs:
                best_pairs.append(e)
    if best_t is None:
        return None, None, g1
    return best_t, best_pairs, g1


def _bisect_beta_exit(run: _Run, seg: DenseSegment, k: int, bound: float) -> float:
    lo, hi = seg.t0, seg.t1
    f = lambda t: run.sliding_beta(seg.state(t))[k] - bound
    flo = f(lo)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if flo * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
            flo = f(lo)
        if hi - lo < 1e-14 * max(1.0, abs(hi)):
            break
    return hi
