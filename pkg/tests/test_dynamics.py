import numpy as np
import pytest

from hksim.dynamics import (
    BRANCHING,
    SLIDING,
    TRANSVERSAL,
    hull_vertices,
    in_hull,
    sliding_weights,
    solve_box_stationarity,
    vector_field,
)
from hksim.errors import BetaMismatchError, DegenerateSurfaceError, HullSizeError
from hksim.graph import build_graph

from conftest import convex_hull_contains, make_bordered_state


def test_vector_field_open_only():
    assert np.allclose(vector_field([0.0, 0.5, 2.0]), [0.5, -0.5, 0.0])


def test_vector_field_border_on_off():
    assert np.allclose(vector_field([1.0, 0.0], {(0, 1): 1.0}), [-1.0, 1.0])
    assert np.allclose(vector_field([1.0, 0.0], {(0, 1): 0.0}), [0.0, 0.0])


def test_vector_field_fractional_border():
    v = vector_field([0.0, 0.4, 1.4], {(1, 2): 0.5})
    assert np.allclose(v, [0.4, 0.1, -0.5])


def test_vector_field_mismatch():
    with pytest.raises(BetaMismatchError):
        vector_field([0.0, 0.5, 2.0], {(1, 2): 0.5})


def test_conservation_and_translation():
    rng = np.random.default_rng(2)
    for _ in range(40):
        x, g = make_bordered_state(rng, int(rng.integers(2, 7)), 3)
        beta = {e: float(rng.uniform()) for e in g.border_edges}
        v = vector_field(x, beta)
        assert abs(float(np.sum(v))) <= 1e-12 * max(1.0, float(np.max(np.abs(x))))
        v2 = vector_field(x + 7.25, beta)
        assert np.allclose(v, v2, atol=1e-12)


def test_hull_vertices_no_border():
    verts = hull_vertices([0.0, 0.5, 2.0])
    assert len(verts) == 1
    assert np.allclose(verts[0], [0.5, -0.5, 0.0])


def test_hull_vertices_two_agent_border():
    verts = hull_vertices([1.0, 0.0])
    assert len(verts) == 2
    assert np.allclose(verts[0], [0.0, 0.0])
    assert np.allclose(verts[1], [-1.0, 1.0])


def test_hull_vertices_match_one_sided_fields():
    # slide-surface configuration: the two vertices are the off/on fields
    c = 0.3
    x = [0.0, c, c + 1.0]
    verts = hull_vertices(x)
    assert len(verts) == 2
    assert np.allclose(verts[0], [c, -c, 0.0])
    assert np.allclose(verts[1], [c, 1.0 - c, -1.0])


def test_hull_cap_refusal():
    x = np.arange(18.0)  # 17 consecutive unit gaps
    with pytest.raises(HullSizeError):
        hull_vertices(x)


def test_hull_vertices_equal_beta_extremes():
    rng = np.random.default_rng(9)
    for _ in range(25):
        x, g = make_bordered_state(rng, 5, 3)
        border = sorted(g.border_edges)
        verts = hull_vertices(x)
        assert len(verts) == 2 ** len(border)
        for mask in range(len(verts)):
            beta = {border[b]: 1.0 for b in range(len(border)) if mask >> b & 1}
            assert np.array_equal(verts[mask], vector_field(x, beta))


def test_in_hull_examples():
    assert in_hull([1.0, 0.0], [-0.5, 0.5])
    assert not in_hull([1.0, 0.0], [1.0, -1.0])
    assert in_hull([0.0, 0.5, 2.0], [0.5, -0.5, 0.0])


def test_in_hull_agrees_with_vertex_enumeration():
    rng = np.random.default_rng(13)
    for _ in range(25):
        x, g = make_bordered_state(rng, 4, 2)
        beta = {e: float(rng.uniform(0.05, 0.95)) for e in g.border_edges}
        v = vector_field(x, beta)
        assert in_hull(x, v)
        assert convex_hull_contains(hull_vertices(x), v, tol=1e-8)
        outside = v + 10.0 * np.sign(rng.standard_normal(x.size) + 0.01)
        assert in_hull(x, outside) == convex_hull_contains(hull_vertices(x), outside, tol=1e-8)


def test_sliding_weights_paper_surface():
    rng = np.random.default_rng(17)
    for _ in range(50):
        c = float(rng.uniform(0.01, 0.99))
        x = [0.0, c, c + 1.0]
        out = sliding_weights(x, [(1, 2)])
        sc = out[(1, 2)]
        assert sc.kind == SLIDING
        assert abs(sc.beta - c / 2.0) <= 1e-12
        v = vector_field(x, {(1, 2): sc.beta})
        assert abs(v[2] - v[1]) <= 1e-12


def test_sliding_weights_branching_at_weak_equilibrium():
    out = sliding_weights([1.0, 0.0], [(0, 1)])
    sc = out[(0, 1)]
    assert sc.kind == BRANCHING
    assert abs(sc.rate_off) <= 1e-12
    assert abs(sc.rate_on + 2.0) <= 1e-12


def test_sliding_weights_transversal_same_sign():
    # third agent below pulls both one-sided gap rates negative
    out = sliding_weights([0.0, 1.0, 0.6], [(0, 1)])
    sc = out[(0, 1)]
    assert sc.kind == TRANSVERSAL
    assert sc.rate_off < 0 and sc.rate_on < 0


def test_sliding_weights_isolated_pair_is_branching():
    # state-only classification cannot see an approach direction: an
    # isolated pair at the threshold always has off-rate exactly 0
    out = sliding_weights([0.0, 1.0], [(0, 1)])
    assert out[(0, 1)].kind == BRANCHING


def test_sliding_weights_rejects_non_border():
    with pytest.raises(ValueError):
        sliding_weights([0.0, 0.5], [(0, 1)])


def test_solve_box_stationarity_degenerate():
    m = np.array([[-2.0, 2.0], [2.0, -2.0]])
    c = np.array([1.0, 0.0])
    with pytest.raises(DegenerateSurfaceError):
        solve_box_stationarity(m, c)


def test_joint_sliding_chain():
    # two simultaneous surfaces: agents at 0,1,2 with both gaps on the border
    out = sliding_weights([0.0, 1.0, 2.0], [(0, 1), (1, 2)])
    # symmetric configuration: both candidate weights solve with rate 0 at beta=0
    for sc in out.values():
        assert sc.kind in (BRANCHING, SLIDING)
