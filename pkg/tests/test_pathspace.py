import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dupirelab import pathspace as ps
from dupirelab.errors import DomainError, GridMismatchError

G = ps.TimeGrid(1.0, 9)


def step(t, size=1.0):
    return ps.CadlagPath.step(G, t, size)


def test_grid_nodes():
    g = ps.TimeGrid(2.0, 5)
    assert g.dt == 0.5
    assert g.times[0] == 0.0 and g.times[-1] == 2.0
    assert np.all(np.diff(g.times) > 0)
    with pytest.raises(DomainError):
        ps.TimeGrid(1.0, 1)
    with pytest.raises(DomainError):
        ps.TimeGrid(-1.0, 5)


def test_index_of_rejects_off_grid():
    assert G.index_of(0.25) == 2
    with pytest.raises(DomainError):
        G.index_of(0.3)
    with pytest.raises(DomainError):
        G.index_of(1.5)
    assert G.snap(0.3) == 0.25


def test_path_rejects_jump_at_zero_and_nan():
    with pytest.raises(DomainError):
        ps.CadlagPath(G, np.ones(9), np.eye(9)[0])
    with pytest.raises(DomainError):
        ps.CadlagPath(G, np.full(9, np.nan))


def test_left_limits_from_registry():
    x = ps.CadlagPath(G, np.where(G.times >= 0.5, 3.0, 1.0), np.where(G.times == 0.5, 2.0, 0.0))
    assert x.left_limits[4, 0] == 1.0
    assert list(x.jump_indices) == [4]


def test_stop_examples():
    x = step(0.5)
    assert ps.stop(x, 1.0).identical(x)
    s0 = ps.stop(x, 0.0)
    assert np.all(s0.values == x.values[0]) and not s0.jump_indices.size
    assert np.all(ps.stop(x, 0.25).values == 0.0)


def test_stop_keeps_jump_at_t():
    s = ps.stop(step(0.5), 0.5)
    assert s.values[-1, 0] == 1.0
    assert s.jumps[4, 0] == 1.0


def test_predictable_stop_examples():
    w = ps.CadlagPath(G, G.times)
    assert ps.predictable_stop(w, 0.5).identical(ps.stop(w, 0.5))
    assert np.all(ps.predictable_stop(step(0.5), 0.5).values == 0.0)
    x = step(0.5, 2.0) + 1.0
    p = ps.predictable_stop(x, 0.5)
    assert p.values[-1, 0] == 1.0
    assert not p.jump_indices.size


def test_bump_examples():
    x = ps.CadlagPath(G, np.sin(G.times))
    assert ps.bump(x, 0.5, 0.0).identical(ps.stop(x, 0.5))
    c = ps.bump(ps.CadlagPath.constant(G, 2.0), 0.25, 3.0)
    assert np.all(c.values[2:] == 5.0) and np.all(c.values[:2] == 2.0)
    a = ps.bump(ps.bump(x, 0.5, 0.3), 0.5, 0.4)
    b = ps.bump(x, 0.5, 0.7)
    assert np.allclose(a.values, b.values, rtol=0, atol=1e-15)
    assert np.allclose(a.jumps, b.jumps, rtol=0, atol=1e-15)
    with pytest.raises(DomainError):
        ps.bump(x, 0.5, [1.0, 2.0])


def test_replace_examples():
    x = ps.CadlagPath(G, np.cos(G.times))
    assert ps.replace(x, 0.5, x.at(0.5)).identical(ps.stop(x, 0.5))
    r0 = ps.replace(x, 0.0, 4.0)
    assert np.all(r0.values == 4.0) and not r0.jump_indices.size
    r = ps.replace(step(0.5), 0.75, 5.0)
    assert list(r.values[:, 0]) == [0, 0, 0, 0, 1, 1, 5, 5, 5]
    assert r.left_limits[6, 0] == 1.0


def test_dtheta_examples():
    x = step(0.5)
    z = ps.CadlagPath.constant(G, 0.0)
    assert ps.dtheta((0.5, x), (0.5, x)) == 0.0
    assert ps.dtheta((0.0, z), (1.0, z)) == 1.0
    assert ps.dtheta((1.0, z), (1.0, x)) == 1.0
    with pytest.raises(GridMismatchError):
        ps.dtheta((0.0, z), (0.0, ps.CadlagPath.constant(ps.TimeGrid(1.0, 5), 0.0)))


def test_sup_norm_examples():
    assert ps.sup_norm(ps.CadlagPath.constant(G, 0.0)) == 0.0
    assert ps.sup_norm(ps.CadlagPath.constant(G, -2.5)) == 2.5
    assert ps.sup_norm(step(0.5) - 2.0 * step(0.75)) == 1.0


def test_csv_round_trip_bit_exact(rng):
    g = ps.TimeGrid(0.7, 33)
    j = np.zeros((33, 2))
    j[5] = rng.standard_normal(2)
    x = ps.CadlagPath(g, rng.standard_normal((33, 2)) / 3.0, j)
    text = ps.path_to_csv(x)
    assert text.splitlines()[0] == "t,x_1,x_2,jump_1,jump_2"
    y = ps.path_from_csv(io.StringIO(text))
    assert np.array_equal(x.values, y.values) and np.array_equal(x.jumps, y.jumps)


# --- properties -------------------------------------------------------------

node = st.integers(0, G.node_count - 1)


@st.composite
def paths(draw, dim=1):
    vals = draw(st.lists(st.floats(-5, 5), min_size=G.node_count * dim, max_size=G.node_count * dim))
    v = np.array(vals).reshape(G.node_count, dim)
    mask = np.array(draw(st.lists(st.booleans(), min_size=G.node_count, max_size=G.node_count)))
    mask[0] = False
    jumps = np.zeros_like(v)
    jumps[mask] = (v[mask] - np.roll(v, 1, axis=0)[mask])
    return ps.CadlagPath(G, v, jumps)


@settings(max_examples=60, deadline=None)
@given(paths(), node, node)
def test_stop_composes(x, i, j):
    s, t = G.times[i], G.times[j]
    assert ps.stop(ps.stop(x, t), s).identical(ps.stop(x, min(s, t)))


@settings(max_examples=60, deadline=None)
@given(paths(), node)
def test_predictable_stop_agrees_before_t(x, k):
    t = G.times[k]
    a, b = ps.predictable_stop(x, t), ps.stop(x, t)
    assert np.array_equal(a.values[:k], b.values[:k])


@settings(max_examples=60, deadline=None)
@given(paths(), node, st.floats(-3, 3))
def test_bump_minus_stop_is_indicator(x, k, y):
    t = G.times[k]
    d = (ps.bump(x, t, y) - ps.stop(x, t)).values[:, 0]
    expect = np.where(np.arange(G.node_count) >= k, y, 0.0)
    assert np.allclose(d, expect, rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(paths(), node, st.floats(-3, 3))
def test_sup_norm_bump_bound(x, k, y):
    assert ps.sup_norm(ps.bump(x, G.times[k], y)) <= ps.sup_norm(x) + abs(y) + 1e-12


@settings(max_examples=60, deadline=None)
@given(paths(), paths(), paths(), node, node, node)
def test_dtheta_metric_axioms(x, y, z, i, j, k):
    a, b, c = (G.times[i], x), (G.times[j], y), (G.times[k], z)
    assert ps.dtheta(a, b) == pytest.approx(ps.dtheta(b, a), abs=1e-12)
    assert ps.dtheta(a, c) <= ps.dtheta(a, b) + ps.dtheta(b, c) + 1e-12


def test_multidimensional_operators():
    x = ps.CadlagPath(G, np.stack([G.times, -G.times], axis=1))
    b = ps.bump(x, 0.5, [1.0, 2.0])
    assert np.allclose(b.values[-1], [1.5, 1.5])
    assert ps.sup_norm(ps.CadlagPath.constant(G, [3.0, 4.0])) == 5.0
