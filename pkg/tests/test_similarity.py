import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from repufed.errors import ValidationError
from repufed.scene import ObservationWindow
from repufed.similarity import (SimWeights, build_weighted_graph, cosine_redundancy_filter, diss, lcs_length,
                                orientation_diff, position_diff, serialize_seq, sim, velocity_diff)


def brute_lcs(a, b, eps):
    """Longest common subsequence by enumerating index subsets of the shorter segment."""
    a, b = np.asarray(a), np.asarray(b)
    if len(a) > len(b):
        a, b = b, a
    for size in range(len(a), 0, -1):
        for sub_a in itertools.combinations(range(len(a)), size):
            for sub_b in itertools.combinations(range(len(b)), size):
                if all(np.linalg.norm(a[i] - b[j]) <= eps for i, j in zip(sub_a, sub_b)):
                    return size
    return 0


def line(speed, n=5, heading=0.0, origin=(0.0, 0.0)):
    d = np.array([math.cos(heading), math.sin(heading)]) * speed
    return np.asarray(origin) + np.outer(np.arange(n), d)


segments = st.integers(2, 8).flatmap(
    lambda m: st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20)), min_size=m, max_size=m)
).map(lambda pts: np.asarray(pts, dtype=float))


# --------------------------------------------------------------------------- components

def test_velocity_identical():
    a = line(3.0)
    assert velocity_diff(a, a) == 0.0


def test_velocity_ten_vs_five():
    assert velocity_diff(line(10.0), line(5.0)) == pytest.approx(0.5, abs=1e-12)


def test_velocity_both_stationary():
    z = np.zeros((4, 2))
    assert velocity_diff(z, z) == 0.0


def test_velocity_single_point():
    with pytest.raises(ValidationError):
        velocity_diff(np.zeros((1, 2)), np.zeros((3, 2)))


def test_position_identical():
    a = line(1.0, 6)
    assert position_diff(a, a, 0.5) == 0.0


def test_position_far():
    assert position_diff(line(1.0), line(1.0, origin=(0, 100)), 2.0) == 1.0


def test_position_half():
    a = np.array([[0, 0], [1, 0], [2, 0], [3, 0]], float)
    b = np.array([[0, 0], [50, 50], [2, 0], [60, 60]], float)
    assert brute_lcs(a, b, 0.1) == 2
    assert position_diff(a, b, 0.1) == 0.5


def test_lcs_matches_brute_force():
    r = np.random.default_rng(7)
    for _ in range(200):
        a = r.uniform(0, 6, (int(r.integers(1, 9)), 2))
        b = r.uniform(0, 6, (int(r.integers(1, 9)), 2))
        assert lcs_length(a, b, 2.0) == brute_lcs(a, b, 2.0)


def test_orientation_values():
    assert orientation_diff(math.pi / 2) == pytest.approx(0.5)
    assert orientation_diff(math.pi) == pytest.approx(1.0)
    assert orientation_diff(0.0) == 0.0


@pytest.mark.parametrize("phi", [-0.1, math.pi + 0.01, float("nan")])
def test_orientation_out_of_range(phi):
    with pytest.raises(ValidationError):
        orientation_diff(phi)


def test_diss_identical():
    a = line(2.0, heading=0.3)
    assert diss(a, a) == 0.0 and sim(a, a) == 1.0


def test_diss_weighted_components():
    # speeds 10 and 5 along the same line, far apart so LCS is empty would add position; keep them overlapping
    a = line(10.0, 2)
    b = line(5.0, 2)
    # velocity 0.5, position: both start at origin; (10,0) vs (5,0) is 5 m apart
    # with eps large, LCS is full so position 0; heading identical so orientation 0
    assert diss(a, b, SimWeights(), eps_lcs=100.0) == pytest.approx(1 / 6, abs=1e-12)
    assert sim(a, b, SimWeights(), eps_lcs=100.0) == pytest.approx(5 / 6, abs=1e-12)


def test_weights_must_sum_to_one():
    with pytest.raises(ValidationError):
        SimWeights(0.5, 0.5, 0.5)


@settings(max_examples=200, deadline=None)
@given(segments, segments, st.floats(0.0, 10.0))
def test_bounds_and_symmetry(a, b, eps):
    v, p = velocity_diff(a, b), position_diff(a, b, eps)
    assert 0.0 <= v <= 1.0 and 0.0 <= p <= 1.0
    d = diss(a, b, eps_lcs=eps)
    assert 0.0 <= d <= 1.0 + 1e-12
    assert sim(a, b, eps_lcs=eps) == pytest.approx(sim(b, a, eps_lcs=eps), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(segments)
def test_self_similarity(a):
    assert sim(a, a) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(segments, segments, st.floats(0.0, 5.0), st.floats(0.0, 5.0))
def test_position_monotone_in_tolerance(a, b, e1, e2):
    lo, hi = min(e1, e2), max(e1, e2)
    assert position_diff(a, b, hi) <= position_diff(a, b, lo)


# --------------------------------------------------------------------------- graphs

def _win(hist_list, ids=None):
    h = np.stack(hist_list, axis=1)
    ids = tuple(range(len(hist_list))) if ids is None else tuple(ids)
    return ObservationWindow(h, np.zeros((1, len(ids), 2)), ids)


def test_graph_single_vehicle():
    g = build_weighted_graph(_win([line(1.0, 4)]))
    assert g.node_weights.tolist() == [1.0] and not g.edge_weights.any()


def test_graph_identical_tracks():
    g = build_weighted_graph(_win([line(1.0, 4), line(1.0, 4)]))
    assert g.edge(0, 1) == 1.0 and g.edge(1, 0) == 1.0


def test_graph_node_weights_are_row_means():
    segs = [line(1.0, 4), line(1.0, 4), line(3.0, 4, heading=1.0)]
    g = build_weighted_graph(_win(segs))
    s = np.array([[0, sim(segs[0], segs[1]), sim(segs[0], segs[2])],
                  [sim(segs[1], segs[0]), 0, sim(segs[1], segs[2])],
                  [sim(segs[2], segs[0]), sim(segs[2], segs[1]), 0]])
    np.testing.assert_allclose(g.node_weights, s.sum(1) / 2, atol=1e-12)
    np.testing.assert_allclose(g.edge_weights, g.edge_weights.T)


def test_seq_lengths():
    g = build_weighted_graph(_win([line(1.0, 4), line(2.0, 4)]))
    assert serialize_seq(g, 1).shape == (1,)
    assert serialize_seq(g, 3).shape == (6,)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 6), st.integers(1, 6))
def test_seq_length_and_order_invariance(seed, n, k):
    r = np.random.default_rng(seed)
    segs = [np.cumsum(r.normal(0, 1, (4, 2)), axis=0) for _ in range(n)]
    ids = list(range(10, 10 + n))
    perm = r.permutation(n)
    g1 = build_weighted_graph(_win(segs, ids))
    g2 = build_weighted_graph(_win([segs[i] for i in perm], [ids[i] for i in perm]))
    v1, v2 = serialize_seq(g1, k), serialize_seq(g2, k)
    assert len(v1) == k + k * (k - 1) // 2
    np.testing.assert_array_equal(v1, v2)
    assert np.all((v1 >= 0) & (v1 <= 1))


# --------------------------------------------------------------------------- filter

def _filter_oracle(vecs, thr):
    kept = []
    for i, v in enumerate(vecs):
        if not np.any(v):
            continue
        redundant = False
        for j in kept:
            c = float(np.sum(v * vecs[j]) / math.sqrt(np.sum(v * v) * np.sum(vecs[j] * vecs[j])))
            if c > thr:
                redundant = True
        if not redundant:
            kept.append(i)
    return kept


def test_filter_identical_and_orthogonal():
    assert cosine_redundancy_filter([np.ones(3), np.ones(3)]) == [0]
    assert cosine_redundancy_filter([np.array([1.0, 0]), np.array([0, 1.0])]) == [0, 1]


def test_filter_zero_and_mismatch():
    assert cosine_redundancy_filter([np.zeros(2), np.array([1.0, 0])]) == [1]
    with pytest.raises(ValidationError):
        cosine_redundancy_filter([np.ones(2), np.ones(3)])


def test_filter_vs_oracle():
    r = np.random.default_rng(3)
    for _ in range(200):
        vecs = [r.uniform(-1, 1, 4) for _ in range(5)]
        assert cosine_redundancy_filter(vecs, 0.8) == _filter_oracle(vecs, 0.8)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10_000))
def test_filter_duplicate_append(seed):
    r = np.random.default_rng(seed)
    vecs = [r.uniform(0, 1, 6) for _ in range(5)]
    kept = cosine_redundancy_filter(vecs)
    dup = vecs + [vecs[kept[int(r.integers(len(kept)))]].copy()]
    assert cosine_redundancy_filter(dup) == kept
