import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from repufed.errors import ValidationError
from repufed.ledger import (GENESIS, MAX_PAYLOAD_BYTES, LocalDag, all_consistent, append_transaction,
                            complete_topology, gossip_round, is_acyclic, merge, merge_all, ring_topology, tx_id)


def seeded_dags(n, per=1):
    dags = {}
    for v in range(n):
        d = LocalDag.new()
        for k in range(per):
            d, _ = append_transaction(d, "reputation-update", {"v": v, "k": k}, v, k)
        dags[v] = d
    return dags


def rounds_to_consistency(dags, topo, fanout, seed, limit=1000):
    for r in range(1, limit + 1):
        dags = gossip_round(dags, topo, fanout, np.random.SeedSequence([seed, r]))
        if all_consistent(dags):
            return r
    return None


def test_first_append_approves_genesis():
    d, tx = append_transaction(LocalDag.new(), "model-share", {"h": "x"}, 1, 0)
    assert tx.approves == (GENESIS.id,)
    d.validate()


def test_second_append_approves_first():
    d, a = append_transaction(LocalDag.new(), "model-share", {"h": "x"}, 1, 0)
    d, b = append_transaction(d, "model-share", {"h": "y"}, 1, 1)
    assert b.approves == (a.id,)


def test_hundred_appends_structure():
    d = LocalDag.new()
    ids = set()
    for k in range(100):
        d, tx = append_transaction(d, "data-share-event", {"k": k}, k % 3, k // 10)
        ids.add(tx.id)
        assert len(d.tips) <= 2 and is_acyclic(d)
    d.validate()
    assert len(ids) == 100  # id uniqueness


def test_oversized_payload_rejected():
    with pytest.raises(ValidationError):
        append_transaction(LocalDag.new(), "model-share", "x" * (MAX_PAYLOAD_BYTES + 1), 0, 0)


def test_unknown_kind_rejected():
    with pytest.raises(ValidationError):
        append_transaction(LocalDag.new(), "coinbase", {}, 0, 0)


def test_id_is_content_hash():
    d, tx = append_transaction(LocalDag.new(), "model-share", {"a": 1}, 4, 2)
    assert tx.id == tx_id(tx.kind, tx.payload, tx.approves, 4, 2)
    d2, tx2 = append_transaction(LocalDag.new(), "model-share", {"a": 1}, 4, 2)
    assert tx2.id == tx.id


def test_dump_jsonl():
    d, _ = append_transaction(LocalDag.new(), "model-share", {"a": 1}, 4, 2)
    lines = d.dump_jsonl().splitlines()
    assert len(lines) == 2
    assert set(json.loads(lines[1])) == {"id", "kind", "approves", "author", "slot"}


@pytest.mark.parametrize("seed", range(100))
def test_merge_laws_random_orders(seed):
    r = np.random.default_rng(seed)
    dags = list(seeded_dags(5, per=int(r.integers(1, 4))).values())
    a, b, c = (dags[i] for i in r.choice(5, 3, replace=False))
    assert merge(a, b).ids() == merge(b, a).ids()
    assert merge(merge(a, b), c).ids() == merge(a, merge(b, c)).ids()
    assert merge(a, a).ids() == a.ids()
    order = r.permutation(5)
    assert merge_all(dags[i] for i in order).ids() == merge_all(dags).ids()
    merge_all(dags).validate()


def test_gossip_fanout_zero():
    dags = seeded_dags(4)
    out = gossip_round(dags, ring_topology(4), 0, 1)
    assert all(out[v].ids() == dags[v].ids() for v in dags)


def test_gossip_complete_one_round():
    dags = seeded_dags(6)
    out = gossip_round(dags, complete_topology(list(range(6))), 5, 0)
    assert all_consistent(out)


def test_gossip_deterministic():
    dags = seeded_dags(8)
    a = gossip_round(dags, ring_topology(8), 1, 7)
    b = gossip_round(dags, ring_topology(8), 1, 7)
    assert all(a[v].ids() == b[v].ids() for v in dags)


def test_gossip_missing_vehicle():
    with pytest.raises(ValidationError):
        gossip_round(seeded_dags(3), {0: [1], 1: [0]}, 1, 0)


def test_ring_of_eight_converges():
    worst = max(rounds_to_consistency(seeded_dags(8), ring_topology(8), 1, s) for s in range(100))
    assert worst <= 16


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 12), st.integers(0, 10_000), st.integers(1, 3))
def test_connected_topology_converges(n, seed, fanout):
    # random spanning tree plus extra edges; diameter measured by BFS
    r = np.random.default_rng(seed)
    adj = {i: set() for i in range(n)}
    for i in range(1, n):
        j = int(r.integers(i))
        adj[i].add(j)
        adj[j].add(i)
    for _ in range(n // 2):
        i, j = (int(x) for x in r.integers(n, size=2))
        if i != j:
            adj[i].add(j)
            adj[j].add(i)

    def ecc(src):
        seen, frontier, depth = {src}, [src], 0
        while frontier:
            nxt = [m for v in frontier for m in adj[v] if m not in seen]
            seen.update(nxt)
            frontier = list(dict.fromkeys(nxt))
            depth += bool(frontier)
        return depth

    diam = max(ecc(v) for v in range(n))
    degree = max(len(v) for v in adj.values())
    topo = {k: sorted(v) for k, v in adj.items()}
    # push-only gossip drains a hub at coupon-collector speed, so the limit scales with degree
    got = rounds_to_consistency(seeded_dags(n), topo, fanout, seed, limit=10 * diam * degree)
    assert got is not None


def path_topology(n):
    return {i: [j for j in (i - 1, i + 1) if 0 <= j < n] for i in range(n)}


def grid_topology(w, h):
    return {y * w + x: [yy * w + xx for xx, yy in ((x - 1, y), (x + 1, y), (x, y - 1), (x, y + 1))
                        if 0 <= xx < w and 0 <= yy < h] for y in range(h) for x in range(w)}


@pytest.mark.parametrize("name,topo,diam", [
    ("ring8", ring_topology(8), 4),
    ("ring11", ring_topology(11), 5),
    ("path6", path_topology(6), 5),
    ("grid3x3", grid_topology(3, 3), 4),
])
def test_bounded_degree_within_ten_diameters(name, topo, diam):
    n = len(topo)
    worst = max(rounds_to_consistency(seeded_dags(n), topo, 1, s) for s in range(100))
    assert worst <= 10 * diam
