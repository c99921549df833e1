"""Per-vehicle hash-linked DAG of transactions and its gossip dissemination.

Transactions are immutable and content-addressed, so merging two DAGs is a
plain set union keyed by id.  ``LocalDag`` values are treated as immutable:
every operation returns a new one.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ValidationError

KINDS = ("model-share", "reputation-update", "data-share-event")
GENESIS_KIND = "genesis"
MAX_PAYLOAD_BYTES = 4096


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def tx_id(kind: str, payload: str, approves: Sequence[str], author: int, slot: int) -> str:
    body = canonical([kind, payload, list(approves), author, slot]).encode()
    return hashlib.blake2b(body, digest_size=8).hexdigest()


@dataclass(frozen=True)
class DagTransaction:
    id: str
    kind: str
    payload: str
    approves: tuple[str, ...]
    author: int
    slot: int

    def to_json(self) -> dict:
        return {"id": self.id, "kind": self.kind, "approves": list(self.approves), "author": self.author, "slot": self.slot}


def make_transaction(kind: str, payload, approves: Sequence[str], author: int, slot: int) -> DagTransaction:
    body = payload if isinstance(payload, str) else canonical(payload)
    approves = tuple(approves)
    return DagTransaction(tx_id(kind, body, approves, author, slot), kind, body, approves, author, slot)


GENESIS = make_transaction(GENESIS_KIND, "", (), -1, -1)


@dataclass(frozen=True)
class LocalDag:
    transactions: Mapping[str, DagTransaction]
    approved: frozenset[str] = field(default_factory=frozenset)

    @classmethod
    def new(cls) -> "LocalDag":
        return cls({GENESIS.id: GENESIS}, frozenset())

    @property
    def tips(self) -> set[str]:
        return set(self.transactions) - self.approved

    def __len__(self):
        return len(self.transactions)

    def __contains__(self, tid):
        return tid in self.transactions

    def ids(self) -> frozenset[str]:
        return frozenset(self.transactions)

    def oldest_tips(self, k: int = 2) -> list[str]:
        tips = sorted(self.tips, key=lambda t: (self.transactions[t].slot, t))
        return tips[:k]

    def validate(self) -> None:
        if GENESIS.id not in self.transactions:
            raise ValidationError("genesis missing")
        for tid, tx in self.transactions.items():
            if tx.id != tid or tx_id(tx.kind, tx.payload, tx.approves, tx.author, tx.slot) != tid:
                raise ValidationError(f"transaction {tid} does not hash to its id")
            for parent in tx.approves:
                if parent not in self.transactions:
                    raise ValidationError(f"{tid} approves unknown {parent}")
        if self.approved != frozenset(p for tx in self.transactions.values() for p in tx.approves):
            raise ValidationError("tip bookkeeping out of sync with edges")
        if not is_acyclic(self):
            raise ValidationError("cycle detected")

    def dump_jsonl(self) -> str:
        ordered = sorted(self.transactions.values(), key=lambda t: (t.slot, t.id))
        return "".join(canonical(tx.to_json()) + "\n" for tx in ordered)


def is_acyclic(dag: LocalDag) -> bool:
    state: dict[str, int] = {}
    for root in dag.transactions:
        if root in state:
            continue
        stack = [(root, iter(dag.transactions[root].approves))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
                continue
            st = state.get(nxt, 0)
            if st == 1:
                return False
            if st == 0 and nxt in dag.transactions:
                state[nxt] = 1
                stack.append((nxt, iter(dag.transactions[nxt].approves)))
    return True


def append_transaction(dag: LocalDag, kind: str, payload, author: int, slot: int) -> tuple[LocalDag, DagTransaction]:
    """Append a transaction approving the two oldest tips (ordered by slot, then id)."""
    if kind not in KINDS:
        raise ValidationError(f"unknown transaction kind {kind!r}")
    body = payload if isinstance(payload, str) else canonical(payload)
    if len(body.encode()) > MAX_PAYLOAD_BYTES:
        raise ValidationError(f"payload of {len(body.encode())} bytes exceeds {MAX_PAYLOAD_BYTES}")
    tx = make_transaction(kind, body, dag.oldest_tips(2), author, slot)
    if tx.id in dag.transactions:
        return dag, tx
    txs = dict(dag.transactions)
    txs[tx.id] = tx
    return LocalDag(txs, dag.approved | frozenset(tx.approves)), tx


def merge(a: LocalDag, b: LocalDag) -> LocalDag:
    """Id-deduplicated union; commutative, associative and idempotent."""
    if b.transactions.keys() <= a.transactions.keys():
        return a
    if a.transactions.keys() <= b.transactions.keys():
        return b
    txs = dict(a.transactions)
    txs.update(b.transactions)
    return LocalDag(txs, a.approved | b.approved)


def merge_all(dags: Iterable[LocalDag]) -> LocalDag:
    out = None
    for d in dags:
        out = d if out is None else merge(out, d)
    return out if out is not None else LocalDag.new()


def gossip_round(dags: Mapping[int, LocalDag], topology: Mapping[int, Sequence[int]], fanout: int, seed) -> dict[int, LocalDag]:
    """One synchronous push round over immutable snapshots.

    Every vehicle (ascending id) pushes its DAG to ``fanout`` distinct random
    neighbours; each receiver unions everything it got with its own DAG.
    """
    missing = set(dags) - set(topology)
    if missing:
        raise ValidationError(f"topology lacks vehicles {sorted(missing)}")
    rng = np.random.default_rng(seed)
    inbox: dict[int, list[LocalDag]] = {v: [] for v in dags}
    if fanout > 0:
        for v in sorted(dags):
            nbrs = sorted(n for n in topology[v] if n in dags and n != v)
            if not nbrs:
                continue
            k = min(fanout, len(nbrs))
            for idx in sorted(rng.choice(len(nbrs), size=k, replace=False).tolist()):
                inbox[nbrs[idx]].append(dags[v])
    return {v: merge_all([dags[v], *inbox[v]]) for v in sorted(dags)}


def all_consistent(dags: Mapping[int, LocalDag]) -> bool:
    sets = {d.ids() for d in dags.values()}
    return len(sets) <= 1


def ring_topology(n: int) -> dict[int, list[int]]:
    return {i: sorted({(i - 1) % n, (i + 1) % n} - {i}) for i in range(n)}


def complete_topology(ids: Sequence[int]) -> dict[int, list[int]]:
    return {i: [j for j in ids if j != i] for i in ids}
