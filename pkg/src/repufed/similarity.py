"""Trajectory-segment similarity, weighted trajectory graphs and redundancy filtering.

A segment is an (m, 2) array of positions sampled at a fixed frame rate.
Dissimilarity mixes three normalized components (velocity, position via a
tolerance-based LCS, orientation) with weights that sum to one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .scene import ObservationWindow


@dataclass(frozen=True)
class SimWeights:
    rho1: float = 1.0 / 3.0  # velocity
    rho2: float = 1.0 / 3.0  # position
    rho3: float = 1.0 / 3.0  # orientation

    def __post_init__(self):
        ws = (self.rho1, self.rho2, self.rho3)
        if any(w < 0 for w in ws) or abs(sum(ws) - 1.0) > 1e-12:
            raise ValidationError(f"similarity weights must be non-negative and sum to 1, got {ws}")


def _seg(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) == 0:
        raise ValidationError("segment must be a non-empty (m, 2) array")
    return arr


def velocity_diff(seg_i, seg_j) -> float:
    """|mean speed_i - mean speed_j| / max instantaneous speed over both segments.

    Speeds are per frame; the ratio does not depend on the frame rate.
    Two stationary segments give 0.
    """
    a, b = _seg(seg_i), _seg(seg_j)
    if len(a) < 2 or len(b) < 2:
        raise ValidationError("velocity difference needs at least 2 points per segment")
    sa = np.linalg.norm(np.diff(a, axis=0), axis=1)
    sb = np.linalg.norm(np.diff(b, axis=0), axis=1)
    top = max(sa.max(), sb.max())
    if top == 0.0:
        return 0.0
    return float(min(1.0, abs(sa.mean() - sb.mean()) / top))


def lcs_length(seg_i, seg_j, eps_lcs: float) -> int:
    """Longest order-preserving matching where matched points lie within ``eps_lcs``."""
    a, b = _seg(seg_i), _seg(seg_j)
    close = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1) <= eps_lcs
    k = len(b)
    prev = [0] * (k + 1)
    for row in close:
        cur = [0] * (k + 1)
        for j in range(k):
            if row[j]:
                cur[j + 1] = prev[j] + 1
            else:
                cur[j + 1] = cur[j] if cur[j] > prev[j + 1] else prev[j + 1]
        prev = cur
    return prev[k]


def position_diff(seg_i, seg_j, eps_lcs: float = 2.0) -> float:
    a, b = _seg(seg_i), _seg(seg_j)
    longest = max(len(a), len(b))
    return (longest - lcs_length(a, b, eps_lcs)) / longest


def orientation_diff(phi: float) -> float:
    """Piecewise sine penalty on the heading angle ``phi`` in [0, pi]."""
    if not (0.0 <= phi <= math.pi) or math.isnan(phi):
        raise ValidationError(f"angle {phi} outside [0, pi]")
    if phi == 0.0:
        return 0.0
    if phi <= math.pi / 2:
        return math.sin(phi) / 2.0
    return 0.5 + abs(math.sin(phi + math.pi / 2)) / 2.0


def heading_angle(seg_i, seg_j) -> float:
    """Angle between mean displacement vectors; 0 if either segment does not move."""
    a, b = _seg(seg_i), _seg(seg_j)
    da = a[-1] - a[0]
    db = b[-1] - b[0]
    if not da.any() or not db.any():
        return 0.0
    # atan2 stays exact for parallel vectors where acos of a rounded cosine does not
    return math.atan2(abs(float(da[0] * db[1] - da[1] * db[0])), float(np.dot(da, db)))


def diss(seg_i, seg_j, weights: SimWeights = SimWeights(), eps_lcs: float = 2.0) -> float:
    a, b = _seg(seg_i), _seg(seg_j)
    v = velocity_diff(a, b)
    p = position_diff(a, b, eps_lcs)
    o = orientation_diff(heading_angle(a, b))
    return weights.rho1 * v + weights.rho2 * p + weights.rho3 * o


def sim(seg_i, seg_j, weights: SimWeights = SimWeights(), eps_lcs: float = 2.0) -> float:
    return 1.0 - diss(seg_i, seg_j, weights, eps_lcs)


def similarity_matrix(segments: Sequence[np.ndarray], weights: SimWeights = SimWeights(), eps_lcs: float = 2.0) -> np.ndarray:
    """Symmetric pairwise similarity with ones on the diagonal."""
    n = len(segments)
    out = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = sim(segments[i], segments[j], weights, eps_lcs)
    return out


# --------------------------------------------------------------------------- graphs


@dataclass(frozen=True, eq=False)
class WeightedTrajectoryGraph:
    vehicle_ids: tuple[int, ...]  # ascending
    node_weights: np.ndarray  # (n,) in [0, 1]
    edge_weights: np.ndarray  # (n, n) symmetric, zero diagonal
    frames: tuple[int, int] = (0, 0)  # first and last frame covered

    def edge(self, a: int, b: int) -> float:
        i, j = self.vehicle_ids.index(a), self.vehicle_ids.index(b)
        return float(self.edge_weights[i, j])


def build_weighted_graph(win: ObservationWindow, weights: SimWeights = SimWeights(), eps_lcs: float = 2.0) -> WeightedTrajectoryGraph:
    """Graph over the window's vehicles, compared on their relative histories.

    Node weight is the mean similarity to the other vehicles (1.0 when alone).
    """
    if win.n < 1:
        raise ValidationError("window has no vehicles")
    order = sorted(range(win.n), key=lambda k: win.vehicle_ids[k])
    segs = [win.history[:, k, :] for k in order]
    s = similarity_matrix(segs, weights, eps_lcs)
    np.fill_diagonal(s, 0.0)
    n = len(order)
    nodes = s.sum(axis=1) / (n - 1) if n > 1 else np.ones(1)
    return WeightedTrajectoryGraph(
        tuple(win.vehicle_ids[k] for k in order),
        np.clip(nodes, 0.0, 1.0),
        s,
        (win.start_frame, win.start_frame + win.tau - 1),
    )


def serialize_seq(graph: WeightedTrajectoryGraph, k: int) -> np.ndarray:
    """Fixed-length vector: top-k node weights, then their upper-triangular edge weights.

    Missing vertices (graph smaller than k) are zero-padded.  The vector is
    min-max scaled to [0, 1]; a constant vector maps to all 0.5.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    n = len(graph.vehicle_ids)
    ranked = sorted(range(n), key=lambda i: (-graph.node_weights[i], graph.vehicle_ids[i]))[:k]
    nodes = np.zeros(k)
    nodes[: len(ranked)] = graph.node_weights[ranked]
    edges = []
    for a in range(k):
        for b in range(a + 1, k):
            if a < len(ranked) and b < len(ranked):
                edges.append(graph.edge_weights[ranked[a], ranked[b]])
            else:
                edges.append(0.0)
    vec = np.concatenate([nodes, np.asarray(edges, dtype=float)])
    lo, hi = vec.min(), vec.max()
    if hi - lo <= 0.0:
        return np.full_like(vec, 0.5)
    return (vec - lo) / (hi - lo)


def cosine_redundancy_filter(seqs: Sequence[np.ndarray], threshold: float = 0.8) -> list[int]:
    """Indices kept by a temporal scan that drops vectors too similar to a kept one."""
    vecs = [np.asarray(v, dtype=float) for v in seqs]
    if vecs and any(v.shape != vecs[0].shape for v in vecs):
        raise ValidationError("all Seq vectors must have equal length")
    kept: list[int] = []
    kept_unit: list[np.ndarray] = []
    for idx, v in enumerate(vecs):
        norm = np.linalg.norm(v)
        if norm == 0.0:
            continue
        u = v / norm
        if any(float(np.dot(u, w)) > threshold for w in kept_unit):
            continue
        kept.append(idx)
        kept_unit.append(u)
    return kept
