"""Model merging rules: FedAvg, staleness-discounted async merges, grouped
aggregation by reputation, and committee validation of candidate models."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .predictor import ModelParams, SceneBatch, batch_loss


@dataclass
class VehicleNode:
    id: int
    data: SceneBatch
    params: ModelParams
    xi: float
    tau_rate: float
    s_comm: float = 1.0
    reputation: float = 0.5
    position: tuple[float, float] = (0.0, 0.0)
    is_bad: bool = False

    def __post_init__(self):
        if not self.xi > 0:
            raise ValidationError("xi must be positive")
        if not self.tau_rate > 0:
            raise ValidationError("tau_rate must be positive")
        if not 0.0 <= self.s_comm <= 1.0:
            raise ValidationError("s_comm must lie in [0, 1]")

    @property
    def n_samples(self) -> int:
        return self.data.n_samples


@dataclass(frozen=True, eq=False)
class GlobalModel:
    params: ModelParams
    version: int = 0
    slot: int = 0


@dataclass(frozen=True, eq=False)
class Contribution:
    """One vehicle's shared model as seen by the aggregator."""

    vehicle_id: int
    params: ModelParams
    reputation: float = 1.0
    staleness: int = 0
    n_samples: int = 1


def fedavg(params_list: Sequence[ModelParams], weights: Sequence[float]) -> ModelParams:
    if not params_list:
        raise ValidationError("nothing to average")
    if len(params_list) != len(weights):
        raise ValidationError("one weight per model required")
    dims = params_list[0].dims
    if any(p.dims != dims for p in params_list):
        raise ValidationError("model dims mismatch")
    w = np.asarray(weights, dtype=float)
    if np.any(w < 0) or not w.sum() > 0:
        raise ValidationError("weights must be non-negative with a positive sum")
    w = w / w.sum()
    flat = np.zeros(params_list[0].size)
    for wi, p in zip(w, params_list):
        flat += wi * p.flat()
    return ModelParams.from_flat(flat, dims)


def mixing_weight(staleness: float, mix0: float, decay: float) -> float:
    if staleness < 0:
        raise ValidationError("staleness must be >= 0")
    if not 0 < mix0 <= 1:
        raise ValidationError("mix0 must lie in (0, 1]")
    if decay < 0:
        raise ValidationError("decay must be >= 0")
    return mix0 / (1.0 + decay * staleness)


def async_update(glob: GlobalModel, incoming: ModelParams, staleness: float, mix0: float = 0.5,
                 decay: float = 0.5) -> GlobalModel:
    """global <- (1 - a) global + a incoming with a = mix0 / (1 + decay * staleness)."""
    if incoming.dims != glob.params.dims:
        raise ValidationError("model dims mismatch")
    a = mixing_weight(staleness, mix0, decay)
    flat = (1.0 - a) * glob.params.flat() + a * incoming.flat()
    return GlobalModel(ModelParams.from_flat(flat, glob.params.dims), glob.version + 1, glob.slot)


def _group_mean(group: Sequence[Contribution], by_reputation: bool) -> tuple[ModelParams, float, float]:
    sizes = np.array([c.n_samples for c in group], dtype=float)
    w = sizes * np.array([c.reputation for c in group], dtype=float) if by_reputation else sizes
    if not w.sum() > 0:
        w = np.ones(len(group))
    avg = fedavg([c.params for c in group], w)
    stale = float(np.dot(w, [c.staleness for c in group]) / w.sum())
    return avg, stale, float(sizes.sum())


def grouped_aggregate(glob: GlobalModel, high_group: Sequence[Contribution], low_group: Sequence[Contribution],
                      deep_rounds: int = 3, shallow_weight: float = 0.25, mix0: float = 0.5,
                      decay: float = 0.5) -> GlobalModel:
    """Deep merge of the high group, then one down-weighted merge of the low group.

    The high group is reduced to its reputation-and-size weighted mean and
    merged ``deep_rounds`` times.  The low group is reduced to its size
    weighted mean and merged once, its mixing weight scaled by
    ``shallow_weight`` and by its share of the samples on the table.
    """
    hi_ids = {c.vehicle_id for c in high_group}
    if hi_ids & {c.vehicle_id for c in low_group}:
        raise ValidationError("high and low groups overlap")
    if deep_rounds < 1:
        raise ValidationError("deep_rounds must be >= 1")
    if not 0.0 <= shallow_weight <= 1.0:
        raise ValidationError("shallow_weight must lie in [0, 1]")
    out = glob
    n_high = 0.0
    if high_group:
        avg, stale, n_high = _group_mean(high_group, True)
        for _ in range(deep_rounds):
            out = async_update(out, avg, stale, mix0, decay)
    if low_group and shallow_weight > 0:
        avg, stale, n_low = _group_mean(low_group, False)
        m = mix0 * shallow_weight * n_low / (n_high + n_low)
        if m > 0:
            out = async_update(out, avg, stale, m, decay)
    return out


def select_committee(nodes: Sequence, k: int) -> list:
    """Top-k by reputation, ties by id ascending."""
    if k < 1:
        raise ValidationError("committee size must be >= 1")
    if k > len(nodes):
        raise ValidationError("committee larger than the population")
    return sorted(nodes, key=lambda n: (-n.reputation, n.id))[:k]


def por_weight(size_j: int, sizes: Sequence[int]) -> float:
    total = float(sum(sizes))
    if size_j <= 0 or total <= 0:
        raise ValidationError("empty data shard")
    return 1.0 + abs(size_j) / total


def committee_losses(candidate_losses: Sequence[float], local_losses: Sequence[float], sizes: Sequence[int]) -> list[float]:
    """Per-member score: weight_j * candidate loss on d_j + mean local-model loss."""
    if not len(candidate_losses) == len(local_losses) == len(sizes) or not sizes:
        raise ValidationError("committee inputs must be non-empty and aligned")
    base = float(np.mean(local_losses))
    return [por_weight(n, sizes) * lc + base for lc, n in zip(candidate_losses, sizes)]


@dataclass(frozen=True)
class PorVerdict:
    accepted: bool
    losses: dict
    median: float
    threshold: float


def por_validate(candidate: ModelParams, committee: Sequence[VehicleNode], threshold: float,
                 cv_prior: bool = True) -> PorVerdict:
    """Accept iff the median committee score of ``candidate`` is at most ``threshold``."""
    if not committee:
        raise ValidationError("committee is empty")
    sizes = [m.n_samples for m in committee]
    if min(sizes) <= 0:
        raise ValidationError("empty data shard")
    cand = [batch_loss(candidate, m.data, cv_prior) for m in committee]
    local = [batch_loss(m.params, m.data, cv_prior) for m in committee]
    scores = committee_losses(cand, local, sizes)
    med = float(np.median(scores))
    return PorVerdict(med <= threshold, {m.id: s for m, s in zip(committee, scores)}, med, float(threshold))


def committee_median(params: ModelParams, committee: Sequence[VehicleNode], cv_prior: bool = True) -> float:
    return por_validate(params, committee, np.inf, cv_prior).median
