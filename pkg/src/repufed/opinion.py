"""Subjective-logic opinions and reputation scores.

An opinion is a (trust, distrust, uncertainty) triple on the unit simplex.
Local opinions come from interaction counts and link quality; neighbours'
opinions are averaged into a recommendation and fused with the local one.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import DegenerateFusionError, ValidationError

SUM_TOL = 1e-9


@dataclass(frozen=True)
class Opinion:
    r: float
    d: float
    u: float

    def __post_init__(self):
        if min(self.r, self.d, self.u) < -SUM_TOL or abs(self.r + self.d + self.u - 1.0) > SUM_TOL:
            raise ValidationError(f"invalid opinion ({self.r}, {self.d}, {self.u})")

    @classmethod
    def vacuous(cls) -> "Opinion":
        return cls(0.0, 0.0, 1.0)

    @classmethod
    def from_vector(cls, v) -> "Opinion":
        """Project a possibly perturbed triple back onto the simplex."""
        r, d, u = (max(0.0, float(x)) for x in v)
        total = r + d + u
        if total == 0.0:
            return cls.vacuous()
        return cls(r / total, d / total, u / total)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.r, self.d, self.u)


@dataclass(frozen=True)
class InteractionStats:
    alpha: float = 0.0  # positive events
    beta: float = 0.0  # negative events
    s: float = 1.0  # packet-success probability (running delivery rate)
    attempts: int = 0

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValidationError("event counts must be non-negative")
        if not 0.0 <= self.s <= 1.0:
            raise ValidationError("s must lie in [0, 1]")


@dataclass(frozen=True)
class Recommendation:
    delta: float
    opinion: Opinion

    def __post_init__(self):
        if self.delta < 0:
            raise ValidationError("recommendation weight must be non-negative")


def local_opinion(stats: InteractionStats) -> Opinion:
    total = stats.alpha + stats.beta
    if total <= 0:
        raise ValidationError("no interactions recorded (alpha + beta = 0)")
    u = 1.0 - stats.s
    belief = 1.0 - u
    r = belief * stats.alpha / total
    d = belief * stats.beta / total
    # absorb rounding so the triple sums to one exactly
    return Opinion(r, d, 1.0 - r - d)


def reputation(op: Opinion, gamma: float = 0.5) -> float:
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError("gamma must lie in [0, 1]")
    return op.r + gamma * op.u


final_reputation = reputation


def combine_recommendations(recs: Sequence[Recommendation]) -> Opinion:
    if not recs:
        raise ValidationError("need at least one recommendation")
    total = sum(rc.delta for rc in recs)
    if total <= 0:
        raise ValidationError("recommendation weights sum to zero")
    r = sum(rc.delta * rc.opinion.r for rc in recs) / total
    d = sum(rc.delta * rc.opinion.d for rc in recs) / total
    u = sum(rc.delta * rc.opinion.u for rc in recs) / total
    return Opinion.from_vector((r, d, u))


def fuse_final(local: Opinion, rec: Opinion) -> Opinion:
    """Consensus of the local opinion with the combined recommendation."""
    denom = local.u + rec.u - rec.u * local.u
    if denom <= 0.0:
        raise DegenerateFusionError("both opinions are dogmatic (zero uncertainty)")
    r = (local.r * rec.u + rec.r * local.u) / denom
    d = (local.d * rec.u + rec.d * local.u) / denom
    u = (rec.u * local.u) / denom
    return Opinion.from_vector((r, d, u))


def fuse_or_average(local: Opinion, rec: Opinion) -> Opinion:
    """``fuse_final`` with the equal-weight average as fallback for dogmatic pairs."""
    try:
        return fuse_final(local, rec)
    except DegenerateFusionError:
        return Opinion.from_vector(((local.r + rec.r) / 2, (local.d + rec.d) / 2, (local.u + rec.u) / 2))


def count_interaction(prev: InteractionStats, sim_value: float, sim_threshold: float, delivered: bool) -> InteractionStats:
    """Classify one data-sharing event and update the running delivery rate."""
    if not 0.0 <= sim_value <= 1.0:
        raise ValidationError("similarity must lie in [0, 1]")
    positive = delivered and sim_value >= sim_threshold
    n = prev.attempts
    s = (prev.s * n + (1.0 if delivered else 0.0)) / (n + 1)
    return InteractionStats(
        alpha=prev.alpha + (1 if positive else 0),
        beta=prev.beta + (0 if positive else 1),
        s=s,
        attempts=n + 1,
    )
