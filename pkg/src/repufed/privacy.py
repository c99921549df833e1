"""Laplace-mechanism perturbation of shared parameter vectors."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class DpConfig:
    epsilon: float = 0.3
    sensitivity_s: float = 1.0
    seed: int | tuple = 0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if not self.sensitivity_s > 0:
            raise ValidationError("sensitivity must be positive")

    @property
    def scale(self) -> float:
        return self.sensitivity_s / self.epsilon


def substream_seed(run_seed: int, vehicle_id: int, slot: int, tag: int = 0) -> np.random.SeedSequence:
    """Independent, order-free random stream for one (vehicle, slot) release."""
    words = [int(run_seed), int(vehicle_id) + 1, int(slot) + 1, int(tag)]
    return np.random.SeedSequence([w & 0xFFFFFFFFFFFFFFFF for w in words])


def clip_l1(params, s: float) -> np.ndarray:
    if not s > 0:
        raise ValidationError("clip bound must be positive")
    p = np.asarray(params, dtype=float)
    norm = float(np.abs(p).sum())
    if norm <= s:
        return p.copy()
    return p * (s / norm)


def inverse_cdf_laplace(u, b: float):
    """Laplace(0, b) quantile function; accepts scalars or arrays of u in (0, 1)."""
    arr = np.asarray(u, dtype=float)
    if np.any((arr <= 0.0) | (arr >= 1.0)) or np.any(np.isnan(arr)):
        raise ValidationError("u must lie strictly inside (0, 1)")
    c = arr - 0.5
    out = -b * np.sign(c) * np.log1p(-2.0 * np.abs(c))
    return float(out) if out.ndim == 0 else out


def laplace_noise(size, b: float, rng: np.random.Generator) -> np.ndarray:
    u = np.atleast_1d(np.asarray(rng.random(size), dtype=float))
    while True:
        bad = u == 0.0
        if not bad.any():
            break
        u[bad] = rng.random(int(bad.sum()))
    return np.asarray(inverse_cdf_laplace(u, b)).reshape(size)


def laplace_perturb(params, cfg: DpConfig) -> np.ndarray:
    """Add i.i.d. Laplace(0, s/epsilon) noise to a vector already clipped to L1 <= s."""
    p = np.asarray(params, dtype=float)
    if float(np.abs(p).sum()) > cfg.sensitivity_s + 1e-9:
        raise ValidationError("input exceeds the L1 sensitivity bound; clip it first")
    seed = cfg.seed if isinstance(cfg.seed, np.random.SeedSequence) else np.random.SeedSequence(cfg.seed)
    rng = np.random.default_rng(seed)
    return p + np.asarray(laplace_noise(p.shape, cfg.scale, rng)).reshape(p.shape)
