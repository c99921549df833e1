"""Graph-linear trajectory predictor.

Each vehicle's future displacements are a linear function of its own
encoded history and of a similarity-weighted sum of its neighbours' encoded
histories, added on top of a constant-velocity extrapolation.  Displacements
are summed over time to give relative positions.

The default ``cv_residual`` encoding subtracts the constant-velocity line
through the last two history points from the relative history; it is an
invertible-up-to-velocity linear map that keeps gradient descent well
conditioned.  ``relative`` feeds the raw relative positions.

The loss is the mean Euclidean position error, averaged over future steps
and over every predicted vehicle in the batch.  ``backward`` returns its
exact (sub)gradient.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import TrainingError, ValidationError
from .scene import ObservationWindow
from .similarity import SimWeights, build_weighted_graph


@dataclass(eq=False)
class ModelParams:
    w_self: np.ndarray  # (2*tau, 2*t_f)
    w_nbr: np.ndarray  # (2*tau, 2*t_f)
    bias: np.ndarray  # (2*t_f,)

    def __post_init__(self):
        self.w_self = np.asarray(self.w_self, dtype=float)
        self.w_nbr = np.asarray(self.w_nbr, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.w_self.ndim != 2 or self.w_self.shape != self.w_nbr.shape:
            raise ValidationError("w_self and w_nbr must be equal-shaped matrices")
        r, c = self.w_self.shape
        if r % 2 or c % 2 or self.bias.shape != (c,):
            raise ValidationError("inconsistent parameter dimensions")

    @property
    def dims(self) -> tuple[int, int]:
        return self.w_self.shape[0] // 2, self.w_self.shape[1] // 2

    @property
    def size(self) -> int:
        return self.w_self.size * 2 + self.bias.size

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w_self.ravel(), self.w_nbr.ravel(), self.bias])

    @classmethod
    def from_flat(cls, vec, dims: tuple[int, int]) -> "ModelParams":
        tau, t_f = dims
        a, b = 2 * tau, 2 * t_f
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (2 * a * b + b,):
            raise ValidationError(f"flat vector of length {vec.size} does not match dims {dims}")
        return cls(vec[: a * b].reshape(a, b).copy(), vec[a * b : 2 * a * b].reshape(a, b).copy(), vec[2 * a * b :].copy())

    @classmethod
    def zeros(cls, dims: tuple[int, int]) -> "ModelParams":
        tau, t_f = dims
        return cls(np.zeros((2 * tau, 2 * t_f)), np.zeros((2 * tau, 2 * t_f)), np.zeros(2 * t_f))

    def copy(self) -> "ModelParams":
        return ModelParams(self.w_self.copy(), self.w_nbr.copy(), self.bias.copy())

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return self.dims == other.dims and np.array_equal(self.flat(), other.flat())

    __hash__ = None


Gradients = ModelParams


def init_params(dims: tuple[int, int], scale: float, seed) -> ModelParams:
    if scale < 0:
        raise ValidationError("scale must be non-negative")
    tau, t_f = dims
    if tau < 2 or t_f < 1:
        raise ValidationError("need tau >= 2 and t_f >= 1")
    rng = np.random.default_rng(seed)
    n = 2 * (2 * tau) * (2 * t_f) + 2 * t_f
    return ModelParams.from_flat(rng.uniform(-scale, scale, size=n), dims)


# --------------------------------------------------------------------------- batches


def row_normalize(adj: np.ndarray) -> np.ndarray:
    a = np.asarray(adj, dtype=float).copy()
    np.fill_diagonal(a, 0.0)
    sums = a.sum(axis=1, keepdims=True)
    return np.divide(a, sums, out=np.zeros_like(a), where=sums > 0)


def similarity_adjacency(win: ObservationWindow, weights: SimWeights = SimWeights(), eps_lcs: float = 2.0) -> np.ndarray:
    """Row-normalized similarity adjacency, in the window's vehicle order."""
    g = build_weighted_graph(win, weights, eps_lcs)
    pos = {vid: k for k, vid in enumerate(g.vehicle_ids)}
    order = [pos[v] for v in win.vehicle_ids]
    return row_normalize(g.edge_weights[np.ix_(order, order)])


def distance_adjacency(win: ObservationWindow, threshold: float) -> np.ndarray:
    """Row-normalized 0/1 adjacency of vehicles within ``threshold`` meters at the last history frame."""
    if win.anchors is None:
        raise ValidationError("distance adjacency needs absolute anchors")
    d = np.linalg.norm(win.anchors[:, None, :] - win.anchors[None, :, :], axis=-1)
    return row_normalize((d <= threshold).astype(float))


ENCODINGS = ("cv_residual", "relative")


def encode_history(history: np.ndarray, encoding: str = "cv_residual") -> np.ndarray:
    """(tau, n, 2) relative history -> (n, 2*tau) feature rows."""
    h = np.asarray(history, dtype=float).transpose(1, 0, 2)  # (n, tau, 2)
    if encoding == "cv_residual":
        tau = h.shape[1]
        lag = np.arange(tau) - (tau - 1)
        v = h[:, -1] - h[:, -2]
        h = h - lag[None, :, None] * v[:, None, :]
    elif encoding != "relative":
        raise ValidationError(f"unknown encoding {encoding!r}")
    return h.reshape(h.shape[0], -1)


@dataclass(eq=False)
class SceneBatch:
    windows: list[ObservationWindow]
    adjacency: list[np.ndarray]
    encoding: str = "cv_residual"
    _stack: tuple | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.encoding not in ENCODINGS:
            raise ValidationError(f"unknown encoding {self.encoding!r}")
        if len(self.windows) != len(self.adjacency):
            raise ValidationError("one adjacency matrix per window required")
        for w, a in zip(self.windows, self.adjacency):
            if a.shape != (w.n, w.n):
                raise ValidationError("adjacency shape does not match window")
            rows = a.sum(axis=1)
            if np.any(np.diag(a) != 0) or not np.all((np.abs(rows - 1) < 1e-9) | (rows == 0)):
                raise ValidationError("adjacency rows must sum to 1 (or be all-zero) with no self-loops")

    @property
    def n_samples(self) -> int:
        return sum(w.n for w in self.windows)

    def dims(self) -> tuple[int, int] | None:
        if not self.windows:
            return None
        return self.windows[0].tau, self.windows[0].t_f

    def stacked(self):
        """(H, G, V, Y): self histories, neighbour aggregates, last velocities, truths."""
        if self._stack is None:
            hs, gs, vs, ys = [], [], [], []
            for w, a in zip(self.windows, self.adjacency):
                h = encode_history(w.history, self.encoding)
                hs.append(h)
                gs.append(a @ h)
                vs.append(w.history[-1] - w.history[-2])
                ys.append(w.future.transpose(1, 0, 2))
            self._stack = (np.concatenate(hs), np.concatenate(gs), np.concatenate(vs), np.concatenate(ys))
        return self._stack


def make_batch(windows: Sequence[ObservationWindow], adjacency: str = "similarity", weights: SimWeights = SimWeights(),
               eps_lcs: float = 2.0, distance_threshold: float = 30.0, encoding: str = "cv_residual") -> SceneBatch:
    if adjacency == "similarity":
        adj = [similarity_adjacency(w, weights, eps_lcs) for w in windows]
    elif adjacency == "distance":
        adj = [distance_adjacency(w, distance_threshold) for w in windows]
    elif adjacency == "none":
        adj = [np.zeros((w.n, w.n)) for w in windows]
    else:
        raise ValidationError(f"unknown adjacency {adjacency!r}")
    return SceneBatch(list(windows), adj, encoding)


# --------------------------------------------------------------------------- model


def _check(params: ModelParams, batch: SceneBatch):
    d = batch.dims()
    if d is not None and d != params.dims:
        raise ValidationError(f"parameter dims {params.dims} do not match batch dims {d}")


def _predict_stacked(params: ModelParams, H, G, V, cv_prior: bool) -> np.ndarray:
    disp = H @ params.w_self + G @ params.w_nbr + params.bias  # (N, 2*t_f)
    disp = disp.reshape(len(H), -1, 2)
    if cv_prior:
        disp = disp + V[:, None, :]
    return np.cumsum(disp, axis=1)  # (N, t_f, 2)


def forward(params: ModelParams, batch: SceneBatch, cv_prior: bool = True) -> list[np.ndarray]:
    """Per-window predicted relative positions, each (t_f, n, 2)."""
    _check(params, batch)
    if not batch.windows:
        return []
    H, G, V, _ = batch.stacked()
    pos = _predict_stacked(params, H, G, V, cv_prior)
    out, k = [], 0
    for w in batch.windows:
        out.append(pos[k : k + w.n].transpose(1, 0, 2).copy())
        k += w.n
    return out


def loss(pred, truth) -> float:
    """Mean over steps of the vehicle-averaged Euclidean error.

    Accepts one (t_f, n, 2) array pair or lists of them; lists are pooled
    over every (window, vehicle) sample.
    """
    if isinstance(pred, (list, tuple)):
        if len(pred) != len(truth):
            raise ValidationError("prediction/truth list length mismatch")
        if not pred:
            raise ValidationError("empty batch")
        pred = np.concatenate([np.asarray(p, float) for p in pred], axis=1)
        truth = np.concatenate([np.asarray(t, float) for t in truth], axis=1)
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return float(np.sqrt(((pred - truth) ** 2).sum(axis=-1)).mean())


def batch_loss(params: ModelParams, batch: SceneBatch, cv_prior: bool = True) -> float:
    _check(params, batch)
    H, G, V, Y = batch.stacked()
    pos = _predict_stacked(params, H, G, V, cv_prior)
    return float(np.sqrt(((pos - Y) ** 2).sum(axis=-1)).mean())


def backward(params: ModelParams, batch: SceneBatch, cv_prior: bool = True) -> Gradients:
    """Gradient of ``batch_loss`` with respect to every parameter block.

    Zero residuals contribute a zero subgradient.
    """
    _check(params, batch)
    H, G, V, Y = batch.stacked()
    n, t_f = Y.shape[0], Y.shape[1]
    err = _predict_stacked(params, H, G, V, cv_prior) - Y
    norm = np.sqrt((err**2).sum(axis=-1, keepdims=True))
    unit = np.divide(err, norm, out=np.zeros_like(err), where=norm > 0)
    d_pos = unit / (n * t_f)
    # position t sums displacements 0..t, so a displacement's gradient is a suffix sum
    d_disp = np.flip(np.cumsum(np.flip(d_pos, axis=1), axis=1), axis=1).reshape(n, -1)
    return ModelParams(H.T @ d_disp, G.T @ d_disp, d_disp.sum(axis=0))


def sgd_step(params: ModelParams, grads: Gradients, lr: float) -> ModelParams:
    if lr < 0:
        raise ValidationError("learning rate must be non-negative")
    return ModelParams(params.w_self - lr * grads.w_self, params.w_nbr - lr * grads.w_nbr, params.bias - lr * grads.bias)


def local_train(params: ModelParams, batch: SceneBatch, epochs: int, lr: float, cv_prior: bool = True,
                history: list | None = None, lr_decay: float = 1.0) -> tuple[ModelParams, float]:
    """Full-batch gradient descent; returns the trained params and their final loss.

    The step at epoch e is ``lr * lr_decay**e``.  The loss is not smooth at a
    perfect fit, so a fixed step hovers around the optimum; a geometric decay
    below 1 lets it settle there.
    """
    if epochs < 1:
        raise ValidationError("epochs must be >= 1")
    if not 0.0 < lr_decay <= 1.0:
        raise ValidationError("lr_decay must lie in (0, 1]")
    p = params
    for epoch in range(epochs):
        p = sgd_step(p, backward(p, batch, cv_prior), lr * lr_decay**epoch)
        if history is not None or epoch == epochs - 1:
            val = batch_loss(p, batch, cv_prior)
            if not np.isfinite(val):
                raise TrainingError(f"loss became non-finite at epoch {epoch + 1}")
            if history is not None:
                history.append(val)
    return p, val


# --------------------------------------------------------------------------- checkpoints


def save_params(params: ModelParams, path) -> None:
    tau, t_f = params.dims
    doc = {"dims": {"tau": tau, "t_f": t_f}, "params": [repr(float(v)) for v in params.flat()]}
    Path(path).write_text(json.dumps(doc) + "\n", encoding="utf-8")


def load_params(path) -> ModelParams:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    dims = (int(doc["dims"]["tau"]), int(doc["dims"]["t_f"]))
    return ModelParams.from_flat(np.array([float(v) for v in doc["params"]]), dims)
