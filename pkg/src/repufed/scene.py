"""Trajectory scenes: CSV ingestion, synthetic traffic, windowing, corruption, metrics.

Positions are in meters and frames are integer indices.  A ``Track`` stores
its samples as arrays (``frames``, ``xy``) for speed; ``Track.points`` gives
the per-sample view.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, ValidationError

CSV_COLUMNS = ("frame_id", "vehicle_id", "x", "y")


@dataclass(frozen=True)
class TrajectoryPoint:
    t: int
    x: float
    y: float


@dataclass(frozen=True, eq=False)
class Track:
    vehicle_id: int
    frames: np.ndarray  # (m,) int64, strictly increasing
    xy: np.ndarray  # (m, 2) float64
    is_bad: bool = False
    lane_ids: np.ndarray | None = None  # (m,) int64

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.int64)
        xy = np.asarray(self.xy, dtype=np.float64).reshape(-1, 2)
        if frames.ndim != 1 or len(frames) != len(xy):
            raise ValidationError(f"vehicle {self.vehicle_id}: frames/xy length mismatch")
        if len(frames) < 2:
            raise ValidationError(f"vehicle {self.vehicle_id}: a track needs at least 2 points")
        if frames[0] < 0:
            raise ValidationError(f"vehicle {self.vehicle_id}: negative frame index")
        if np.any(np.diff(frames) <= 0):
            raise ValidationError(f"vehicle {self.vehicle_id}: frame indices must be strictly increasing")
        if not np.all(np.isfinite(xy)):
            raise ValidationError(f"vehicle {self.vehicle_id}: non-finite position")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "xy", xy)
        if self.lane_ids is not None:
            lanes = np.asarray(self.lane_ids, dtype=np.int64)
            if lanes.shape != frames.shape:
                raise ValidationError(f"vehicle {self.vehicle_id}: lane_ids length mismatch")
            object.__setattr__(self, "lane_ids", lanes)

    @classmethod
    def from_points(cls, vehicle_id: int, points: Iterable[TrajectoryPoint], is_bad: bool = False) -> "Track":
        pts = list(points)
        return cls(vehicle_id, [p.t for p in pts], [(p.x, p.y) for p in pts], is_bad)

    @property
    def points(self) -> list[TrajectoryPoint]:
        return [TrajectoryPoint(int(t), float(x), float(y)) for t, (x, y) in zip(self.frames, self.xy)]

    @property
    def first_frame(self) -> int:
        return int(self.frames[0])

    @property
    def last_frame(self) -> int:
        return int(self.frames[-1])

    def span(self, start: int, length: int) -> np.ndarray | None:
        """Positions for frames ``start .. start+length-1`` or None if any is missing."""
        i = int(np.searchsorted(self.frames, start))
        j = i + length - 1
        if i >= len(self.frames) or j >= len(self.frames):
            return None
        if self.frames[i] != start or self.frames[j] != start + length - 1:
            return None
        return self.xy[i : j + 1]

    def __eq__(self, other):
        if not isinstance(other, Track):
            return NotImplemented
        lanes_eq = (self.lane_ids is None and other.lane_ids is None) or (
            self.lane_ids is not None
            and other.lane_ids is not None
            and np.array_equal(self.lane_ids, other.lane_ids)
        )
        return (
            self.vehicle_id == other.vehicle_id
            and self.is_bad == other.is_bad
            and np.array_equal(self.frames, other.frames)
            and np.array_equal(self.xy, other.xy)
            and lanes_eq
        )

    __hash__ = None


@dataclass(frozen=True)
class Scene:
    tracks: tuple[Track, ...]
    frame_rate: float = 2.0

    def __post_init__(self):
        tracks = tuple(sorted(self.tracks, key=lambda tr: tr.vehicle_id))
        ids = [tr.vehicle_id for tr in tracks]
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate vehicle_id in scene")
        if not self.frame_rate > 0:
            raise ValidationError("frame_rate must be positive")
        object.__setattr__(self, "tracks", tracks)

    @property
    def start_frame(self) -> int:
        return min(tr.first_frame for tr in self.tracks)

    @property
    def end_frame(self) -> int:
        return max(tr.last_frame for tr in self.tracks)

    @property
    def n_frames(self) -> int:
        if not self.tracks:
            return 0
        return self.end_frame - self.start_frame + 1

    @property
    def vehicle_ids(self) -> list[int]:
        return [tr.vehicle_id for tr in self.tracks]

    def track(self, vehicle_id: int) -> Track:
        for tr in self.tracks:
            if tr.vehicle_id == vehicle_id:
                return tr
        raise KeyError(vehicle_id)

    def bad_ids(self) -> set[int]:
        return {tr.vehicle_id for tr in self.tracks if tr.is_bad}


@dataclass(frozen=True, eq=False)
class ObservationWindow:
    """History/future arrays are (steps, n, 2), relative to each vehicle's last history position."""

    history: np.ndarray
    future: np.ndarray
    vehicle_ids: tuple[int, ...]
    start_frame: int = 0
    anchors: np.ndarray | None = None  # absolute (n, 2) position at the last history frame

    @property
    def n(self) -> int:
        return len(self.vehicle_ids)

    @property
    def tau(self) -> int:
        return self.history.shape[0]

    @property
    def t_f(self) -> int:
        return self.future.shape[0]


# --------------------------------------------------------------------------- CSV


def load_csv(path, frame_rate: float = 2.0) -> list[Scene]:
    """Read a ``frame_id,vehicle_id,x,y[,lane_id]`` file into scenes.

    Rows may come in any order.  Scenes are maximal blocks of consecutive frame
    ids; a gap in frame ids starts a new scene.
    """
    path = Path(path)
    rows: dict[tuple[int, int], tuple[float, float, int | None]] = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ParseError("missing header row", 1) from None
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise ParseError(f"header lacks columns {missing}", 1)
        col = {name: header.index(name) for name in header}
        has_lane = "lane_id" in col
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", lineno)
            try:
                frame = int(row[col["frame_id"]])
                vid = int(row[col["vehicle_id"]])
                x = float(row[col["x"]])
                y = float(row[col["y"]])
                lane = int(row[col["lane_id"]]) if has_lane and row[col["lane_id"]].strip() else None
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
            if frame < 0:
                raise ParseError("negative frame_id", lineno)
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ParseError("non-finite coordinate", lineno)
            key = (vid, frame)
            if key in rows:
                raise ValidationError(f"line {lineno}: duplicate row for vehicle {vid} frame {frame}")
            rows[key] = (x, y, lane)

    if not rows:
        return []
    frames = sorted({f for _, f in rows})
    blocks: list[tuple[int, int]] = []
    lo = prev = frames[0]
    for f in frames[1:]:
        if f != prev + 1:
            blocks.append((lo, prev))
            lo = f
        prev = f
    blocks.append((lo, prev))

    by_vehicle: dict[int, list[int]] = {}
    for vid, f in rows:
        by_vehicle.setdefault(vid, []).append(f)

    scenes = []
    for lo, hi in blocks:
        tracks = []
        for vid in sorted(by_vehicle):
            fs = sorted(f for f in by_vehicle[vid] if lo <= f <= hi)
            if not fs:
                continue
            xy = [rows[(vid, f)][:2] for f in fs]
            lanes = [rows[(vid, f)][2] for f in fs]
            lane_arr = None if any(l is None for l in lanes) else lanes
            tracks.append(Track(vid, fs, xy, lane_ids=lane_arr))
        scenes.append(Scene(tuple(tracks), frame_rate))
    return scenes


def save_csv(scenes: Sequence[Scene], path) -> None:
    """Write scenes so that ``load_csv`` reproduces them (``is_bad`` is not persisted).

    Coordinates are written with ``repr`` so floats round-trip exactly.
    """
    spans = sorted((sc.start_frame, sc.end_frame) for sc in scenes if sc.tracks)
    for (_, hi), (lo, _) in zip(spans, spans[1:]):
        if lo <= hi + 1:
            raise ValidationError("scenes with touching or overlapping frame ranges would merge on reload")
    with_lane = any(tr.lane_ids is not None for sc in scenes for tr in sc.tracks)
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS + (("lane_id",) if with_lane else ()))
        for sc in scenes:
            for tr in sc.tracks:
                for k, (f, (x, y)) in enumerate(zip(tr.frames, tr.xy)):
                    row = [int(f), tr.vehicle_id, repr(float(x)), repr(float(y))]
                    if with_lane:
                        row.append("" if tr.lane_ids is None else int(tr.lane_ids[k]))
                    writer.writerow(row)


# --------------------------------------------------------------------------- synthesis


@dataclass(frozen=True)
class SynthConfig:
    n_vehicles: int = 20
    n_lanes: int = 3
    duration_frames: int = 100
    speed_range: tuple[float, float] = (20.0, 30.0)
    lane_change_prob: float = 0.02  # per vehicle per frame, while not already changing
    seed: int = 0
    frame_rate: float = 2.0
    lane_width: float = 3.7
    lane_change_seconds: float = 4.0
    speed_wobble: float = 0.0  # amplitude (m/s) of a slow sinusoidal speed variation
    wobble_period_s: float = 12.0
    spacing: float = 25.0  # mean initial longitudinal gap between vehicles in a lane


def synthesize_traffic(cfg: SynthConfig) -> Scene:
    """Kinematic lane-following traffic with smooth cosine-profile lane changes."""
    if cfg.n_vehicles < 1:
        raise ValidationError("n_vehicles must be >= 1")
    if cfg.duration_frames < 2:
        raise ValidationError("duration_frames must be >= 2")
    lo, hi = map(float, cfg.speed_range)
    if not (0 < lo <= hi):
        raise ValidationError("speed_range must be positive and ordered")
    if cfg.n_lanes < 1 or cfg.frame_rate <= 0:
        raise ValidationError("n_lanes >= 1 and frame_rate > 0 required")
    rng = np.random.default_rng(cfg.seed)
    dt = 1.0 / cfg.frame_rate
    T = cfg.duration_frames
    w = cfg.lane_width
    change_frames = max(2, int(round(cfg.lane_change_seconds * cfg.frame_rate)))
    # peak lateral speed of the cosine profile; keeps total speed inside the range
    vlat_max = math.pi * w / (2.0 * cfg.lane_change_seconds) if cfg.lane_change_prob > 0 and cfg.n_lanes > 1 else 0.0
    v_top = math.sqrt(max(hi * hi - vlat_max * vlat_max, lo * lo))
    amp = min(cfg.speed_wobble, (v_top - lo) / 2.0)

    tracks = []
    frames = np.arange(T, dtype=np.int64)
    t_sec = frames * dt
    for vid in range(cfg.n_vehicles):
        lane = int(rng.integers(cfg.n_lanes))
        base = float(rng.uniform(lo + amp, v_top - amp)) if v_top - amp > lo + amp else lo + amp
        phase = float(rng.uniform(0.0, 2 * math.pi))
        speed = base + amp * np.sin(2 * math.pi * t_sec / cfg.wobble_period_s + phase)
        x0 = float(rng.uniform(0.0, cfg.spacing * cfg.n_vehicles / cfg.n_lanes))
        x = x0 + np.concatenate([[0.0], np.cumsum(speed[:-1] * dt)])
        y = np.empty(T)
        lanes = np.empty(T, dtype=np.int64)
        cur = lane
        t = 0
        while t < T:
            y[t] = (cur + 0.5) * w
            lanes[t] = cur
            if cfg.n_lanes > 1 and t + 1 < T and rng.random() < cfg.lane_change_prob:
                options = [l for l in (cur - 1, cur + 1) if 0 <= l < cfg.n_lanes]
                target = options[int(rng.integers(len(options)))]
                y0, y1 = (cur + 0.5) * w, (target + 0.5) * w
                for k in range(1, change_frames + 1):
                    if t + k >= T:
                        break
                    u = k / change_frames
                    y[t + k] = y0 + (y1 - y0) * (1 - math.cos(math.pi * u)) / 2
                    lanes[t + k] = cur if u < 0.5 else target
                cur = target
                t += change_frames + 1
                continue
            t += 1
        tracks.append(Track(vid, frames, np.column_stack([x, y]), lane_ids=lanes))
    return Scene(tuple(tracks), cfg.frame_rate)


# --------------------------------------------------------------------------- windows


def window(scene: Scene, tau: int, t_f: int, stride: int = 1) -> list[ObservationWindow]:
    if tau < 2 or t_f < 1 or stride < 1:
        raise ValidationError("need tau >= 2, t_f >= 1, stride >= 1")
    if not scene.tracks:
        return []
    span = tau + t_f
    if span > scene.n_frames:
        raise ValidationError(f"tau + t_f = {span} exceeds scene length {scene.n_frames}")
    out = []
    for start in range(scene.start_frame, scene.end_frame - span + 2, stride):
        ids, segs = [], []
        for tr in scene.tracks:
            seg = tr.span(start, span)
            if seg is not None:
                ids.append(tr.vehicle_id)
                segs.append(seg)
        if not ids:
            continue
        arr = np.stack(segs, axis=1)  # (span, n, 2)
        anchor = arr[tau - 1].copy()
        rel = arr - anchor[None, :, :]
        out.append(ObservationWindow(rel[:tau].copy(), rel[tau:].copy(), tuple(ids), start, anchor))
    return out


# --------------------------------------------------------------------------- corruption


def inject_bad_nodes(scene: Scene, fraction: float, mode: str = "jitter", magnitude: float = 5.0, seed: int = 0):
    """Corrupt ``floor(fraction * n)`` seeded-random tracks; returns ``(scene, bad_ids)``."""
    if not 0.0 <= fraction <= 1.0:
        raise ValidationError("fraction must lie in [0, 1]")
    if mode not in ("scale", "jitter", "swap"):
        raise ValidationError(f"unknown corruption mode {mode!r}")
    tracks = list(scene.tracks)
    n = len(tracks)
    k = int(math.floor(fraction * n + 1e-12))
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(n, size=k, replace=False).tolist()) if k else []
    new = list(tracks)
    for idx in chosen:
        tr = tracks[idx]
        if mode == "scale":
            xy = tr.xy[0] + magnitude * (tr.xy - tr.xy[0])
        elif mode == "jitter":
            xy = tr.xy + rng.normal(0.0, magnitude, size=tr.xy.shape)
        else:
            xy = _swap_tail(tr, tracks[(idx + 1) % n] if n > 1 else None, magnitude)
        new[idx] = replace(tr, xy=xy, is_bad=True)
    return Scene(tuple(new), scene.frame_rate), {tracks[i].vehicle_id for i in chosen}


def _swap_tail(tr: Track, donor: Track | None, magnitude: float) -> np.ndarray:
    # second half of the track takes the donor's positions (identity confusion);
    # frames the donor lacks are shifted laterally by ``magnitude``
    xy = tr.xy.copy()
    mid = len(xy) // 2
    for k in range(mid, len(xy)):
        f = tr.frames[k]
        if donor is not None and donor is not tr:
            j = int(np.searchsorted(donor.frames, f))
            if j < len(donor.frames) and donor.frames[j] == f:
                xy[k] = donor.xy[j]
                continue
        xy[k] = xy[k] + (0.0, magnitude)
    if np.array_equal(xy, tr.xy):
        xy[mid:] += (0.0, magnitude if magnitude else 1.0)
    return xy


# --------------------------------------------------------------------------- metrics


def metrics(pred, truth) -> dict[str, float]:
    """ADE, FDE and RMSE for (T_f, n, 2) arrays."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 3 or pred.shape[-1] != 2:
        raise ValidationError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    err = pred - truth
    dist = np.sqrt((err**2).sum(axis=-1))
    return {
        "ade": float(dist.mean()),
        "fde": float(dist[-1].mean()),
        "rmse": float(np.sqrt((err**2).mean())),
    }


def pooled_metrics(preds: Sequence[np.ndarray], truths: Sequence[np.ndarray]) -> dict[str, float]:
    """Metrics over several windows, pooled across every predicted vehicle."""
    if len(preds) != len(truths):
        raise ValidationError("prediction/truth list length mismatch")
    if not preds:
        raise ValidationError("no windows to evaluate")
    p = np.concatenate([np.asarray(a, float) for a in preds], axis=1)
    t = np.concatenate([np.asarray(a, float) for a in truths], axis=1)
    return metrics(p, t)
