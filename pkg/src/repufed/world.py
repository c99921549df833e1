"""Slot-by-slot simulation of reputation-aware asynchronous federated learning.

A shared road scene supplies positions and the trajectory reports that
vehicles cross-check to form reputations.  Each vehicle trains on its own
local shard (non-IID; fully corrupted for bad vehicles) and shares its model
through the privacy layer.  Held-out clean scenes score the global model.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import ledger
from .config import ScenarioConfig
from .drl.env import EnvConfig, SelectEnv, SelectWorld
from .drl.nets import MLP
from .drl.ppo import PPOHyper, make_nets, policy_group, ppo_train
from .errors import ValidationError
from .federation import (Contribution, GlobalModel, VehicleNode, committee_median, fedavg, grouped_aggregate,
                         por_validate, select_committee)
from .opinion import (InteractionStats, Opinion, Recommendation, combine_recommendations, count_interaction,
                      fuse_or_average, local_opinion, reputation)
from .predictor import ModelParams, SceneBatch, batch_loss, forward, init_params, local_train, make_batch
from .privacy import DpConfig, clip_l1, laplace_noise, laplace_perturb, substream_seed
from .scene import (ObservationWindow, Scene, SynthConfig, inject_bad_nodes, load_csv, pooled_metrics,
                    synthesize_traffic, window)
from .similarity import SimWeights, build_weighted_graph, cosine_redundancy_filter, serialize_seq, sim

log = logging.getLogger("repufed")

TAG_DP, TAG_REP, TAG_GOSSIP, TAG_DRL, TAG_REP_DP = 1, 2, 3, 4, 5


@dataclass
class Flight:
    """A local training job in progress (asynchronous mode)."""

    vehicle_id: int
    start_slot: int
    finish: float
    local: ModelParams
    shared: ModelParams


@dataclass
class RoundReport:
    slot: int
    mode: str
    selected: list
    low_group: list
    costs: dict
    global_loss: float
    metrics: dict
    duration: float
    clock: float
    accepted: bool
    version: int
    arrivals: list = field(default_factory=list)
    reputations: dict = field(default_factory=dict)
    dag_size: int = 0

    def __post_init__(self):
        for k, v in self.costs.items():
            if k != "per_vehicle" and v < 0:
                raise ValidationError(f"negative cost {k}")

    def to_json(self) -> str:
        doc = {
            "slot": self.slot,
            "mode": self.mode,
            "selected": self.selected,
            "low_group": self.low_group,
            "costs": self.costs,
            "global_loss": self.global_loss,
            "metrics": self.metrics,
            "duration": self.duration,
            "clock": self.clock,
            "accepted": self.accepted,
            "version": self.version,
            "arrivals": self.arrivals,
            "reputations": {str(k): v for k, v in self.reputations.items()},
            "dag_size": self.dag_size,
        }
        return json.dumps(doc, sort_keys=True, allow_nan=False)


@dataclass
class World:
    cfg: ScenarioConfig
    nodes: list[VehicleNode]
    road: Scene  # ground truth
    reported: Scene  # what vehicles broadcast (bad tracks corrupted)
    test: SceneBatch
    glob: GlobalModel
    dags: dict
    stats: dict = field(default_factory=dict)
    clock: float = 0.0
    inflight: dict = field(default_factory=dict)
    pending: list = field(default_factory=list)
    policy: MLP | None = None
    value: MLP | None = None
    payloads: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    @property
    def ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    @property
    def n_params(self) -> int:
        return self.glob.params.size

    def node(self, vid: int) -> VehicleNode:
        for n in self.nodes:
            if n.id == vid:
                return n
        raise KeyError(vid)

    def bad_ids(self) -> set[int]:
        return {n.id for n in self.nodes if n.is_bad}

    def slot_start_frame(self, slot: int) -> int:
        sc = self.cfg.scene
        usable = self.road.n_frames - sc.tau
        return self.road.start_frame + (slot * sc.stride) % max(1, usable)


# --------------------------------------------------------------------------- costs


def time_costs(node: VehicleNode, beta_m: float, n_params: int) -> tuple[float, float]:
    """(training, upload) seconds: |d| * beta_m / xi and |w| / tau."""
    return node.n_samples * beta_m / node.xi, n_params / node.tau_rate


def slot_costs(nodes: Sequence[VehicleNode], selected: Sequence[int], beta_m: float, n_params: int) -> dict:
    """Per-slot cost components over the selected vehicles."""
    by_id = {n.id: n for n in nodes}
    per = {vid: time_costs(by_id[vid], beta_m, n_params) for vid in selected}
    if not per:
        return {"rol": 0.0, "c_a": 0.0, "c_u": 0.0, "c_te": 0.0, "total": 0.0, "per_vehicle": {}}
    ca = float(np.mean([v[0] for v in per.values()]))
    cu = float(np.mean([v[1] for v in per.values()]))
    rol = float(sum(1.0 - by_id[v].reputation for v in selected))
    return {"rol": rol, "c_a": ca, "c_u": cu, "c_te": ca + cu, "total": rol + ca + cu,
            "per_vehicle": {str(k): [a, u] for k, (a, u) in sorted(per.items())}}


# --------------------------------------------------------------------------- building


def _uniform(rng, lo_hi) -> float:
    lo, hi = lo_hi
    return float(rng.uniform(lo, hi)) if hi > lo else float(lo)


def _synth_shard(sc, rng, seed) -> Scene:
    lo, hi = sc.speed_range
    a = float(rng.uniform(lo, hi))
    b = float(rng.uniform(lo, hi))
    lo_v, hi_v = min(a, b), max(a, b) + 1.0
    return synthesize_traffic(SynthConfig(
        n_vehicles=sc.shard_vehicles, n_lanes=sc.road_lanes, duration_frames=sc.shard_frames,
        speed_range=(lo_v, hi_v), lane_change_prob=_uniform(rng, sc.lane_change_range), seed=seed,
        frame_rate=sc.frame_rate, speed_wobble=_uniform(rng, sc.wobble_range)))


def _road_scene(cfg: ScenarioConfig, rng) -> tuple[Scene, list[list[ObservationWindow]] | None, list | None]:
    sc = cfg.scene
    if not sc.csv:
        frames = cfg.fl.slots * sc.stride + sc.tau + 1
        road = synthesize_traffic(SynthConfig(
            n_vehicles=sc.n_vehicles, n_lanes=sc.road_lanes, duration_frames=frames, speed_range=sc.speed_range,
            lane_change_prob=float(np.mean(sc.lane_change_range)), seed=int(rng.integers(2**31)),
            frame_rate=sc.frame_rate, speed_wobble=float(np.mean(sc.wobble_range))))
        return road, None, None
    scenes = load_csv(sc.csv, sc.frame_rate)
    road = max(scenes, key=lambda s: len(s.tracks))
    full = [t for t in road.tracks if t.first_frame == road.start_frame and t.last_frame == road.end_frame
            and len(t.frames) == road.n_frames]
    if len(full) < 2:
        raise ValidationError("CSV road scene needs >= 2 vehicles spanning all its frames")
    road = Scene(tuple(full[: sc.n_vehicles]), road.frame_rate)
    wins = [w for s in scenes if s.n_frames >= sc.tau + sc.t_f for w in window(s, sc.tau, sc.t_f, sc.stride)]
    if len(wins) < 2:
        raise ValidationError("CSV scenes yield too few windows")
    test = wins[::5]
    train = [w for k, w in enumerate(wins) if k % 5]
    n = len(road.tracks)
    shards = [train[i::n] for i in range(n)]
    if any(not s for s in shards):
        raise ValidationError("not enough CSV windows to give every vehicle a shard")
    return road, shards, test


def _stream(seed: int, *words: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, 7, *words]))


def build_world(cfg: ScenarioConfig) -> World:
    """Assemble a fleet; every random draw has its own stream so that changing
    one knob (say the bad fraction) leaves everything else identical."""
    sc, fl = cfg.scene, cfg.fl
    road, csv_shards, csv_test = _road_scene(cfg, _stream(cfg.seed, 0))
    reported, bad = inject_bad_nodes(road, sc.bad_fraction, sc.bad_mode, sc.bad_magnitude,
                                     int(_stream(cfg.seed, 1).integers(2**31)))
    weights = SimWeights(*cfg.reputation.rho)
    ids = road.vehicle_ids
    start = road.start_frame + sc.tau - 1
    nodes = []
    for k, vid in enumerate(ids):
        rng = _stream(cfg.seed, 2, k)
        shard_seed, corrupt_seed = (int(x) for x in rng.integers(2**31, size=2))
        xi, tau_rate, s_comm = _uniform(rng, sc.xi_range), _uniform(rng, sc.tau_rate_range), _uniform(rng, sc.s_comm_range)
        if csv_shards is None:
            shard = _synth_shard(sc, rng, shard_seed)
            if vid in bad:
                shard, _ = inject_bad_nodes(shard, 1.0, sc.bad_mode, sc.bad_magnitude, corrupt_seed)
            wins = window(shard, sc.tau, sc.t_f, sc.stride)
        else:
            wins = csv_shards[k]
            if vid in bad:
                crng = np.random.default_rng(corrupt_seed)
                wins = [_corrupt_window(w, sc.bad_magnitude, crng) for w in wins]
        data = make_batch(wins, fl.adjacency, weights, cfg.reputation.eps_lcs)
        pos = road.track(vid).span(start, 1)[0]
        nodes.append(VehicleNode(
            id=vid, data=data, params=ModelParams.zeros((sc.tau, sc.t_f)), xi=xi, tau_rate=tau_rate, s_comm=s_comm,
            reputation=cfg.reputation.gamma, position=(float(pos[0]), float(pos[1])), is_bad=vid in bad))
    if csv_test is None:
        rng = _stream(cfg.seed, 3)
        test_wins = []
        for _ in range(sc.test_scenes):
            test_wins += window(_synth_shard(sc, rng, int(rng.integers(2**31))), sc.tau, sc.t_f, sc.stride)
    else:
        test_wins = csv_test
    test = make_batch(test_wins, fl.adjacency, weights, cfg.reputation.eps_lcs)
    dims = (sc.tau, sc.t_f)
    params = init_params(dims, fl.init_scale, cfg.seed) if fl.init_scale > 0 else ModelParams.zeros(dims)
    for n in nodes:
        n.params = params.copy()
    world = World(cfg, nodes, road, reported, test, GlobalModel(params, 0, 0), {v: ledger.LocalDag.new() for v in ids})
    if cfg.drl.enabled and fl.mode not in ("no_drl", "sfl"):
        pretrain_selector(world)
    return world


def _corrupt_window(w: ObservationWindow, magnitude: float, rng) -> ObservationWindow:
    noise_h = rng.normal(0.0, magnitude, size=w.history.shape)
    noise_f = rng.normal(0.0, magnitude, size=w.future.shape)
    hist = w.history + noise_h
    shift = hist[-1].copy()
    return ObservationWindow(hist - shift, w.future + noise_f - shift, w.vehicle_ids, w.start_frame, w.anchors + shift)


# --------------------------------------------------------------------------- selector


def env_config(world: World) -> EnvConfig:
    d = world.cfg.drl
    return EnvConfig(
        n_vehicles=len(world.nodes), high_rep_threshold=d.high_rep_threshold, group_cap=d.group_cap or None,
        r0=d.r0, gamma_discount=d.gamma_discount, beta_m=world.cfg.fl.beta_m, cost_scale=d.cost_scale, rol=d.rol)


def select_world(world: World, reps=None) -> SelectWorld:
    nodes = world.nodes
    return SelectWorld(
        ids=tuple(n.id for n in nodes),
        tau_rates=np.array([n.tau_rate for n in nodes]),
        xi=np.array([n.xi for n in nodes]),
        reps=np.array([n.reputation for n in nodes]) if reps is None else np.asarray(reps, dtype=float),
        positions=np.array([n.position for n in nodes]),
        n_samples=np.array([n.n_samples for n in nodes], dtype=float),
        n_params=world.n_params,
    )


def _hyper(world: World, episodes: int) -> PPOHyper:
    d = world.cfg.drl
    return PPOHyper(episodes=episodes, episodes_per_batch=d.episodes_per_batch, epochs_per_batch=d.epochs_per_batch,
                    clip_eps=d.clip_eps, lr=d.lr, value_lr=d.lr, gamma=d.gamma_discount, lam=d.gae_lambda,
                    hidden=tuple(d.hidden))


def pretrain_selector(world: World) -> None:
    """Train the selection policy on randomized reputation draws over this fleet."""
    d = world.cfg.drl
    ecfg = env_config(world)
    rng = np.random.default_rng(substream_seed(world.cfg.seed, -1, -1, TAG_DRL))
    env = SelectEnv(ecfg, select_world(world))
    world.policy, world.value = make_nets(env, tuple(d.hidden), substream_seed(world.cfg.seed, -2, -1, TAG_DRL))
    n = len(world.nodes)
    done = 0
    while done < d.pretrain_episodes:
        low_frac = rng.uniform(0.0, 0.6)
        reps = np.where(rng.random(n) < low_frac, rng.uniform(0.0, 0.5, n), rng.uniform(0.5, 1.0, n))
        env = SelectEnv(ecfg, select_world(world, reps))
        k = min(d.episodes_per_batch, d.pretrain_episodes - done)
        res = ppo_train(env, _hyper(world, k), seed=substream_seed(world.cfg.seed, done, -1, TAG_DRL),
                        policy=world.policy, value=world.value)
        world.policy, world.value = res.policy, res.value
        done += k


def drl_groups(world: World, slot: int) -> tuple[list[int], list[int]]:
    env = SelectEnv(env_config(world), select_world(world))
    if world.policy is None:
        pretrain_selector(world)
    if world.cfg.drl.finetune_episodes > 0:
        res = ppo_train(env, _hyper(world, world.cfg.drl.finetune_episodes),
                        seed=substream_seed(world.cfg.seed, -1, slot, TAG_DRL), policy=world.policy, value=world.value)
        world.policy, world.value = res.policy, res.value
    return policy_group(world.policy, env)


# --------------------------------------------------------------------------- reputation


def _payload(world: World, tx) -> dict:
    p = world.payloads.get(tx.id)
    if p is None:
        p = json.loads(tx.payload)
        world.payloads[tx.id] = p
    return p


def _topology(world: World) -> dict[int, list[int]]:
    pos = {n.id: np.asarray(n.position) for n in world.nodes}
    r = world.cfg.scene.comm_range
    return {i: [j for j in pos if j != i and np.linalg.norm(pos[i] - pos[j]) <= r] for i in pos}


def reputation_step(world: World, slot: int, private: bool) -> None:
    """Cross-check broadcasts, publish opinions, gossip, fuse, update node reputations."""
    cfg = world.cfg
    sc, rc = cfg.scene, cfg.reputation
    weights = SimWeights(*rc.rho)
    start = world.slot_start_frame(slot)
    anchor_frame = start + sc.tau - 1
    for n in world.nodes:
        p = world.road.track(n.id).span(anchor_frame, 1)[0]
        n.position = (float(p[0]), float(p[1]))
    topo = _topology(world)
    truth = {v: world.road.track(v).span(start, sc.tau) for v in world.ids}
    told = {v: world.reported.track(v).span(start, sc.tau) for v in world.ids}
    by_id = {n.id: n for n in world.nodes}
    local: dict[int, dict[int, Opinion]] = {}
    for i in world.ids:
        rng = np.random.default_rng(substream_seed(cfg.seed, i, slot, TAG_REP))
        noise = sc.bad_magnitude if by_id[i].is_bad else sc.sense_noise
        for j in topo[i]:
            view = truth[j] + rng.normal(0.0, noise, size=truth[j].shape)
            s_val = min(1.0, max(0.0, sim(view, told[j], weights, rc.eps_lcs)))
            delivered = bool(rng.random() < by_id[j].s_comm)
            prev = world.stats.get((i, j), InteractionStats())
            world.stats[(i, j)] = count_interaction(prev, s_val, rc.sim_threshold, delivered)
        ops = {}
        for (a, j), st in world.stats.items():
            if a == i and st.alpha + st.beta >= 1:
                ops[j] = local_opinion(st)
        local[i] = ops
        body = {}
        for j, op in sorted(ops.items()):
            vec = np.array(op.as_tuple())
            if private and cfg.dp.protect_reputation:
                st = world.stats[(i, j)]
                eps = cfg.dp.epsilon * (st.alpha + st.beta)
                rng_dp = np.random.default_rng(substream_seed(cfg.seed, i * 100003 + j, slot, TAG_REP_DP))
                vec = np.asarray(Opinion.from_vector(vec + laplace_noise(3, 1.0 / eps, rng_dp)).as_tuple())
            body[str(j)] = [round(float(x), 6) for x in vec]
        if body:
            world.dags[i], _ = ledger.append_transaction(world.dags[i], "reputation-update", {"op": body}, i, slot)
    _share_scene_graphs(world, slot, start)
    for r in range(cfg.fl.gossip_rounds):
        world.dags = ledger.gossip_round(world.dags, topo, cfg.fl.gossip_fanout,
                                         substream_seed(cfg.seed, r, slot, TAG_GOSSIP))
    prev_rep = {n.id: n.reputation for n in world.nodes}
    scores: dict[int, list[float]] = {v: [] for v in world.ids}
    for i in world.ids:
        latest: dict[int, tuple[int, dict]] = {}
        for tx in world.dags[i].transactions.values():
            if tx.kind == "reputation-update" and tx.author != i:
                if tx.author not in latest or tx.slot > latest[tx.author][0]:
                    latest[tx.author] = (tx.slot, _payload(world, tx)["op"])
        for j in world.ids:
            if j == i:
                continue
            recs = [Recommendation(prev_rep[x], Opinion.from_vector(ops[str(j)]))
                    for x, (_, ops) in sorted(latest.items()) if x != j and str(j) in ops and prev_rep[x] > 0]
            own = local[i].get(j)
            if own is None and not recs:
                continue
            final = own if own is not None else Opinion.vacuous()
            if recs:
                final = fuse_or_average(final, combine_recommendations(recs))
            scores[j].append(reputation(final, rc.gamma))
    for n in world.nodes:
        if scores[n.id]:
            n.reputation = float(np.mean(scores[n.id]))


def _share_scene_graphs(world: World, slot: int, start: int) -> None:
    """Publish each vehicle's neighbourhood graph unless it is redundant with one already shared this slot."""
    sc, dp = world.cfg.scene, world.cfg.dp
    ids = world.ids
    hist = np.stack([world.reported.track(v).span(start, sc.tau) for v in ids], axis=1)
    anchors = hist[-1]
    seqs, authors = [], []
    k = min(dp.seq_k, len(ids))
    for col, vid in enumerate(ids):
        dist = np.linalg.norm(anchors - anchors[col], axis=1)
        near = sorted(np.argsort(dist, kind="stable")[:k].tolist())
        sub = hist[:, near] - anchors[near][None]
        win = ObservationWindow(sub, np.zeros((1, len(near), 2)), tuple(ids[c] for c in near), start, anchors[near])
        g = build_weighted_graph(win, SimWeights(*world.cfg.reputation.rho), world.cfg.reputation.eps_lcs)
        seqs.append(serialize_seq(g, k))
        authors.append(vid)
    for idx in cosine_redundancy_filter(seqs, dp.redundancy_threshold):
        vid = authors[idx]
        body = {"seq": [round(float(x), 6) for x in seqs[idx]]}
        world.dags[vid], _ = ledger.append_transaction(world.dags[vid], "data-share-event", body, vid, slot)


# --------------------------------------------------------------------------- sharing


def share(world: World, node: VehicleNode, local: ModelParams, base: ModelParams, slot: int, private: bool) -> ModelParams:
    """Model a vehicle publishes: the clipped, noised update on top of ``base``.

    Noise is calibrated per sample: the update is averaged over the shard, so
    one sample moves it by at most s / |d|, giving a Laplace scale of
    s / (epsilon |d|).
    """
    if not private:
        return local
    dp = world.cfg.dp
    delta = clip_l1(local.flat() - base.flat(), dp.sensitivity_s)
    cfg = DpConfig(dp.epsilon * node.n_samples, dp.sensitivity_s, substream_seed(world.cfg.seed, node.id, slot, TAG_DP))
    return ModelParams.from_flat(base.flat() + laplace_perturb(delta, cfg), base.dims)


def _train(world: World, node: VehicleNode, start: ModelParams) -> ModelParams:
    fl = world.cfg.fl
    params, _ = local_train(start, node.data, fl.local_epochs, fl.lr)
    return params


def _publish(world: World, node: VehicleNode, shared: ModelParams, slot: int) -> None:
    import hashlib

    digest = hashlib.blake2b(shared.flat().tobytes(), digest_size=8).hexdigest()
    body = {"model": digest, "n": node.n_samples, "version": world.glob.version}
    world.dags[node.id], _ = ledger.append_transaction(world.dags[node.id], "model-share", body, node.id, slot)


# --------------------------------------------------------------------------- slot


def evaluate(world: World, params: ModelParams | None = None) -> tuple[float, dict]:
    p = world.glob.params if params is None else params
    preds = forward(p, world.test)
    truths = [w.future for w in world.test.windows]
    return batch_loss(p, world.test), pooled_metrics(preds, truths)


def run_slot(world: World, slot: int, mode: str | None = None) -> RoundReport:
    cfg = world.cfg
    fl = cfg.fl
    mode = mode or fl.mode
    if mode not in ("afl", "sfl", "low_r_priority", "no_dp", "no_drl"):
        raise ValidationError(f"unknown mode {mode!r}")
    private = cfg.dp.enabled and mode != "no_dp" and slot % cfg.dp.dp_every == 0
    reputation_step(world, slot, cfg.dp.enabled and mode != "no_dp")
    aggregate = (slot + 1) % fl.aggregate_every == 0
    incumbent = world.glob
    n_params = world.n_params

    if mode == "sfl":
        high, low = list(world.ids), []
        start_clock = world.clock
        shared, durations = [], []
        for node in world.nodes:
            base = world.glob.params if slot % fl.aggregate_every == 0 else node.params
            local = _train(world, node, base)
            node.params = local
            shared.append(share(world, node, local, world.glob.params, slot, private))
            _publish(world, node, shared[-1], slot)
            durations.append(sum(time_costs(node, fl.beta_m, n_params)))
        world.clock = start_clock + max(durations)
        arrivals = list(world.ids)
        candidate = fedavg(shared, [n.n_samples for n in world.nodes]) if aggregate else None
    else:
        if mode == "no_drl" or not cfg.drl.enabled:
            high, low = list(world.ids), []
        else:
            high, low = drl_groups(world, slot)
            if mode == "low_r_priority":
                high, low = low, high
        for node in world.nodes:
            if node.id in world.inflight:
                continue
            local = _train(world, node, world.glob.params)
            shared_p = share(world, node, local, world.glob.params, slot, private)
            ca, cu = time_costs(node, fl.beta_m, n_params)
            world.inflight[node.id] = Flight(node.id, slot, world.clock + ca + cu, local, shared_p)
        queue = sorted(world.inflight.values(), key=lambda f: (f.finish, f.vehicle_id))
        q = max(1, math.ceil(fl.quorum * len(queue)))
        end = queue[q - 1].finish
        landed = [f for f in queue if f.finish <= end]
        world.clock = end
        for f in landed:
            del world.inflight[f.vehicle_id]
            node = world.node(f.vehicle_id)
            node.params = f.local
            _publish(world, node, f.shared, slot)
        world.pending.extend(landed)
        arrivals = sorted(f.vehicle_id for f in landed)
        candidate = None
        if aggregate and world.pending:
            reps = {n.id: n.reputation for n in world.nodes}
            contribs = {f.vehicle_id: Contribution(f.vehicle_id, f.shared, reps[f.vehicle_id], slot - f.start_slot,
                                                   world.node(f.vehicle_id).n_samples)
                        for f in sorted(world.pending, key=lambda f: f.vehicle_id)}
            hs = set(high)
            g = grouped_aggregate(world.glob, [c for v, c in contribs.items() if v in hs],
                                  [c for v, c in contribs.items() if v not in hs],
                                  fl.deep_rounds, fl.shallow_weight, fl.mix0, fl.decay)
            candidate = g.params
            world.pending = []

    accepted = False
    if candidate is not None:
        k = min(fl.committee_k, len(world.nodes))
        committee = select_committee(world.nodes, k)
        threshold = (1.0 + fl.por_tolerance) * committee_median(incumbent.params, committee)
        verdict = por_validate(candidate, committee, threshold)
        accepted = verdict.accepted
        if accepted:
            world.glob = GlobalModel(candidate, incumbent.version + 1, slot)
    duration = world.clock - (world.history[-1].clock if world.history else 0.0)
    gl, mets = evaluate(world)
    report = RoundReport(
        slot=slot, mode=mode, selected=sorted(high), low_group=sorted(low),
        costs=slot_costs(world.nodes, high, fl.beta_m, n_params), global_loss=gl, metrics=mets,
        duration=duration, clock=world.clock, accepted=accepted, version=world.glob.version, arrivals=arrivals,
        reputations={n.id: round(n.reputation, 6) for n in world.nodes},
        dag_size=max(len(d) for d in world.dags.values()))
    world.history.append(report)
    log.debug("slot %d mode %s ade %.4f accepted %s", slot, mode, mets["ade"], accepted)
    return report


def run(world: World, slots: int | None = None, mode: str | None = None) -> list[RoundReport]:
    n = world.cfg.fl.slots if slots is None else slots
    return [run_slot(world, s, mode) for s in range(len(world.history), len(world.history) + n)]
