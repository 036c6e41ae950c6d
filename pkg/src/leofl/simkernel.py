"""Deterministic discrete-event engine for the two-stage LEO-HAP-GS federated protocol."""
from __future__ import annotations

import csv
import enum
import hashlib
import heapq
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import aggregation as agg
from .capability import ResourceProfile
from .channel import (
    AbsorptionModel,
    LinkBudget,
    PointingModel,
    capacity,
    per_satellite_rate,
    transmission_latency,
)
from .flproxy import (
    DistillConfig,
    InjectConfig,
    ProxyModel,
    SatelliteLearner,
    make_synthetic,
    shard_split,
)
from .geometry import ContactWindow, VisibilityConfig, contact_windows, union_intervals
from .orbital import (
    AssetKind,
    ConstellationSpec,
    GroundAsset,
    OrbitalElements,
    asset_positions,
    build_constellation,
    positions,
)

SCHEMES = ("proposed", "sync-baseline", "async-baseline", "ideal", "no-injection")


class EventKind(enum.IntEnum):
    # the integer value is the equal-time priority
    SYNC_EPOCH = 0
    UPLOAD_ARRIVAL = 1
    TRAINING_COMPLETE = 2
    HANDOVER = 3


@dataclass(frozen=True)
class Event:
    time: float
    kind: EventKind
    sat_id: int = -1
    seq: int = 0
    hap_id: int = -1
    t_gen: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.time):
            raise ValueError("event time must be finite")

    @property
    def key(self) -> tuple:
        return (self.time, int(self.kind), self.sat_id, self.seq)


def schedule_sync(t_sync: float, horizon: float) -> list[float]:
    """Sync epochs at exact multiples k * t_sync, k = 1..floor(horizon / t_sync)."""
    if t_sync <= 0:
        raise ValueError("t_sync must be positive")
    if horizon <= 0:
        return []
    return [k * t_sync for k in range(1, int(math.floor(horizon / t_sync + 1e-12)) + 1)]


# -- configuration --------------------------------------------------------

@dataclass(frozen=True)
class AggregationConstants:
    t_sync: float = 600.0
    mu_bal: float = 1e-3       # bit per (byte / budget)
    mu_prox: float = 0.1
    kappa: float = 1e-3        # 1/s
    nu: float = 1e-4           # 1/s, constant orbital volatility (gamma)
    async_alpha: float = 0.6   # mixing weight of the pure asynchronous baseline
    probe_size: int = 64

    def __post_init__(self):
        if self.t_sync <= 0:
            raise ValueError("t_sync must be positive")
        if min(self.mu_bal, self.mu_prox, self.kappa, self.nu) < 0:
            raise ValueError("aggregation constants must be non-negative")
        if not 0 < self.async_alpha <= 1:
            raise ValueError("async_alpha must lie in (0, 1]")


@dataclass(frozen=True)
class LearningConfig:
    mode: str = "model"           # "model" trains networks, "surrogate" moves vectors
    num_train: int = 2400
    num_test: int = 1000
    dim: int = 32
    num_classes: int = 10
    separation: float = 1.6
    iid: bool = False
    num_shards: int = 240
    lr_local: float = 1e-2
    batch_size: int = 128
    distill_epochs: int = 1
    inject_epochs: int = 1
    distill: DistillConfig = field(default_factory=DistillConfig)
    inject: InjectConfig = field(default_factory=InjectConfig)
    surrogate_dim: int = 16

    def __post_init__(self):
        if self.mode not in ("model", "surrogate"):
            raise ValueError("learning mode must be 'model' or 'surrogate'")


@dataclass(frozen=True)
class Scenario:
    constellation: ConstellationSpec
    assets: tuple[GroundAsset, ...]
    profiles: tuple[ResourceProfile, ...]
    budgets: tuple[float, ...]
    horizon: float
    seed: int
    active: tuple[int, ...] = ()            # indices into the constellation; empty = first len(profiles)
    visibility: VisibilityConfig = field(default_factory=VisibilityConfig)
    link: LinkBudget = field(default_factory=LinkBudget)
    absorption: AbsorptionModel = field(default_factory=AbsorptionModel)
    pointing: PointingModel = field(default_factory=PointingModel)
    n_sharing: int = 1
    aggregation: AggregationConstants = field(default_factory=AggregationConstants)
    learning: LearningConfig = field(default_factory=LearningConfig)
    idle_after_upload: bool = True

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("seed is mandatory")
        if self.horizon < 0:
            raise ValueError("horizon must be non-negative")
        if len(self.profiles) != len(self.budgets) or not self.profiles:
            raise ValueError("need one resource profile and one budget per active satellite")
        if self.active and len(self.active) != len(self.profiles):
            raise ValueError("active list and profiles differ in length")
        if any(not 0 < b <= 1 for b in self.budgets):
            raise ValueError("budgets must lie in (0, 1]")
        if not any(a.kind is AssetKind.HAP for a in self.assets):
            raise ValueError("scenario needs at least one HAP")
        if self.n_sharing < 1:
            raise ValueError("n_sharing must be at least 1")

    @property
    def active_indices(self) -> tuple[int, ...]:
        return self.active or tuple(range(len(self.profiles)))


# -- run log --------------------------------------------------------------

TRACE_FIELDS = ("event_time_s", "kind", "sat_id", "hap_id", "eta", "staleness_s", "global_epoch")


@dataclass
class RunLog:
    scheme: str
    events: list[tuple] = field(default_factory=list)        # (time, kind, sat, hap, seq)
    trace: list[tuple] = field(default_factory=list)         # TRACE_FIELDS
    accuracy: list[tuple] = field(default_factory=list)      # (time, sat_id, acc)
    global_accuracy: list[tuple] = field(default_factory=list)  # (time, acc)
    membership: list[tuple] = field(default_factory=list)    # (join_time, sat_id, hap_id, leave_time)
    contraction: list[tuple] = field(default_factory=list)   # (eta, |w_h - w_i|, |w_h' - w_i|)
    final_accuracy: dict[int, float] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(list(self.final_accuracy.values()))) if self.final_accuracy else float("nan")

    @property
    def spread(self) -> float:
        vals = list(self.final_accuracy.values())
        return float(max(vals) - min(vals)) if vals else float("nan")

    def summary(self) -> dict:
        return {
            "scheme": self.scheme,
            "events": len(self.events),
            "stage1_updates": sum(1 for r in self.trace if r[1] == "arrival"),
            "sync_aggregations": len({r[6] for r in self.trace if r[1] == "sync"}),
            "final_accuracy": {str(k): v for k, v in sorted(self.final_accuracy.items())},
            "mean_accuracy": self.mean_accuracy,
            "spread": self.spread,
            "warnings": list(self.warnings),
        }

    def digest(self) -> str:
        h = hashlib.sha256()
        for stream in (self.events, self.trace, self.accuracy, self.global_accuracy, self.membership):
            h.update(repr(stream).encode())
        h.update(repr(sorted(self.final_accuracy.items())).encode())
        return h.hexdigest()

    def write(self, out_dir: str | Path, header: str | None = None) -> list[Path]:
        """One CSV per stream; every file starts with the ``# leofl train-<scheme> schema=1`` line."""
        header = f"# leofl train-{self.scheme} schema=1" if header is None else header
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        streams = {
            "events.csv": (("time_s", "kind", "sat_id", "hap_id", "seq"), self.events),
            "aggregation_trace.csv": (TRACE_FIELDS, self.trace),
            "accuracy.csv": (("time_s", "sat_id", "accuracy"), self.accuracy),
            "global_accuracy.csv": (("time_s", "accuracy"), self.global_accuracy),
            "membership.csv": (("join_s", "sat_id", "hap_id", "leave_s"), self.membership),
        }
        written = []
        for name, (cols, rows) in streams.items():
            path = out / name
            with open(path, "w", newline="") as fh:
                if header:
                    fh.write(header + "\n")
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(cols)
                w.writerows(_fmt_row(r) for r in rows)
            written.append(path)
        path = out / "summary.json"
        path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        written.append(path)
        return written


def _fmt_row(row) -> list:
    return [repr(v) if isinstance(v, float) else v for v in row]


# -- learners -------------------------------------------------------------

class Learner(Protocol):
    def train_round(self) -> np.ndarray: ...
    def receive(self, global_vec: np.ndarray, inject: bool) -> None: ...
    def evaluate(self) -> float: ...


class _ModelLearner:
    def __init__(self, learner: SatelliteLearner, cfg: LearningConfig, epochs: int, test):
        self.learner, self.cfg, self.epochs, self.test = learner, cfg, epochs, test

    def train_round(self) -> np.ndarray:
        self.learner.train_local(self.epochs, self.cfg.lr_local, self.cfg.batch_size)
        self.learner.distill(self.cfg.distill, self.cfg.distill_epochs)
        return self.learner.proxy.get_vector()

    def receive(self, global_vec: np.ndarray, inject: bool) -> None:
        if inject:
            self.learner.inject(global_vec, self.cfg.inject, self.cfg.inject_epochs)
        else:
            self.learner.accept_global(global_vec)

    def evaluate(self) -> float:
        return self.learner.evaluate(self.test)


class _SurrogateLearner:
    """Vector stand-in: a round pulls the proxy toward a private target."""

    def __init__(self, target: np.ndarray, consensus: np.ndarray, rng: np.random.Generator, init: np.ndarray):
        self.target, self.consensus, self.rng = target, consensus, rng
        self.vec = init.copy()
        self.held = init.copy()

    def train_round(self) -> np.ndarray:
        self.vec = self.vec + 0.5 * (self.target - self.vec) + 0.01 * self.rng.normal(size=self.vec.shape)
        return self.vec.copy()

    def receive(self, global_vec: np.ndarray, inject: bool) -> None:
        self.held = global_vec.copy()
        self.vec = 0.5 * (self.vec + global_vec) if inject else global_vec.copy()

    def evaluate(self) -> float:
        return float(math.exp(-np.linalg.norm(self.vec - self.consensus) / math.sqrt(self.vec.size)))


@dataclass
class _Workbench:
    learners: list
    init_global: np.ndarray
    data_sizes: list[int]
    fisher: callable
    evaluate_global: callable


def _build_workbench(sc: Scenario, budgets: Sequence[float]) -> _Workbench:
    lc = sc.learning
    n = len(budgets)
    seeds = np.random.SeedSequence(sc.seed).spawn(n + 1)
    if lc.mode == "surrogate":
        rng0 = np.random.default_rng(seeds[-1])
        targets = rng0.normal(size=(n, lc.surrogate_dim))
        consensus = targets.mean(axis=0)
        init = rng0.normal(size=lc.surrogate_dim)
        learners = [_SurrogateLearner(targets[k], consensus, np.random.default_rng(seeds[k]), init)
                    for k in range(n)]

        def fisher(vec):
            return float(np.mean(vec * vec))

        def evaluate_global(vec):
            return float(math.exp(-np.linalg.norm(vec - consensus) / math.sqrt(vec.size)))

        return _Workbench(learners, init, [100] * n, fisher, evaluate_global)

    train, test = make_synthetic(lc.num_train, lc.num_test + lc.num_test // 10 + 64, lc.num_classes,
                                 lc.dim, lc.separation, seed=sc.seed)
    probe = test.subset(np.arange(lc.num_test, lc.num_test + 64))
    probe = probe.subset(np.arange(min(sc.aggregation.probe_size, len(probe))))
    test = test.subset(np.arange(lc.num_test))
    shards = shard_split(train, n, lc.num_shards, lc.iid, seed=sc.seed)
    learners = []
    for k, (b, shard) in enumerate(zip(budgets, shards)):
        sl = SatelliteLearner.build(lc.dim, lc.num_classes, b, shard, int(seeds[k].generate_state(1)[0]))
        learners.append(sl)
    scratch = ProxyModel(lc.dim, lc.num_classes, np.random.default_rng(seeds[-1]))
    init = scratch.get_vector()
    for sl in learners:
        sl.proxy.set_vector(init)

    cache: dict[bytes, float] = {}

    def fisher(vec):
        key = hashlib.sha1(np.ascontiguousarray(vec).tobytes()).digest()
        if key not in cache:
            scratch.set_vector(vec)
            cache[key] = agg.fisher_trace(scratch, probe.x, probe.y)
        return cache[key]

    def evaluate_global(vec):
        scratch.set_vector(vec)
        return float(np.mean(np.argmax(scratch(test.x).data, axis=1) == test.y))

    wrapped = [_ModelLearner(sl, lc, sc.profiles[k].local_epochs, test) for k, sl in enumerate(learners)]
    return _Workbench(wrapped, init, [len(s) for s in shards], fisher, evaluate_global)


def finish_time(profile: ResourceProfile, start: float) -> float:
    """Time at which the integral of the compute schedule from ``start`` reaches one round."""
    need = profile.round_flops
    t = start
    knots = [s for s, _ in profile.compute_schedule if s > start] + [math.inf]
    for nxt in knots:
        rate = profile.compute_rate(t)
        span = nxt - t
        if rate * span >= need:
            return t + need / rate
        need -= rate * span
        t = nxt
    return math.inf


# -- kernel ---------------------------------------------------------------

class _SatState(enum.Enum):
    TRAINING = "training"
    READY = "ready"
    UPLOADING = "uploading"
    WAITING = "waiting"


class _Kernel:
    def __init__(self, sc: Scenario, scheme: str):
        self.sc, self.scheme = sc, scheme
        self.log = RunLog(scheme)
        self.heap: list[tuple] = []
        self.seq = 0
        const = build_constellation(sc.constellation)
        idx = sc.active_indices
        if max(idx) >= len(const):
            raise ValueError("active satellite index outside the constellation")
        self.sats: list[OrbitalElements] = [const[i] for i in idx]
        self.haps = [a for a in sc.assets if a.kind is AssetKind.HAP]
        self.n = len(self.sats)
        self.bench = _build_workbench(sc, sc.budgets)
        self.proxy_bytes = 8.0 * self.bench.init_global.size
        self.windows: list[list[ContactWindow]] = []
        self.union: list[ContactWindow] = []
        for s in self.sats:
            per = [contact_windows(s, [h], sc.visibility, horizon=sc.horizon) for h in self.haps]
            self.windows.append(per)
            self.union.append(union_intervals(per))
        self.state = [_SatState.TRAINING] * self.n
        self.t_gen = [0.0] * self.n
        self.pending_vec: list[np.ndarray | None] = [None] * self.n
        self.held_version = [0] * self.n
        self.version = 0
        self.global_vec = self.bench.init_global.copy()
        self.hap_states = [agg.HapState(self.global_vec.copy(), 0.0) for _ in self.haps]
        # association spells: [sat, hap, join, leave]; a satellite belongs to a group
        # only while its contact with that HAP lasts
        self.spells: list[list] = []
        self.current: dict[int, list] = {}
        self.last_sync = 0.0
        self.sync_inbox: dict[int, np.ndarray] = {}

    # queue plumbing
    def push(self, time: float, kind: EventKind, sat: int = -1, hap: int = -1, t_gen: float = 0.0):
        if time > self.sc.horizon:
            return
        ev = Event(time, kind, sat, self.seq, hap, t_gen)
        self.seq += 1
        heapq.heappush(self.heap, (ev.key, ev))

    # geometry helpers
    def distance_m(self, k: int, h: int, t: float) -> float:
        return 1000.0 * float(np.linalg.norm(positions(self.sats[k], t) - asset_positions(self.haps[h], t)))

    def rate(self, k: int, h: int, t: float) -> float:
        c = capacity(self.sc.link, self.sc.absorption, self.sc.pointing, self.distance_m(k, h, t))
        return per_satellite_rate(c, self.sc.n_sharing)

    def capacity_integral(self, k: int, h: int, start: float, end: float, points: int = 9) -> float:
        if end <= start:
            return 0.0
        t = np.linspace(start, end, points)
        y = np.array([capacity(self.sc.link, self.sc.absorption, self.sc.pointing, self.distance_m(k, h, x))
                      for x in t])
        return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))

    def visible_haps(self, k: int, t: float) -> list[tuple[int, float]]:
        out = []
        for h, w in enumerate(self.windows[k]):
            for s, e in w.intervals:
                if s <= t < e:
                    out.append((h, e))
                    break
        return out

    def next_contact_handover(self, k: int, t: float) -> None:
        nxt = self.union[k].next_contact(t)
        if nxt is not None:
            self.push(nxt[0], EventKind.HANDOVER, k)

    # membership bookkeeping
    def members(self, h: int, t: float) -> list[int]:
        return sorted(k for k, sp in self.current.items() if sp[1] == h and sp[2] <= t <= sp[3])

    def join(self, k: int, h: int, t: float, until: float) -> None:
        old = self.current.get(k)
        if old is not None and old[3] > t:
            old[3] = t  # leaves the previous group on re-association
        spell = [k, h, t, until]
        self.spells.append(spell)
        self.current[k] = spell

    def segments(self, h: int, t0: float, t1: float) -> list[tuple[float, float, float]]:
        out = []
        for k, g, a, b in self.spells:
            if g == h and min(b, t1) > max(a, t0):
                out.append((max(a, t0), min(b, t1), self.bench.data_sizes[k] * self.sc.budgets[k]))
        return out

    # protocol steps
    def start_training(self, k: int, t: float) -> None:
        self.state[k] = _SatState.TRAINING
        self.t_gen[k] = t
        self.push(finish_time(self.sc.profiles[k], t), EventKind.TRAINING_COMPLETE, k)

    def on_training_complete(self, ev: Event) -> None:
        k = ev.sat_id
        self.pending_vec[k] = self.bench.learners[k].train_round()
        self.state[k] = _SatState.READY
        self.next_contact_handover(k, ev.time)

    def on_handover(self, ev: Event) -> None:
        k, t = ev.sat_id, ev.time
        vis = self.visible_haps(k, t)
        if not vis:
            self.next_contact_handover(k, t + 1e-6)
            return
        if self.state[k] is _SatState.READY:
            caps = [self.capacity_integral(k, h, t, e) for h, e in vis]
            utils = []
            for (h, _), c in zip(vis, caps):
                load = [(self.proxy_bytes, self.sc.budgets[j]) for j in self.members(h, t) if j != k]
                utils.append(agg.utility(c, load, self.sc.aggregation.mu_bal))
            ids = [h for h, _ in vis]
            assignment = agg.assign_groups(np.array([utils]), np.ones((1, len(ids)), bool), [k], ids, t)
            hap = assignment.group_of(k)
            end = dict(vis)[hap]
            lat = transmission_latency(self.proxy_bytes, self.rate(k, hap, t))
            if t + lat > end:
                self.next_contact_handover(k, end + 1e-6)
                return
            self.join(k, hap, t, end)
            self.state[k] = _SatState.UPLOADING
            self.push(t + lat, EventKind.UPLOAD_ARRIVAL, k, hap, self.t_gen[k])
        elif self.state[k] is _SatState.WAITING and self.version > self.held_version[k]:
            hap, end = min(vis, key=lambda p: p[0])
            lat = transmission_latency(self.proxy_bytes, self.rate(k, hap, t))
            if t + lat > end:
                self.next_contact_handover(k, end + 1e-6)
                return
            self.held_version[k] = self.version
            learner = self.bench.learners[k]
            learner.receive(self.global_vec.copy(), inject=self.scheme != "no-injection")
            self.log.accuracy.append((t + lat, k, learner.evaluate()))
            self.start_training(k, t + lat)

    def on_upload(self, ev: Event) -> None:
        k, h, t = ev.sat_id, ev.hap_id, ev.time
        vec = self.pending_vec[k]
        staleness = t - ev.t_gen
        if self.scheme in ("proposed", "no-injection"):
            members = self.members(h, t)
            record = agg.StalenessRecord(ev.t_gen, t, self.sc.aggregation.nu)
            eta = agg.stage1_weight(record, self.sc.budgets[k], [self.sc.budgets[j] for j in members])
            before = self.hap_states[h]
            after = agg.stage1_update(before, vec, eta, t)
            self.log.contraction.append((eta, float(np.linalg.norm(before.params - vec)),
                                         float(np.linalg.norm(after.params - vec))))
            self.hap_states[h] = after
        elif self.scheme == "async-baseline":
            # Stage I only: FedAsync mixing at the HAP, no cross-group merge
            eta = self.sc.aggregation.async_alpha
            before = self.hap_states[h]
            after = agg.stage1_update(before, vec, eta, t)
            self.log.contraction.append((eta, float(np.linalg.norm(before.params - vec)),
                                         float(np.linalg.norm(after.params - vec))))
            self.hap_states[h] = after
        else:  # sync-baseline
            eta = float("nan")
            self.sync_inbox[k] = vec
        self.log.trace.append((t, "arrival", k, h, eta, staleness, self.version))
        self.pending_vec[k] = None
        if self.scheme == "async-baseline":
            # the HAP answers an asynchronous upload with its current model
            learner = self.bench.learners[k]
            learner.receive(self.hap_states[h].params.copy(), inject=True)
            self.log.accuracy.append((t, k, learner.evaluate()))
            self.start_training(k, t)
        elif self.sc.idle_after_upload:
            self.state[k] = _SatState.WAITING
        else:
            # keeps training; a newer global model is picked up during this contact
            if self.version > self.held_version[k]:
                self.held_version[k] = self.version
                learner = self.bench.learners[k]
                learner.receive(self.global_vec.copy(), inject=self.scheme != "no-injection")
                self.log.accuracy.append((t, k, learner.evaluate()))
            self.start_training(k, t)

    def on_sync(self, ev: Event) -> None:
        t = ev.time
        updated = False
        if self.scheme in ("proposed", "no-injection"):
            ac = self.sc.aggregation
            yields = [agg.info_yield(self.bench.fisher(hs.params), self.segments(h, self.last_sync, t),
                                     self.last_sync, t, ac.kappa)
                      for h, hs in enumerate(self.hap_states)]
            if sum(yields) > 0:
                new = agg.stage2_aggregate([hs.params for hs in self.hap_states], yields,
                                           self.global_vec, ac.mu_prox)
                w_h, _ = agg.stage2_weights(yields, ac.mu_prox)
                self.version += 1
                for h in range(len(self.haps)):
                    self.log.trace.append((t, "sync", -1, h, float(w_h[h]), 0.0, self.version))
                self.global_vec = new
                self.hap_states = [agg.HapState(new.copy(), t) for _ in self.haps]
                updated = True
            self.last_sync = t
        elif self.scheme == "sync-baseline":
            expected = {k for k in range(self.n) if self.union[k]}
            if expected and expected <= set(self.sync_inbox):
                keys = sorted(self.sync_inbox)
                self.global_vec = agg.fedavg([self.sync_inbox[k] for k in keys],
                                             [self.bench.data_sizes[k] for k in keys])
                self.sync_inbox.clear()
                self.version += 1
                for k in keys:
                    self.log.trace.append((t, "sync", k, -1, 1.0 / len(keys), 0.0, self.version))
                updated = True
        if updated:
            self.log.global_accuracy.append((t, self.bench.evaluate_global(self.global_vec)))
            for k in range(self.n):
                if self.state[k] is _SatState.WAITING:
                    self.next_contact_handover(k, t)

    def run(self) -> RunLog:
        if not any(self.union):
            self.log.warnings.append("no satellite-HAP contact within the horizon")
        if self.sc.horizon <= 0:
            return self.log
        for k in range(self.n):
            self.start_training(k, 0.0)
        if self.scheme != "async-baseline":
            for ts in schedule_sync(self.sc.aggregation.t_sync, self.sc.horizon):
                self.push(ts, EventKind.SYNC_EPOCH)
        handlers = {
            EventKind.SYNC_EPOCH: self.on_sync,
            EventKind.UPLOAD_ARRIVAL: self.on_upload,
            EventKind.TRAINING_COMPLETE: self.on_training_complete,
            EventKind.HANDOVER: self.on_handover,
        }
        while self.heap:
            _, ev = heapq.heappop(self.heap)
            self.log.events.append((ev.time, ev.kind.name, ev.sat_id, ev.hap_id, ev.seq))
            handlers[ev.kind](ev)
        self.log.membership = sorted(((a, k, h, b) for k, h, a, b in self.spells), key=lambda r: r[0])
        # downloads are stamped at completion, which can trail a later event's time
        self.log.accuracy.sort(key=lambda r: r[0])
        for k, learner in enumerate(self.bench.learners):
            self.log.final_accuracy[k] = learner.evaluate()
        return self.log


def _run_ideal(sc: Scenario) -> RunLog:
    """No visibility gating or latency, every satellite at the fastest compute and full budget,
    synchronous rounds with the proxy transport and injection."""
    log = RunLog("ideal")
    if sc.horizon <= 0:
        return log
    budgets = [1.0] * len(sc.budgets)
    bench = _build_workbench(sc, budgets)
    fastest = min(finish_time(p, 0.0) for p in sc.profiles)
    rounds = int(math.floor(sc.horizon / fastest))
    g = bench.init_global.copy()
    for r in range(1, rounds + 1):
        t = r * fastest
        vecs = [lr.train_round() for lr in bench.learners]
        g = agg.fedavg(vecs, bench.data_sizes)
        log.trace.extend((t, "sync", k, -1, 1.0 / len(vecs), 0.0, r) for k in range(len(vecs)))
        log.global_accuracy.append((t, bench.evaluate_global(g)))
        for k, lr in enumerate(bench.learners):
            lr.receive(g.copy(), inject=True)
            log.accuracy.append((t, k, lr.evaluate()))
    for k, lr in enumerate(bench.learners):
        log.final_accuracy[k] = lr.evaluate()
    return log


def run(scenario: Scenario, scheme: str = "proposed") -> RunLog:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if scenario.horizon <= 0:
        return RunLog(scheme)
    if scheme == "ideal":
        return _run_ideal(scenario)
    return _Kernel(scenario, scheme).run()


def scenario_dict(sc: Scenario) -> dict:
    """JSON-friendly view used in run summaries."""
    d = asdict(sc)
    return json.loads(json.dumps(d, default=str))
