"""Budgeted active-learning rounds: pool bookkeeping, acquisition, retraining.

Each seed runs an independent experiment: draw an initial labeled set, then
per round train the sampler on the current pools, acquire b samples, have the
oracle annotate them, retrain the task model from scratch, and score it on
the held-out test split.
"""

from __future__ import annotations

import csv
import json
import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import sampler as smp
from . import tasks

SAMPLER_KINDS = ("random", "vaal", "mvaal")


class PoolError(ValueError):
    pass


class OracleError(RuntimeError):
    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = dict(partial or {})


@dataclass
class Pool:
    labeled: np.ndarray
    unlabeled: np.ndarray
    universe: np.ndarray  # the full index set this pool partitions

    def __post_init__(self):
        self.labeled = np.sort(np.asarray(self.labeled, dtype=np.int64))
        self.unlabeled = np.sort(np.asarray(self.unlabeled, dtype=np.int64))
        self.universe = np.sort(np.asarray(self.universe, dtype=np.int64))
        self.check()

    def check(self):
        lab, unl = set(self.labeled.tolist()), set(self.unlabeled.tolist())
        if lab & unl:
            raise PoolError("labeled and unlabeled pools overlap")
        if len(lab) + len(unl) != len(self.universe):
            raise PoolError("pool does not conserve the universe")
        if (lab | unl) != set(self.universe.tolist()):
            raise PoolError("pool indices outside the universe")

    @classmethod
    def initial(cls, universe, n_labeled: int, rng) -> "Pool":
        universe = np.asarray(universe, dtype=np.int64)
        if not 0 <= n_labeled <= len(universe):
            raise PoolError(f"initial labeled count {n_labeled} out of range")
        labeled = rng.choice(universe, size=n_labeled, replace=False)
        unlabeled = np.setdiff1d(universe, labeled)
        return cls(labeled=labeled, unlabeled=unlabeled, universe=universe)


def update_pools(pool: Pool, selected) -> Pool:
    """Move selected indices from unlabeled to labeled; returns a new Pool."""
    selected = np.asarray(sorted(selected), dtype=np.int64)
    if len(set(selected.tolist())) != len(selected):
        raise PoolError("duplicate indices in selection")
    if not set(selected.tolist()) <= set(pool.unlabeled.tolist()):
        raise PoolError("selection contains indices outside the unlabeled pool")
    return Pool(labeled=np.concatenate([pool.labeled, selected]),
                unlabeled=np.setdiff1d(pool.unlabeled, selected),
                universe=pool.universe)


# -- acquisition -----------------------------------------------------------------


def acquire(kind: str, pool: Pool, dataset, sampler_state, b: int, rng=None):
    """Pick b unlabeled indices: uniformly at random, or by critic score."""
    if kind not in SAMPLER_KINDS:
        raise PoolError(f"unknown sampler kind: {kind}")
    if b > len(pool.unlabeled):
        raise PoolError(f"budget {b} exceeds unlabeled pool size {len(pool.unlabeled)}")
    if kind == "random":
        if rng is None:
            raise PoolError("random acquisition needs an rng")
        return sorted(int(i) for i in rng.choice(pool.unlabeled, size=b, replace=False))
    if sampler_state is None:
        raise PoolError(f"{kind} acquisition needs a trained sampler state")
    return smp.select_for_annotation(
        sampler_state, dataset.m1[pool.unlabeled], pool.unlabeled, b)


# -- oracle -----------------------------------------------------------------------


@dataclass
class OracleContract:
    kind: str = "simulated"  # simulated | remote
    queue: object = None     # annotation queue, remote only
    timeout: float = 3600.0
    poll_interval: float = 1.0

    def __post_init__(self):
        if self.kind not in ("simulated", "remote"):
            raise PoolError(f"unknown oracle kind: {self.kind}")
        if self.kind == "remote" and self.queue is None:
            raise PoolError("remote oracle needs an annotation queue")


def _ground_truth_label(dataset, index: int, task_kind: str):
    if task_kind == "multiclass":
        return int(dataset.classes[index])
    if task_kind == "multilabel":
        return [int(c) for c in np.flatnonzero(dataset.multilabels[index])]
    return dataset.masks[index]


def oracle_annotate(oracle: OracleContract, dataset, indices, task_kind: str) -> dict:
    """Return {sample index: label} for every requested index.

    The simulated oracle reads stored ground truth. The remote oracle posts
    annotation tasks to its queue and blocks until all labels arrive or the
    timeout lapses; a timeout raises with the partial label map attached.
    """
    indices = [int(i) for i in indices]
    if oracle.kind == "simulated":
        return {i: _ground_truth_label(dataset, i, task_kind) for i in indices}

    oracle.queue.post_tasks(indices, task_kind)
    deadline = time.monotonic() + oracle.timeout
    while True:
        labels = oracle.queue.collect_labels(indices)
        if len(labels) == len(indices):
            return labels
        if time.monotonic() >= deadline:
            raise OracleError(
                f"oracle timed out with {len(labels)}/{len(indices)} labels",
                partial=labels)
        time.sleep(oracle.poll_interval)


class _OverlayView:
    """Dataset view with oracle-provided labels overriding stored ones."""

    def __init__(self, dataset, indices, overrides, task_kind):
        base = dataset.subset(indices)
        self.n = base.n
        self.m1, self.m2 = base.m1, base.m2
        self.masks = base.masks
        self.multilabels = base.multilabels.copy()
        self.classes = base.classes.copy()
        num_classes = self.multilabels.shape[1]
        for pos, idx in enumerate(np.asarray(indices)):
            if int(idx) not in overrides:
                continue
            label = overrides[int(idx)]
            if task_kind == "multiclass":
                self.classes[pos] = int(label)
            elif task_kind == "multilabel":
                row = np.zeros(num_classes)
                row[list(label)] = 1.0
                self.multilabels[pos] = row
            else:
                self.masks[pos] = np.asarray(label)


# -- experiment loop ---------------------------------------------------------------


@dataclass
class Schedule:
    initial: int = 100
    b: int = 50
    rounds: int = 5


@dataclass
class SeedRound:
    round: int
    budget: int
    sampler: str
    seed: int
    metric: float
    wall_time: float
    selected: list = field(default_factory=list)
    truncated: bool = False


@dataclass
class RoundReport:
    round: int
    budget: int
    sampler: str
    metric_mean: float
    metric_std: float


def _stream_seed(seed: int, name: str, k: int = 0) -> int:
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode()), int(k)])
    return int(ss.generate_state(1)[0])


def _train_sampler(config: smp.SamplerConfig, dataset, pool: Pool, seed: int):
    state = smp.SamplerState(config, seed)
    lab, unl = pool.labeled, pool.unlabeled
    log = []
    for epoch in range(config.epochs):
        log.append(smp.train_sampler_epoch(
            state, dataset.m1[lab], dataset.m2[lab],
            dataset.m1[unl], dataset.m2[unl], epoch=epoch))
    return state, log


def run_active_learning(dataset, task_spec: tasks.TaskSpec, sampler_config,
                        schedule: Schedule, oracle: OracleContract, seeds,
                        fresh_sampler_per_round: bool = True, loss_sink=None):
    """Run the full budgeted experiment; returns (per-seed rows, aggregates).

    sampler_config is "random" or a SamplerConfig (whose mode names the kind).
    Round 0 is reported before any acquisition, so it depends only on the
    seed, never on the sampler kind.
    """
    kind = sampler_config if isinstance(sampler_config, str) else sampler_config.mode
    if kind not in SAMPLER_KINDS:
        raise PoolError(f"unknown sampler kind: {kind}")
    if not seeds:
        raise PoolError("need at least one seed")
    train_idx = dataset.splits["train"]
    if schedule.initial + schedule.rounds * schedule.b > len(train_idx):
        raise PoolError("schedule exceeds the training pool size")

    val_view = dataset.view("val")
    test_view = dataset.view("test")
    rows = []
    for seed in seeds:
        t0 = time.perf_counter()
        init_rng = np.random.default_rng(_stream_seed(seed, "initial"))
        pool = Pool.initial(train_idx, schedule.initial, init_rng)
        overrides = {}
        state = None

        def retrain_and_score(round_k):
            view = _OverlayView(dataset, pool.labeled, overrides, task_spec.kind)
            model = tasks.train_task(task_spec, view, val_view,
                                     seed=_stream_seed(seed, "task", round_k))
            return tasks.evaluate(task_spec, model.model, model.params, test_view)

        metric = retrain_and_score(0)
        rows.append(SeedRound(0, len(pool.labeled), kind, int(seed), metric,
                              time.perf_counter() - t0))

        for k in range(1, schedule.rounds + 1):
            t0 = time.perf_counter()
            rng = np.random.default_rng(_stream_seed(seed, "acquire", k))
            if kind != "random" and (state is None or fresh_sampler_per_round):
                state, losses = _train_sampler(sampler_config, dataset, pool,
                                               _stream_seed(seed, "sampler", k))
                if loss_sink is not None:
                    loss_sink(int(seed), k, losses)
            elif kind != "random":
                _train_sampler_continue(state, dataset, pool)
            b = min(schedule.b, len(pool.unlabeled))
            selected = acquire(kind, pool, dataset, state, b, rng)
            labels = oracle_annotate(oracle, dataset, selected, task_spec.kind)
            overrides.update(labels)
            pool = update_pools(pool, selected)
            metric = retrain_and_score(k)
            rows.append(SeedRound(k, len(pool.labeled), kind, int(seed), metric,
                                  time.perf_counter() - t0,
                                  selected=selected, truncated=b < schedule.b))

    return rows, aggregate_rows(rows)


def _train_sampler_continue(state, dataset, pool):
    lab, unl = pool.labeled, pool.unlabeled
    for epoch in range(state.config.epochs):
        smp.train_sampler_epoch(state, dataset.m1[lab], dataset.m2[lab],
                                dataset.m1[unl], dataset.m2[unl], epoch=epoch)


def aggregate_rows(rows):
    """Mean and population std of the metric across seeds, per (round, sampler)."""
    keys = sorted({(r.sampler, r.round, r.budget) for r in rows})
    out = []
    for sampler, rnd, budget in keys:
        vals = [r.metric for r in rows
                if r.sampler == sampler and r.round == rnd and r.budget == budget]
        out.append(RoundReport(rnd, budget, sampler,
                               float(np.mean(vals)), float(np.std(vals))))
    return out


# -- serialization ----------------------------------------------------------------


def write_rounds_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "budget", "sampler", "seed", "metric", "wall_time"])
        for r in rows:
            w.writerow([r.round, r.budget, r.sampler, r.seed,
                        f"{r.metric:.10f}", f"{r.wall_time:.3f}"])


def write_aggregate_csv(reports, path):
    # no wall times here: the aggregate file is byte-reproducible
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "budget", "sampler", "metric_mean", "metric_std"])
        for r in reports:
            w.writerow([r.round, r.budget, r.sampler,
                        f"{r.metric_mean:.10f}", f"{r.metric_std:.10f}"])


def write_loss_csv(losses, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "adv", "recon_m1", "recon_m2", "kl", "disc", "gp"])
        for e in losses:
            w.writerow([e.epoch] + [f"{v:.10f}" for v in
                                    (e.adv, e.recon_m1, e.recon_m2, e.kl, e.disc, e.gp)])


def write_manifest(path, config: dict, dataset):
    manifest = {"config": config, "dataset_hash": dataset.content_hash()}
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
