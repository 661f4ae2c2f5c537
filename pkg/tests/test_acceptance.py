"""End-to-end acceptance gate.

Each test exercises one release criterion and prints a single
``[ACCEPTANCE] <name>: PASS|FAIL`` line on the real stdout so the verdicts
are visible even under pytest capture. The experiment-scale tests are marked
``slow``; deselect them with ``-m "not slow"`` for a quick pass.
"""

import os
import sys
import time

import numpy as np
import pytest

import conftest

from mvaal import cli
from mvaal import nn
from mvaal import orchestrator as orc
from mvaal import sampler as smp
from mvaal import synthdata as sd
from mvaal import tasks
from mvaal import tensor as T
from mvaal.tensor import Tensor


def verdict(name, ok, detail=""):
    line = f"[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line, file=sys.__stdout__, flush=True)
    conftest.ACCEPTANCE_VERDICTS.append(line)
    assert ok, line


def elapsed_ok(name, t0, limit_s):
    dt = time.perf_counter() - t0
    verdict(name, dt < limit_s, f"{dt:.1f}s < {limit_s}s")


# -- gradient suite ----------------------------------------------------------------


def _fd(f, x, tol):
    err = T.finite_difference_check(f, Tensor(np.asarray(x, dtype=float)))
    assert err < tol, f"finite-difference error {err:.3e} >= {tol}"


def _latent(mu, logvar):
    mu_t = mu if isinstance(mu, Tensor) else Tensor(np.asarray(mu, dtype=float))
    lv_t = logvar if isinstance(logvar, Tensor) else Tensor(np.asarray(logvar, dtype=float))
    z = mu_t + T.exp(lv_t * 0.5) * Tensor(np.zeros(mu_t.shape))
    return smp.LatentBatch(mu=mu_t, logvar=lv_t, z=z, noise=np.zeros(mu_t.shape))


def test_gradient_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)

    # primitives, tolerance 1e-5
    x = rng.uniform(0.2, 1.2, (3, 4))
    _fd(lambda t: T.sum_(T.log(T.exp(t) + 1.0) * T.sqrt(t)), x, 1e-5)
    _fd(lambda t: T.sum_(T.sigmoid(t) * T.tanh(t)), rng.normal(size=(3, 4)), 1e-5)
    w = Tensor(rng.normal(size=(4, 5)))
    _fd(lambda t: T.sum_(T.square(T.matmul(t, w))), rng.normal(size=(3, 4)), 1e-5)
    k = Tensor(rng.normal(size=(2, 1, 3, 3)))
    _fd(lambda t: T.sum_(T.conv2d(t, k, stride=1, padding=1)),
        rng.normal(size=(2, 1, 6, 6)), 1e-5)
    img = Tensor(rng.normal(size=(2, 1, 6, 6)))
    _fd(lambda t: T.sum_(T.conv2d(img, t, stride=2, padding=1)), k.data, 1e-5)
    _fd(lambda t: T.sum_(T.conv_transpose2d(img, t, stride=2, padding=1)),
        rng.normal(size=(1, 2, 4, 4)), 1e-5)
    _fd(lambda t: T.sum_(T.max_pool2d(t, 2)),
        rng.permutation(36).reshape(1, 1, 6, 6) * 0.1, 1e-5)
    y = np.array([1, 0, 2])
    _fd(lambda t: T.mean(T.softmax_cross_entropy(t, y)), rng.normal(size=(3, 4)), 1e-5)
    _fd(lambda t: T.sum_(T.l2_norm(t)), rng.uniform(0.3, 1.0, (3, 4)), 1e-5)

    # composed losses, tolerance 1e-4
    _fd(lambda t: smp.kl_divergence(_latent(t, np.full((2, 3), 0.3))),
        rng.normal(size=(2, 3)), 1e-4)
    _fd(lambda t: smp.kl_divergence(_latent(np.full((2, 3), 0.2), t)),
        rng.normal(size=(2, 3)), 1e-4)

    cfg = smp.SamplerConfig(mode="mvaal", latent_dim=8, epochs=1, batch_size=4,
                            image_size=32, base_width=4)
    state = smp.SamplerState(cfg, seed=0)
    xm1 = rng.uniform(0.0, 1.0, (4, 1, 32, 32))
    xm2 = rng.uniform(0.0, 1.0, (4, 1, 32, 32))

    def both_recon(z):
        lat = _latent(z, Tensor(np.zeros(z.shape)))
        r1, r2 = smp.reconstruction_losses(state, xm1, xm2, lat)
        return r1 + r2

    _fd(both_recon, rng.normal(size=(4, 8)), 1e-4)

    def adv(z):
        lat_l = _latent(z, Tensor(np.zeros(z.shape)))
        lat_u = _latent(Tensor(rngf["zu"]), Tensor(np.zeros((4, 8))))
        return smp.vae_adversarial_loss(state, lat_l, lat_u)

    rngf = {"zu": rng.normal(size=(4, 8))}
    _fd(adv, rng.normal(size=(4, 8)), 1e-4)

    # critic score + gradient penalty w.r.t. a critic weight: exercises the
    # second derivative of the critic through the penalty term
    zl = Tensor(rng.normal(size=(4, 8)))
    zu = Tensor(rng.normal(size=(4, 8)))
    zhat = Tensor(rng.normal(size=(4, 8)))
    path = state.disc_params.paths()[0]

    def critic_loss(wt):
        state.disc_params.params[path] = wt
        joint = state.disc_forward(state.disc_params, T.concat([zl, zu]))
        score = -T.mean(joint[:4]) + T.mean(joint[4:])
        gp = T.grad_penalty_kernel(
            lambda z: state.disc_forward(state.disc_params, z), zhat, 1.0)
        return score + gp

    w0 = state.disc_params[path].data.copy()
    try:
        _fd(critic_loss, w0, 1e-4)
    finally:
        state.disc_params.params[path] = Tensor(w0)
        state.disc_params.params[path].requires_grad = True

    # task losses
    logits = rng.normal(size=(5, 4))
    _fd(lambda t: tasks.classification_loss(t, np.array([0, 1, 2, 3, 1]), "multiclass"),
        logits, 1e-4)
    multi = (rng.uniform(size=(5, 4)) > 0.5).astype(float)
    _fd(lambda t: tasks.classification_loss(t, multi, "multilabel"), logits, 1e-4)
    mask = (rng.uniform(size=(2, 1, 8, 8)) > 0.5).astype(float)
    _fd(lambda t: tasks.segmentation_loss(t, mask), rng.normal(size=(2, 1, 8, 8)), 1e-4)

    elapsed_ok("gradient-suite", t0, 120)


# -- closed-form oracles -----------------------------------------------------------


def _brute_force_ap(scores, targets):
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    hits = 0
    total = 0.0
    for rank, i in enumerate(order, start=1):
        if targets[i]:
            hits += 1
            total += hits / rank
    return total / sum(targets)


def test_closed_form_oracles():
    kl0 = smp.kl_divergence(_latent(np.zeros((1, 1)), np.zeros((1, 1)))).item()
    kl_mu1 = smp.kl_divergence(_latent(np.ones((1, 1)), np.zeros((1, 1)))).item()
    kl_ln2 = smp.kl_divergence(
        _latent(np.zeros((1, 1)), np.full((1, 1), np.log(2.0)))).item()
    assert abs(kl0) < 1e-9
    assert abs(kl_mu1 - 0.5) < 1e-9
    assert abs(kl_ln2 - 0.5 * (1.0 - np.log(2.0))) < 1e-9
    assert abs(kl_ln2 - 0.1534) < 1e-4

    rng = np.random.default_rng(1)
    for lam in (0.5, 1.0, 3.0):
        w = rng.normal(size=(6, 1))
        zhat = Tensor(rng.normal(size=(4, 6)))
        gp = T.grad_penalty_kernel(
            lambda z: T.matmul(z, Tensor(w)), zhat, lam).item()
        expect = lam * (np.linalg.norm(w) - 1.0) ** 2
        assert abs(gp - expect) < 1e-9

    a = np.zeros((4, 4), dtype=bool)
    b = np.zeros((4, 4), dtype=bool)
    a[0, :2] = True
    b[0, 0] = True
    assert abs(tasks.dice_score(a, b) - 2.0 / 3.0) < 1e-9
    assert tasks.dice_score(a, a) == 1.0
    assert tasks.dice_score(a, np.zeros_like(a)) == 0.0
    assert tasks.dice_score(np.zeros_like(a), np.zeros_like(a)) == 1.0
    assert abs(tasks.overall_accuracy([1, 2, 3, 4], [1, 2, 0, 4]) - 0.75) < 1e-9

    for trial in range(200):
        r = np.random.default_rng(trial)
        n, c = int(r.integers(3, 40)), int(r.integers(1, 6))
        scores = r.normal(size=(n, c))
        targets = (r.uniform(size=(n, c)) > 0.6).astype(int)
        cols = [j for j in range(c) if targets[:, j].sum() >= 1]
        if not cols:
            targets[0, 0] = 1
            cols = [0]
        got, n_inc = tasks.mean_average_precision(scores, targets)
        want = np.mean([_brute_force_ap(list(scores[:, j]), list(targets[:, j]))
                        for j in cols])
        assert n_inc == len(cols)
        assert abs(got - want) < 1e-9, f"trial {trial}: {got} vs {want}"

    verdict("closed-form-oracles", True)


# -- selection and pool mechanics --------------------------------------------------


def test_selection_mechanics(monkeypatch):
    rng = np.random.default_rng(7)
    universe = np.arange(2000)
    pool = orc.Pool.initial(universe, 50, rng)
    for _ in range(10_000):
        if len(pool.unlabeled) == 0:
            break
        b = int(rng.integers(1, min(8, len(pool.unlabeled)) + 1))
        pick = rng.choice(pool.unlabeled, size=b, replace=False)
        pool = orc.update_pools(pool, pick)
        pool.check()
        assert np.intersect1d(pool.labeled, pool.unlabeled).size == 0
        assert len(pool.labeled) + len(pool.unlabeled) == len(universe)

    # bottom-b of a full sort over 1000 random scores
    scores = np.random.default_rng(11).normal(size=1000)
    monkeypatch.setattr(smp, "discriminator_scores", lambda state, x: scores)
    indices = np.arange(5000, 6000)
    got = smp.select_for_annotation(object(), np.zeros((1000, 1, 32, 32)),
                                    indices, 64)
    want = sorted(indices[np.argsort(scores, kind="stable")[:64]].tolist())
    assert got == want
    monkeypatch.undo()

    # budget bookkeeping on a real (tiny) run: +b labeled per round, no repeats
    ds = sd.generate_dataset(sd.SynthSpec(n_samples=80, seed=3))
    spec = tasks.TaskSpec(kind="multiclass", num_classes=4, epochs=2,
                          batch_size=8, learning_rate=1e-3, image_size=32,
                          base_width=2)
    sched = orc.Schedule(initial=12, b=6, rounds=3)
    rows, _ = orc.run_active_learning(ds, spec, "random", sched,
                                      orc.OracleContract(kind="simulated"), [0])
    seen = set()
    for row in rows:
        assert row.budget == sched.initial + row.round * sched.b
        assert not (seen & set(row.selected))
        seen.update(row.selected)

    verdict("selection-mechanics", True)


# -- critic separates the labeled pool from the unlabeled pool ---------------------


def _two_clusters(seed, n=32, size=32):
    """Labeled pool: dim squares top-left. Unlabeled: bright, bottom-right."""
    rng = np.random.default_rng(seed)

    def make(kind):
        out = np.zeros((n, 1, size, size))
        for i in range(n):
            if kind == 0:
                cx, cy = rng.integers(4, 12), rng.integers(4, 12)
                a = rng.uniform(0.3, 0.5)
            else:
                cx, cy = rng.integers(20, 28), rng.integers(20, 28)
                a = rng.uniform(0.7, 1.0)
            out[i, 0, cy - 4:cy + 4, cx - 4:cx + 4] = a
        out += rng.normal(0, 0.05, out.shape)
        return np.clip(out, 0, 1)

    return make(0), make(1)


@pytest.mark.slow
def test_critic_separates_pools():
    t0 = time.perf_counter()
    wins = 0
    margins = []
    for seed in range(5):
        lab, unl = _two_clusters(seed)
        cfg = smp.SamplerConfig(mode="mvaal", latent_dim=16, gamma1=1.0,
                                gamma2=20.0, beta_kl=0.0, lr_vae=1e-3,
                                lr_disc=2e-3, epochs=1, batch_size=8,
                                image_size=32, base_width=4)
        state = smp.SamplerState(cfg, seed)
        for epoch in range(20):
            smp.train_sampler_epoch(state, lab, lab, unl, unl, epoch=epoch)
        margin = float(smp.discriminator_scores(state, lab).mean()
                       - smp.discriminator_scores(state, unl).mean())
        margins.append(margin)
        wins += margin > 0
    verdict("critic-separation", wins >= 4,
            f"{wins}/5 seeds, margins {['%.2e' % m for m in margins]}")
    elapsed_ok("critic-separation-runtime", t0, 600)


# -- single-modality equivalence ---------------------------------------------------


def test_single_modality_equivalence():
    rng = np.random.default_rng(5)
    lab = rng.uniform(0, 1, (12, 1, 32, 32))
    unl = rng.uniform(0, 1, (20, 1, 32, 32))
    kw = dict(latent_dim=8, gamma1=1.0, gamma2=1.0, beta_kl=0.1, lr_vae=1e-3,
              lr_disc=1e-3, epochs=1, batch_size=4, image_size=32, base_width=4)
    results = {}
    for mode in ("vaal", "mvaal"):
        cfg = smp.SamplerConfig(mode=mode, gamma3=0.0, **kw)
        state = smp.SamplerState(cfg, seed=0)
        logs = [smp.train_sampler_epoch(state, lab, lab, unl, unl, epoch=e)
                for e in range(2)]
        scores = smp.discriminator_scores(state, unl)
        picks = smp.select_for_annotation(state, unl, np.arange(20), 5)
        results[mode] = (logs, scores, picks)

    (la, sa, pa), (lb, sb, pb) = results["vaal"], results["mvaal"]
    for ea, eb in zip(la, lb):
        assert ea == eb, f"epoch logs diverge: {ea} vs {eb}"
    assert np.array_equal(sa, sb)
    assert pa == pb
    verdict("single-modality-equivalence", True, "bit-identical")


# -- desk-scale learning curves ----------------------------------------------------

LC_DATASET = dict(n_samples=1875, seed=0, noise_sigma=0.15)
LC_TASK = dict(kind="multiclass", num_classes=4, epochs=25, batch_size=32,
               learning_rate=2e-3, image_size=32, base_width=4)
LC_SAMPLER = dict(latent_dim=16, gamma1=1.0, gamma2=20.0, beta_kl=0.3,
                  lr_vae=1e-3, lr_disc=2e-3, epochs=10, batch_size=16,
                  image_size=32, base_width=4)
LC_SEEDS = [0, 1, 2, 3, 4]


@pytest.mark.slow
def test_learning_curves():
    t0 = time.perf_counter()
    ds = sd.generate_dataset(sd.SynthSpec(**LC_DATASET))
    assert len(ds.splits["train"]) == 1200
    spec = tasks.TaskSpec(**LC_TASK)
    sched = orc.Schedule(initial=100, b=50, rounds=5)
    oracle = orc.OracleContract(kind="simulated")

    all_rows = {}
    for name, cfg in [
        ("random", "random"),
        ("vaal", smp.SamplerConfig(mode="vaal", gamma3=0.0, **LC_SAMPLER)),
        ("mvaal", smp.SamplerConfig(mode="mvaal", gamma3=1.0, **LC_SAMPLER)),
    ]:
        rows, _ = orc.run_active_learning(ds, spec, cfg, sched, oracle, LC_SEEDS)
        all_rows[name] = rows

    def mean_at(name, rnd):
        vals = [r.metric for r in all_rows[name] if r.round == rnd]
        assert len(vals) == len(LC_SEEDS)
        return float(np.mean(vals))

    # (a) every sampler improves its own round-0 mean by >= 5 accuracy points
    gains = {n: mean_at(n, 5) - mean_at(n, 0) for n in all_rows}
    verdict("learning-curve-gain", all(g >= 0.05 for g in gains.values()),
            " ".join(f"{n}:+{g:.3f}" for n, g in gains.items()))

    # (b) round 0 precedes any acquisition, so it is sampler-independent
    base = {n: sorted((r.seed, r.metric) for r in rows if r.round == 0)
            for n, rows in all_rows.items()}
    verdict("learning-curve-shared-baseline",
            base["random"] == base["vaal"] == base["mvaal"])

    # (c) the multimodal sampler leads random on most acquisition rounds
    lead = [rnd for rnd in range(1, 6)
            if mean_at("mvaal", rnd) >= mean_at("random", rnd)]
    detail = " ".join(
        f"r{rnd}:{mean_at('random', rnd):.3f}/{mean_at('mvaal', rnd):.3f}"
        for rnd in range(1, 6))
    verdict("learning-curve-ordering", len(lead) >= 3,
            f"leads at rounds {lead}; random/mvaal means {detail}")
    elapsed_ok("learning-curve-runtime", t0, 3600)


# -- second-modality weight ablation harness ---------------------------------------


@pytest.mark.slow
def test_gamma3_ablation_harness(tmp_path):
    t0 = time.perf_counter()
    out = str(tmp_path / "ablation")
    overrides = []
    for s in ["dataset.spec.n_samples=625",
              "dataset.spec.noise_sigma=0.15",
              "task.epochs=15",
              "sampler.epochs=3",
              'schedule={"initial": 100, "b": 50, "rounds": 3}',
              "seeds=[0,1,2]"]:
        overrides += ["--set", s]
    assert cli.main(["ablate-gamma3", "--out", out] + overrides) == 0

    arms = ["mvaal_g0.2", "mvaal_g0.4", "mvaal_g0.8", "mvaal_g1"]
    budgets = [100, 150, 200, 250]
    for arm in arms:
        path = os.path.join(out, f"rounds_{arm}.csv")
        assert os.path.exists(path), f"missing arm output {path}"
        lines = open(path).read().strip().splitlines()[1:]
        # shared schedule: every seed visits the same budget ladder
        per_seed = {}
        for line in lines:
            rnd, budget, sampler, seed = line.split(",")[:4]
            assert sampler == arm
            per_seed.setdefault(seed, []).append(int(budget))
        assert sorted(per_seed) == ["0", "1", "2"]
        for seed, lad in per_seed.items():
            assert sorted(lad) == budgets, f"{arm} seed {seed}: {lad}"

    verdict("gamma3-ablation-harness", True, f"{len(arms)} complete arms")
    elapsed_ok("gamma3-ablation-runtime", t0, 1800)


# -- determinism -------------------------------------------------------------------


def test_deterministic_aggregates(tmp_path):
    overrides = []
    for s in ["dataset.spec.n_samples=80", "task.epochs=2", "task.base_width=2",
              "task.batch_size=8", "sampler.epochs=1", "sampler.latent_dim=8",
              "sampler.base_width=4", "sampler.batch_size=8",
              'samplers=["random", "mvaal"]',
              'schedule={"initial": 12, "b": 6, "rounds": 2}', "seeds=[0,1]"]:
        overrides += ["--set", s]
    outs = []
    for name in ("a", "b"):
        out = str(tmp_path / name)
        assert cli.main(["run", "--out", out] + overrides) == 0
        outs.append(open(os.path.join(out, "aggregate.csv"), "rb").read())
    verdict("deterministic-aggregates", outs[0] == outs[1],
            f"{len(outs[0])} bytes, byte-identical")
