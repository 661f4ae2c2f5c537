"""Configuration-driven command line: data generation, runs, ablations, reports."""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import threading

from . import orchestrator as orc
from . import report as rpt
from . import sampler as smp
from . import synthdata as sd
from . import tasks

GAMMA3_SWEEP_DEFAULT = [0.2, 0.4, 0.8, 1.0]


class CLIError(ValueError):
    pass


def default_config():
    return {
        "dataset": {
            "path": None,
            # 1875 samples split 80:20/80:20 -> 1200 train / 300 val / 375 test
            "spec": {"image_size": 32, "n_samples": 1875, "noise_sigma": 0.15,
                     "seed": 0},
        },
        "task": {"kind": "multiclass", "num_classes": 4, "epochs": 25,
                 "batch_size": 32, "learning_rate": 2e-3, "image_size": 32,
                 "base_width": 4},
        # desk-scale values; a stronger reconstruction weight and faster
        # learning rates keep the latent space informative at this data size
        "sampler": {"latent_dim": 16, "gamma1": 1.0, "gamma2": 20.0, "gamma3": 1.0,
                    "beta_kl": 0.3, "lambda_gp": 1.0, "lr_vae": 1e-3,
                    "lr_disc": 2e-3, "epochs": 10, "batch_size": 16,
                    "image_size": 32, "base_width": 4, "optimizer": "adam"},
        "samplers": ["random", "vaal", "mvaal"],
        "schedule": {"initial": 100, "b": 50, "rounds": 5},
        "seeds": [0, 1, 2, 3, 4],
        "oracle": {"kind": "simulated", "timeout": 3600.0},
        "gamma3_sweep": GAMMA3_SWEEP_DEFAULT,
        "log_sampler_losses": False,
    }


def _coerce(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(config: dict, sets):
    """--set a.b.c=value overrides, values parsed as JSON when possible."""
    config = copy.deepcopy(config)
    for item in sets or []:
        if "=" not in item:
            raise CLIError(f"--set expects key=value, got {item!r}")
        key, raw = item.split("=", 1)
        node = config
        parts = key.split(".")
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                node[p] = {}
            node = node[p]
        node[parts[-1]] = _coerce(raw)
    return config


def load_config(path, sets=None):
    config = default_config()
    if path:
        with open(path) as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise CLIError("config file must hold a JSON object")
        for key, val in user.items():
            if isinstance(val, dict) and isinstance(config.get(key), dict):
                config[key].update(val)
            else:
                config[key] = val
    return apply_overrides(config, sets)


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True).encode()).hexdigest()


def build_sampler_config(config, mode, gamma3=None):
    shared = dict(config["sampler"])
    shared["mode"] = mode
    if mode == "vaal":
        shared["gamma3"] = 0.0
    elif gamma3 is not None:
        shared["gamma3"] = gamma3
    try:
        return smp.SamplerConfig(**shared)
    except (TypeError, smp.SamplerConfigError) as exc:
        raise CLIError(f"invalid sampler config: {exc}") from exc


def build_task_spec(config):
    try:
        return tasks.TaskSpec(**config["task"])
    except (TypeError, tasks.TaskError) as exc:
        raise CLIError(f"invalid task config: {exc}") from exc


def get_dataset(config, outdir):
    ds_cfg = config["dataset"]
    if ds_cfg.get("path"):
        return sd.load_dataset(ds_cfg["path"])
    data_dir = os.path.join(outdir, "dataset")
    spec = sd.SynthSpec(**ds_cfg["spec"])
    if os.path.exists(os.path.join(data_dir, "manifest.json")):
        existing = sd.load_dataset(data_dir)
        if existing.spec == spec:
            return existing
    dataset = sd.generate_dataset(spec)
    sd.save_dataset(dataset, data_dir)
    return dataset


def _check_done(outdir, chash, force):
    """True if the run is already complete and should be skipped."""
    done = os.path.join(outdir, "DONE")
    if not os.path.exists(done):
        return False
    if force:
        os.remove(done)
        return False
    with open(done) as fh:
        stored = fh.read().strip()
    if stored == chash:
        print(f"already complete (config {chash[:12]}), nothing to do")
        return True
    raise CLIError(
        f"output dir holds a finished run with a different config "
        f"({stored[:12]} vs {chash[:12]}); use --force to overwrite")


def _write_done(outdir, chash):
    with open(os.path.join(outdir, "DONE"), "w") as fh:
        fh.write(chash + "\n")


def _loss_sink(outdir, arm, enabled):
    if not enabled:
        return None

    def sink(seed, round_k, losses):
        path = os.path.join(outdir, f"sampler_losses_{arm}_seed{seed}_round{round_k}.csv")
        orc.write_loss_csv(losses, path)
    return sink


def _run_arms(config, dataset, outdir, arms, oracle):
    """arms: list of (label, sampler-config-or-'random')."""
    task_spec = build_task_spec(config)
    schedule = orc.Schedule(**config["schedule"])
    seeds = list(config["seeds"])
    all_rows = []
    for label, sampler_config in arms:
        rows, _ = orc.run_active_learning(
            dataset, task_spec, sampler_config, schedule, oracle, seeds,
            loss_sink=_loss_sink(outdir, label, config["log_sampler_losses"]))
        for r in rows:
            r.sampler = label
        orc.write_rounds_csv(rows, os.path.join(outdir, f"rounds_{label}.csv"))
        all_rows.extend(rows)
        print(f"arm {label}: {len(rows)} round rows")
    orc.write_aggregate_csv(orc.aggregate_rows(all_rows),
                            os.path.join(outdir, "aggregate.csv"))
    orc.write_manifest(os.path.join(outdir, "manifest.json"), config, dataset)
    return all_rows


def _make_oracle(config, queue=None):
    cfg = config["oracle"]
    if cfg["kind"] == "simulated":
        return orc.OracleContract(kind="simulated")
    return orc.OracleContract(kind="remote", queue=queue,
                              timeout=float(cfg.get("timeout", 3600.0)))


# -- subcommands ------------------------------------------------------------------


def cmd_gen_data(args):
    config = load_config(args.config, args.set)
    spec = sd.SynthSpec(**config["dataset"]["spec"])
    dataset = sd.generate_dataset(spec)
    sd.save_dataset(dataset, args.out)
    print(f"wrote {dataset.n} samples to {args.out} "
          f"(hash {dataset.content_hash()[:12]})")
    return 0


def cmd_run(args):
    config = load_config(args.config, args.set)
    os.makedirs(args.out, exist_ok=True)
    chash = config_hash(config)
    if _check_done(args.out, chash, args.force):
        return 0
    dataset = get_dataset(config, args.out)
    arms = []
    for kind in config["samplers"]:
        if kind == "random":
            arms.append(("random", "random"))
        elif kind in ("vaal", "mvaal"):
            arms.append((kind, build_sampler_config(config, kind)))
        else:
            raise CLIError(f"unknown sampler kind in config: {kind}")
    _run_arms(config, dataset, args.out, arms, _make_oracle(config))
    _write_done(args.out, chash)
    print(f"done (config {chash[:12]})")
    return 0


def cmd_ablate_gamma3(args):
    config = load_config(args.config, args.set)
    if "mvaal" not in config["samplers"]:
        raise CLIError("gamma3 ablation needs an mvaal arm in the config")
    os.makedirs(args.out, exist_ok=True)
    config["samplers"] = ["mvaal"]
    chash = config_hash(config)
    if _check_done(args.out, chash, args.force):
        return 0
    dataset = get_dataset(config, args.out)
    sweep = config.get("gamma3_sweep") or GAMMA3_SWEEP_DEFAULT
    arms = [(f"mvaal_g{v:g}", build_sampler_config(config, "mvaal", gamma3=v))
            for v in sweep]
    _run_arms(config, dataset, args.out, arms, _make_oracle(config))
    _write_done(args.out, chash)
    print(f"done (config {chash[:12]})")
    return 0


def cmd_report(args):
    config = load_config(args.config, args.set)
    metric = {"segmentation": "dice", "multilabel": "mAP",
              "multiclass": "accuracy"}[config["task"]["kind"]]
    files = rpt.emit_reports(args.run, metric_name=metric)
    for f in files:
        print(f"wrote {f}")
    return 0


def cmd_serve(args):
    import uvicorn

    from .server import AnnotationQueue, create_app

    config = load_config(args.config, args.set)
    config["oracle"]["kind"] = "remote"
    os.makedirs(args.out, exist_ok=True)
    chash = config_hash(config)
    if _check_done(args.out, chash, args.force):
        return 0
    dataset = get_dataset(config, args.out)
    queue = AnnotationQueue(path=os.path.join(args.out, "queue.json"),
                            num_classes=config["task"]["num_classes"],
                            sampler_name=",".join(config["samplers"]))

    def experiment():
        arms = []
        for kind in config["samplers"]:
            if kind == "random":
                arms.append(("random", "random"))
            else:
                arms.append((kind, build_sampler_config(config, kind)))
        _run_arms(config, dataset, args.out, arms, _make_oracle(config, queue))
        _write_done(args.out, chash)
        print(f"experiment complete (config {chash[:12]})")

    worker = threading.Thread(target=experiment, daemon=True)
    worker.start()
    app = create_app(queue, dataset, static_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="mvaal",
                                description="budgeted active-learning harness")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", default=None, help="JSON config file")
        sp.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key")
        if out:
            sp.add_argument("--out", required=True, help="output directory")
            sp.add_argument("--force", action="store_true",
                            help="redo a finished run")

    sp = sub.add_parser("gen-data", help="generate and save a synthetic dataset")
    common(sp)
    sp.set_defaults(func=cmd_gen_data)

    sp = sub.add_parser("run", help="run the active-learning comparison")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("ablate-gamma3", help="sweep the m2 reconstruction weight")
    common(sp)
    sp.set_defaults(func=cmd_ablate_gamma3)

    sp = sub.add_parser("report", help="emit tables and learning-curve plots")
    sp.add_argument("--config", default=None)
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    sp.add_argument("--run", required=True, help="run directory with round CSVs")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("serve", help="serve the annotation oracle API")
    common(sp)
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=8000)
    sp.add_argument("--ui-dir", default=None, help="static UI bundle directory")
    sp.set_defaults(func=cmd_serve)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CLIError, orc.PoolError, sd.DatasetError, rpt.ReportError,
            FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
