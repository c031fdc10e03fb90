"""Command-line front end.

Subcommands: keygen, train, sample, detect, attack, capacity,
suite {detection separation quality persistence multiplex all}, report.
Each accepts --seed / --config / --out where meaningful; all file
output lands under --out and is listed in a sha256 manifest.
"""

import argparse
import json
import sys

import numpy as np

from . import harness
from .backend import backend_name
from .codec import derive_key, read_key, write_key
from .detector import detection_trial
from .errors import FormatError
from .flow import euler_sample
from .model import load_checkpoint, save_checkpoint, train
from .rng import SeededRng, derive_seed


def _fail(msg):
    print("error: %s" % msg, file=sys.stderr)
    return 2


def _load_config(args, need=True):
    if not getattr(args, "config", None):
        if need:
            raise ValueError("this command needs --config <file>")
        return None
    cfg = harness.HarnessConfig.from_file(args.config)
    if getattr(args, "seed", None) is not None:
        cfg = harness.HarnessConfig.from_dict(
            dict(_cfg_dict(cfg), seed=args.seed))
    return cfg


def _cfg_dict(cfg):
    d = dict(cfg.__dict__)
    d["lambda"] = d.pop("lam")
    return d


def _out_dir(args, default="out"):
    return harness.RunDir(getattr(args, "out", None) or default)


def cmd_keygen(args):
    if args.config:
        cfg = _load_config(args)
        seed, D, k, L = cfg.seed, cfg.D, cfg.k, cfg.message_bits
    else:
        if args.seed is None:
            return _fail("keygen needs --seed (or --config)")
        seed, D, k, L = args.seed, args.D, args.k, args.L
    key = derive_key(seed, D, k, L)
    run = _out_dir(args, "keys")
    path = run.record("flowmark.key")
    write_key(key, path, scheme=args.scheme)
    run.write_manifest()
    print("wrote %s (seed=%d D=%d k=%d L=%d)" % (path, seed, D, k, L))
    return 0


def cmd_train(args):
    cfg = _load_config(args)
    key = derive_key(cfg.seed, cfg.D, cfg.k, cfg.message_bits)
    ds = harness.load_dataset(cfg)
    m = None if args.clean else args.message
    if m is None and not args.clean:
        return _fail("train needs --message M or --clean")
    label = "clean" if m is None else "m%d" % m
    res = train(ds.points, key, m,
                cfg.train_config(derive_seed(cfg.seed, "cli-train", label)))
    run = _out_dir(args)
    ck = run.record("model-%s.ckpt" % label)
    save_checkpoint(res.model, ck, config_digest=cfg.digest())
    tel = run.record("telemetry-%s.csv" % label)
    with open(tel, "w") as fh:
        fh.write("step,loss,vel_loss,wm_corr\n")
        t = res.telemetry
        for i in range(len(t["step"])):
            fh.write("%d,%.8g,%.8g,%.8g\n" % (t["step"][i], t["loss"][i],
                                              t["vel_loss"][i],
                                              t["wm_corr"][i]))
    run.write_manifest()
    print("trained %s: final vel loss %.4f -> %s"
          % (label, float(np.mean(res.telemetry["vel_loss"][-50:])), ck))
    return 0


def cmd_sample(args):
    model, _ = load_checkpoint(args.model)
    rng = SeededRng(args.seed if args.seed is not None else 0)
    x0 = rng.normal((args.n, model.data_dim))
    pts = euler_sample(model.forward, x0, args.steps)
    run = _out_dir(args)
    path = run.record("samples.npy")
    np.save(path, pts)
    run.write_manifest()
    print("wrote %d samples to %s" % (args.n, path))
    return 0


def cmd_detect(args):
    key, _ = read_key(args.key)
    model, _ = load_checkpoint(args.model)
    rng = SeededRng(args.seed if args.seed is not None else 0)
    res = detection_trial(model.forward, key, args.claimed, args.N, rng)
    print("decoded=%d confidence=%.6f claimed=%d hit=%s"
          % (res["decoded"], res["confidence"], args.claimed,
             res["hit"]))
    if args.out:
        run = _out_dir(args)
        with open(run.record("detect.json"), "w") as fh:
            json.dump(res, fh, indent=1)
            fh.write("\n")
        run.write_manifest()
    return 0


def cmd_attack(args):
    cfg = _load_config(args)
    model, _ = load_checkpoint(args.model)
    hits = 0
    for a in range(args.trials):
        bad = derive_key(derive_seed(cfg.seed, "cli-attack", a),
                         cfg.D, cfg.k, cfg.message_bits)
        rng = SeededRng(derive_seed(cfg.seed, "cli-attack-q", a))
        hits += detection_trial(model.forward, bad, args.claimed,
                                cfg.query_budget, rng)["hit"]
    print("wrong-key attack: %d/%d hits (chance %.4f)"
          % (hits, args.trials, 1.0 / (1 << cfg.message_bits)))
    return 0


def cmd_capacity(args):
    cfg = _load_config(args)
    if args.model:
        model, _ = load_checkpoint(args.model)
        if args.true_m is None:
            return _fail("capacity with --model needs --true-m")
        report = harness.capacity_sweep(cfg, field=model.forward,
                                        true_m=args.true_m)
    else:
        report = harness.capacity_sweep(cfg, sigma2=args.sigma2)
    run = _out_dir(args)
    run.save_report(report)
    run.write_manifest()
    for row in report.rows:
        print("N=%-7d capacity=%8.2f bits  sim_error=%.4f"
              % (row["N"], row["capacity_bits"], row["sim_error"]))
    return 0


SUITES = ("detection", "separation", "quality", "persistence", "multiplex")


def cmd_suite(args):
    cfg = _load_config(args)
    run = _out_dir(args)
    names = SUITES if args.which == "all" else (args.which,)
    pool = None
    reports = []
    if any(n in ("detection", "separation", "quality") for n in names):
        pool = harness.train_model_pool(cfg, progress=print)
    for name in names:
        if name in ("detection", "separation", "quality"):
            fn = getattr(harness, "run_%s_suite" % name)
            rep = fn(cfg, pool=pool, progress=print)
        else:
            fn = getattr(harness, "run_%s_suite" % name)
            rep = fn(cfg, progress=print)
        run.save_report(rep)
        reports.append(rep)
        print("[%s] %s" % (name, json.dumps(rep.summary, sort_keys=True)))
    run.write_manifest()
    return 0


def cmd_report(args):
    run_root = args.run_dir
    manifest = "%s/manifest.json" % run_root
    try:
        with open(manifest) as fh:
            doc = json.load(fh)
    except OSError:
        return _fail("no manifest.json under %s" % run_root)
    print("run %s: %d files" % (run_root, len(doc["files"])))
    for entry in doc["files"]:
        print("  %-32s %8d bytes  sha256 %s..." %
              (entry["name"], entry["bytes"], entry["sha256"][:16]))
        if entry["name"].endswith("_report.json"):
            with open("%s/%s" % (run_root, entry["name"])) as fh:
                rep = json.load(fh)
            for k, v in sorted(rep["summary"].items()):
                print("      %s = %s" % (k, v))
    return 0


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--config", default=None)
    common.add_argument("--out", default=None)

    p = argparse.ArgumentParser(
        prog="flowmark",
        description="Dynamics-level watermarking of flow matching models "
                    "(backend: %s)" % backend_name())
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("keygen", parents=[common])
    g.add_argument("--D", type=int, default=64)
    g.add_argument("--k", type=int, default=16)
    g.add_argument("--L", type=int, default=4)
    g.add_argument("--scheme", default="single")
    g.set_defaults(fn=cmd_keygen)

    g = sub.add_parser("train", parents=[common])
    g.add_argument("--message", type=int, default=None)
    g.add_argument("--clean", action="store_true")
    g.set_defaults(fn=cmd_train)

    g = sub.add_parser("sample", parents=[common])
    g.add_argument("--model", required=True)
    g.add_argument("--n", type=int, default=64)
    g.add_argument("--steps", type=int, default=100)
    g.set_defaults(fn=cmd_sample)

    g = sub.add_parser("detect", parents=[common])
    g.add_argument("--key", required=True)
    g.add_argument("--model", required=True)
    g.add_argument("--claimed", type=int, required=True)
    g.add_argument("--N", type=int, default=4096)
    g.set_defaults(fn=cmd_detect)

    g = sub.add_parser("attack", parents=[common])
    g.add_argument("--model", required=True)
    g.add_argument("--claimed", type=int, required=True)
    g.add_argument("--trials", type=int, default=50)
    g.set_defaults(fn=cmd_attack)

    g = sub.add_parser("capacity", parents=[common])
    g.add_argument("--model", default=None)
    g.add_argument("--true-m", type=int, default=None)
    g.add_argument("--sigma2", type=float, default=1.0)
    g.set_defaults(fn=cmd_capacity)

    g = sub.add_parser("suite", parents=[common])
    g.add_argument("which", choices=SUITES + ("all",))
    g.set_defaults(fn=cmd_suite)

    g = sub.add_parser("report", parents=[common])
    g.add_argument("run_dir")
    g.set_defaults(fn=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FormatError, OSError) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
