"""Experiment harness: config files, reports, and the desk-scale suites.

Every suite is a cold-start function of (config, optional pre-trained
pool); all randomness flows from the config seed through derive_seed,
and every report row carries the derived integer that reproduces it.
Reports serialize to CSV (rows) and JSON (summary + rows); files land
in a run directory with a sha256 manifest.
"""

import csv
import hashlib
import json
import os
import time
from dataclasses import dataclass, replace

import numpy as np

from . import channel as chanmod
from .codec import MultiplexScheme, derive_key, single_scheme
from .datasets import load_mnist_idx, make_synthetic
from .detector import demodulated_signature, detection_trial, \
    multiplex_trial, sample_queries
from .flow import LossConfig, euler_sample
from .model import TrainConfig, train
from .numkit import energy_distance, welch_t
from .rng import SeededRng, derive_seed

# config keys follow the hyperparameter-table names; L is message_bits
REQUIRED_KEYS = ("seed", "D", "k", "message_bits", "steps", "batch_size",
                 "learning_rate", "epsilon0", "lambda", "query_budget")
DEFAULTS = {
    "dataset": "gauss-mix-8",
    "training_samples": 10000,
    "hidden_size": 256,
    "depth": 4,
    "weight_decay": 0.01,
    "ema_decay": 0.999,
    "watermarked_models": 8,
    "clean_models": 2,
    "trials_per_model": 20,
    "wrong_key_trials": 50,
    "quality_samples": 2000,
    "quality_draws": 4,
    "euler_steps": 100,
    "mnist_images": "",
    "mnist_labels": "",
}


def _coerce(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config(path):
    """Flat `key = value` file, # comments; returns a plain dict."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError("%s:%d: expected key = value, got %r"
                                 % (path, lineno, raw.strip()))
            name, _, val = line.partition("=")
            out[name.strip()] = _coerce(val.strip())
    return out


@dataclass(frozen=True)
class HarnessConfig:
    seed: int
    D: int
    k: int
    message_bits: int
    steps: int
    batch_size: int
    learning_rate: float
    epsilon0: float
    lam: float
    query_budget: int
    dataset: str = DEFAULTS["dataset"]
    training_samples: int = DEFAULTS["training_samples"]
    hidden_size: int = DEFAULTS["hidden_size"]
    depth: int = DEFAULTS["depth"]
    weight_decay: float = DEFAULTS["weight_decay"]
    ema_decay: float = DEFAULTS["ema_decay"]
    watermarked_models: int = DEFAULTS["watermarked_models"]
    clean_models: int = DEFAULTS["clean_models"]
    trials_per_model: int = DEFAULTS["trials_per_model"]
    wrong_key_trials: int = DEFAULTS["wrong_key_trials"]
    quality_samples: int = DEFAULTS["quality_samples"]
    quality_draws: int = DEFAULTS["quality_draws"]
    euler_steps: int = DEFAULTS["euler_steps"]
    mnist_images: str = ""
    mnist_labels: str = ""

    @classmethod
    def from_dict(cls, raw):
        raw = dict(raw)
        missing = [k for k in REQUIRED_KEYS if k not in raw]
        if missing:
            raise ValueError("config missing required keys: %s"
                             % ", ".join(missing))
        raw["lam"] = raw.pop("lambda")
        known = set(cls.__dataclass_fields__)
        unknown = [k for k in raw if k not in known]
        if unknown:
            raise ValueError("config has unknown keys: %s"
                             % ", ".join(sorted(unknown)))
        return cls(**raw)

    @classmethod
    def from_file(cls, path):
        return cls.from_dict(parse_config(path))

    def digest(self):
        blob = json.dumps(self.__dict__, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def loss_config(self):
        return LossConfig(epsilon0=self.epsilon0, lam=self.lam)

    def train_config(self, seed):
        return TrainConfig(steps=self.steps, batch=self.batch_size,
                           lr=self.learning_rate, seed=seed,
                           loss=self.loss_config(), width=self.hidden_size,
                           depth=self.depth,
                           weight_decay=self.weight_decay,
                           ema_decay=self.ema_decay)


@dataclass
class ExperimentReport:
    experiment: str
    rows: list
    summary: dict
    config_digest: str
    seed: int

    def write_csv(self, path):
        if not self.rows:
            raise ValueError("no rows to write")
        cols = list(self.rows[0].keys())
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=cols)
            w.writeheader()
            w.writerows(self.rows)

    def write_json(self, path):
        doc = {"experiment": self.experiment, "seed": self.seed,
               "config_digest": self.config_digest,
               "summary": self.summary, "rows": self.rows}
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1, sort_keys=True)
            fh.write("\n")


class RunDir:
    """Output directory that tracks every written file for the manifest."""

    def __init__(self, root):
        self.root = root
        os.makedirs(root, exist_ok=True)
        self.files = []

    def path(self, name):
        return os.path.join(self.root, name)

    def record(self, name):
        self.files.append(name)
        return self.path(name)

    def save_report(self, report):
        report.write_csv(self.record(report.experiment + "_rows.csv"))
        report.write_json(self.record(report.experiment + "_report.json"))

    def write_manifest(self):
        entries = []
        for name in sorted(set(self.files)):
            p = self.path(name)
            with open(p, "rb") as fh:
                digest = hashlib.sha256(fh.read()).hexdigest()
            entries.append({"name": name, "sha256": digest,
                            "bytes": os.path.getsize(p)})
        doc = {"created": time.strftime("%Y-%m-%dT%H:%M:%S"),
               "files": entries}
        with open(self.path("manifest.json"), "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")


# ----------------------------------------------------------------------
# model pool
# ----------------------------------------------------------------------

@dataclass
class ModelPool:
    key: object
    dataset: object
    watermarked: list    # [(message, TrainResult), ...]
    clean: list          # [TrainResult, ...]


def load_dataset(cfg):
    if cfg.dataset == "mnist":
        if not (cfg.mnist_images and cfg.mnist_labels):
            raise ValueError("mnist dataset needs mnist_images and "
                             "mnist_labels paths in the config")
        return load_mnist_idx(cfg.mnist_images, cfg.mnist_labels)
    rng = SeededRng(derive_seed(cfg.seed, "data"))
    return make_synthetic(rng, cfg.dataset, cfg.D, cfg.training_samples)


def train_model_pool(cfg, progress=None):
    """Key, dataset, and the watermarked + clean model sets of a config."""
    key = derive_key(cfg.seed, cfg.D, cfg.k, cfg.message_bits)
    ds = load_dataset(cfg)
    wm = []
    for i in range(cfg.watermarked_models):
        m = i % key.n_messages
        res = train(ds.points, key, m,
                    cfg.train_config(derive_seed(cfg.seed, "model", i)))
        wm.append((m, res))
        if progress:
            progress("trained wm%02d (m=%d)" % (i, m))
    clean = []
    for j in range(cfg.clean_models):
        res = train(ds.points, None, None,
                    cfg.train_config(derive_seed(cfg.seed, "clean", j)))
        clean.append(res)
        if progress:
            progress("trained clean%02d" % j)
    return ModelPool(key=key, dataset=ds, watermarked=wm, clean=clean)


# ----------------------------------------------------------------------
# suites
# ----------------------------------------------------------------------

def run_detection_suite(cfg, pool=None, progress=None):
    """Decode accuracy for watermarked, clean, and wrong-key populations."""
    pool = pool or train_model_pool(cfg, progress)
    key, N = pool.key, cfg.query_budget
    rows = []

    def one_trial(model_id, fld, trial_key, claimed, *seed_path):
        s = derive_seed(cfg.seed, *seed_path)
        res = detection_trial(fld, trial_key, claimed, N, SeededRng(s))
        rows.append({"model_id": model_id, "claimed_m": int(claimed),
                     "decoded_m": res["decoded"],
                     "confidence": res["confidence"], "N": N, "seed": s,
                     "hit": int(res["hit"])})
        return res["hit"]

    wm_hits = 0
    for i, (m, res) in enumerate(pool.watermarked):
        for tr in range(cfg.trials_per_model):
            wm_hits += one_trial("wm%02d" % i, res.model.forward, key, m,
                                 "detect-wm", i, tr)
    clean_hits = 0
    for j, res in enumerate(pool.clean):
        pick = SeededRng(derive_seed(cfg.seed, "claimed", j))
        for tr in range(cfg.trials_per_model):
            claimed = int(pick.integers(key.n_messages))
            clean_hits += one_trial("clean%02d" % j, res.model.forward,
                                    key, claimed, "detect-clean", j, tr)
    wrong_hits = 0
    for a in range(cfg.wrong_key_trials):
        i = a % len(pool.watermarked)
        m, res = pool.watermarked[i]
        bad_key = derive_key(derive_seed(cfg.seed, "wrong-key", a),
                             cfg.D, cfg.k, cfg.message_bits)
        wrong_hits += one_trial("attack%02d-wm%02d" % (a, i),
                                res.model.forward, bad_key, m,
                                "detect-wrong", a)

    wm_total = len(pool.watermarked) * cfg.trials_per_model
    clean_total = len(pool.clean) * cfg.trials_per_model
    summary = {"wm_hits": wm_hits, "wm_total": wm_total,
               "clean_hits": clean_hits, "clean_total": clean_total,
               "wrong_key_hits": wrong_hits,
               "wrong_key_total": cfg.wrong_key_trials,
               "chance_rate": 1.0 / key.n_messages}
    return ExperimentReport("detection", rows, summary, cfg.digest(),
                            cfg.seed)


def run_separation_suite(cfg, pool=None, progress=None):
    """Score separation between watermarked and clean models, per message."""
    pool = pool or train_model_pool(cfg, progress)
    key, N = pool.key, cfg.query_budget
    M = key.n_messages

    # each clean signature scores against every codeword at once
    clean_scores = [[] for _ in range(M)]
    clean_norms = []
    for j, res in enumerate(pool.clean):
        for tr in range(cfg.trials_per_model):
            s = derive_seed(cfg.seed, "sep-clean", j, tr)
            q = sample_queries(SeededRng(s), N, cfg.D)
            sig = demodulated_signature(res.model.forward, key, q)
            clean_norms.append(float(np.linalg.norm(sig.s_hat)))
            for m in range(M):
                clean_scores[m].append(float(sig.scores[m]))

    rows = []
    min_sep = np.inf
    max_p = 0.0
    for i, (m, res) in enumerate(pool.watermarked):
        scores = []
        norms = []
        for tr in range(cfg.trials_per_model):
            s = derive_seed(cfg.seed, "sep-wm", i, tr)
            q = sample_queries(SeededRng(s), N, cfg.D)
            sig = demodulated_signature(res.model.forward, key, q)
            scores.append(float(sig.scores[m]))
            norms.append(float(np.linalg.norm(sig.s_hat)))
        ref = np.asarray(clean_scores[m])
        t_stat, p_val = welch_t(np.asarray(scores), ref)
        sep = (np.mean(scores) - ref.mean()) / ref.std(ddof=1)
        min_sep = min(min_sep, sep)
        max_p = max(max_p, p_val)
        rows.append({"model_id": "wm%02d" % i, "m": m,
                     "wm_score_mean": float(np.mean(scores)),
                     "wm_score_std": float(np.std(scores, ddof=1)),
                     "clean_score_mean": float(ref.mean()),
                     "clean_score_std": float(ref.std(ddof=1)),
                     "separation_sigma": float(sep),
                     "welch_t": float(t_stat), "welch_p": float(p_val),
                     "wm_snorm_mean": float(np.mean(norms)),
                     "clean_snorm_mean": float(np.mean(clean_norms)),
                     "N": N, "seed": derive_seed(cfg.seed, "sep-wm", i)})

    # shift of the pooled clean scores relative to their own spread; the
    # pool has only clean_models independent systematics, so an SE-based
    # statistic would be meaningless here
    flat = np.asarray([v for per_m in clean_scores for v in per_m])
    shift = abs(flat.mean()) / flat.std(ddof=1)
    summary = {"min_separation_sigma": float(min_sep),
               "max_welch_p": float(max_p),
               "clean_score_shift": float(shift)}
    return ExperimentReport("separation", rows, summary, cfg.digest(),
                            cfg.seed)


def _generate(model, n, D, steps, rng):
    x0 = rng.normal((n, D))
    return euler_sample(model.forward, x0, steps)


def run_quality_suite(cfg, pool=None, progress=None):
    """Energy distance of generated samples to held-out data, wm vs clean.

    Each model's distance is the mean over quality_draws independent
    generation draws, and the x0 batches are shared across models, so
    the wm/clean ratios compare models on common noise.  The floor row
    re-estimates the first clean model on two disjoint draw sets; its
    ratio is the sampling noise of the estimator itself.
    """
    pool = pool or train_model_pool(cfg, progress)
    held = pool.dataset.held_out
    n = cfg.quality_samples
    g = cfg.quality_draws
    rows = []

    def distance(model, draws):
        vals = []
        for draw in draws:
            s = derive_seed(cfg.seed, "quality", draw)
            pts = _generate(model, n, cfg.D, cfg.euler_steps, SeededRng(s))
            vals.append(float(energy_distance(pts, held)))
        return float(np.mean(vals)), derive_seed(cfg.seed, "quality",
                                                 draws[0])

    clean_d = []
    for j, res in enumerate(pool.clean):
        d, s = distance(res.model, range(g))
        clean_d.append(d)
        rows.append({"model_id": "clean%02d" % j, "energy_distance": d,
                     "ratio_to_clean": np.nan, "n_samples": n,
                     "n_draws": g, "seed": s})
    base = float(np.mean(clean_d))

    # sampling-noise floor: same clean model, two independent estimates
    d_a, s_a = distance(pool.clean[0].model, range(g, 2 * g))
    d_b, _ = distance(pool.clean[0].model, range(2 * g, 3 * g))
    floor = d_a / d_b
    rows.append({"model_id": "clean00-redraw", "energy_distance": d_a,
                 "ratio_to_clean": floor, "n_samples": n,
                 "n_draws": g, "seed": s_a})

    ratios = []
    for i, (m, res) in enumerate(pool.watermarked):
        d, s = distance(res.model, range(g))
        ratios.append(d / base)
        rows.append({"model_id": "wm%02d" % i, "energy_distance": d,
                     "ratio_to_clean": d / base, "n_samples": n,
                     "n_draws": g, "seed": s})
        if progress:
            progress("quality wm%02d ratio %.3f" % (i, d / base))

    summary = {"clean_baseline": base, "noise_floor_ratio": float(floor),
               "min_ratio": float(np.min(ratios)),
               "max_ratio": float(np.max(ratios))}
    return ExperimentReport("quality", rows, summary, cfg.digest(),
                            cfg.seed)


def _corr_drift(wm_corr):
    """Relative change of the watermark correlation over the second half."""
    n = len(wm_corr)
    q3 = float(np.mean(wm_corr[n // 2: 3 * n // 4]))
    q4 = float(np.mean(wm_corr[3 * n // 4:]))
    return q3, q4, abs(q4 - q3) / max(abs(q3), 1e-12)


def run_persistence_suite(cfg, progress=None):
    """Train at S and 2S steps with one seed; decode must not degrade."""
    key = derive_key(cfg.seed, cfg.D, cfg.k, cfg.message_bits)
    ds = load_dataset(cfg)
    m = 1 % key.n_messages
    seed = derive_seed(cfg.seed, "persist")
    rows = []
    vel_tail = {}
    for stage, steps in (("S", cfg.steps), ("2S", 2 * cfg.steps)):
        tc = replace(cfg.train_config(seed), steps=steps)
        res = train(ds.points, key, m, tc)
        if progress:
            progress("persistence stage %s trained" % stage)
        hits = 0
        for tr in range(cfg.trials_per_model):
            s = derive_seed(cfg.seed, "persist-detect", stage, tr)
            out = detection_trial(res.model.forward, key, m,
                                  cfg.query_budget, SeededRng(s))
            hits += out["hit"]
        tail = float(np.mean(res.telemetry["vel_loss"][-100:]))
        vel_tail[stage] = tail
        q3, q4, drift = _corr_drift(res.telemetry["wm_corr"])
        rows.append({"stage": stage, "steps": steps, "hits": hits,
                     "trials": cfg.trials_per_model,
                     "vel_loss_tail": tail, "wm_corr_q3": q3,
                     "wm_corr_q4": q4, "corr_drift": drift,
                     "seed": seed})
    summary = {"hits_S": rows[0]["hits"], "hits_2S": rows[1]["hits"],
               "vel_loss_S": vel_tail["S"], "vel_loss_2S": vel_tail["2S"],
               "loss_nonincreasing": vel_tail["2S"] <= vel_tail["S"],
               "max_corr_drift": max(r["corr_drift"] for r in rows)}
    return ExperimentReport("persistence", rows, summary, cfg.digest(),
                            cfg.seed)


def desk_bits(k, r, pref):
    """Per-carrier bits: the preferred split capped by r * 2^b <= k."""
    cap = 0
    while r * (1 << (cap + 1)) <= k:
        cap += 1
    return min(pref, cap)


def multiplex_schemes(cfg):
    """The ablation ladder: single plus FDM/TDM at 2 and 4 carriers."""
    out = [("single", MultiplexScheme("single", 1, cfg.message_bits))]
    for kind in ("fdm", "tdm"):
        for r, pref in ((2, 2), (4, 3)):
            b = desk_bits(cfg.k, r, pref)
            out.append(("%s-%d" % (kind, r),
                        MultiplexScheme(kind, r, b)))
    return out


def run_multiplex_suite(cfg, progress=None):
    """Full-message accuracy per scheme at equal total signal energy."""
    key = derive_key(cfg.seed, cfg.D, cfg.k, cfg.message_bits)
    ds = load_dataset(cfg)
    rows = []
    for label, scheme in multiplex_schemes(cfg):
        pick = SeededRng(derive_seed(cfg.seed, "mux-m", label))
        subs = [int(pick.integers(scheme.n_sub))
                for _ in range(scheme.carriers)]
        res = train(ds.points, key, None,
                    cfg.train_config(derive_seed(cfg.seed, "mux", label)),
                    scheme=scheme, submessages=subs)
        if progress:
            progress("multiplex %s trained (subs %r)" % (label, subs))
        hits = 0
        for tr in range(cfg.trials_per_model):
            s = derive_seed(cfg.seed, "mux-detect", label, tr)
            out = multiplex_trial(res.model.forward, key, scheme, subs,
                                  cfg.query_budget, SeededRng(s))
            hits += out["hit"]
        rows.append({"scheme": label, "carriers": scheme.carriers,
                     "bits_per_carrier": scheme.bits_per_carrier,
                     "total_bits": scheme.total_bits,
                     "hits": hits, "trials": cfg.trials_per_model,
                     "accuracy": hits / cfg.trials_per_model,
                     "submessages": " ".join(str(v) for v in subs),
                     "seed": derive_seed(cfg.seed, "mux", label)})
    acc = {r["scheme"]: r["accuracy"] for r in rows}
    summary = {"accuracy": acc,
               "single_is_best": all(acc["single"] >= a
                                     for a in acc.values())}
    return ExperimentReport("multiplex", rows, summary, cfg.digest(),
                            cfg.seed)


def capacity_sweep(cfg, Ns=(1000, 4096, 10000, 100000), sigma2=1.0,
                   epsilon=None, trials=2000, field=None, true_m=None,
                   key=None):
    """Closed-form capacity and simulated decode error across budgets.

    Analytic mode (no field): Sigma = sigma2 * I_k, epsilon from the
    config's population prediction eps0 + lam/2.  Field mode estimates
    Sigma and the effective epsilon from the live model first.
    """
    key = key or derive_key(cfg.seed, cfg.D, cfg.k, cfg.message_bits)
    rng = SeededRng(derive_seed(cfg.seed, "capacity"))
    if field is not None:
        if true_m is None:
            raise ValueError("field mode needs true_m")
        q = sample_queries(rng.spawn("sigma"), max(Ns), cfg.D)
        Sigma = chanmod.estimate_sigma(field, key, q)
        eps = chanmod.estimate_epsilon(field, key, true_m,
                                       cfg.query_budget, rng.spawn("eps"))
    else:
        Sigma = sigma2 * np.eye(cfg.k)
        eps = cfg.epsilon0 + 0.5 * cfg.lam if epsilon is None else epsilon
    rows = []
    for N in Ns:
        model = chanmod.ChannelModel(epsilon=eps, Sigma=Sigma, N=int(N),
                                     k=cfg.k)
        sim = chanmod.simulate_channel(model, key, trials,
                                       rng.spawn("sim", int(N)))
        rows.append({"N": int(N), "k": cfg.k, "epsilon": eps,
                     "sigma_digest": model.sigma_digest(),
                     "capacity_bits": chanmod.capacity(model),
                     "sim_error": sim["decode_error_rate"],
                     "trials": trials})
    summary = {"epsilon": eps,
               "capacity_range": [rows[0]["capacity_bits"],
                                  rows[-1]["capacity_bits"]]}
    return ExperimentReport("capacity", rows, summary, cfg.digest(),
                            cfg.seed)
