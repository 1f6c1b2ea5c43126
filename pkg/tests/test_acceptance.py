"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``PASS``/``FAIL`` line (also collected in the
terminal summary). Training-based criteria share one session fixture that
trains every model once per seed.
"""

import csv
import json
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from mhnn.cli import main as cli
from mhnn.datasets import PerturbationSpec, measured_snr_db, synth_generate
from mhnn.metrics import ConfusionMatrix, accuracy, confusion, precision_recall_f1
from mhnn.model import MHNNConfig, build, model_gradient_check
from mhnn.nn import functional as F
from mhnn.nn.tensor import Tensor
from mhnn.sweeps import SweepSpec, perturbation_sweep, rows_to_csv, training_sweep
from mhnn.training import TrainConfig, evaluate, prepare_splits, train
from mhnn.wavelet import dwt_step, haar_filters, mdwd, reconstruct
from oracles import (
    batchnorm_two_pass, conv1d_loops, cross_entropy_loops, haar_analysis_matrix, linear_loops,
    nearest_centroid_accuracy, prf_counting, softmax_loops,
)

HAAR = haar_filters()
SEEDS = (0, 1, 2)
DATA_SEED = 42
ABLATIONS = ("NoMSE", "NoHFL", "NoCA")


# --- wavelet ----------------------------------------------------------------


def test_wavelet_round_trip(criterion):
    with criterion("wavelet round-trip, 1000 windows, 64-bit") as c:
        r = np.random.default_rng(2024)
        worst = 0.0
        start = time.perf_counter()
        for _ in range(1000):
            ch = int(r.integers(1, 9))
            t = int(r.choice([16, 24, 64, 128]))
            levels = int(r.integers(1, 4))
            x = r.standard_normal((ch, t))
            worst = max(worst, float(np.max(np.abs(reconstruct(mdwd(x, HAAR, levels), HAAR) - x))))
        elapsed = time.perf_counter() - start
        c.check(worst <= 1e-12, f"max error {worst:.2e} (limit 1e-12)")
        c.check(elapsed < 5.0, f"{elapsed:.2f} s (limit 5 s)")


def test_wavelet_oracle_equivalence(criterion):
    with criterion("dwt_step vs dense orthogonal matrix, 100 signals") as c:
        r = np.random.default_rng(7)
        worst_step = worst_energy = 0.0
        for _ in range(100):
            n = 2 * int(r.integers(1, 65))
            x = r.standard_normal(n) * float(r.uniform(0.1, 10))
            y = haar_analysis_matrix(n) @ x
            a, d = dwt_step(x, HAAR)
            worst_step = max(worst_step, float(np.max(np.abs(np.concatenate([a, d]) - y))))
            worst_energy = max(worst_energy, abs(float((x**2).sum() - (a**2).sum() - (d**2).sum())))
        c.check(worst_step <= 1e-10, f"max coefficient error {worst_step:.2e} (limit 1e-10)")
        c.check(worst_energy <= 1e-10, f"max energy defect {worst_energy:.2e} (limit 1e-10)")


def test_shape_law_worked_example(criterion):
    with criterion("shape law C=45, T=24, I=3") as c:
        p = mdwd(np.random.default_rng(0).standard_normal((45, 24)), HAAR, 3)
        lengths = tuple(h.shape[1] for h in p.details) + (p.approx.shape[1],)
        c.check(lengths == (12, 6, 3, 3), f"component lengths {lengths}")
        c.check(all(h.shape[0] == 45 for h in p.details), "all components keep 45 channels")


# --- neural core ------------------------------------------------------------


def test_gradient_fidelity(criterion):
    with criterion("gradient fidelity, tiny MHNN, every parameter entry") as c:
        cfg = MHNNConfig(channels=3, window=16, classes=3, levels=2, filters=8)
        model = build(cfg, seed=0, dtype=np.float64)
        r = np.random.default_rng(0)
        x, y = r.standard_normal((4, 3, 16)), np.array([0, 1, 2, 1])
        start = time.perf_counter()
        worst, per = model_gradient_check(model, x, y, h=1e-5, details=True)
        elapsed = time.perf_counter() - start
        c.check(len(per) == len(list(model.named_parameters())), f"{model.num_parameters()} entries in {len(per)} tensors")
        c.check(worst <= 1e-4, f"max relative error {worst:.2e} (limit 1e-4)")
        c.check(elapsed < 60, f"{elapsed:.1f} s (limit 60 s)")


def test_layer_oracles(criterion):
    with criterion("layer oracles, 50 cases per layer, 64-bit") as c:
        r = np.random.default_rng(11)
        worst = {k: 0.0 for k in ("conv1d", "batchnorm1d", "linear", "softmax", "cross_entropy")}
        for _ in range(50):
            b, cin, cout, t = (int(v) for v in r.integers(1, 5, 4))
            t += 3
            k = int(r.choice([3, 5, 7]))
            x, w, bias = r.standard_normal((b, cin, t)), r.standard_normal((cout, cin, k)), r.standard_normal(cout)
            worst["conv1d"] = max(worst["conv1d"], float(np.max(np.abs(F.conv1d(x, w, bias).data - conv1d_loops(x, w, bias)))))

            g, beta = r.uniform(0.5, 2, cin), r.standard_normal(cin)
            bn = F.batch_norm1d(Tensor(x), Tensor(g), Tensor(beta), np.zeros(cin), np.ones(cin), True)
            want, _, _ = batchnorm_two_pass(x, g, beta, F.BN_EPS)
            worst["batchnorm1d"] = max(worst["batchnorm1d"], float(np.max(np.abs(bn.data - want))))

            n_in, n_out = int(r.integers(1, 9)), int(r.integers(1, 9))
            xl, wl, bl = r.standard_normal((b, n_in)), r.standard_normal((n_out, n_in)), r.standard_normal(n_out)
            worst["linear"] = max(worst["linear"], float(np.max(np.abs(F.linear(xl, wl, bl).data - linear_loops(xl, wl, bl)))))

            kk = int(r.integers(2, 9))
            z = r.standard_normal((b, kk)) * 4
            probs = F.softmax(z).data
            worst["softmax"] = max(worst["softmax"], float(np.max(np.abs(probs - softmax_loops(z)))))

            yk = F.one_hot(r.integers(0, kk, b), kk)
            ce = float(F.cross_entropy(probs, yk).data)
            worst["cross_entropy"] = max(worst["cross_entropy"], abs(ce - cross_entropy_loops(probs, yk, F.PROB_EPS)))
        for name, err in worst.items():
            c.check(err <= 1e-10, f"{name} {err:.1e}")
        uniform = float(F.cross_entropy(np.array([[0.5, 0.5]]), np.array([[1, 0]])).data)
        c.check(abs(uniform - 2 * math.log(2)) <= 1e-12, f"uniform binary loss {uniform:.10f} vs 2 ln 2")


# --- training-based criteria ------------------------------------------------


@pytest.fixture(scope="session")
def synthetic():
    return synth_generate(64, 6, 64, 4, seed=DATA_SEED)


@pytest.fixture(scope="session")
def seed_runs(synthetic):
    """Per seed: split, separability oracle, trained Full model and ablation models."""
    base = MHNNConfig(channels=6, window=64, classes=4)
    runs = []
    for seed in SEEDS:
        cfg = TrainConfig(seed=seed, max_epochs=200)
        splits = prepare_splits(synthetic, cfg)
        oracle = nearest_centroid_accuracy(splits.train.windows, splits.train.labels,
                                           splits.test.windows, splits.test.labels)
        start = time.perf_counter()
        full = train(base, splits.train, splits.val, cfg)
        full_seconds = time.perf_counter() - start
        runs.append({
            "seed": seed, "cfg": cfg, "splits": splits, "oracle": oracle, "full": full,
            "full_seconds": full_seconds, "base": base,
        })
    return runs


def test_learning_capability(criterion, seed_runs):
    with criterion("learning capability, synthetic N=256, L3_NoAC, 3 seeds") as c:
        oracle = [run["oracle"] for run in seed_runs]
        c.check(min(oracle) >= 0.95, "nearest-centroid oracle " + ", ".join(f"{a:.3f}" for a in oracle))
        train_acc = [evaluate(run["full"].model, run["splits"].train).accuracy for run in seed_runs]
        test_acc = [evaluate(run["full"].model, run["splits"].test).accuracy for run in seed_runs]
        epochs = [len(run["full"].history) for run in seed_runs]
        seconds = sum(run["full_seconds"] for run in seed_runs)
        c.check(max(epochs) <= 200, f"epochs run {epochs}")
        c.check(np.mean(train_acc) >= 0.99, f"mean train accuracy {np.mean(train_acc):.3f}")
        c.check(np.mean(test_acc) >= 0.90, f"mean held-out accuracy {np.mean(test_acc):.3f}")
        c.check(seconds < 600, f"training time {seconds:.0f} s (limit 600 s)")


def test_ablation_harness(criterion, seed_runs, tmp_path_factory):
    with criterion("ablation harness, 4-row CSV, Full >= ablation - 0.05") as c:
        out = tmp_path_factory.mktemp("ablation")
        spec = SweepSpec(variants=("Full",) + ABLATIONS)
        acc = {v: [] for v in spec.variants}
        for run in seed_runs:
            rows = training_sweep("ablation", spec, run["base"], run["splits"], run["cfg"],
                                  pretrained={"variant:Full": run["full"].model})
            path = out / f"ablation_seed{run['seed']}.csv"
            path.write_text(rows_to_csv(rows))
            table = list(csv.DictReader(path.open()))
            c.check([r["variant"] for r in table] == list(spec.variants), f"seed {run['seed']}: {len(table)} rows")
            for row in rows:
                acc[row["variant"]].append(row["accuracy"])
        mean = {v: float(np.mean(a)) for v, a in acc.items()}
        c.check(True, "mean accuracy " + ", ".join(f"{v} {m:.3f}" for v, m in mean.items()))
        for v in ABLATIONS:
            c.check(mean["Full"] >= mean[v] - 0.05, f"Full vs {v}: {mean['Full']:.3f} >= {mean[v] - 0.05:.3f}")


def test_noise_protocol(criterion, seed_runs):
    with criterion("noise protocol, per-window SNR and direction") as c:
        worst = 0.0
        for run in seed_runs:
            test = run["splits"].test
            for snr in (-20.0, 0.0, 20.0):
                noisy = PerturbationSpec("noise", snr_db=snr, seed=run["seed"]).apply(test)
                for clean, dirty in zip(test.windows, noisy.windows):
                    noise = dirty.astype(np.float64) - clean.astype(np.float64)
                    worst = max(worst, abs(measured_snr_db(clean, noise) - snr))
        c.check(worst <= 0.5, f"max SNR deviation {worst:.2e} dB (limit 0.5)")
        spec = SweepSpec(snr_levels=(-20, -10, -5, 0, 5, 10, 20))
        table = [perturbation_sweep("noise", spec, run["full"].model, run["splits"].test, run["seed"]) for run in seed_runs]
        acc = {row["param"]: np.mean([t[i]["accuracy"] for t in table]) for i, row in enumerate(table[0])}
        c.check(True, "mean accuracy by SNR " + ", ".join(f"{k:g}:{v:.3f}" for k, v in acc.items()))
        c.check(acc[20.0] >= acc[-20.0], f"acc(20 dB) {acc[20.0]:.3f} >= acc(-20 dB) {acc[-20.0]:.3f}")


def test_missing_value_protocol(criterion, seed_runs, tmp_path_factory):
    with criterion("missing-value protocol, ratio 0/1 and 10-row CSV end-to-end") as c:
        for run in seed_runs:
            model, test = run["full"].model, run["splits"].test
            clean = evaluate(model, test)
            for kind in ("mask_fixed", "mask_random"):
                spec = PerturbationSpec(kind, ratio=0.0, seed=run["seed"])
                same_input = spec.apply(test).windows.tobytes() == test.windows.tobytes()
                masked = evaluate(model, test, spec)
                same_metrics = json.dumps(masked.metrics, sort_keys=True) == json.dumps(clean.metrics, sort_keys=True)
                c.check(same_input and same_metrics, f"seed {run['seed']} {kind} ratio 0 identical")
            blank = PerturbationSpec("mask_fixed", ratio=1.0, seed=run["seed"]).apply(test)
            preds = model.predict(blank.windows)
            zero_pred = int(model.predict(np.zeros((1, 6, 64), np.float32))[0])
            c.check(set(preds.tolist()) == {zero_pred}, f"seed {run['seed']} ratio 1 predicts only class {zero_pred}")

        d = tmp_path_factory.mktemp("missing")
        start = time.perf_counter()
        rc = cli(["synth", "--seed", str(DATA_SEED), "--out", str(d / "d.mhws"), "--n-per-class", "64",
                  "--channels", "6", "--length", "64", "--classes", "4"])
        rc = rc or cli(["sweep", "missing", "--seed", "0", "--data", str(d / "d.mhws"), "--out", str(d / "missing.csv")])
        elapsed = time.perf_counter() - start
        rows = list(csv.DictReader((d / "missing.csv").open())) if rc == 0 else []
        c.check(rc == 0 and len(rows) == 10, f"CLI exit {rc}, {len(rows)} rows")
        c.check(elapsed < 900, f"{elapsed:.0f} s end to end (limit 900 s)")


# --- determinism ------------------------------------------------------------


TINY_CONFIG = {
    "model": {"filters": 8, "levels": 2, "agg_kernels": [3]},
    "train": {"batch_size": 32, "max_epochs": 3, "patience": 1},
    "sweep": {"variants": ["Full", "NoCA"], "sensitivity_levels": [2, 4], "sensitivity_modes": ["NoAC", "SepAC"]},
}


def _cli_session(root):
    root.mkdir()
    (root / "c.json").write_text(json.dumps(TINY_CONFIG))
    (root / "in.csv").write_text("label,a_t0,a_t1,a_t2,a_t3\n0,1,2,3,4\n1,4,3,2,1\n")
    common = ["--seed", "5", "--config", str(root / "c.json")]
    d, m = str(root / "d.mhws"), str(root / "m.ckpt")
    commands = [
        ["synth", *common, "--out", d, "--n-per-class", "10", "--channels", "3", "--length", "16", "--classes", "3"],
        ["import", *common, "--csv", str(root / "in.csv"), "--out", str(root / "i.mhws")],
        ["decompose", *common, "--data", d, "--index", "1", "--levels", "2", "--out", str(root / "pyr")],
        ["train", *common, "--data", d, "--out", m],
        ["eval", *common, "--model", m, "--data", d, "--perturb", "noise", "--snr", "0", "--out", str(root / "e.json")],
        ["sweep", "noise", *common, "--model", m, "--data", d, "--snrs=-10,10", "--out", str(root / "n.csv")],
        ["sweep", "missing", *common, "--model", m, "--data", d, "--ratios", "0.3", "--out", str(root / "mi.csv")],
        ["sweep", "ablation", *common, "--data", d, "--out", str(root / "a.csv")],
        ["sweep", "sensitivity", *common, "--data", d, "--out", str(root / "s.csv")],
        ["report", *common, "--input", str(root / "n.csv"), "--out", str(root / "r.md")],
    ]
    return [cli(cmd) for cmd in commands]


def test_determinism(criterion, tmp_path):
    with criterion("determinism, every CLI command run twice") as c:
        codes_a = _cli_session(tmp_path / "a")
        codes_b = _cli_session(tmp_path / "b")
        c.check(codes_a == codes_b == [0] * len(codes_a), f"exit codes {codes_a}")
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        differing = [str(f) for f in files if (tmp_path / "a" / f).read_bytes() != (tmp_path / "b" / f).read_bytes()]
        c.check(not differing, f"{len(files)} output files byte-identical" + (f", differing {differing}" if differing else ""))


# --- metrics ----------------------------------------------------------------


def test_metrics_oracle(criterion):
    with criterion("metrics vs counting oracle, 200 matrices") as c:
        r = np.random.default_rng(99)
        exact_pr, worst_f1, worst_macro = True, 0.0, 0.0
        for _ in range(200):
            k = int(r.integers(2, 11))
            cm = r.integers(0, 25, (k, k)) * (r.random((k, k)) > 0.2)
            if cm.sum() == 0:
                cm[0, 0] = 1
            got = precision_recall_f1(ConfusionMatrix(cm))
            p, rc, f = prf_counting(cm.tolist())
            exact_pr &= all(got["precision"][i] == float(p[i]) and got["recall"][i] == float(rc[i]) for i in range(k))
            worst_f1 = max(worst_f1, max(abs(got["f1"][i] - float(f[i])) for i in range(k)))
            for key, vals in (("avg_precision", p), ("avg_recall", rc), ("avg_f1", f)):
                worst_macro = max(worst_macro, abs(got[key] - float(sum(vals) / k)))
        c.check(exact_pr, "per-class precision and recall bit-exact")
        c.check(worst_f1 <= 1e-12, f"per-class F1 error {worst_f1:.1e}")
        c.check(worst_macro <= 1e-12, f"macro error {worst_macro:.1e}")
        labels = r.integers(0, 5, 40)
        perfect = confusion(labels, labels, 5)
        prf = precision_recall_f1(perfect)
        ones = accuracy(perfect) == 1.0 and all(
            np.all(prf[k] == 1.0) and prf[f"avg_{k}"] == 1.0 for k in ("precision", "recall", "f1"))
        c.check(ones, "perfect predictions give 1.0 everywhere")
