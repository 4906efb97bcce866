"""Acceptance criteria 1-8, one verdict line per criterion.

Each test prints ``criterion N: PASS`` or ``criterion N: FAIL`` with the
measured numbers, then asserts. Criteria 4 and 5 run the full protocols on
ten synthetic sessions and take a few minutes.
"""

import csv
import itertools
from collections import defaultdict

import numpy as np
import pytest

from hybridbci.classifiers import (
    TrainingSet,
    fit_blda,
    fit_lda,
    fit_rlda,
    fit_sklda,
    fit_stda,
    fit_swlda,
)
from hybridbci.classifiers.lda import pooled_covariance, shrink_covariance
from hybridbci.cli import main
from hybridbci.evaluation import (
    compute_roc_auc,
    estimator_for,
    kfold_cv,
    kfold_cv_many,
    training_size_sweep,
)
from hybridbci.fusion import Normalizer, balance_indices, split_by_trials
from hybridbci.online import (
    THRESHOLDS_MS,
    TRAIN_TRIALS,
    _sequential_scores,
    replay_samples,
    sweep_grid,
)
from hybridbci.pipeline import SessionFeatures
from hybridbci.preprocessing import design_bandpass_fir, filter_array, remove_eog
from hybridbci.session import CLASSIFICATION_CHANNELS, EOG_CHANNELS, EegRecording
from hybridbci.synthetic import GenParams, generate_session

SESSION_SEEDS = range(10)
PAPER_CLASSIFIERS = ("rlda", "swlda", "sklda", "stda")
ALL_CLASSIFIERS = ("rlda", "swlda", "blda", "sklda", "stda")
LATENCY_FIELDS = {"fit_ms", "score_ms", "latency_mean_ms", "latency_sd_ms"}


@pytest.fixture
def verdict(capsys):
    def say(n, checks):
        """``checks`` maps a description to (passed, measured detail)."""
        ok = all(passed for passed, _ in checks.values())
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}")
            for name, (passed, detail) in checks.items():
                print(f"    [{'ok' if passed else 'FAIL'}] {name}: {detail}")
        failed = [k for k, (p, _) in checks.items() if not p]
        assert ok, f"criterion {n} failed: {failed}"

    return say


@pytest.fixture(scope="module")
def sessions():
    out = []
    for seed in SESSION_SEEDS:
        s = generate_session(GenParams(seed=seed))
        out.append((s, SessionFeatures(s)))
    return out


@pytest.fixture(scope="module")
def grids(sessions):
    return [sweep_grid(s, features=f, seed=0) for s, f in sessions]


def max_drop(values):
    """Largest fall below the running maximum."""
    values = np.asarray(values)
    return float(np.max(np.maximum.accumulate(values) - values))


def gaussian(n, d, shift, seed):
    rng = np.random.default_rng(seed)
    y = np.repeat([1, -1], n // 2)
    X = rng.standard_normal((n, d))
    X[y == 1] += shift
    return TrainingSet(X, y)


def pairwise_auc(scores, labels):
    pos, neg = scores[labels == 1], scores[labels == -1]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (len(pos) * len(neg))


# ---- 1 ------------------------------------------------------------------

def test_criterion_1_oracle_equivalences(verdict):
    diffs = []
    for seed in range(5):
        t = gaussian(300, 8, 0.7, seed)
        X = np.random.default_rng(100 + seed).standard_normal((200, 8))
        ref = fit_lda(t).score(X)
        diffs.append(np.abs(fit_rlda(t, 0.0).score(X) - ref).max())
        diffs.append(np.abs(fit_sklda(t, 0.0).score(X) - ref).max())
    worst = max(diffs)

    rng = np.random.default_rng(0)
    auc_exact = 0
    for _ in range(200):
        n = int(rng.integers(2, 201))
        labels = rng.choice([1, -1], n)
        labels[:2] = [1, -1]
        scores = rng.integers(-10, 10, n).astype(float)
        auc_exact += compute_roc_auc(scores, labels)[1] == pairwise_auc(scores, labels)

    exact, superset, oracle = 0, 0, 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        y = np.repeat([1, -1], 200)
        X = rng.standard_normal((400, 10))
        X[:, [2, 7]] += 0.5 * y[:, None]
        t = TrainingSet(X, y)
        sel = set(fit_swlda(t).meta["selected"].tolist())
        exact += sel == {2, 7}
        superset += {2, 7} <= sel
        best, best_rss = None, np.inf
        for sub in itertools.combinations(range(10), 2):
            A = np.column_stack([np.ones(400), X[:, sub]])
            r = y - A @ np.linalg.lstsq(A, y, rcond=None)[0]
            if r @ r < best_rss:
                best, best_rss = set(sub), r @ r
        oracle += best == {2, 7}

    verdict(1, {
        "RLDA(0), SKLDA(0) vs LDA scores within 1e-8": (worst <= 1e-8, f"max diff {worst:.2e}"),
        "AUC equals pairwise oracle (200 sets, n<=200)": (auc_exact == 200, f"{auc_exact}/200"),
        "exhaustive oracle picks {2,7}": (oracle == 10, f"{oracle}/10 seeds"),
        "SWLDA selects exactly {2,7} in >= 9/10 seeds": (
            exact >= 9, f"{exact}/10 exact; {{2,7}} contained in {superset}/10"),
    })


# ---- 2 ------------------------------------------------------------------

def test_criterion_2_numerical_invariants(verdict, sessions):
    rng = np.random.default_rng(0)
    bounds_ok = 0
    for _ in range(100):
        d, n = int(rng.integers(2, 40)), int(rng.integers(6, 80))
        t = TrainingSet(rng.standard_normal((n, d)) * rng.uniform(0.1, 5, d),
                        np.tile([1, -1], n // 2 + 1)[:n])
        S = pooled_covariance(t)
        g = float(rng.uniform(1e-3, 1))
        nu = np.trace(S) / d
        lo, hi = np.linalg.eigvalsh(S)[[0, -1]]
        eig = np.linalg.eigvalsh(shrink_covariance(S, g))
        tol = 1e-9 * hi
        bounds_ok += (eig[0] >= g * nu + (1 - g) * lo - tol) and \
            (eig[-1] <= g * nu + (1 - g) * hi + tol)

    _, features = sessions[0]
    eeg, fus = features.samples("eeg"), features.samples("fusion")
    drops = []
    for s, extra in ((eeg, 0), (fus, 1)):
        m = fit_stda(TrainingSet(s.X, s.y, d_layout=(8, 16), n_extra=extra))
        drops.append(float(np.min(np.diff(m.meta["fisher_history"]), initial=0.0)))

    blda = [fit_blda(TrainingSet(s.X, s.y)).meta for s in (eeg, fus)]

    flips = []
    t = TrainingSet(fus.X, fus.y)
    f = TrainingSet(fus.X, -fus.y)
    for fit in (fit_lda, lambda t: fit_rlda(t, 0.01), lambda t: fit_sklda(t, 0.1)):
        try:
            a, b = fit(t), fit(f)
        except Exception:  # plain LDA may be singular on the fused set
            t2 = TrainingSet(eeg.X[:, :20], eeg.y)
            a, b = fit(t2), fit(TrainingSet(t2.X, -t2.y))
        flips.append(np.array_equal(b.w, -a.w) and b.b == -a.b)

    verdict(2, {
        "SKLDA eigenvalue bounds on 100 random instances": (bounds_ok == 100, f"{bounds_ok}/100"),
        "STDA Fisher ratio non-decreasing (EEG, fusion)": (
            min(drops) >= -1e-9, f"smallest step {min(drops):.2e}"),
        "BLDA converges within 100 iterations (EEG, fusion)": (
            all(m["converged"] and m["n_iter"] <= 100 for m in blda),
            f"iterations {[m['n_iter'] for m in blda]}"),
        "label flip negates w and b exactly (LDA, RLDA, SKLDA)": (all(flips), str(flips)),
    })


# ---- 3 ------------------------------------------------------------------

def test_criterion_3_preprocessing(verdict, sessions):
    _, features = sessions[0]
    ep = features.epochs(500)[0]
    eeg, fus = features.samples("eeg", 500), features.samples("fusion", 500)

    fs = 500.0
    k = design_bandpass_fir(1, 40, fs, 501)

    def gain(freq):
        t = np.arange(int((60 if freq < 1 else 20) * fs)) / fs
        x = np.sin(2 * np.pi * freq * t)
        y = filter_array(x, k.taps)
        e = k.n_taps
        return np.sqrt(np.mean(y[e:-e] ** 2) / np.mean(x[e:-e] ** 2))

    g10, g02, g60 = gain(10.0), gain(0.2), gain(60.0)

    rng = np.random.default_rng(3)
    n = 20000
    names = CLASSIFICATION_CHANNELS + EOG_CHANNELS
    data = np.zeros((len(names), n))
    heog, veog = rng.standard_normal((2, n))
    data[names.index("HEOG")], data[names.index("VEOG")] = heog, veog
    data[0] = 2 * veog + rng.standard_normal(n) * np.std(2 * veog) / 10
    data[1:8] = rng.standard_normal((7, n))
    out = remove_eog(EegRecording(fs, names, data, np.zeros((0, 3))))
    coef = out.annotations["eog_coefficients"][0][1]

    verdict(3, {
        "500 ms epoch at 32 Hz: 16 samples/channel": (
            ep.data.shape == (8, 16) and ep.rate_hz == 32.0, f"shape {ep.data.shape}"),
        "128 EEG features, 129 fused": ((eeg.d, fus.d) == (128, 129), f"{eeg.d}, {fus.d}"),
        "10 Hz gain 1 +- 0.05": (abs(g10 - 1) <= 0.05, f"{g10:.4f}"),
        "0.2 Hz and 60 Hz attenuated >= 20 dB": (
            20 * np.log10(g02) <= -20 and 20 * np.log10(g60) <= -20,
            f"{20 * np.log10(g02):.1f} dB, {20 * np.log10(g60):.1f} dB"),
        "EOG coefficient 2 +- 0.05 at SNR 10": (abs(coef - 2) <= 0.05, f"{coef:.4f}"),
    })


# ---- 4 ------------------------------------------------------------------

def test_criterion_4_fusion_superiority(verdict, sessions):
    auc = defaultdict(list)
    acc = defaultdict(list)
    for _, f in sessions:
        eye = kfold_cv(f.samples("eye"), 10, "lda", seed=0)
        auc["eye"].append(eye.auc_mean)
        for modality in ("eeg", "fusion"):
            for r in kfold_cv_many(f.samples(modality), 10, list(PAPER_CLASSIFIERS), seed=0):
                auc[(r.classifier, modality)].append(r.auc_mean)
                acc[(r.classifier, modality)].append(r.accuracy_mean)
    checks = {}
    for c in PAPER_CLASSIFIERS:
        fa, ea, ya = (np.array(auc[(c, "fusion")]), np.array(auc[(c, "eeg")]),
                      np.array(auc["eye"]))
        vs_eeg = int(np.sum(fa >= ea + 0.02))
        vs_eye = int(np.sum(fa >= ya - 0.01))
        checks[f"{c}: fusion AUC >= EEG AUC + 0.02"] = (
            vs_eeg == len(fa), f"{vs_eeg}/{len(fa)} sessions, min margin {np.min(fa - ea):+.3f}")
        checks[f"{c}: fusion AUC >= eye AUC - 0.01"] = (
            vs_eye == len(fa), f"{vs_eye}/{len(fa)} sessions, min margin {np.min(fa - ya):+.3f}")
        m = float(np.mean(acc[(c, "fusion")]))
        checks[f"{c}: mean fusion accuracy in [0.82, 0.93]"] = (0.82 <= m <= 0.93, f"{m:.4f}")
    verdict(4, checks)


# ---- 5 ------------------------------------------------------------------

def test_criterion_5_sweep_shapes(verdict, sessions, grids):
    _, f = sessions[0]
    sizes = list(range(30, 421, 30))
    checks = {}
    for modality in ("eeg", "fusion"):
        reports = training_size_sweep(f.samples(modality), sizes, 10, list(ALL_CLASSIFIERS),
                                      seed=0)
        for c in ALL_CLASSIFIERS:
            curve = [r.auc_mean for r in reports if r.classifier == c]
            drop = max_drop(curve)
            checks[f"size sweep {c} {modality}: AUC non-decreasing within 0.02"] = (
                drop <= 0.02, f"max drop {drop:.3f}; AUC {curve[0]:.3f} -> {curve[-1]:.3f}")

    acc = defaultdict(list)
    for cells in grids:
        for c in cells:
            acc[(c.classifier, c.threshold_ms, c.n_train_trials)].append(c.report.accuracy)
    mean = {k: float(np.mean(v)) for k, v in acc.items()}
    for c in PAPER_CLASSIFIERS:
        drops = {t: max_drop([mean[(c, t, n)] for n in TRAIN_TRIALS]) for t in THRESHOLDS_MS}
        worst = max(drops, key=drops.get)
        checks[f"online grid {c}: accuracy non-decreasing in trials within 0.03"] = (
            drops[worst] <= 0.03, f"max drop {drops[worst]:.3f} at {worst} ms (10-session mean)")
    for c in PAPER_CLASSIFIERS:
        a300 = np.mean([mean[(c, 300, n)] for n in TRAIN_TRIALS])
        a500 = np.mean([mean[(c, 500, n)] for n in TRAIN_TRIALS])
        s300 = mean[(c, 300, 80)]
        s500 = mean[(c, 500, 80)]
        checks[f"{c}: accuracy at 300 ms < 500 ms"] = (
            a300 < a500 and s300 < s500,
            f"mean over trials {a300:.3f} < {a500:.3f}; at 80 trials {s300:.3f} < {s500:.3f}")
    verdict(5, checks)


# ---- 6 ------------------------------------------------------------------

def test_criterion_6_online_protocol(verdict, sessions, grids):
    _, f = sessions[0]
    s = f.samples("fusion", 500)
    causal, disjoint, balanced = True, True, True
    for c in PAPER_CLASSIFIERS:
        train, test, fwd, _ = replay_samples(s, 80, c, seed=0)
        _, _, rev, _ = replay_samples(s, 80, c, seed=0, reverse=True)
        causal &= np.array_equal(np.sign(fwd), np.sign(rev)) and np.array_equal(fwd, rev)
        disjoint &= not set(train.trial_index) & set(test.trial_index)
        disjoint &= train.trial_index.max() < 80 <= test.trial_index.min()
        tp, tn = train.class_counts()
        sp, sn = test.class_counts()
        balanced &= tp == tn and sp == sn
    cells = grids[0]
    n_main = sum(c.modality == "fusion" for c in cells)
    n_bench = sum(c.modality == "eye" for c in cells)
    failed = sum(not c.ok for c in cells)
    verdict(6, {
        "reversed-order scoring gives identical decisions": (causal, str(causal)),
        "train and test trials disjoint, split at trial 80": (disjoint, str(disjoint)),
        "1:1 balance on both sides": (balanced, str(balanced)),
        "grid exports 396 + 99 cells, none failed": (
            (n_main, n_bench, failed) == (396, 99, 0),
            f"{n_main} + {n_bench} cells, {failed} failed"),
    })


# ---- 7 ------------------------------------------------------------------

def test_criterion_7_latency(verdict, sessions):
    _, f = sessions[0]
    s = f.samples("fusion", 500)
    train, _ = split_by_trials(s, 80)
    train = train.subset(balance_indices(train.y, np.random.default_rng(0)))
    norm = Normalizer().fit(train.X)
    X = norm.transform(s.X)
    X = np.vstack([X, X])  # every sample twice: >= 1000 decisions
    models = {c: estimator_for(c, "fusion").fit(norm.transform(train.X), train.y).model_
              for c in PAPER_CLASSIFIERS}
    lat = {c: [] for c in models}
    # interleave classifiers in blocks so drift in machine load hits all alike
    for block in np.array_split(np.arange(len(X)), 20):
        for c, m in models.items():
            lat[c].append(_sequential_scores(m, X[block], range(len(block)))[1])
    med = {c: float(np.median(np.concatenate(v))) * 1e3 for c, v in lat.items()}
    worst = max(float(np.max(np.concatenate(v))) for v in lat.values())
    n_dec = min(sum(len(x) for x in v) for v in lat.values())
    fast = max(med["sklda"], med["swlda"])
    slow = min(med["rlda"], med["stda"])
    detail = ", ".join(f"{c} {m:.2f} us" for c, m in med.items())
    verdict(7, {
        ">= 1000 decisions per classifier": (n_dec >= 1000, f"{n_dec}"),
        "median latency SKLDA, SWLDA <= RLDA, STDA": (fast <= slow, detail),
        "every decision < 50 ms": (worst < 50, f"max {worst * 1e3:.1f} us"),
    })


# ---- 8 ------------------------------------------------------------------

def _strip_latency(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: v for k, v in r.items() if k not in LATENCY_FIELDS} for r in rows]


def test_criterion_8_determinism(verdict, tmp_path):
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        session = d / "session.hbci"
        codes = [main(["generate", "--out", str(session), "--seed", "11"])]
        for cmd in ("eval-offline", "eval-online", "sweep"):
            codes.append(main([cmd, str(session), "--out", str(d), "--seed", "11"]))
        assert codes == [0, 0, 0, 0], codes
        outputs.append(d)
    checks = {"session file byte-identical": (
        (outputs[0] / "session.hbci").read_bytes() == (outputs[1] / "session.hbci").read_bytes(),
        "generate --seed 11 twice")}
    for name in ("offline.csv", "online.csv", "size_sweep.csv", "grid.csv"):
        a, b = _strip_latency(outputs[0] / name), _strip_latency(outputs[1] / name)
        checks[f"{name} identical without latency columns"] = (a == b and len(a) > 0,
                                                                f"{len(a)} rows")
    verdict(8, checks)
