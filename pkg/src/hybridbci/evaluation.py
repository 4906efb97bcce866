"""Offline evaluation: ROC/AUC, trial-grouped k-fold cross-validation and
training-size sweeps, plus CSV/JSON export of the resulting reports."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy.stats import rankdata
from sklearn.base import clone

from .classifiers import STDA, ClassifierError, LinearDiscriminant, make_classifier
from .fusion import Modality, Normalizer, SampleSet, balance_indices

REPORT_COLUMNS = (
    "classifier", "modality", "protocol", "size", "folds", "n_train", "n_test",
    "accuracy_mean", "accuracy_sd", "auc_mean", "auc_sd", "fit_ms", "score_ms",
)
LATENCY_COLUMNS = ("fit_ms", "score_ms")


class EvaluationError(ValueError):
    pass


@dataclass
class EvalReport:
    classifier: str
    modality: str
    accuracy_mean: float
    accuracy_sd: float
    auc_mean: float
    auc_sd: float
    roc: list = field(default_factory=list)
    n_train: int = 0
    n_test: int = 0
    folds: int = 0
    protocol: str = "kfold"
    size: Optional[int] = None
    fit_ms: float = 0.0
    score_ms: float = 0.0

    def row(self) -> dict:
        d = asdict(self)
        return {col: ("" if d[col] is None else d[col]) for col in REPORT_COLUMNS}


def compute_roc_auc(scores, labels):
    """ROC curve and AUC (rank statistic, ties counted one half).

    Returns ``(roc, auc)`` where ``roc`` is a list of ``(fpr, tpr)`` points from
    (0, 0) to (1, 1), one per distinct score threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((labels == -1).sum())
    if n_pos + n_neg != len(labels):
        raise EvaluationError("labels must be +1 or -1")
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("single-class labels: ROC/AUC undefined")
    ranks = rankdata(scores)
    auc = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)

    order = np.argsort(-scores, kind="stable")
    s, p = scores[order], pos[order]
    tp = np.cumsum(p)
    fp = np.cumsum(~p)
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    roc = [(0.0, 0.0)] + [(fp[i] / n_neg, tp[i] / n_pos) for i in last]
    return [(float(a), float(b)) for a, b in roc], float(auc)


def estimator_for(spec, modality) -> LinearDiscriminant:
    """Instantiate a classifier spec, adapting STDA to the modality's layout."""
    est = clone(make_classifier(spec)) if isinstance(spec, LinearDiscriminant) \
        else make_classifier(spec)
    modality = Modality(modality)
    if isinstance(est, STDA):
        if modality is Modality.EYE:
            raise ClassifierError("STDA needs EEG features; it cannot run on eye-only data")
        est.set_params(n_extra=1 if modality is Modality.FUSION else 0)
    return est


def spec_name(spec) -> str:
    if isinstance(spec, str):
        return spec.lower()
    if isinstance(spec, LinearDiscriminant):
        return type(spec).__name__.lower()
    return str(spec["name"]).lower()


def fit_and_score(spec, modality, train: SampleSet, test: SampleSet, scale: bool = True):
    """Fit normalizer and classifier on ``train``; return test scores and timings."""
    Xtr, Xte = train.X, test.X
    if scale:
        norm = Normalizer().fit(Xtr)
        Xtr, Xte = norm.transform(Xtr), norm.transform(Xte)
    est = estimator_for(spec, modality)
    t0 = time.perf_counter()
    est.fit(Xtr, train.y)
    t1 = time.perf_counter()
    scores = est.decision_function(Xte)
    t2 = time.perf_counter()
    return scores, (t1 - t0) * 1e3, (t2 - t1) * 1e3 / max(len(test), 1)


def _summarize(name, modality, results, n_train, n_test, folds, protocol, size=None):
    accs = [r["accuracy"] for r in results]
    aucs = [r["auc"] for r in results]
    scores = np.concatenate([r["scores"] for r in results])
    labels = np.concatenate([r["labels"] for r in results])
    roc, _ = compute_roc_auc(scores, labels)
    return EvalReport(
        classifier=name,
        modality=Modality(modality).value,
        accuracy_mean=float(np.mean(accs)),
        accuracy_sd=float(np.std(accs, ddof=1)) if len(accs) > 1 else 0.0,
        auc_mean=float(np.mean(aucs)),
        auc_sd=float(np.std(aucs, ddof=1)) if len(aucs) > 1 else 0.0,
        roc=roc,
        n_train=int(np.mean(n_train)),
        n_test=int(np.mean(n_test)),
        folds=folds,
        protocol=protocol,
        size=size,
        fit_ms=float(np.mean([r["fit_ms"] for r in results])),
        score_ms=float(np.mean([r["score_ms"] for r in results])),
    )


def _evaluate(spec, modality, train, test, scale):
    scores, fit_ms, score_ms = fit_and_score(spec, modality, train, test, scale)
    _, auc = compute_roc_auc(scores, test.y)
    acc = float(np.mean(np.where(scores > 0, 1, -1) == test.y))
    return {"accuracy": acc, "auc": auc, "scores": scores, "labels": test.y,
            "fit_ms": fit_ms, "score_ms": score_ms}


def fold_assignment(samples: SampleSet, k: int, seed: int, grouping: str = "trial"):
    """Fold index per sample; with ``grouping="trial"`` whole trials share a fold."""
    rng = np.random.default_rng(seed)
    if grouping == "trial":
        trials = np.unique(samples.trial_index)
        if len(trials) < k:
            raise EvaluationError(f"{len(trials)} trials cannot fill {k} folds")
        fold_of = dict(zip(rng.permutation(trials), np.arange(len(trials)) % k))
        return np.array([fold_of[t] for t in samples.trial_index])
    if grouping == "sample":
        return rng.permutation(len(samples)) % k
    raise EvaluationError(f"grouping must be 'trial' or 'sample', got {grouping!r}")


def _folds_ok(folds, y, k):
    for f in range(k):
        test, train = y[folds == f], y[folds != f]
        for part in (test, train):
            if not ((part == 1).any() and (part == -1).any()):
                return False
    return True


def kfold_cv(samples: SampleSet, k: int = 10, classifier="sklda", seed: int = 0, *,
             scale: bool = True, grouping: str = "trial", balance_train: bool = True,
             n_jobs: int = 1) -> EvalReport:
    """k-fold cross-validation of one classifier on one sample set.

    Training folds are rebalanced 1:1 (seeded) unless ``balance_train`` is
    off; held-out folds keep their natural class ratio.
    """
    return kfold_cv_many(samples, k, [classifier], seed, scale=scale, grouping=grouping,
                         balance_train=balance_train, n_jobs=n_jobs)[0]


def kfold_cv_many(samples: SampleSet, k: int, classifiers: Sequence, seed: int = 0, *,
                  scale: bool = True, grouping: str = "trial", balance_train: bool = True,
                  n_jobs: int = 1) -> list[EvalReport]:
    """Like :func:`kfold_cv` for several classifiers sharing identical folds."""
    if k < 2:
        raise EvaluationError("k must be >= 2")
    for attempt in range(10):
        folds = fold_assignment(samples, k, seed + attempt, grouping)
        if _folds_ok(folds, samples.y, k):
            break
    else:
        raise EvaluationError("could not draw folds with both classes on every side")
    rng = np.random.default_rng(seed)
    splits = []
    for f in range(k):
        train = samples.subset(np.flatnonzero(folds != f))
        if balance_train:
            train = train.subset(balance_indices(train.y, rng))
        splits.append((train, samples.subset(np.flatnonzero(folds == f))))
    tasks = [(spec, tr, te) for spec in classifiers for tr, te in splits]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_evaluate)(spec, samples.modality, tr, te, scale) for spec, tr, te in tasks)
    reports = []
    for i, spec in enumerate(classifiers):
        chunk = results[i * k : (i + 1) * k]
        reports.append(_summarize(spec_name(spec), samples.modality, chunk,
                                  [len(tr) for tr, _ in splits], [len(te) for _, te in splits],
                                  k, "kfold"))
    return reports


def draw_size_split(samples: SampleSet, size: int, rng_seed):
    """Balanced training set of ``size`` samples and the largest balanced test set
    from the remainder."""
    if size % 2 or size <= 0:
        raise EvaluationError(f"training size must be a positive even number, got {size}")
    rng = np.random.default_rng(rng_seed)
    pos = rng.permutation(np.flatnonzero(samples.y == 1))
    neg = rng.permutation(np.flatnonzero(samples.y == -1))
    half = size // 2
    m = min(len(pos), len(neg)) - half
    if m < 1:
        raise EvaluationError(
            f"insufficient samples: size {size} needs more than {half} per class, have "
            f"{len(pos)} Target / {len(neg)} NonTarget"
        )
    train = np.concatenate([pos[:half], neg[:half]])
    test = np.concatenate([pos[half : half + m], neg[half : half + m]])
    return train, test


def training_size_sweep(samples: SampleSet, sizes: Sequence[int], repeats: int = 10,
                        classifiers=("sklda",), seed: int = 0, *, scale: bool = True,
                        n_jobs: int = 1) -> list[EvalReport]:
    """Mean performance against training-set size.

    The same train/test draws (per repeat and size) are used for every
    classifier. Reports are ordered by classifier, then size.
    """
    if isinstance(classifiers, (str, dict, LinearDiscriminant)):
        classifiers = [classifiers]
    draws = {}
    for size in sizes:
        for r in range(repeats):
            draws[(size, r)] = draw_size_split(samples, size, (seed, r))
    tasks = [(spec, size, r) for spec in classifiers for size in sizes for r in range(repeats)]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_evaluate)(spec, samples.modality, samples.subset(draws[(size, r)][0]),
                           samples.subset(draws[(size, r)][1]), scale)
        for spec, size, r in tasks)
    reports = []
    i = 0
    for spec in classifiers:
        for size in sizes:
            chunk = results[i : i + repeats]
            i += repeats
            tr, te = draws[(size, 0)]
            reports.append(_summarize(spec_name(spec), samples.modality, chunk, [len(tr)],
                                      [len(te)], repeats, "size-sweep", size))
    return reports


def write_reports_csv(reports: Sequence[EvalReport], path, include_latency: bool = True) -> None:
    cols = [c for c in REPORT_COLUMNS if include_latency or c not in LATENCY_COLUMNS]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        writer.writeheader()
        for rep in reports:
            writer.writerow({k: _fmt(v) for k, v in rep.row().items()})


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return value


def write_reports_json(reports: Sequence[EvalReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([asdict(r) for r in reports], fh, indent=2)


def read_reports_json(path) -> list[EvalReport]:
    with open(path, encoding="utf-8") as fh:
        return [EvalReport(**{**r, "roc": [tuple(p) for p in r["roc"]]}) for r in json.load(fh)]
