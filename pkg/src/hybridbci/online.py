"""Pseudo-online replay: calibrate on the first trials of a session, then
classify the remaining samples one at a time in acquisition order."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from .evaluation import EvaluationError, compute_roc_auc, estimator_for, spec_name
from .fusion import Modality, Normalizer, SampleSet, balance_indices, split_by_trials
from .pipeline import SessionFeatures

THRESHOLDS_MS = tuple(range(300, 801, 50))
TRAIN_TRIALS = tuple(range(20, 101, 10))
BENCHMARK_CLASSIFIER = "lda"
TIMING_REPEATS = 3

GRID_COLUMNS = ("threshold_ms", "n_train_trials", "classifier", "modality", "status",
                "accuracy", "auc", "n_train", "n_test", "latency_mean_ms", "latency_sd_ms",
                "error")
GRID_LATENCY_COLUMNS = ("latency_mean_ms", "latency_sd_ms")


@dataclass(frozen=True)
class ReplayConfig:
    classifier: object = "sklda"
    modality: str = "fusion"
    threshold_ms: int = 500
    n_train_trials: int = 80
    seed: int = 0
    scale: bool = True

    def __post_init__(self):
        if self.threshold_ms not in THRESHOLDS_MS:
            raise ValueError(
                f"threshold_ms must be one of {THRESHOLDS_MS[0]}..{THRESHOLDS_MS[-1]} step 50, "
                f"got {self.threshold_ms}"
            )
        if self.n_train_trials not in TRAIN_TRIALS:
            raise ValueError(
                f"n_train_trials must be one of {TRAIN_TRIALS[0]}..{TRAIN_TRIALS[-1]} step 10, "
                f"got {self.n_train_trials}"
            )
        object.__setattr__(self, "modality", Modality(self.modality).value)


@dataclass
class OnlineReport:
    config: dict
    accuracy: float
    auc: float
    latency_mean_ms: float
    latency_sd_ms: float
    n_train: int
    n_test: int
    n_skipped: int
    n_features: int
    decisions: list = field(default_factory=list)
    latencies_ms: list = field(default_factory=list)
    notes: list = field(default_factory=list)


def _sequential_scores(model, X, order):
    """Score rows of ``X`` one at a time in ``order``; median-of-3 wall time each."""
    scores = np.empty(len(X))
    lat = np.empty(len(X))
    for i in order:
        x = X[i]
        times = []
        for _ in range(TIMING_REPEATS):
            t0 = time.perf_counter()
            s = model.score(x)
            times.append(time.perf_counter() - t0)
        scores[i] = s
        lat[i] = np.median(times) * 1e3
    return scores, lat


def replay_samples(samples: SampleSet, n_train_trials: int, classifier="sklda", seed: int = 0,
                   scale: bool = True, reverse: bool = False):
    """Core of the replay on a prepared sample set.

    Returns ``(train, test, scores, latencies_ms)`` with ``test`` in acquisition
    order. ``reverse`` scores the test samples back to front, which must not
    change any score.
    """
    train, test = split_by_trials(samples, n_train_trials)
    rng = np.random.default_rng(seed)
    train = train.subset(balance_indices(train.y, rng))
    test = test.subset(np.sort(balance_indices(test.y, rng)))
    test = test.in_acquisition_order()
    Xtr, Xte = train.X, test.X
    if scale:
        norm = Normalizer().fit(Xtr)
        Xtr, Xte = norm.transform(Xtr), norm.transform(Xte)
    est = estimator_for(classifier, samples.modality).fit(Xtr, train.y)
    order = range(len(test) - 1, -1, -1) if reverse else range(len(test))
    scores, lat = _sequential_scores(est.model_, Xte, order)
    return train, test, scores, lat


def _report(config: dict, samples: SampleSet, train, test, scores, lat, n_skipped, notes=()):
    decisions = np.where(scores > 0, 1, -1)
    _, auc = compute_roc_auc(scores, test.y)
    return OnlineReport(
        config=config,
        accuracy=float(np.mean(decisions == test.y)),
        auc=auc,
        latency_mean_ms=float(lat.mean()),
        latency_sd_ms=float(lat.std(ddof=1)) if len(lat) > 1 else 0.0,
        n_train=len(train),
        n_test=len(test),
        n_skipped=n_skipped,
        n_features=samples.d,
        decisions=decisions.tolist(),
        latencies_ms=lat.tolist(),
        notes=list(notes),
    )


def _config_echo(config: ReplayConfig) -> dict:
    d = asdict(config)
    d["classifier"] = spec_name(config.classifier)
    return d


def run_replay(session, config: ReplayConfig, features: Optional[SessionFeatures] = None
               ) -> OnlineReport:
    """Replay one session under ``config``.

    Pass a shared :class:`SessionFeatures` to reuse preprocessing across calls.
    """
    features = features or SessionFeatures(session)
    if session.n_trials <= config.n_train_trials:
        raise EvaluationError(
            f"session has {session.n_trials} trials, needs more than {config.n_train_trials}"
        )
    samples = features.samples(config.modality, config.threshold_ms)
    train, test, scores, lat = replay_samples(samples, config.n_train_trials, config.classifier,
                                              config.seed, config.scale)
    notes = []
    if config.threshold_ms < 500 and samples.modality is not Modality.EYE:
        notes.append(f"reduced dimensionality: {samples.d} features at {config.threshold_ms} ms")
    return _report(_config_echo(config), samples, train, test, scores, lat,
                   features.skipped(config.threshold_ms), notes)


@dataclass
class GridCell:
    threshold_ms: int
    n_train_trials: int
    classifier: str
    modality: str
    report: Optional[OnlineReport] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def row(self) -> dict:
        r = self.report
        return {
            "threshold_ms": self.threshold_ms,
            "n_train_trials": self.n_train_trials,
            "classifier": self.classifier,
            "modality": self.modality,
            "status": "ok" if self.ok else "error",
            "accuracy": r.accuracy if r else "",
            "auc": r.auc if r else "",
            "n_train": r.n_train if r else "",
            "n_test": r.n_test if r else "",
            "latency_mean_ms": r.latency_mean_ms if r else "",
            "latency_sd_ms": r.latency_sd_ms if r else "",
            "error": self.error or "",
        }


def cell_seed(master_seed: int, threshold_ms: int, n_train_trials: int) -> int:
    """Per-cell seed derived from the sweep's master seed.

    It does not depend on the classifier, so every classifier in a cell (and
    the eye-only benchmark) sees the same balanced draws.
    """
    ss = np.random.SeedSequence([master_seed, threshold_ms, n_train_trials])
    return int(ss.generate_state(1)[0])


def _run_cell(samples, skipped, thr, n, spec, modality, seed, scale):
    name = spec_name(spec)
    config = {"classifier": name, "modality": Modality(modality).value, "threshold_ms": thr,
              "n_train_trials": n, "seed": seed, "scale": scale}
    cell = GridCell(thr, n, name, Modality(modality).value)
    try:
        train, test, scores, lat = replay_samples(samples, n, spec, seed, scale)
        cell.report = _report(config, samples, train, test, scores, lat, skipped)
    except Exception as exc:  # recorded in-cell; the sweep continues
        cell.error = f"{type(exc).__name__}: {exc}"
    return cell


def sweep_grid(session, thresholds: Sequence[int] = THRESHOLDS_MS,
               train_sizes: Sequence[int] = TRAIN_TRIALS,
               classifiers: Sequence = ("rlda", "swlda", "sklda", "stda"),
               modality="fusion", seed: int = 0, scale: bool = True, n_jobs: int = 1,
               features: Optional[SessionFeatures] = None) -> list[GridCell]:
    """Evaluate every (threshold, train size, classifier) cell plus one eye-only
    benchmark cell per (threshold, train size).

    Cells come back in configuration order: for each threshold and train size,
    the classifiers in the given order followed by the benchmark.
    """
    for t in thresholds:
        if t not in THRESHOLDS_MS:
            raise ValueError(f"threshold {t} outside the allowed grid {THRESHOLDS_MS}")
    for n in train_sizes:
        if n not in TRAIN_TRIALS:
            raise ValueError(f"train size {n} outside the allowed grid {TRAIN_TRIALS}")
    features = features or SessionFeatures(session)
    tasks = []
    for thr in thresholds:
        fused = features.samples(modality, thr)
        eye = features.samples(Modality.EYE, thr)
        skipped = features.skipped(thr)
        for n in train_sizes:
            seed_c = cell_seed(seed, thr, n)
            for spec in classifiers:
                tasks.append((fused, skipped, thr, n, spec, modality, seed_c, scale))
            tasks.append((eye, skipped, thr, n, BENCHMARK_CLASSIFIER, Modality.EYE, seed_c, scale))
    return Parallel(n_jobs=n_jobs)(delayed(_run_cell)(*t) for t in tasks)


def write_grid_csv(cells: Sequence[GridCell], path, include_latency: bool = True) -> None:
    cols = [c for c in GRID_COLUMNS if include_latency or c not in GRID_LATENCY_COLUMNS]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        writer.writeheader()
        for cell in cells:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in cell.row().items()})


ONLINE_COLUMNS = ("classifier", "modality", "threshold_ms", "n_train_trials", "accuracy", "auc",
                  "n_train", "n_test", "n_skipped", "latency_mean_ms", "latency_sd_ms")


def write_online_csv(reports: Sequence[OnlineReport], path, include_latency: bool = True) -> None:
    cols = [c for c in ONLINE_COLUMNS if include_latency or c not in GRID_LATENCY_COLUMNS]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore")
        writer.writeheader()
        for r in reports:
            row = {**r.config, **{k: v for k, v in asdict(r).items() if k != "config"}}
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def write_online_json(reports: Sequence[OnlineReport], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([asdict(r) for r in reports], fh, indent=2)
