"""Command-line entry point.

Subcommands::

    hybridbci generate      --out SESSION [--config CFG] [--seed N]
    hybridbci eval-offline  SESSION --out DIR [--config CFG] [--seed N]
    hybridbci eval-online   SESSION --out DIR [--config CFG] [--seed N]
    hybridbci sweep         SESSION --out DIR [--config CFG] [--seed N]
    hybridbci report        DIR

Every run that writes results also writes ``manifest-<command>.json`` (config hash,
seed, package version, output files). Failures print a JSON error record to
stderr, also saved as ``error.json`` when an output directory is known, and
exit nonzero.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import traceback
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .evaluation import (
    kfold_cv,
    kfold_cv_many,
    read_reports_json,
    training_size_sweep,
    write_reports_csv,
    write_reports_json,
)
from .online import (
    BENCHMARK_CLASSIFIER,
    ReplayConfig,
    run_replay,
    sweep_grid,
    write_grid_csv,
    write_online_csv,
    write_online_json,
)
from .pipeline import SessionFeatures
from .session import load_session, save_session
from .synthetic import generate_session

EXIT_FAILURE = 1
EXIT_CONFIG = 2


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir: Path, command: str, cfg: RunConfig, outputs, session=None,
                   extra=None) -> Path:
    manifest = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config_sha256": cfg.digest(),
        "session_sha256": _sha256(session) if session else None,
        "outputs": sorted(Path(p).name for p in outputs),
        **(extra or {}),
    }
    path = out_dir / f"manifest-{command}.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _features(args, cfg):
    return SessionFeatures(load_session(args.session), cfg.preprocessing)


def cmd_generate(args, cfg):
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_session(generate_session(cfg.gen_params()), out)
    write_manifest(out.parent, "generate", cfg, [out],
                   extra={"generator": cfg.gen_params().to_dict()})
    print(f"wrote {out}")
    return 0


def offline_reports(features: SessionFeatures, cfg: RunConfig):
    """Eye-only benchmark followed by every classifier on each modality."""
    off = cfg.offline
    kw = dict(seed=cfg.seed, scale=off.scale, grouping=off.grouping, n_jobs=cfg.workers)
    reports = [kfold_cv(features.samples("eye", off.threshold_ms), off.k, BENCHMARK_CLASSIFIER,
                        **kw)]
    specs = [cfg.classifier_spec(c) for c in off.classifiers]
    for modality in off.modalities:
        reports += kfold_cv_many(features.samples(modality, off.threshold_ms), off.k, specs,
                                 **kw)
    return reports


def cmd_eval_offline(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = offline_reports(_features(args, cfg), cfg)
    write_reports_csv(reports, out / "offline.csv")
    write_reports_json(reports, out / "offline.json")
    write_manifest(out, "eval-offline", cfg, [out / "offline.csv", out / "offline.json"],
                   args.session)
    for r in reports:
        print(f"{r.classifier:>6} {r.modality:>6}  acc {r.accuracy_mean:.4f} +- "
              f"{r.accuracy_sd:.4f}  auc {r.auc_mean:.4f} +- {r.auc_sd:.4f}")
    return 0


def cmd_eval_online(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    features = _features(args, cfg)
    on = cfg.online
    reports = []
    for name in on.classifiers:
        reports.append(run_replay(features.session, ReplayConfig(
            cfg.classifier_spec(name), "fusion", on.threshold_ms, on.n_train_trials, cfg.seed,
            on.scale), features))
    reports.append(run_replay(features.session, ReplayConfig(
        BENCHMARK_CLASSIFIER, "eye", on.threshold_ms, on.n_train_trials, cfg.seed, on.scale),
        features))
    write_online_csv(reports, out / "online.csv")
    write_online_json(reports, out / "online.json")
    write_manifest(out, "eval-online", cfg, [out / "online.csv", out / "online.json"],
                   args.session)
    for r in reports:
        c = r.config
        print(f"{c['classifier']:>6} {c['modality']:>6}  acc {r.accuracy:.4f}  auc {r.auc:.4f}"
              f"  latency {r.latency_mean_ms * 1e3:.1f} +- {r.latency_sd_ms * 1e3:.1f} us")
    return 0


def cmd_sweep(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    features = _features(args, cfg)
    off, on = cfg.offline, cfg.online
    specs = [cfg.classifier_spec(c) for c in off.classifiers]
    sweep = []
    for modality in off.modalities:
        sweep += training_size_sweep(features.samples(modality, off.threshold_ms), off.sizes,
                                     off.repeats, specs, cfg.seed, scale=off.scale,
                                     n_jobs=cfg.workers)
    write_reports_csv(sweep, out / "size_sweep.csv")
    cells = sweep_grid(features.session, on.thresholds, on.train_sizes,
                       [cfg.classifier_spec(c) for c in on.classifiers], "fusion", cfg.seed,
                       on.scale, cfg.workers, features)
    write_grid_csv(cells, out / "grid.csv")
    failed = [c for c in cells if not c.ok]
    write_manifest(out, "sweep", cfg, [out / "size_sweep.csv", out / "grid.csv"], args.session,
                   extra={"grid_cells": len(cells), "failed_cells": len(failed)})
    print(f"size sweep: {len(sweep)} points; grid: {len(cells)} cells, {len(failed)} failed")
    if failed:
        raise RuntimeError(f"{len(failed)} grid cell(s) failed; completed cells were written "
                           f"(first failure: {failed[0].error})")
    return 0


def format_report(offline, online=None) -> str:
    lines = ["Offline 10-fold cross-validation", ""]
    eye = next((r for r in offline if r.modality == "eye"), None)
    if eye:
        lines.append(f"eye-only benchmark: accuracy {eye.accuracy_mean:.4f}, "
                     f"AUC {eye.auc_mean:.4f}")
    by = {(r.classifier, r.modality): r for r in offline}
    names = [r.classifier for r in offline if r.modality == "fusion"] or \
        [r.classifier for r in offline if r.modality == "eeg"]
    lines.append(f"{'classifier':<10} {'EEG acc':>8} {'EEG AUC':>8} {'fus acc':>8} "
                 f"{'fus AUC':>8} {'gain vs EEG':>12} {'gain vs eye':>12}")
    for name in names:
        e, f = by.get((name, "eeg")), by.get((name, "fusion"))
        cells = [f"{name:<10}"]
        cells += [f"{e.accuracy_mean:8.4f}", f"{e.auc_mean:8.4f}"] if e else ["       -"] * 2
        cells += [f"{f.accuracy_mean:8.4f}", f"{f.auc_mean:8.4f}"] if f else ["       -"] * 2
        cells.append(f"{f.auc_mean - e.auc_mean:+12.4f}" if e and f else f"{'-':>12}")
        cells.append(f"{f.auc_mean - eye.auc_mean:+12.4f}" if eye and f else f"{'-':>12}")
        lines.append(" ".join(cells))
    if online:
        lines += ["", "Pseudo-online replay"]
        for r in online:
            c = r["config"]
            lines.append(f"{c['classifier']:<10} {c['modality']:<7} acc {r['accuracy']:.4f}  "
                         f"AUC {r['auc']:.4f}  latency {r['latency_mean_ms'] * 1e3:.1f} us")
    return "\n".join(lines) + "\n"


def cmd_report(args, cfg):
    src = Path(args.dir)
    offline_path = src / "offline.json"
    if not offline_path.exists():
        raise FileNotFoundError(f"{offline_path} not found; run eval-offline first")
    online = None
    if (src / "online.json").exists():
        online = json.loads((src / "online.json").read_text(encoding="utf-8"))
    text = format_report(read_reports_json(offline_path), online)
    (src / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridbci", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, session=True):
        if session:
            p.add_argument("session", help="session file")
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--seed", type=int, help="override [run].seed")

    p = sub.add_parser("generate", help="write a synthetic session")
    common(p, session=False)
    p.add_argument("--out", required=True, help="session file to write")
    p.set_defaults(func=cmd_generate)
    for name, func, desc in (
        ("eval-offline", cmd_eval_offline, "10-fold evaluation per classifier and modality"),
        ("eval-online", cmd_eval_online, "pseudo-online replay with latency"),
        ("sweep", cmd_sweep, "training-size sweep and threshold x train-size grid"),
    ):
        p = sub.add_parser(name, help=desc)
        common(p)
        p.add_argument("--out", required=True, help="output directory")
        p.set_defaults(func=func)
    p = sub.add_parser("report", help="summarize results in a directory")
    p.add_argument("dir", help="directory holding offline.json (and optionally online.json)")
    p.set_defaults(func=cmd_report, config=None, seed=None)
    return parser


def _error_record(exc, out_dir):
    record = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError):
        record["problems"] = exc.problems
    text = json.dumps(record, sort_keys=True)
    print(text, file=sys.stderr)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(text + "\n", encoding="utf-8")
        except OSError:
            pass


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = getattr(args, "out", None)
    out_dir = None
    if out:
        out_dir = Path(out).parent if args.command == "generate" else Path(out)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        return args.func(args, cfg)
    except ConfigError as exc:
        _error_record(exc, out_dir)
        return EXIT_CONFIG
    except Exception as exc:
        _error_record(exc, out_dir)
        if "HYBRIDBCI_DEBUG" in os.environ:
            traceback.print_exc()
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
