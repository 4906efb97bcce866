"""Run configuration: one TOML file holding every tunable of the pipeline.

Sections and keys (defaults in brackets)::

    [run]            seed [0], n_jobs [0 = all cores]
    [generator]      any synthetic generator parameter (n_trials, noise_sigma_uv, ...)
    [preprocessing]  low_hz [1], high_hz [40], n_taps [501], baseline_ms [100],
                     target_rate_hz [32], eog_regression [true]
    [rlda]           lambda [0.01]
    [sklda]          gamma [0.1] (or "analytic")
    [swlda]          p_ins [0.1], p_rem [0.15], max_features [60]
    [blda]           tol [1e-4], max_iter [100]
    [stda]           ds [2], dt [2], tol [1e-4], max_iter [20]
    [offline]        k [10], threshold_ms [500], grouping ["trial"], scale [true],
                     classifiers, modalities, sizes [30..420 step 30], repeats [10]
    [online]         threshold_ms [500], n_train_trials [80], thresholds [300..800
                     step 50], train_sizes [20..100 step 10], classifiers

Unknown sections or keys are rejected, with a close-match suggestion.
"""

from __future__ import annotations

import difflib
import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .online import THRESHOLDS_MS, TRAIN_TRIALS
from .preprocessing import PreprocessingParams
from .synthetic import GenParams, GenParamsError

ALL_CLASSIFIERS = ("rlda", "swlda", "blda", "sklda", "stda")


class ConfigError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class OfflineConfig:
    k: int = 10
    threshold_ms: int = 500
    grouping: str = "trial"
    scale: bool = True
    classifiers: list = field(default_factory=lambda: list(ALL_CLASSIFIERS))
    modalities: list = field(default_factory=lambda: ["eeg", "fusion"])
    sizes: list = field(default_factory=lambda: list(range(30, 421, 30)))
    repeats: int = 10


@dataclass
class OnlineConfig:
    threshold_ms: int = 500
    n_train_trials: int = 80
    thresholds: list = field(default_factory=lambda: list(range(300, 801, 50)))
    train_sizes: list = field(default_factory=lambda: list(range(20, 101, 10)))
    classifiers: list = field(default_factory=lambda: ["rlda", "swlda", "sklda", "stda"])
    scale: bool = True


@dataclass
class RunConfig:
    seed: int = 0
    n_jobs: int = 0
    generator: dict = field(default_factory=dict)
    preprocessing: PreprocessingParams = field(default_factory=PreprocessingParams)
    classifier_params: dict = field(default_factory=lambda: {
        "rlda": {"lambda": 0.01},
        "sklda": {"gamma": 0.1},
        "swlda": {"p_ins": 0.1, "p_rem": 0.15, "max_features": 60},
        "blda": {"tol": 1e-4, "max_iter": 100},
        "stda": {"ds": 2, "dt": 2, "tol": 1e-4, "max_iter": 20},
    })
    offline: OfflineConfig = field(default_factory=OfflineConfig)
    online: OnlineConfig = field(default_factory=OnlineConfig)

    def classifier_spec(self, name: str) -> dict:
        """Estimator spec for ``make_classifier`` with this run's parameters."""
        params = dict(self.classifier_params.get(name, {}))
        if "lambda" in params:
            params["lam"] = params.pop("lambda")
        return {"name": name, **params}

    def gen_params(self, seed=None) -> GenParams:
        raw = dict(self.generator)
        raw["seed"] = self.seed if seed is None else seed
        return GenParams.from_dict(raw)

    @property
    def workers(self) -> int:
        return -1 if self.n_jobs in (0, None) else self.n_jobs

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def _names(cls):
    return [f.name for f in fields(cls)]


def _unknown(keys, allowed, where, problems):
    for key in keys:
        if key not in allowed:
            hint = difflib.get_close_matches(key, allowed, n=1)
            msg = f"unknown key {where}{key!r}"
            if hint:
                msg += f" (did you mean {hint[0]!r}?)"
            problems.append(msg)


_CLASSIFIER_KEYS = {
    "rlda": ["lambda"],
    "sklda": ["gamma"],
    "swlda": ["p_ins", "p_rem", "max_features"],
    "blda": ["tol", "max_iter"],
    "stda": ["ds", "dt", "tol", "max_iter"],
}
_SECTIONS = ["run", "generator", "preprocessing", "offline", "online", *_CLASSIFIER_KEYS]


def config_from_dict(raw: dict) -> RunConfig:
    """Validate a parsed TOML document; every problem is reported at once."""
    problems: list[str] = []
    _unknown(raw, _SECTIONS, "", problems)
    cfg = RunConfig()
    run = raw.get("run", {})
    _unknown(run, ["seed", "n_jobs"], "[run].", problems)
    for key in ("seed", "n_jobs"):
        value = run.get(key, getattr(cfg, key))
        if isinstance(value, bool) or not isinstance(value, int):
            problems.append(f"[run].{key} must be an integer, got {value!r}")
        else:
            setattr(cfg, key, value)

    gen = raw.get("generator", {})
    _unknown(gen, [n for n in _names(GenParams) if n != "seed"], "[generator].", problems)
    cfg.generator = dict(gen)

    pre = raw.get("preprocessing", {})
    _unknown(pre, _names(PreprocessingParams), "[preprocessing].", problems)
    cfg.preprocessing = PreprocessingParams(**{k: v for k, v in pre.items()
                                               if k in _names(PreprocessingParams)})

    for name, keys in _CLASSIFIER_KEYS.items():
        section = raw.get(name, {})
        _unknown(section, keys, f"[{name}].", problems)
        cfg.classifier_params[name].update({k: v for k, v in section.items() if k in keys})
    lam = cfg.classifier_params["rlda"]["lambda"]
    if not 0 <= lam <= 1:
        problems.append(f"[rlda].lambda must lie in [0, 1], got {lam}")
    gamma = cfg.classifier_params["sklda"]["gamma"]
    if gamma != "analytic" and not (isinstance(gamma, (int, float)) and 0 <= gamma <= 1):
        problems.append(f"[sklda].gamma must lie in [0, 1] or be \"analytic\", got {gamma!r}")

    for section, cls in (("offline", OfflineConfig), ("online", OnlineConfig)):
        values = raw.get(section, {})
        _unknown(values, _names(cls), f"[{section}].", problems)
        setattr(cfg, section, cls(**{k: v for k, v in values.items() if k in _names(cls)}))
    if cfg.offline.grouping not in ("trial", "sample"):
        problems.append(f"[offline].grouping must be \"trial\" or \"sample\", got "
                        f"{cfg.offline.grouping!r}")
    for section in (cfg.offline, cfg.online):
        bad = [c for c in section.classifiers if c not in ALL_CLASSIFIERS]
        if bad:
            problems.append(f"unknown classifier(s) {bad}; choose from {list(ALL_CLASSIFIERS)}")
    on = cfg.online
    for key, value, grid in (("threshold_ms", [on.threshold_ms], THRESHOLDS_MS),
                             ("n_train_trials", [on.n_train_trials], TRAIN_TRIALS),
                             ("thresholds", on.thresholds, THRESHOLDS_MS),
                             ("train_sizes", on.train_sizes, TRAIN_TRIALS)):
        bad = [v for v in value if v not in grid]
        if bad:
            problems.append(f"[online].{key} values {bad} are outside {grid[0]}..{grid[-1]} "
                            f"step {grid[1] - grid[0]}")
    bad = [m for m in cfg.offline.modalities if m not in ("eeg", "fusion")]
    if bad:
        problems.append(f"[offline].modalities accepts \"eeg\" and \"fusion\", got {bad}")

    if not problems:
        try:
            cfg.gen_params()
        except (GenParamsError, TypeError) as exc:
            problems.append(f"[generator]: {exc}")
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: invalid TOML: {exc}"]) from None
    return config_from_dict(raw)
