"""Session data model and the on-disk session container.

A session bundles one participant's continuous EEG, the fixation event
stream reported by the eye tracker and the icon layout of the search screen.
Two file flavours are understood by :func:`load_session`:

* the binary container written by :func:`save_session` (versioned JSON
  header followed by little-endian EEG, stimulus-onset and fixation blocks);
* a plain JSON document with the same fields, handy for small hand-written
  fixtures.
"""

from __future__ import annotations

import enum
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

CLASSIFICATION_CHANNELS = ("Fz", "Cz", "Pz", "Oz", "P3", "P4", "PO7", "PO8")
EOG_CHANNELS = ("HEOG", "VEOG")

MAGIC = b"HBCISESS"
FORMAT_VERSION = 1
JSON_FORMAT_TAG = "hybridbci-session"

FIXATION_DTYPE = np.dtype(
    [
        ("onset_ms", "<f8"),
        ("duration_ms", "<f8"),
        ("x_px", "<i4"),
        ("y_px", "<i4"),
        ("trial_index", "<i4"),
    ]
)


class Label(enum.IntEnum):
    """Class label; the integer value doubles as the regression target sign."""

    TARGET = 1
    NONTARGET = -1


class SessionFormatError(ValueError):
    """Raised when a session violates the data model or the file layout."""


@dataclass(frozen=True)
class IconLayout:
    """Grid of icons on the search screen.

    The grid is centred on the screen; icon ``i`` sits at row ``i // cols``
    and column ``i % cols``.
    """

    rows: int = 5
    cols: int = 5
    icon_size_px: int = 24
    spacing_px: int = 100
    screen_w_px: int = 1920
    screen_h_px: int = 1080
    target_index: int = 0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise SessionFormatError("layout: rows and cols must be positive")
        if self.icon_size_px <= 0 or self.spacing_px <= 0:
            raise SessionFormatError("layout: icon size and spacing must be positive")
        cell = max(self.icon_size_px, self.spacing_px)
        if (self.cols - 1) * self.spacing_px + cell > self.screen_w_px or (
            self.rows - 1
        ) * self.spacing_px + cell > self.screen_h_px:
            raise SessionFormatError("layout: icon grid does not fit on the screen")
        if not 0 <= self.target_index < self.n_icons:
            raise SessionFormatError(
                f"layout: target_index {self.target_index} not in [0, {self.n_icons})"
            )

    @property
    def n_icons(self) -> int:
        return self.rows * self.cols

    def icon_center(self, index: int) -> tuple[float, float]:
        row, col = divmod(index, self.cols)
        x0 = self.screen_w_px / 2 - (self.cols - 1) * self.spacing_px / 2
        y0 = self.screen_h_px / 2 - (self.rows - 1) * self.spacing_px / 2
        return x0 + col * self.spacing_px, y0 + row * self.spacing_px

    def icon_centers(self) -> np.ndarray:
        return np.array([self.icon_center(i) for i in range(self.n_icons)])


@dataclass(frozen=True)
class FixationEvent:
    onset_ms: float
    duration_ms: float
    x_px: int
    y_px: int
    trial_index: int


@dataclass(frozen=True, eq=False)
class EegRecording:
    """Continuous multichannel EEG in microvolts.

    ``stimulus_onsets`` is an integer array of shape ``(n_onsets, 3)`` holding
    ``(trial_index, sample_index, icon_index)`` rows. ``annotations`` carries
    free-form processing notes (for instance unreliable filter edges).
    """

    sample_rate_hz: float
    channel_names: tuple[str, ...]
    data: np.ndarray
    stimulus_onsets: np.ndarray
    annotations: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        onsets = np.asarray(self.stimulus_onsets, dtype=np.int64).reshape(-1, 3)
        object.__setattr__(self, "stimulus_onsets", onsets)
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise SessionFormatError("eeg: data must be a channels x samples matrix")
        object.__setattr__(self, "data", data)
        if self.sample_rate_hz <= 0:
            raise SessionFormatError("eeg: sample rate must be positive")
        if data.shape[0] != len(self.channel_names):
            raise SessionFormatError(
                f"eeg: channel count mismatch ({data.shape[0]} rows, "
                f"{len(self.channel_names)} channel names)"
            )
        for name in CLASSIFICATION_CHANNELS + EOG_CHANNELS:
            count = self.channel_names.count(name)
            if count == 0:
                raise SessionFormatError(f"eeg: missing channel {name!r}")
            if count > 1:
                raise SessionFormatError(f"eeg: channel {name!r} listed {count} times")
        bad = np.flatnonzero((onsets[:, 1] < 0) | (onsets[:, 1] >= data.shape[1]))
        if bad.size:
            raise SessionFormatError(
                f"stimulus onset {bad[0]}: sample index {onsets[bad[0], 1]} "
                f"outside recording of {data.shape[1]} samples"
            )

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    def channel_index(self, name: str) -> int:
        return self.channel_names.index(name)

    def scalp_mask(self) -> np.ndarray:
        return np.array([name not in EOG_CHANNELS for name in self.channel_names])

    def replace(self, **changes) -> "EegRecording":
        fields = dict(
            sample_rate_hz=self.sample_rate_hz,
            channel_names=self.channel_names,
            data=self.data,
            stimulus_onsets=self.stimulus_onsets,
            annotations=dict(self.annotations),
        )
        fields.update(changes)
        return EegRecording(**fields)


@dataclass(frozen=True, eq=False)
class Session:
    layout: IconLayout
    eeg: EegRecording
    fixations: tuple[FixationEvent, ...]
    n_trials: int
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "fixations", tuple(self.fixations))
        object.__setattr__(self, "metadata", dict(self.metadata))
        if self.n_trials < 20:
            raise SessionFormatError(f"session: n_trials must be >= 20, got {self.n_trials}")
        for key, value in self.metadata.items():
            if not isinstance(key, str) or not isinstance(value, str):
                raise SessionFormatError("metadata: keys and values must be strings")
        onsets = self.eeg.stimulus_onsets
        for row, (trial, _, icon) in enumerate(onsets):
            if not 0 <= trial < self.n_trials:
                raise SessionFormatError(
                    f"stimulus onset {row}: trial index out of range "
                    f"({trial} not in [0, {self.n_trials}))"
                )
            if not 0 <= icon < self.layout.n_icons:
                raise SessionFormatError(
                    f"stimulus onset {row}: icon index {icon} not in "
                    f"[0, {self.layout.n_icons})"
                )
        _validate_fixations(self.fixations, self.n_trials)

    def fixation_table(self) -> np.ndarray:
        table = np.zeros(len(self.fixations), dtype=FIXATION_DTYPE)
        for i, fix in enumerate(self.fixations):
            table[i] = (fix.onset_ms, fix.duration_ms, fix.x_px, fix.y_px, fix.trial_index)
        return table

    def fixations_by_trial(self) -> dict[int, list[FixationEvent]]:
        grouped: dict[int, list[FixationEvent]] = {}
        for fix in self.fixations:
            grouped.setdefault(fix.trial_index, []).append(fix)
        return grouped

    def equals(self, other: "Session") -> bool:
        """Field-by-field comparison, bit-exact on numeric arrays."""
        return (
            self.layout == other.layout
            and self.n_trials == other.n_trials
            and self.metadata == other.metadata
            and self.fixations == other.fixations
            and self.eeg.sample_rate_hz == other.eeg.sample_rate_hz
            and self.eeg.channel_names == other.eeg.channel_names
            and self.eeg.data.dtype == other.eeg.data.dtype
            and np.array_equal(self.eeg.data, other.eeg.data)
            and np.array_equal(self.eeg.stimulus_onsets, other.eeg.stimulus_onsets)
        )


def _validate_fixations(fixations, n_trials):
    last_onset: dict[int, float] = {}
    spans: dict[int, list[float]] = {}
    for row, fix in enumerate(fixations):
        if not 0 <= fix.trial_index < n_trials:
            raise SessionFormatError(
                f"fixation {row}: trial index out of range "
                f"({fix.trial_index} not in [0, {n_trials}))"
            )
        if not fix.duration_ms > 0:
            raise SessionFormatError(f"fixation {row}: duration must be > 0")
        prev = last_onset.get(fix.trial_index)
        if prev is not None and fix.onset_ms < prev:
            raise SessionFormatError(
                f"fixation {row}: onset {fix.onset_ms} ms precedes previous fixation "
                f"of trial {fix.trial_index}"
            )
        last_onset[fix.trial_index] = fix.onset_ms
        span = spans.setdefault(fix.trial_index, [fix.onset_ms, fix.onset_ms + fix.duration_ms])
        span[0] = min(span[0], fix.onset_ms)
        span[1] = max(span[1], fix.onset_ms + fix.duration_ms)
    # a fixation may not spill into the next trial's fixation stream
    ordered = sorted(spans)
    for a, b in zip(ordered, ordered[1:]):
        if spans[a][1] > spans[b][0]:
            raise SessionFormatError(
                f"fixations of trial {a} overlap the fixation stream of trial {b}"
            )


def _layout_to_dict(layout: IconLayout) -> dict:
    return {
        "rows": layout.rows,
        "cols": layout.cols,
        "icon_size_px": layout.icon_size_px,
        "spacing_px": layout.spacing_px,
        "screen_w_px": layout.screen_w_px,
        "screen_h_px": layout.screen_h_px,
        "target_index": layout.target_index,
    }


def _layout_from_dict(raw: Mapping) -> IconLayout:
    try:
        return IconLayout(**{k: int(v) for k, v in raw.items()})
    except TypeError as exc:
        raise SessionFormatError(f"header: bad layout record ({exc})") from None


def save_session(session: Session, path) -> None:
    """Write ``session`` to the binary container at ``path``."""
    path = Path(path)
    eeg = np.ascontiguousarray(session.eeg.data, dtype="<f4")
    onsets = np.ascontiguousarray(session.eeg.stimulus_onsets, dtype="<i8")
    fixations = session.fixation_table()
    header = {
        "format": JSON_FORMAT_TAG,
        "version": FORMAT_VERSION,
        "sample_rate_hz": float(session.eeg.sample_rate_hz),
        "channel_names": list(session.eeg.channel_names),
        "layout": _layout_to_dict(session.layout),
        "n_trials": int(session.n_trials),
        "metadata": dict(session.metadata),
        "annotations": _jsonable(session.eeg.annotations),
        "n_samples": int(eeg.shape[1]),
        "n_onsets": int(onsets.shape[0]),
        "n_fixations": int(fixations.shape[0]),
    }
    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", FORMAT_VERSION, len(blob)))
            fh.write(blob)
            fh.write(eeg.tobytes())
            fh.write(onsets.tobytes())
            fh.write(fixations.tobytes())
    except OSError as exc:
        raise OSError(f"cannot write session file {path}: {exc}") from exc


def _jsonable(value):
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    return value


def load_session(path) -> Session:
    """Read and validate a session file (binary container or JSON fixture)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"session file not found: {path}")
    raw = path.read_bytes()
    if raw.startswith(MAGIC):
        return _parse_container(raw, path)
    if raw.lstrip()[:1] == b"{":
        return _parse_json(raw, path)
    raise SessionFormatError(f"{path}: header: unrecognised file signature")


def _parse_container(raw: bytes, path: Path) -> Session:
    offset = len(MAGIC)
    if len(raw) < offset + 8:
        raise SessionFormatError(f"{path}: header: truncated preamble")
    version, header_len = struct.unpack_from("<II", raw, offset)
    offset += 8
    if version != FORMAT_VERSION:
        raise SessionFormatError(f"{path}: header: unsupported version {version}")
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SessionFormatError(f"{path}: header: malformed JSON ({exc})") from None
    offset += header_len
    required = ("sample_rate_hz", "channel_names", "layout", "n_trials", "n_samples",
                "n_onsets", "n_fixations")
    missing = [key for key in required if key not in header]
    if missing:
        raise SessionFormatError(f"{path}: header: missing field(s) {', '.join(missing)}")

    n_channels = len(header["channel_names"])
    n_samples = int(header["n_samples"])
    sizes = (
        ("eeg block", np.dtype("<f4"), n_channels * n_samples),
        ("stimulus-onset block", np.dtype("<i8"), int(header["n_onsets"]) * 3),
        ("fixation block", FIXATION_DTYPE, int(header["n_fixations"])),
    )
    blocks = []
    for name, dtype, count in sizes:
        nbytes = dtype.itemsize * count
        if offset + nbytes > len(raw):
            raise SessionFormatError(
                f"{path}: {name}: expected {nbytes} bytes at offset {offset}, "
                f"file has {len(raw) - offset} (channel count mismatch?)"
            )
        blocks.append(np.frombuffer(raw, dtype=dtype, count=count, offset=offset).copy())
        offset += nbytes
    if offset != len(raw):
        raise SessionFormatError(
            f"{path}: {len(raw) - offset} trailing bytes after fixation block "
            "(channel count mismatch?)"
        )
    eeg_flat, onsets_flat, fix_table = blocks
    try:
        eeg = EegRecording(
            sample_rate_hz=float(header["sample_rate_hz"]),
            channel_names=tuple(header["channel_names"]),
            data=eeg_flat.astype(np.float32).reshape(n_channels, n_samples),
            stimulus_onsets=onsets_flat.reshape(-1, 3),
            annotations=header.get("annotations", {}),
        )
        fixations = [
            FixationEvent(float(r["onset_ms"]), float(r["duration_ms"]), int(r["x_px"]),
                          int(r["y_px"]), int(r["trial_index"]))
            for r in fix_table
        ]
        return Session(
            layout=_layout_from_dict(header["layout"]),
            eeg=eeg,
            fixations=fixations,
            n_trials=int(header["n_trials"]),
            metadata=header.get("metadata", {}),
        )
    except SessionFormatError as exc:
        raise SessionFormatError(f"{path}: {exc}") from None


def _parse_json(raw: bytes, path: Path) -> Session:
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SessionFormatError(f"{path}: header: malformed JSON ({exc})") from None
    if doc.get("format", JSON_FORMAT_TAG) != JSON_FORMAT_TAG:
        raise SessionFormatError(f"{path}: header: unknown format tag {doc.get('format')!r}")
    if int(doc.get("version", FORMAT_VERSION)) != FORMAT_VERSION:
        raise SessionFormatError(f"{path}: header: unsupported version {doc.get('version')}")
    for key in ("sample_rate_hz", "channel_names", "layout", "n_trials", "eeg"):
        if key not in doc:
            raise SessionFormatError(f"{path}: header: missing field {key!r}")
    rows = doc["eeg"]
    if len(rows) != len(doc["channel_names"]):
        raise SessionFormatError(
            f"{path}: eeg: channel count mismatch ({len(rows)} rows, "
            f"{len(doc['channel_names'])} channel names)"
        )
    lengths = {len(r) for r in rows}
    if len(lengths) > 1:
        raise SessionFormatError(f"{path}: eeg: rows have unequal lengths {sorted(lengths)}")
    try:
        eeg = EegRecording(
            sample_rate_hz=float(doc["sample_rate_hz"]),
            channel_names=tuple(doc["channel_names"]),
            data=np.asarray(rows, dtype=np.float32).reshape(len(rows), -1),
            stimulus_onsets=np.asarray(doc.get("stimulus_onsets", []), dtype=np.int64),
            annotations=doc.get("annotations", {}),
        )
        fixations = []
        for row, rec in enumerate(doc.get("fixations", [])):
            try:
                fixations.append(
                    FixationEvent(float(rec["onset_ms"]), float(rec["duration_ms"]),
                                  int(rec["x_px"]), int(rec["y_px"]), int(rec["trial_index"]))
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise SessionFormatError(f"fixation {row}: malformed record ({exc})") from None
        return Session(
            layout=_layout_from_dict(doc["layout"]),
            eeg=eeg,
            fixations=fixations,
            n_trials=int(doc["n_trials"]),
            metadata=doc.get("metadata", {}),
        )
    except SessionFormatError as exc:
        raise SessionFormatError(f"{path}: {exc}") from None


def session_to_json(session: Session) -> dict:
    """JSON-fixture representation of ``session`` (see :func:`load_session`)."""
    return {
        "format": JSON_FORMAT_TAG,
        "version": FORMAT_VERSION,
        "sample_rate_hz": float(session.eeg.sample_rate_hz),
        "channel_names": list(session.eeg.channel_names),
        "layout": _layout_to_dict(session.layout),
        "n_trials": session.n_trials,
        "metadata": dict(session.metadata),
        "eeg": np.asarray(session.eeg.data, dtype=np.float32).astype(float).tolist(),
        "stimulus_onsets": session.eeg.stimulus_onsets.tolist(),
        "fixations": [
            {"onset_ms": f.onset_ms, "duration_ms": f.duration_ms, "x_px": f.x_px,
             "y_px": f.y_px, "trial_index": f.trial_index}
            for f in session.fixations
        ],
    }
