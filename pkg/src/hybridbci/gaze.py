"""Fixation-to-icon assignment and per-icon dwell-time features."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

from .session import FixationEvent, IconLayout, Label, Session

AOI_SIZE_PX = 100


@dataclass(frozen=True)
class AoiAssignment:
    fixation: FixationEvent
    icon_index: Optional[int]
    is_target: Optional[bool]


@dataclass(frozen=True)
class GazeFeature:
    trial_index: int
    icon_index: int
    duration_ms: float
    label: Label


def _in_half_open(value, lo, size):
    return lo <= value < lo + size


def assign_fixation(fix: FixationEvent, layout: IconLayout, aoi_size_px: float = AOI_SIZE_PX
                    ) -> AoiAssignment:
    """Map a fixation centroid to the icon whose AOI square contains it.

    AOIs are half-open squares (left/top edge inside, right/bottom edge
    outside), so abutting AOIs never both claim a point.
    """
    half = aoi_size_px / 2
    hits = [
        i
        for i, (cx, cy) in enumerate(layout.icon_centers())
        if _in_half_open(fix.x_px, cx - half, aoi_size_px)
        and _in_half_open(fix.y_px, cy - half, aoi_size_px)
    ]
    if len(hits) != 1:
        return AoiAssignment(fix, None, None)
    icon = hits[0]
    return AoiAssignment(fix, icon, icon == layout.target_index)


def aggregate_durations(assignments: Iterable[AoiAssignment], trial: int) -> list[GazeFeature]:
    """Sum fixation durations per icon within one trial.

    Icons are reported in the order they were first fixated.
    """
    totals: dict[int, float] = {}
    labels: dict[int, Label] = {}
    for a in assignments:
        if a.fixation.trial_index != trial:
            raise ValueError(
                f"assignment for trial {a.fixation.trial_index} passed to trial {trial}"
            )
        if a.icon_index is None:
            continue
        totals[a.icon_index] = totals.get(a.icon_index, 0.0) + a.fixation.duration_ms
        labels[a.icon_index] = Label.TARGET if a.is_target else Label.NONTARGET
    return [GazeFeature(trial, icon, totals[icon], labels[icon]) for icon in totals]


def clamp_duration(duration_ms: float, threshold_ms: float) -> float:
    if not 300 <= threshold_ms <= 800:
        raise ValueError(f"threshold_ms must lie in [300, 800], got {threshold_ms}")
    return min(duration_ms, threshold_ms)


def session_gaze_features(session: Session, aoi_size_px: float = AOI_SIZE_PX
                          ) -> dict[tuple[int, int], GazeFeature]:
    """All (trial, icon) dwell features of a session, unclamped."""
    out: dict[tuple[int, int], GazeFeature] = {}
    for trial, fixations in session.fixations_by_trial().items():
        assigned = [assign_fixation(f, session.layout, aoi_size_px) for f in fixations]
        for feat in aggregate_durations(assigned, trial):
            out[(feat.trial_index, feat.icon_index)] = feat
    return out


def aoi_origin(layout: IconLayout, aoi_size_px: float = AOI_SIZE_PX) -> tuple[float, float]:
    """Top-left corner of icon 0's AOI."""
    cx, cy = layout.icon_center(0)
    return cx - aoi_size_px / 2, cy - aoi_size_px / 2


def grid_cell(x: float, y: float, layout: IconLayout) -> Optional[int]:
    """Icon whose pitch cell contains (x, y); used as a cross-check when AOIs tile the grid."""
    ox, oy = aoi_origin(layout, layout.spacing_px)
    col = math.floor((x - ox) / layout.spacing_px)
    row = math.floor((y - oy) / layout.spacing_px)
    if 0 <= col < layout.cols and 0 <= row < layout.rows:
        return row * layout.cols + col
    return None
