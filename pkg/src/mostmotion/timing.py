"""Standard time, actual time and efficiency of segmented motions."""
from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable, Sequence

from .segmentation import NO_MOTION, Segment, ToolUseInterval

TMU = Fraction(36, 1000)  # seconds; 1/100000 h
MOST_RESOLUTION = 10 * TMU  # 0.36 s, one index step
FASTER_NOTE = "faster than standard"


def standard_time(entries: Iterable) -> float:
    """Sum of 10 x index x TMU over priced card rows, in seconds.

    Entries are card rows or priced entries (which may carry a ``share`` of
    their row). The sum is exact in decimal before the final float rounding.
    """
    total = Fraction(0)
    for e in entries:
        share = Fraction(getattr(e, "share", 1)).limit_denominator(1000)
        total += share * 10 * e.index * TMU
    return float(total)


def actual_time(n_s: int, n_e: int, frame_interval: float) -> float:
    """Elapsed time between two key frames: (n_e - n_s) x frame interval."""
    if not n_e > n_s:
        raise ValueError(f"n_e ({n_e}) must exceed n_s ({n_s})")
    if not frame_interval > 0:
        raise ValueError("frame interval must be positive")
    return (n_e - n_s) * frame_interval


def efficiency(standard: float, actual: float) -> float:
    """Standard over actual time; 1.0 means the motion took exactly its standard time."""
    if not actual > 0:
        raise ValueError("actual time must be positive")
    return standard / actual


@dataclass(frozen=True)
class TimedSegment:
    segment: Segment
    standard_time: float
    actual_time: float
    efficiency: float

    @property
    def efficiency_percent(self) -> float:
        return round(100 * self.efficiency, 1)


def time_segment(segment: Segment, frame_interval: float) -> TimedSegment:
    std = standard_time(segment.most_entries)
    act = actual_time(segment.start, segment.end, frame_interval)
    eff = efficiency(std, act)
    if eff > 1 and FASTER_NOTE not in segment.warnings:
        segment = replace(segment, warnings=segment.warnings + (FASTER_NOTE,))
    return TimedSegment(segment, std, act, eff)


@dataclass(frozen=True)
class TraceInfo:
    frame_count: int
    frame_interval: float
    first_frame: int
    last_frame: int
    markers: tuple[str, ...]
    degenerate_frames: int = 0


@dataclass(frozen=True)
class AnalysisReport:
    trace: TraceInfo
    segments: tuple[TimedSegment, ...]
    total_standard: float
    total_actual: float
    overall_efficiency: float
    warnings: tuple[str, ...] = ()
    tool_use: tuple[ToolUseInterval, ...] = ()

    @property
    def motion_labels(self) -> list[str]:
        return [t.segment.motion_label for t in self.segments]


def _totals(timed: Sequence[TimedSegment]) -> tuple[float, float, float]:
    std = sum(t.standard_time for t in timed)
    act = sum(t.actual_time for t in timed)
    return std, act, (std / act if act > 0 else 0.0)


def resolution_warning(frame_interval: float) -> str | None:
    if frame_interval > float(MOST_RESOLUTION):
        return (f"frame interval {frame_interval:g} s is coarser than the MOST time "
                f"resolution of {float(MOST_RESOLUTION):g} s")
    return None


def build_report(trace: TraceInfo, segments: Sequence[Segment], warnings: Sequence[str] = (),
                 tool_use: Sequence[ToolUseInterval] = ()) -> AnalysisReport:
    """Time every segment and assemble the report with column totals."""
    timed = tuple(time_segment(s, trace.frame_interval) for s in segments)
    std, act, eff = _totals(timed)
    warnings = tuple(warnings)
    note = resolution_warning(trace.frame_interval)
    if note:
        warnings += (note,)
    report = AnalysisReport(trace, timed, std, act, eff, warnings, tuple(tool_use))
    check_report(report)
    return report


class InvariantError(AssertionError):
    """A computed report violates one of its own invariants."""


def check_report(report: AnalysisReport) -> None:
    """Recompute totals and tiling; raise :class:`InvariantError` on mismatch."""
    std, act, eff = _totals(report.segments)
    if (std, act, eff) != (report.total_standard, report.total_actual, report.overall_efficiency):
        raise InvariantError("report totals differ from the column sums")
    segs = [t.segment for t in report.segments]
    if segs:
        if segs[0].start != report.trace.first_frame or segs[-1].end != report.trace.last_frame:
            raise InvariantError("segments do not span the trace")
        for a, b in zip(segs, segs[1:]):
            if a.end != b.start:
                raise InvariantError(f"gap or overlap between frames {a.end} and {b.start}")
    for t in report.segments:
        if t.segment.motion == NO_MOTION and t.standard_time != 0 and not t.segment.most_entries:
            raise InvariantError("unpriced No motion segment with standard time")
