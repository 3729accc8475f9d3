"""Report serialization: plain table, CSV and JSON (JSON also reads back)."""
from __future__ import annotations

import csv
import io
import json

from .datacard import CardEntry
from .rules import HandAction
from .segmentation import PricedEntry, Segment, ToolUseInterval
from .timing import AnalysisReport, TimedSegment, TraceInfo

FORMATS = ("table", "csv", "json")
SCHEMA = "mostmotion.report/1"

COLUMNS = ("#", "label", "motion", "n_s", "n_e", "entries", "A [m]", "standard [s]",
           "actual [s]", "efficiency")


def _entries_text(entries) -> str:
    parts = []
    for p in entries:
        text = f"{p.group}{p.index}"
        if p.share != 1:
            text += f"x{p.share:g}"
        parts.append(text)
    return " ".join(parts) or "-"


def _row(k: int, t: TimedSegment) -> list[str]:
    s = t.segment
    return [str(k), s.motion_label, s.motion, str(s.start), str(s.end),
            _entries_text(s.most_entries), f"{s.action_distance:.3f}",
            f"{t.standard_time:.2f}", f"{t.actual_time:.2f}", f"{t.efficiency_percent:.1f}%"]


def _totals_row(report: AnalysisReport) -> list[str]:
    eff = round(100 * report.overall_efficiency, 1)
    return ["", "total", "", "", "", "", "", f"{report.total_standard:.2f}",
            f"{report.total_actual:.2f}", f"{eff:.1f}%"]


def _table(report: AnalysisReport) -> str:
    rows = [list(COLUMNS)]
    rows += [_row(k, t) for k, t in enumerate(report.segments, start=1)]
    if report.segments:
        rows.append(_totals_row(report))
    widths = [max(len(r[c]) for r in rows) for c in range(len(COLUMNS))]
    lines = []
    for i, r in enumerate(rows):
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    notes = []
    for k, t in enumerate(report.segments, start=1):
        notes += [f"segment {k}: {w}" for w in t.segment.warnings]
    notes += list(report.warnings)
    if notes:
        lines.append("")
        lines += [f"warning: {n}" for n in notes]
    return "\n".join(lines) + "\n"


def _csv(report: AnalysisReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for k, t in enumerate(report.segments, start=1):
        writer.writerow(_row(k, t))
    if report.segments:
        writer.writerow(_totals_row(report))
    return buf.getvalue()


def report_to_dict(report: AnalysisReport) -> dict:
    tr = report.trace
    return {
        "schema": SCHEMA,
        "trace": {
            "frame_count": tr.frame_count,
            "frame_interval": tr.frame_interval,
            "first_frame": tr.first_frame,
            "last_frame": tr.last_frame,
            "markers": list(tr.markers),
            "degenerate_frames": tr.degenerate_frames,
        },
        "segments": [_segment_dict(t) for t in report.segments],
        "totals": {
            "standard_time": report.total_standard,
            "actual_time": report.total_actual,
            "efficiency": report.overall_efficiency,
        },
        "tool_use": [{"start": u.start, "end": u.end, "object_ids": list(u.object_ids)}
                     for u in report.tool_use],
        "warnings": list(report.warnings),
    }


def _segment_dict(t: TimedSegment) -> dict:
    s = t.segment
    return {
        "start_frame": s.start,
        "end_frame": s.end,
        "posture_before": s.posture_before,
        "posture_after": s.posture_after,
        "motion": s.motion,
        "label": s.motion_label,
        "entries": [{"group": p.group, "index": p.index, "label": p.entry.label, "share": p.share}
                    for p in s.most_entries],
        "action_distance": s.action_distance,
        "hand_actions": [{"frame": a.frame, "group": a.group, "label": a.label,
                          "object_id": a.object_id, "hand": a.hand, "index_hint": a.index_hint}
                         for a in s.hand_actions],
        "warnings": list(s.warnings),
        "standard_time": t.standard_time,
        "actual_time": t.actual_time,
        "efficiency": t.efficiency,
    }


def report_from_dict(d: dict) -> AnalysisReport:
    if d.get("schema") != SCHEMA:
        raise ValueError(f"unsupported report schema {d.get('schema')!r}")
    tr = d["trace"]
    info = TraceInfo(tr["frame_count"], tr["frame_interval"], tr["first_frame"], tr["last_frame"],
                     tuple(tr["markers"]), tr["degenerate_frames"])
    timed = []
    for s in d["segments"]:
        seg = Segment(
            s["start_frame"], s["end_frame"], s["posture_before"], s["posture_after"], s["motion"],
            motion_label=s["label"],
            most_entries=tuple(PricedEntry(CardEntry(e["group"], e["index"], e["label"]), e["share"])
                               for e in s["entries"]),
            action_distance=s["action_distance"],
            hand_actions=tuple(HandAction(a["frame"], a["group"], a["label"], a["object_id"],
                                          a["hand"], a["index_hint"]) for a in s["hand_actions"]),
            warnings=tuple(s["warnings"]),
        )
        timed.append(TimedSegment(seg, s["standard_time"], s["actual_time"], s["efficiency"]))
    tot = d["totals"]
    tool = tuple(ToolUseInterval(u["start"], u["end"], tuple(u["object_ids"])) for u in d["tool_use"])
    return AnalysisReport(info, tuple(timed), tot["standard_time"], tot["actual_time"],
                          tot["efficiency"], tuple(d["warnings"]), tool)


def write_report(report: AnalysisReport, format: str = "table") -> bytes:
    """Serialize deterministically; equal reports give identical bytes."""
    if format == "table":
        return _table(report).encode("utf-8")
    if format == "csv":
        return _csv(report).encode("utf-8")
    if format == "json":
        text = json.dumps(report_to_dict(report), indent=2, sort_keys=True, ensure_ascii=False)
        return (text + "\n").encode("utf-8")
    raise ValueError(f"unknown report format {format!r}; choose from {FORMATS}")


def read_report(data: bytes | str) -> AnalysisReport:
    """Parse a JSON report written by :func:`write_report`."""
    return report_from_dict(json.loads(data))
