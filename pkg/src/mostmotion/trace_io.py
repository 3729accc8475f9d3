"""Readers and writers for motion traces, glove gestures and collision events.

All formats are line oriented, whitespace delimited text with ``#`` comments.
Every rejection raises :class:`FormatError` carrying the offending line and
column so that a bad capture file can be fixed by hand.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

MARKERS: tuple[str, ...] = (
    "right_shoulder",
    "left_shoulder",
    "right_elbow",
    "left_elbow",
    "right_wrist",
    "left_wrist",
    "pelvis",
    "right_hip",
    "left_hip",
    "right_knee",
    "left_knee",
    "right_ankle",
    "left_ankle",
)
MARKER_INDEX = {name: i for i, name in enumerate(MARKERS)}
N_MARKERS = len(MARKERS)

# maximum relative deviation of a frame step from the inferred interval
INTERVAL_TOLERANCE = 0.10

FINGERS = ("thumb", "index", "middle", "ring", "little")
HANDS = ("left", "right")


class FormatError(ValueError):
    """Input text that does not follow one of the documented formats."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class MarkerSet:
    names: tuple[str, ...] = MARKERS

    def __post_init__(self):
        if len(self.names) != N_MARKERS:
            raise ValueError(f"marker set must have {N_MARKERS} entries, got {len(self.names)}")
        if len(set(self.names)) != len(self.names):
            raise ValueError("marker names must be unique")
        missing = {"right_shoulder", "left_shoulder", "pelvis"} - set(self.names)
        for side in HANDS:
            missing |= {f"{side}_hip", f"{side}_knee", f"{side}_ankle"} - set(self.names)
        if missing:
            raise ValueError(f"marker set lacks required markers: {sorted(missing)}")

    def index(self, name: str) -> int:
        return self.names.index(name)


@dataclass(frozen=True)
class Frame:
    index: int
    timestamp: float
    positions: np.ndarray  # (13, 3) metres, world frame

    def marker(self, name: str) -> np.ndarray:
        return self.positions[MARKER_INDEX[name]]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MotionTrace:
    """Time-ordered marker positions.

    Stored column-wise: ``indices`` (n,), ``timestamps`` (n,) and
    ``positions`` (n, 13, 3). Use :meth:`frames` for per-frame access.
    """

    indices: np.ndarray
    timestamps: np.ndarray
    positions: np.ndarray
    frame_interval: float
    marker_set: MarkerSet = field(default_factory=MarkerSet)

    def __post_init__(self):
        object.__setattr__(self, "indices", _readonly(np.asarray(self.indices, dtype=np.int64)))
        object.__setattr__(self, "timestamps", _readonly(np.asarray(self.timestamps, dtype=float)))
        object.__setattr__(self, "positions", _readonly(np.asarray(self.positions, dtype=float)))
        validate_trace(self)

    @classmethod
    def from_positions(cls, positions, frame_interval: float, start_index: int = 0,
                       start_time: float = 0.0) -> "MotionTrace":
        """Build a trace with contiguous indices and evenly spaced timestamps."""
        positions = np.asarray(positions, dtype=float)
        n = positions.shape[0]
        indices = np.arange(start_index, start_index + n)
        timestamps = start_time + np.arange(n) * frame_interval
        return cls(indices, timestamps, positions, float(frame_interval))

    def __len__(self) -> int:
        return int(self.indices.shape[0])

    def __eq__(self, other) -> bool:
        if not isinstance(other, MotionTrace):
            return NotImplemented
        return (
            self.marker_set == other.marker_set
            and self.frame_interval == other.frame_interval
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.positions, other.positions)
        )

    def frames(self) -> Iterator[Frame]:
        for i in range(len(self)):
            yield self.frame(i)

    def frame(self, position: int) -> Frame:
        return Frame(int(self.indices[position]), float(self.timestamps[position]),
                     self.positions[position])

    def position_of(self, frame_index: int) -> int:
        """Row of the frame carrying ``frame_index``."""
        pos = int(np.searchsorted(self.indices, frame_index))
        if pos >= len(self) or self.indices[pos] != frame_index:
            raise KeyError(f"frame {frame_index} not in trace")
        return pos

    def with_positions(self, positions) -> "MotionTrace":
        return MotionTrace(self.indices, self.timestamps, positions, self.frame_interval,
                           self.marker_set)


def validate_trace(trace: MotionTrace) -> None:
    n = trace.indices.shape[0]
    if n < 2:
        raise FormatError("fewer than 2 frames")
    if trace.positions.shape != (n, N_MARKERS, 3):
        raise FormatError(f"positions must have shape (n, {N_MARKERS}, 3), got {trace.positions.shape}")
    if trace.timestamps.shape != (n,):
        raise FormatError("timestamps and indices differ in length")
    if not np.all(np.isfinite(trace.positions)) or not np.all(np.isfinite(trace.timestamps)):
        raise FormatError("non-finite coordinate or timestamp")
    if not trace.frame_interval > 0:
        raise FormatError("frame interval must be positive")
    steps = np.diff(trace.indices)
    if np.any(steps <= 0):
        bad = int(np.argmax(steps <= 0)) + 1
        raise _row_error(f"frame index not strictly increasing at row {bad}", bad)
    dt = np.diff(trace.timestamps)
    if np.any(dt < 0):
        bad = int(np.argmax(dt < 0)) + 1
        raise _row_error(f"non-monotonic timestamps at row {bad}", bad)
    per_frame = dt / steps
    off = np.abs(per_frame - trace.frame_interval) >= INTERVAL_TOLERANCE * trace.frame_interval
    if np.any(off):
        bad = int(np.argmax(off)) + 1
        raise _row_error(
            f"irregular frame spacing at row {bad}: {per_frame[bad - 1]!r} s vs interval "
            f"{trace.frame_interval!r} s", bad)


def _row_error(message: str, row: int) -> FormatError:
    err = FormatError(message)
    err.row = row
    return err


# ---------------------------------------------------------------- traces

def _lines(data: bytes | str) -> Iterator[tuple[int, str]]:
    if isinstance(data, bytes):
        try:
            data = data.decode("ascii")
        except UnicodeDecodeError as exc:
            line = data[: exc.start].count(b"\n") + 1
            raise FormatError("non-ASCII byte", line) from None
    for number, raw in enumerate(data.split("\n"), start=1):
        yield number, raw.rstrip("\r")


def _column(raw: str, token_no: int) -> int:
    """1-based column of the ``token_no``-th whitespace token of ``raw``."""
    pos = 0
    for k, tok in enumerate(raw.split()):
        pos = raw.index(tok, pos)
        if k == token_no:
            return pos + 1
        pos += len(tok)
    return len(raw) + 1


def _float(tok: str, number: int, raw: str, k: int) -> float:
    try:
        value = float(tok)
    except ValueError:
        raise FormatError(f"not a number: {tok!r}", number, _column(raw, k)) from None
    if not math.isfinite(value):
        raise FormatError(f"non-finite value: {tok!r}", number, _column(raw, k))
    return value


def _int(tok: str, number: int, raw: str, k: int) -> int:
    try:
        value = int(tok)
    except ValueError:
        raise FormatError(f"not an integer: {tok!r}", number, _column(raw, k)) from None
    if value < 0:
        raise FormatError(f"negative frame index: {value}", number, _column(raw, k))
    return value


def parse_trace(data: bytes | str, format_hint: str = "txt") -> MotionTrace:
    """Parse a trace file: ``frame_index timestamp x1 y1 z1 ... x13 y13 z13`` per line.

    An optional ``# markers: ...`` comment must list the marker names in the
    canonical order. An optional ``# frame_interval: <s>`` comment gives the
    frame interval; otherwise it is the median per-index timestamp step,
    rounded to the nanosecond.
    """
    if format_hint not in ("txt", "trace"):
        raise FormatError(f"unsupported trace format {format_hint!r}")
    width = 2 + 3 * N_MARKERS
    indices: list[int] = []
    numbers: list[int] = []
    stamps: list[float] = []
    rows: list[list[float]] = []
    declared = None
    for number, raw in _lines(data):
        text = raw.strip()
        if text.startswith("#"):
            body = text[1:].strip()
            if body.startswith("markers:"):
                names = tuple(body[len("markers:"):].split())
                if names != MARKERS:
                    raise FormatError("marker header does not match the marker set "
                                      f"({len(names)} names given)", number)
            elif body.startswith("frame_interval:"):
                tok = body[len("frame_interval:"):].strip()
                try:
                    declared = float(tok)
                except ValueError:
                    raise FormatError(f"bad frame interval {tok!r}", number) from None
                if not (math.isfinite(declared) and declared > 0):
                    raise FormatError("frame interval must be positive", number)
            continue
        if not text:
            continue
        tokens = text.split()
        if len(tokens) != width:
            got = (len(tokens) - 2) / 3
            raise FormatError(
                f"expected {width} fields ({N_MARKERS} markers), got {len(tokens)} "
                f"({got:g} markers)", number)
        index = _int(tokens[0], number, raw, 0)
        stamp = _float(tokens[1], number, raw, 1)
        if indices and index <= indices[-1]:
            raise FormatError(f"frame index {index} not greater than {indices[-1]}", number, _column(raw, 0))
        if stamps and stamp < stamps[-1]:
            raise FormatError(f"non-monotonic timestamp {stamp!r}", number, _column(raw, 1))
        try:
            row = [float(t) for t in tokens[2:]]
        except ValueError:
            row = [_float(t, number, raw, k + 2) for k, t in enumerate(tokens[2:])]
        if not all(math.isfinite(v) for v in row):
            row = [_float(t, number, raw, k + 2) for k, t in enumerate(tokens[2:])]
        indices.append(index)
        numbers.append(number)
        stamps.append(stamp)
        rows.append(row)
    if len(indices) < 2:
        raise FormatError("fewer than 2 frames")
    idx = np.asarray(indices, dtype=np.int64)
    ts = np.asarray(stamps, dtype=float)
    if declared is not None:
        interval = declared
    else:
        interval = round(float(np.median(np.diff(ts) / np.diff(idx))), 9)
    if not interval > 0:
        raise FormatError("cannot infer a positive frame interval from timestamps")
    positions = np.asarray(rows, dtype=float).reshape(-1, N_MARKERS, 3)
    try:
        return MotionTrace(idx, ts, positions, interval)
    except FormatError as exc:
        row = getattr(exc, "row", None)
        if row is None:
            raise
        raise FormatError(exc.message, numbers[row]) from None


def serialize_trace(trace: MotionTrace) -> bytes:
    out = ["# markers: " + " ".join(trace.marker_set.names),
           f"# frame_interval: {float(trace.frame_interval)!r}"]
    flat = trace.positions.reshape(len(trace), -1)
    for i in range(len(trace)):
        fields = [str(int(trace.indices[i])), repr(float(trace.timestamps[i]))]
        fields.extend(repr(float(v)) for v in flat[i])
        out.append(" ".join(fields))
    return ("\n".join(out) + "\n").encode("ascii")


# -------------------------------------------------------------- gestures

@dataclass(frozen=True)
class GestureSample:
    frame: int
    hand: str
    flexion: tuple[float, float, float, float, float]  # thumb..little, 0 open, 1 closed

    def __post_init__(self):
        if self.hand not in HANDS:
            raise ValueError(f"unknown hand {self.hand!r}")
        if len(self.flexion) != 5:
            raise ValueError("flexion needs 5 values")
        if not all(0.0 <= f <= 1.0 for f in self.flexion):
            raise ValueError(f"flexion outside [0, 1]: {self.flexion}")


def parse_gestures(data: bytes | str) -> list[GestureSample]:
    """Parse ``frame hand f_thumb f_index f_middle f_ring f_little`` lines."""
    samples = []
    for number, raw in _lines(data):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        tokens = text.split()
        if len(tokens) != 7:
            raise FormatError(f"expected 7 fields, got {len(tokens)}", number)
        frame = _int(tokens[0], number, raw, 0)
        hand = tokens[1]
        if hand not in HANDS:
            raise FormatError(f"unknown hand tag {hand!r}", number, _column(raw, 1))
        flex = []
        for k, tok in enumerate(tokens[2:], start=2):
            value = _float(tok, number, raw, k)
            if not 0.0 <= value <= 1.0:
                raise FormatError(f"flexion {value!r} outside [0, 1]", number, _column(raw, k))
            flex.append(value)
        samples.append(GestureSample(frame, hand, tuple(flex)))
    samples.sort(key=lambda s: s.frame)
    return samples


def serialize_gestures(samples: Sequence[GestureSample]) -> bytes:
    lines = ["# frame hand thumb index middle ring little"]
    for s in sorted(samples, key=lambda s: s.frame):
        lines.append(" ".join([str(s.frame), s.hand, *(repr(float(f)) for f in s.flexion)]))
    return ("\n".join(lines) + "\n").encode("ascii")


# ------------------------------------------------------------ collisions

@dataclass(frozen=True)
class CollisionEvent:
    frame: int
    kind: str  # "I" human-object, "II" object-object
    object_ids: tuple[str, ...]
    phase: str  # "begin" | "end"
    body_part: str | None = None

    def __post_init__(self):
        if self.kind == "I":
            if len(self.object_ids) != 1 or not self.body_part:
                raise ValueError("type-I collision needs one object id and a body part")
        elif self.kind == "II":
            if len(self.object_ids) != 2 or self.body_part is not None:
                raise ValueError("type-II collision needs two object ids and no body part")
        else:
            raise ValueError(f"unknown collision kind {self.kind!r}")
        if self.phase not in ("begin", "end"):
            raise ValueError(f"unknown phase {self.phase!r}")

    @property
    def pair_key(self) -> tuple:
        return (self.kind, tuple(sorted(self.object_ids)), self.body_part)

    @property
    def hand(self) -> str | None:
        if self.body_part:
            for side in HANDS:
                if self.body_part.startswith(side):
                    return side
        return None


def check_pairing(events: Sequence[CollisionEvent]) -> None:
    """Raise ``ValueError`` unless begin/end events alternate per contact."""
    bad = _pairing_violation(events)
    if bad is not None:
        raise ValueError(bad[1])


def _pairing_violation(events: Sequence[CollisionEvent]) -> tuple[int, str] | None:
    open_: dict[tuple, int] = {}
    for pos, ev in enumerate(events):
        key = ev.pair_key
        if ev.phase == "begin":
            if key in open_:
                return pos, f"second begin for {key} at frame {ev.frame}, open since frame {open_[key]}"
            open_[key] = ev.frame
        else:
            if key not in open_:
                return pos, f"end without begin for {key} at frame {ev.frame}"
            del open_[key]
    return None


def parse_collisions(data: bytes | str) -> list[CollisionEvent]:
    """Parse ``frame I|II begin|end id [id2|body_part]`` lines.

    Type-I lines name one object and the touching body part, type-II lines
    name two objects.
    """
    events = []
    numbers = []
    for number, raw in _lines(data):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        tokens = text.split()
        if len(tokens) != 5:
            raise FormatError(f"expected 5 fields, got {len(tokens)}", number)
        frame = _int(tokens[0], number, raw, 0)
        kind, phase = tokens[1], tokens[2]
        if kind not in ("I", "II"):
            raise FormatError(f"unknown collision type {kind!r}", number, _column(raw, 1))
        if phase not in ("begin", "end"):
            raise FormatError(f"unknown phase {phase!r}", number, _column(raw, 2))
        if kind == "I":
            ev = CollisionEvent(frame, kind, (tokens[3],), phase, tokens[4])
        else:
            ev = CollisionEvent(frame, kind, (tokens[3], tokens[4]), phase)
        events.append(ev)
        numbers.append(number)
    order = sorted(range(len(events)), key=lambda k: events[k].frame)
    events = [events[k] for k in order]
    bad = _pairing_violation(events)
    if bad is not None:
        raise FormatError(bad[1], numbers[order[bad[0]]])
    return events


def serialize_collisions(events: Sequence[CollisionEvent]) -> bytes:
    lines = ["# frame type phase object body_part|object"]
    for ev in sorted(events, key=lambda e: e.frame):
        last = ev.body_part if ev.kind == "I" else ev.object_ids[1]
        lines.append(" ".join([str(ev.frame), ev.kind, ev.phase, ev.object_ids[0], last]))
    return ("\n".join(lines) + "\n").encode("ascii")
