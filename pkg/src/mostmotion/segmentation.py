"""Key-frame segmentation of a posture sequence into MOST element motions."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from importlib import resources
from typing import Sequence

import numpy as np

from .datacard import CardEntry, DataCard
from .kinematics import FEATURE_INDEX
from .rules import HandAction, PostureLabelSequence
from .trace_io import CollisionEvent, FormatError

NO_MOTION = "No motion"
UNRECOGNIZED = "Unrecognized"
IDLE_WARNING = "possible mental effort or idle: manual review needed"

STEP_LENGTH = 0.75  # metres per step; four steps cover about 3 m
WITHIN_REACH = 0.60  # trunk displacement reachable without stepping, metres
MIN_ACTION_DISTANCE = 0.05  # the "<= 2 in. (5 cm.)" row
IDLE_THRESHOLD = 1.0  # seconds of No motion before asking for review

# body motions priced as one half of the round-trip "Bend and Arise" row
HALF_BEND_MOTIONS = ("Bend", "Arise")
BEND_AND_ARISE = "Bend and Arise"


@dataclass(frozen=True)
class KeyFrame:
    frame: int
    posture_before: str | None  # None on the leading sentinel
    posture_after: str | None  # None on the trailing sentinel

    def __post_init__(self):
        if self.posture_before == self.posture_after:
            raise ValueError("a key frame needs a posture change")


@dataclass(frozen=True)
class PricedEntry:
    entry: CardEntry
    share: float = 1.0  # 0.5 for one half of a Bend and Arise pair

    @property
    def index(self) -> int:
        return self.entry.index

    @property
    def group(self) -> str:
        return self.entry.group


@dataclass(frozen=True)
class Segment:
    start: int  # n_s, frame index
    end: int  # n_e, frame index
    posture_before: str
    posture_after: str
    motion: str  # transition matrix cell
    motion_label: str = ""
    most_entries: tuple[PricedEntry, ...] = ()
    action_distance: float = 0.0
    hand_actions: tuple[HandAction, ...] = ()
    warnings: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError(f"segment end {self.end} must exceed start {self.start}")
        if not self.motion_label:
            object.__setattr__(self, "motion_label", compose_label(self))

    @property
    def frames(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class ToolUseInterval:
    start: int
    end: int
    object_ids: tuple[str, str]

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError("tool use interval must have positive length")


def compose_label(seg: Segment) -> str:
    """MOST sequence letters of a segment (``"B"``, ``"BG"``, ``"ABP"``...).

    Falls back to the motion name when nothing is priced.
    """
    if seg.motion == UNRECOGNIZED:
        return UNRECOGNIZED
    letters = []
    for group in ("A", "B"):
        if any(p.group == group for p in seg.most_entries):
            letters.append(group)
    letters += [a.group for a in seg.hand_actions]
    return "".join(letters) or seg.motion


def _relabel(seg: Segment, **changes) -> Segment:
    seg = replace(seg, motion_label="x", **changes)
    return replace(seg, motion_label=compose_label(seg))


# ---------------------------------------------------------- transitions

@dataclass(frozen=True)
class TransitionMatrix:
    postures: tuple[str, ...]
    cells: tuple[tuple[str, str, str], ...]  # (from, to, motion)

    def __post_init__(self):
        seen = set()
        for a, b, motion in self.cells:
            if a not in self.postures or b not in self.postures:
                raise ValueError(f"cell ({a}, {b}) names an unknown posture")
            if (a, b) in seen:
                raise ValueError(f"cell ({a}, {b}) given twice")
            seen.add((a, b))
            if a == b and motion != NO_MOTION:
                raise ValueError(f"diagonal cell ({a}, {a}) must be {NO_MOTION!r}")
        object.__setattr__(self, "_lookup", {(a, b): m for a, b, m in self.cells})

    def get(self, before: str, after: str) -> str | None:
        if before == after and before in self.postures:
            return NO_MOTION
        return self._lookup.get((before, after))


def label_transition(before: str, after: str, matrix: TransitionMatrix) -> str:
    """Motion between two postures, or ``Unrecognized`` for an undefined pair."""
    motion = matrix.get(before, after)
    return UNRECOGNIZED if motion is None else motion


def load_matrix(data: bytes | str) -> TransitionMatrix:
    """Parse a ``|``-separated table: header row of target postures, one row per source."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    header = None
    cells = []
    rows_seen: dict[str, int] = {}
    for number, raw in enumerate(data.split("\n"), start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        parts = [" ".join(p.split()) for p in text.split("|")]
        if header is None:
            header = parts[1:]
            if not header or any(not h for h in header) or len(set(header)) != len(header):
                raise FormatError("header must list distinct target postures", number)
            continue
        if len(parts) != len(header) + 1:
            raise FormatError(f"expected {len(header) + 1} cells, got {len(parts)}", number)
        source = parts[0]
        if source not in header:
            raise FormatError(f"row posture {source!r} is not a column", number)
        if source in rows_seen:
            raise FormatError(f"row {source!r} repeated", number)
        rows_seen[source] = number
        for target, motion in zip(header, parts[1:]):
            if motion == "-":
                continue
            if not motion:
                raise FormatError(f"empty cell ({source}, {target}); use - for undefined", number)
            if source == target and motion != NO_MOTION:
                raise FormatError(f"diagonal cell for {source!r} must be {NO_MOTION!r}", number)
            cells.append((source, target, motion))
    if header is None:
        raise FormatError("empty transition matrix")
    missing = [p for p in header if p not in rows_seen]
    if missing:
        raise FormatError(f"no row for postures {missing}")
    return TransitionMatrix(tuple(header), tuple(cells))


def dump_matrix(matrix: TransitionMatrix) -> bytes:
    names = matrix.postures
    table = [["from \\ to", *names]]
    for a in names:
        table.append([a, *(matrix._lookup.get((a, b), "-") for b in names)])
    widths = [max(len(row[k]) for row in table) for k in range(len(table[0]))]
    lines = [" | ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in table]
    return ("\n".join(lines) + "\n").encode("utf-8")


@lru_cache(maxsize=None)
def default_matrix() -> TransitionMatrix:
    text = resources.files(__package__).joinpath("data/transitions.txt").read_bytes()
    return load_matrix(text)


def check_matrix_covers(matrix: TransitionMatrix, postures: Sequence[str]) -> list[str]:
    """Warnings for rule postures missing from the matrix."""
    return [f"posture {p!r} has no row in the transition matrix; its motions are Unrecognized"
            for p in postures if p not in matrix.postures]


# ----------------------------------------------------------- key frames

def find_key_frames(seq: PostureLabelSequence) -> list[KeyFrame]:
    """Sentinels at the first and last frame plus one key frame per label change."""
    frames, labels = seq.frames, seq.labels
    if len(labels) < 2:
        raise ValueError("need at least two frames")
    keys = [KeyFrame(frames[0], None, labels[0])]
    for i in range(1, len(labels)):
        if labels[i] != labels[i - 1]:
            keys.append(KeyFrame(frames[i], labels[i - 1], labels[i]))
    if keys[-1].frame != frames[-1]:
        keys.append(KeyFrame(frames[-1], labels[-1], None))
    return keys


def body_motion_entries(motion: str, card: DataCard) -> tuple[tuple[PricedEntry, ...], tuple[str, ...]]:
    """Card rows pricing a body motion, plus warnings."""
    if motion in (NO_MOTION, UNRECOGNIZED):
        return (), ()
    if motion in HALF_BEND_MOTIONS:
        entry = card.entry("B", BEND_AND_ARISE)
        if entry is None:
            return (), (f"card has no B row {BEND_AND_ARISE!r}; {motion} not priced",)
        return (PricedEntry(entry, 0.5),), ()
    entry = card.entry("B", motion)
    if entry is None:
        return (), (f"card has no B row {motion!r}; motion not priced",)
    return (PricedEntry(entry),), ()


def segments_from_key_frames(keys: Sequence[KeyFrame], seq: PostureLabelSequence,
                             matrix: TransitionMatrix, card: DataCard) -> list[Segment]:
    """One segment per pair of consecutive key frames, labelled via the matrix."""
    pos = {f: i for i, f in enumerate(seq.frames)}
    segments = []
    for a, b in zip(keys, keys[1:]):
        before = seq.labels[pos[a.frame]]
        after = seq.labels[pos[b.frame]]
        motion = label_transition(before, after, matrix)
        entries, warnings = body_motion_entries(motion, card)
        if motion == UNRECOGNIZED:
            warnings = (f"no motion defined from {before!r} to {after!r}: manual review needed",)
        segments.append(Segment(a.frame, b.frame, before, after, motion,
                                most_entries=entries, warnings=warnings))
    return segments


# ------------------------------------------------------ action distance

def action_distance(X: np.ndarray, n_s: int, n_e: int, frames=None) -> float:
    """Horizontal displacement of the trunk origin between two frames, metres.

    ``X`` is a kinematic feature matrix; ``frames`` maps rows to frame indices
    (rows are the frame indices when omitted).
    """
    if not n_e > n_s:
        raise ValueError("n_e must exceed n_s")
    if frames is not None:
        frames = np.asarray(frames)
        r_s, r_e = int(np.searchsorted(frames, n_s)), int(np.searchsorted(frames, n_e))
    else:
        r_s, r_e = n_s, n_e
    ix, iy = FEATURE_INDEX["origin_x"], FEATURE_INDEX["origin_y"]
    return float(math.hypot(X[r_e, ix] - X[r_s, ix], X[r_e, iy] - X[r_s, iy]))


def action_distance_index(d: float, step_length: float = STEP_LENGTH,
                          within_reach: float = WITHIN_REACH) -> int:
    if d < 0:
        raise ValueError("distance must be nonnegative")
    if not MIN_ACTION_DISTANCE <= within_reach <= 2 * step_length:
        raise ValueError("within_reach must lie between 0.05 m and two steps")
    bands = ((MIN_ACTION_DISTANCE, 0), (within_reach, 1), (2 * step_length, 3),
             (4 * step_length, 6), (7 * step_length, 10))
    for limit, index in bands:
        if d <= limit:
            return index
    return 16


def distance_to_A_entry(d: float, card: DataCard, step_length: float = STEP_LENGTH,
                        within_reach: float = WITHIN_REACH) -> CardEntry:
    """Card row for an action distance; beyond 10 steps the 16 row is used."""
    index = action_distance_index(d, step_length, within_reach)
    entry = card.first_at("A", index)
    if entry is None:
        raise ValueError(f"card has no A row at index {index}")
    return entry


def price_action_distance(segments: Sequence[Segment], X: np.ndarray, frames, card: DataCard,
                          step_length: float = STEP_LENGTH,
                          within_reach: float = WITHIN_REACH) -> list[Segment]:
    """Measure A on every segment and price it where the move has an aim.

    A is priced only above 5 cm and when the segment carries a principal body
    motion or a hand action; aimless movement stays unpriced time loss.
    """
    out = []
    for seg in segments:
        d = action_distance(X, seg.start, seg.end, frames)
        has_aim = (seg.motion not in (NO_MOTION, UNRECOGNIZED)) or bool(seg.hand_actions)
        if seg.motion == UNRECOGNIZED or d <= MIN_ACTION_DISTANCE or not has_aim:
            out.append(replace(seg, action_distance=d))
            continue
        entry = distance_to_A_entry(d, card, step_length, within_reach)
        warnings = seg.warnings
        if d > 10 * step_length:
            warnings += (f"action distance {d:.2f} m exceeds the card (10 steps)",)
        out.append(_relabel(seg, action_distance=d, most_entries=(PricedEntry(entry),) + seg.most_entries,
                            warnings=warnings))
    return out


# --------------------------------------------------------- hand actions

def hand_action_entry(action: HandAction, card: DataCard) -> CardEntry:
    index = 1 if action.index_hint is None else action.index_hint
    entry = card.first_at(action.group, index)
    if entry is None:
        raise ValueError(f"card has no {action.group} row at index {index}")
    return entry


def attach_hand_actions(segments: Sequence[Segment], actions: Sequence[HandAction],
                        card: DataCard) -> list[Segment]:
    """Attach each hand action to the segment holding its frame and price it.

    A frame on a boundary belongs to the segment starting there; the last
    frame belongs to the last segment. Boundaries never move.
    """
    segs = list(segments)
    if not segs:
        if actions:
            raise ValueError("hand actions but no segments")
        return segs
    starts = [s.start for s in segs]
    attached: list[list[HandAction]] = [[] for _ in segs]
    for a in actions:
        if not segs[0].start <= a.frame <= segs[-1].end:
            raise ValueError(f"hand action at frame {a.frame} lies outside the trace")
        k = min(int(np.searchsorted(starts, a.frame, side="right")) - 1, len(segs) - 1)
        attached[k].append(a)
    out = []
    for seg, acts in zip(segs, attached):
        if not acts:
            out.append(seg)
            continue
        entries = seg.most_entries
        if seg.motion != UNRECOGNIZED:
            entries += tuple(PricedEntry(hand_action_entry(a, card)) for a in acts)
        out.append(_relabel(seg, hand_actions=seg.hand_actions + tuple(acts), most_entries=entries))
    return out


def tool_use_intervals(collisions: Sequence[CollisionEvent], last_frame: int
                       ) -> tuple[list[ToolUseInterval], list[str]]:
    """Engagement periods of object pairs from type-II begin/end events."""
    open_: dict[tuple, CollisionEvent] = {}
    intervals, warnings = [], []
    for ev in collisions:
        if ev.kind != "II":
            continue
        key = ev.pair_key
        if ev.phase == "begin":
            open_[key] = ev
        elif key in open_:
            begin = open_.pop(key)
            if ev.frame > begin.frame:
                intervals.append(ToolUseInterval(begin.frame, ev.frame, begin.object_ids))
    for begin in open_.values():
        warnings.append(f"tool use of {'/'.join(begin.object_ids)} from frame {begin.frame} "
                        f"never ends; closed at frame {last_frame}")
        if last_frame > begin.frame:
            intervals.append(ToolUseInterval(begin.frame, last_frame, begin.object_ids))
    intervals.sort(key=lambda t: (t.start, t.end))
    return intervals, warnings


def flag_unrecognizable(segments: Sequence[Segment], frame_interval: float,
                        threshold: float = IDLE_THRESHOLD) -> list[Segment]:
    """Ask for manual review of long No-motion stretches."""
    out = []
    for seg in segments:
        if seg.motion == NO_MOTION and not seg.hand_actions and seg.frames * frame_interval > threshold:
            seg = replace(seg, warnings=seg.warnings + (IDLE_WARNING,))
        out.append(seg)
    return out


def segment_sequence(seq: PostureLabelSequence, X: np.ndarray, frame_interval: float,
                     matrix: TransitionMatrix, card: DataCard,
                     actions: Sequence[HandAction] = (),
                     step_length: float = STEP_LENGTH, within_reach: float = WITHIN_REACH,
                     idle_threshold: float = IDLE_THRESHOLD) -> list[Segment]:
    """Key frames, transition labels, hand actions, action distance, idle flags."""
    keys = find_key_frames(seq)
    segments = segments_from_key_frames(keys, seq, matrix, card)
    segments = attach_hand_actions(segments, actions, card)
    segments = price_action_distance(segments, X, seq.frames, card, step_length, within_reach)
    return flag_unrecognizable(segments, frame_interval, idle_threshold)
