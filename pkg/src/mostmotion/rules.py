"""Rule language for standard static postures and hand actions.

A rule file holds optional directives and ``Rules`` ... ``\\Rules`` blocks::

    Threshold 0.5
    Gesture Pointing Index = closed open closed closed closed

    Rules
    B sitting
    Trunk Z Axis 0 5
    Left Leg Relative Angle 90 20
    Right Leg Relative Angle 90 20
    \\Rules

    Rules
    G Touching button
    Virtual Object button-*
    Interaction Part Hand Gesture Pointing Index
    Trigger Positive
    \\Rules

The second line of a block gives the MOST parameter and the description.
Posture clauses are ``<body part> <parameter> <mean> <variance>``; tokens in
parentheses are annotations and are ignored.
"""
from __future__ import annotations

import fnmatch
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from os import PathLike
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .datacard import GROUPS
from .kinematics import FEATURE_INDEX, FEATURE_NAMES, SEGMENT_NAMES, FrameKinematics
from .trace_io import CollisionEvent, FormatError, GestureSample

UNKNOWN = "unknown"
GESTURE_WINDOW = 2  # frames between a collision and its gesture sample

# body part keyword -> {parameter keyword: (canonical parameter name, feature)}
_LIMB_KEYWORDS = {"UA": "Upper Arm", "FA": "Forearm", "UL": "Upper Leg", "LL": "Lower Leg"}
BODY_PARTS: dict[str, dict[str, tuple[str, str]]] = {
    "Trunk": {
        "Z Axis": ("trunk_inclination", "trunk_inclination"),
        "Displacement Z": ("trunk_displacement_z", "displacement_z"),
    },
}
for _side in ("Left", "Right"):
    _s = _side.lower()
    BODY_PARTS[f"{_side} Leg"] = {"Relative Angle": ("leg_relative_angle", f"leg_angle_{_s}")}
    BODY_PARTS[f"{_side} Arm"] = {"Relative Angle": ("arm_relative_angle", f"arm_angle_{_s}")}
    for _seg, _kw in _LIMB_KEYWORDS.items():
        BODY_PARTS[f"{_side} {_kw}"] = {
            a.capitalize(): (f"limb_orientation_{a}", f"{SEGMENT_NAMES[_seg]}_{_s}_{a}")
            for a in ("alpha", "beta", "gamma")
        }
# longest first so that "Left Upper Leg" wins over "Left Leg"-style prefixes
_PART_ORDER = sorted(BODY_PARTS, key=len, reverse=True)

FINGER_STATES = ("open", "closed", "any")


class RuleError(FormatError):
    """Malformed rule file."""


@dataclass(frozen=True)
class Clause:
    body_part: str
    parameter: str
    mean: float
    variance: float

    def __post_init__(self):
        if self.body_part not in BODY_PARTS:
            raise ValueError(f"unknown body part {self.body_part!r}")
        if self.parameter not in BODY_PARTS[self.body_part]:
            raise ValueError(f"unknown parameter {self.parameter!r} for {self.body_part}")
        if not self.variance > 0:
            raise ValueError(f"variance must be positive, got {self.variance!r}")

    @property
    def parameter_name(self) -> str:
        return BODY_PARTS[self.body_part][self.parameter][0]

    @property
    def feature(self) -> str:
        return BODY_PARTS[self.body_part][self.parameter][1]

    @property
    def bounds(self) -> tuple[float, float]:
        return self.mean - self.variance, self.mean + self.variance

    def holds(self, value: float) -> bool:
        lo, hi = self.bounds
        return lo < value < hi


@dataclass(frozen=True)
class PostureRule:
    group: str
    label: str
    clauses: tuple[Clause, ...]
    priority: int

    def __post_init__(self):
        if not self.clauses:
            raise ValueError(f"posture {self.label!r} has no clauses")


@dataclass(frozen=True)
class GesturePattern:
    name: str
    fingers: tuple[str, str, str, str, str]  # thumb..little, open|closed|any

    def __post_init__(self):
        if len(self.fingers) != 5 or any(f not in FINGER_STATES for f in self.fingers):
            raise ValueError(f"gesture {self.name!r} needs five of {FINGER_STATES}")
        if all(f == "any" for f in self.fingers):
            raise ValueError(f"gesture {self.name!r} constrains no finger")

    @property
    def code(self) -> int | None:
        """5-bit open/closed code (bit k set = finger k closed); None with wildcards."""
        if "any" in self.fingers:
            return None
        return sum(1 << k for k, f in enumerate(self.fingers) if f == "closed")


@dataclass(frozen=True)
class HandActionRule:
    group: str  # G or P
    label: str
    object_id: str  # identifier or fnmatch pattern
    gesture: GesturePattern
    trigger: str  # positive | negative
    priority: int
    index_hint: int | None = None

    def __post_init__(self):
        if self.group not in ("G", "P"):
            raise ValueError("hand actions belong to group G or P")
        if self.trigger not in ("positive", "negative"):
            raise ValueError(f"unknown trigger {self.trigger!r}")

    @property
    def phase(self) -> str:
        return "begin" if self.trigger == "positive" else "end"

    def matches_object(self, object_id: str) -> bool:
        return fnmatch.fnmatchcase(object_id, self.object_id)


@dataclass(frozen=True)
class RuleSet:
    postures: tuple[PostureRule, ...]
    hands: tuple[HandActionRule, ...] = ()
    gestures: tuple[GesturePattern, ...] = ()
    threshold: float = 0.5

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError("gesture threshold must be in (0, 1)")
        labels = [r.label for r in self.postures]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate posture label")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(r.label for r in self.postures)

    def gesture(self, name: str) -> GesturePattern:
        for g in self.gestures:
            if g.name == name:
                return g
        raise KeyError(name)


@dataclass(frozen=True)
class HandAction:
    frame: int
    group: str
    label: str
    object_id: str
    hand: str | None = None
    index_hint: int | None = None


@dataclass(frozen=True)
class PostureLabelSequence:
    frames: tuple[int, ...]
    labels: tuple[str, ...]

    def __len__(self):
        return len(self.labels)


# ---------------------------------------------------------------- parsing

_ANNOTATION = re.compile(r'[“"][^”"]*[”"]|\([^)]*\)')


def _strip_annotations(text: str) -> list[str]:
    return _ANNOTATION.sub(" ", text).split()


def _parse_number(tok: str, number: int, what: str) -> float:
    try:
        return float(tok)
    except ValueError:
        raise RuleError(f"{what} is not a number: {tok!r}", number) from None


def _parse_clause(text: str, number: int) -> Clause:
    tokens = _strip_annotations(text)
    if len(tokens) < 4:
        raise RuleError("expected: body part, parameter, mean, variance", number)
    mean = _parse_number(tokens[-2], number, "mean")
    variance = _parse_number(tokens[-1], number, "variance")
    head = " ".join(tokens[:-2])
    for part in _PART_ORDER:
        if head.lower().startswith(part.lower() + " "):
            param_text = head[len(part) + 1:]
            break
    else:
        raise RuleError(f"unknown body part in {head!r}", number)
    for param in BODY_PARTS[part]:
        if param.lower() == param_text.lower():
            break
    else:
        raise RuleError(f"unknown parameter name {param_text!r} for {part}", number)
    if not variance > 0:
        raise RuleError(f"variance must be positive, got {variance!r}", number)
    return Clause(part, param, mean, variance)


def _parse_hand_block(group, label, body, start, priority, gestures) -> HandActionRule:
    fields: dict[str, tuple[str, int]] = {}
    for number, text in body:
        low = text.lower()
        if low.startswith("virtual object "):
            key, value = "object", text[len("virtual object "):].strip()
        elif low.startswith("interaction part hand gesture "):
            key, value = "gesture", text[len("interaction part hand gesture "):].strip()
        elif low.startswith("hand gesture "):
            key, value = "gesture", text[len("hand gesture "):].strip()
        elif low.startswith("trigger "):
            key, value = "trigger", text[len("trigger "):].strip().lower()
        elif low.startswith("index "):
            key, value = "index", text[len("index "):].strip()
        else:
            raise RuleError(f"unknown interaction field in {text!r}", number)
        if key in fields:
            raise RuleError(f"repeated {key} field", number)
        fields[key] = (value, number)
    for key in ("object", "gesture", "trigger"):
        if key not in fields:
            raise RuleError(f"hand action {label!r} lacks a {key} field", start)
    if group not in ("G", "P"):
        raise RuleError(f"hand actions must be group G or P, got {group}", start)
    name, number = fields["gesture"]
    if name not in gestures:
        raise RuleError(f"unknown gesture {name!r}", number)
    trigger, number = fields["trigger"]
    if trigger not in ("positive", "negative"):
        raise RuleError(f"trigger must be Positive or Negative, got {trigger!r}", number)
    index_hint = None
    if "index" in fields:
        tok, number = fields["index"]
        try:
            index_hint = int(tok)
        except ValueError:
            raise RuleError(f"index is not an integer: {tok!r}", number) from None
    return HandActionRule(group, label, fields["object"][0], gestures[name], trigger,
                          priority, index_hint)


def parse_rules(data: bytes | str) -> RuleSet:
    """Parse rule text into a :class:`RuleSet`; priorities follow file order."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    gestures: dict[str, GesturePattern] = {}
    threshold = 0.5
    blocks = []
    block = None
    for number, raw in enumerate(data.split("\n"), start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        if block is not None:
            if text == "\\Rules":
                blocks.append(block)
                block = None
            elif text == "Rules":
                raise RuleError(f"block opened on line {block[0]} is not closed before a new one",
                                number)
            else:
                block[1].append((number, text))
            continue
        if text == "Rules":
            block = (number, [])
        elif text == "\\Rules":
            raise RuleError("\\Rules without a matching Rules", number)
        elif text.startswith("Threshold "):
            threshold = _parse_number(text.split(None, 1)[1], number, "threshold")
            if not 0 < threshold < 1:
                raise RuleError("threshold must be in (0, 1)", number)
        elif text.startswith("Gesture "):
            name, sep, states = text[len("Gesture "):].partition("=")
            name = " ".join(name.split())
            if not sep or not name:
                raise RuleError("expected: Gesture <name> = <5 finger states>", number)
            if name in gestures:
                raise RuleError(f"gesture {name!r} defined twice", number)
            fingers = tuple(s.lower() for s in states.split())
            try:
                gestures[name] = GesturePattern(name, fingers)
            except ValueError as exc:
                raise RuleError(str(exc), number) from None
        else:
            raise RuleError(f"unexpected line outside a Rules block: {text!r}", number)
    if block is not None:
        raise RuleError("unterminated Rules block (missing \\Rules)", block[0])

    postures, hands = [], []
    labels: dict[str, int] = {}
    for priority, (start, body) in enumerate(blocks):
        if not body:
            raise RuleError("empty Rules block", start)
        number, header = body[0]
        parts = header.split(None, 1)
        if len(parts) != 2 or parts[0] not in GROUPS:
            raise RuleError(f"expected a MOST parameter and a description, got {header!r}", number)
        group, label = parts[0], " ".join(parts[1].split())
        rest = body[1:]
        is_hand = any(t.lower().startswith(("virtual object", "trigger", "interaction part",
                                            "hand gesture")) for _, t in rest)
        if is_hand:
            hands.append(_parse_hand_block(group, label, rest, start, priority, gestures))
            continue
        if not rest:
            raise RuleError(f"posture {label!r} has no clauses", start)
        if label in labels:
            raise RuleError(f"posture {label!r} already defined on line {labels[label]}", number)
        labels[label] = number
        clauses = tuple(_parse_clause(t, n) for n, t in rest)
        postures.append(PostureRule(group, label, clauses, priority))
    return RuleSet(tuple(postures), tuple(hands), tuple(gestures.values()), threshold)


def _fmt(x: float) -> str:
    return repr(float(x))


def dump_rules(rules: RuleSet) -> bytes:
    """Serialize a rule set; ``parse_rules`` of the result reproduces it."""
    lines = [f"Threshold {_fmt(rules.threshold)}", ""]
    for g in rules.gestures:
        lines.append(f"Gesture {g.name} = {' '.join(g.fingers)}")
    items = sorted([*rules.postures, *rules.hands], key=lambda r: r.priority)
    for r in items:
        lines += ["", "Rules", f"{r.group} {r.label}"]
        if isinstance(r, PostureRule):
            lines += [f"{c.body_part} {c.parameter} {_fmt(c.mean)} {_fmt(c.variance)}" for c in r.clauses]
        else:
            lines.append(f"Virtual Object {r.object_id}")
            lines.append(f"Interaction Part Hand Gesture {r.gesture.name}")
            lines.append(f"Trigger {r.trigger.capitalize()}")
            if r.index_hint is not None:
                lines.append(f"Index {r.index_hint}")
        lines.append("\\Rules")
    return ("\n".join(lines) + "\n").encode("utf-8")


@lru_cache(maxsize=None)
def default_rules() -> RuleSet:
    text = resources.files(__package__).joinpath("data/default_rules.txt").read_bytes()
    return parse_rules(text)


def load_rules(source) -> RuleSet:
    """Accept a RuleSet, rule text (bytes), a path, or None for the defaults."""
    if source is None:
        return default_rules()
    if isinstance(source, RuleSet):
        return source
    if isinstance(source, bytes):
        return parse_rules(source)
    if isinstance(source, (str, PathLike)):
        return parse_rules(Path(source).read_bytes())
    raise TypeError(f"cannot load rules from {type(source).__name__}")


# ------------------------------------------------------------ evaluation

def _features_of(kin) -> dict[str, float]:
    if isinstance(kin, FrameKinematics):
        return kin.features()
    if isinstance(kin, dict):
        return kin
    row = np.asarray(kin, dtype=float)
    return {name: row[i] for i, name in enumerate(FEATURE_NAMES)}


def classify_frame(kin, rules: RuleSet) -> str:
    """Posture of one frame: first rule (by priority) whose clauses all hold."""
    values = _features_of(kin)
    for rule in sorted(rules.postures, key=lambda r: r.priority):
        if all(c.holds(values[c.feature]) for c in rule.clauses):
            return rule.label
    return UNKNOWN


def classify_frames(X: np.ndarray, rules: RuleSet) -> np.ndarray:
    """Vectorized :func:`classify_frame` over a feature matrix; object array of labels."""
    n = X.shape[0]
    out = np.full(n, UNKNOWN, dtype=object)
    free = np.ones(n, dtype=bool)
    for rule in sorted(rules.postures, key=lambda r: r.priority):
        mask = free.copy()
        for c in rule.clauses:
            lo, hi = c.bounds
            col = X[:, FEATURE_INDEX[c.feature]]
            mask &= (col > lo) & (col < hi)
        out[mask] = rule.label
        free &= ~mask
    return out


def debounce(raw: Sequence[str], dwell: int) -> list[str]:
    """Suppress posture changes shorter than ``dwell`` frames.

    A new label is accepted once it has been seen on ``dwell`` consecutive
    frames; those frames are relabelled from their start, so the change lands
    on the first frame of the new run. Unknown frames keep the accepted label
    and break a pending run. The first known label is accepted at once and
    also covers any leading unknown frames.
    """
    if dwell < 1:
        raise ValueError("dwell must be at least 1")
    out: list[str | None] = [None] * len(raw)
    current = None
    cand, cand_start, cand_len = None, 0, 0
    for i, label in enumerate(raw):
        if label == UNKNOWN or label is None:
            cand, cand_len = None, 0
            out[i] = current
            continue
        if current is None:
            current = label
            for j in range(i):
                out[j] = label
            out[i] = label
            continue
        if label == current:
            cand, cand_len = None, 0
            out[i] = current
            continue
        if label == cand:
            cand_len += 1
        else:
            cand, cand_start, cand_len = label, i, 1
        if cand_len >= dwell:
            current = cand
            for j in range(cand_start, i + 1):
                out[j] = current
            cand, cand_len = None, 0
        else:
            out[i] = current
    if current is None:
        raise ValueError("no recognizable posture in the trace")
    return out


def classify_sequence(X, rules: RuleSet, dwell: int = 3, frames=None) -> PostureLabelSequence:
    """Per-frame postures of a feature matrix, debounced over ``dwell`` frames."""
    X = np.asarray(X, dtype=float)
    raw = classify_frames(X, rules)
    labels = debounce(list(raw), dwell)
    if frames is None:
        frames = range(len(labels))
    return PostureLabelSequence(tuple(int(f) for f in frames), tuple(labels))


def match_gesture(sample: GestureSample, pattern: GesturePattern, threshold: float = 0.5) -> bool:
    """True iff every constrained finger is open (< threshold) or closed (>= threshold)."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must be in (0, 1)")
    for state, flex in zip(pattern.fingers, sample.flexion):
        if state == "open" and not flex < threshold:
            return False
        if state == "closed" and not flex >= threshold:
            return False
    return True


def _nearest_sample(samples: list[GestureSample], frames: np.ndarray, frame: int,
                    window: int) -> GestureSample | None:
    if not samples:
        return None
    lo = int(np.searchsorted(frames, frame - window, side="left"))
    hi = int(np.searchsorted(frames, frame + window, side="right"))
    best = None
    for s in samples[lo:hi]:
        if best is None or abs(s.frame - frame) < abs(best.frame - frame):
            best = s
    return best


def detect_hand_actions(gestures: Sequence[GestureSample], collisions: Sequence[CollisionEvent],
                        hand_rules: Sequence[HandActionRule], threshold: float = 0.5,
                        window: int = GESTURE_WINDOW) -> list[HandAction]:
    """Hand actions fired by type-I collisions backed by a matching gesture.

    For every type-I event the rules are tried in priority order; a rule fires
    when its trigger matches the event phase, its object pattern matches the
    touched object and the gesture sample of the touching hand nearest to the
    event (within ``window`` frames) fits the rule's pattern. At most one
    action fires per event. Gestures without collisions never fire.
    """
    by_hand: dict[str, tuple[list, np.ndarray]] = {}
    for side in ("left", "right"):
        ss = sorted((g for g in gestures if g.hand == side), key=lambda g: g.frame)
        by_hand[side] = (ss, np.array([g.frame for g in ss], dtype=np.int64))
    ordered = sorted(hand_rules, key=lambda r: r.priority)
    actions = []
    for ev in collisions:
        if ev.kind != "I":
            continue
        hands = (ev.hand,) if ev.hand else ("right", "left")
        for rule in ordered:
            if rule.phase != ev.phase or not rule.matches_object(ev.object_ids[0]):
                continue
            fired = None
            for side in hands:
                sample = _nearest_sample(*by_hand[side], ev.frame, window)
                if sample is not None and match_gesture(sample, rule.gesture, threshold):
                    fired = side
                    break
            if fired is not None:
                actions.append(HandAction(ev.frame, rule.group, rule.label, ev.object_ids[0],
                                          fired, rule.index_hint))
                break
    actions.sort(key=lambda a: a.frame)
    return actions


def overlapping_postures(rules: RuleSet) -> list[tuple[str, str]]:
    """Pairs of posture rules whose accepted parameter boxes intersect.

    A parameter constrained by only one rule does not separate the pair.
    Clauses on the same parameter within one rule are intersected first.
    """
    def box(rule):
        out: dict[str, tuple[float, float]] = {}
        for c in rule.clauses:
            lo, hi = c.bounds
            if c.feature in out:
                plo, phi = out[c.feature]
                lo, hi = max(lo, plo), min(hi, phi)
            out[c.feature] = (lo, hi)
        return out

    pairs = []
    rs = sorted(rules.postures, key=lambda r: r.priority)
    boxes = [box(r) for r in rs]
    for i in range(len(rs)):
        for j in range(i + 1, len(rs)):
            a, b = boxes[i], boxes[j]
            disjoint = any(a[k][0] >= a[k][1] for k in a) or any(b[k][0] >= b[k][1] for k in b)
            for k in a.keys() & b.keys():
                lo = max(a[k][0], b[k][0])
                hi = min(a[k][1], b[k][1])
                if lo >= hi:
                    disjoint = True
            if not disjoint:
                pairs.append((rs[i].label, rs[j].label))
    return pairs


class PostureClassifier(ClassifierMixin, BaseEstimator):
    """Rule-driven posture classifier over :class:`TraceKinematics` output.

    Nothing is learned: ``fit`` resolves the rule set and exposes the posture
    vocabulary as ``classes_``. ``predict`` returns debounced labels;
    ``predict_raw`` the first-match label of every frame.
    """

    def __init__(self, rules=None, dwell=3):
        self.rules = rules
        self.dwell = dwell

    def fit(self, X=None, y=None):
        if int(self.dwell) != self.dwell or self.dwell < 1:
            raise ValueError(f"dwell must be a positive integer, got {self.dwell!r}")
        self.rules_ = load_rules(self.rules)
        self.classes_ = np.array([*self.rules_.labels, UNKNOWN], dtype=object)
        return self

    def _check_X(self, X):
        check_is_fitted(self, "rules_")
        X = check_array(X, dtype=float)
        if X.shape[1] != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} kinematic features, got {X.shape[1]}")
        return X

    def predict_raw(self, X):
        return classify_frames(self._check_X(X), self.rules_)

    def predict(self, X):
        X = self._check_X(X)
        return np.asarray(debounce(list(classify_frames(X, self.rules_)), int(self.dwell)),
                          dtype=object)
