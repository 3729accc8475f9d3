"""Synthetic motion traces from task scripts, used as a test oracle.

A task script is a list of steps::

    skeleton trunk=0.5 thigh=0.45
    hold standing 1.0
    transition bending 0.8
    grasp box-1 Fist at -0.6
    hold bending 0.4
    walk 1.0 0.5 1.2
    release box-1 Flat Hand

Holds keep the pose, transitions ease between pose templates with a cubic
profile, walks translate the whole skeleton horizontally and hand events emit
a glove sample plus a type-I collision (grasp/touch begin, release end). A
hand event happens at the end of the previous step unless ``at -t`` moves it
``t`` seconds back into that step.

Poses come from a minimal forward model: a rigid trunk plus four two-link
limb chains in the sagittal plane. The trunk origin keeps its horizontal
position during posture changes, so horizontal trunk motion comes only from
walk steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .datacard import DataCard, default_card
from .kinematics import compute_btcs, kinematics_table
from .rules import RuleSet, classify_frame, default_rules
from .segmentation import (
    MIN_ACTION_DISTANCE, NO_MOTION, TransitionMatrix, body_motion_entries,
    default_matrix, label_transition,
)
from .trace_io import (
    MARKER_INDEX, N_MARKERS, CollisionEvent, FormatError, GestureSample, MotionTrace,
    check_pairing,
)

HAND_EVENT_GROUPS = {"grasp": "G", "touch": "G", "release": "P"}
FLEXION = {"open": 0.1, "closed": 0.9, "any": 0.5}
DEFAULT_NOISE = 0.003  # metres, tracker repeatability
ARM_FLEXION = 10.0  # default elbow angle in degrees when no rule constrains it

# transitions whose eased path crosses no other posture's accepted region
DIRECT_TRANSITIONS = frozenset({
    ("standing", "sitting"), ("sitting", "standing"),
    ("standing", "half-bending"), ("half-bending", "standing"),
    ("half-bending", "bending"), ("bending", "half-bending"),
})
WALK_DISTANCES = (0.3, 1.0, 2.2, 4.0, 6.2)  # band centres of the A column


class ScriptError(ValueError):
    """Task script that cannot be synthesized."""


@dataclass(frozen=True)
class Skeleton:
    shoulder_width: float = 0.40
    hip_width: float = 0.26
    trunk: float = 0.50
    upper_arm: float = 0.30
    forearm: float = 0.26
    thigh: float = 0.45
    shank: float = 0.45

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ScriptError(f"skeleton {f.name} must be positive")


@dataclass(frozen=True)
class Hold:
    posture: str
    duration: float


@dataclass(frozen=True)
class Transition:
    posture: str
    duration: float


@dataclass(frozen=True)
class Walk:
    dx: float
    dy: float
    duration: float


@dataclass(frozen=True)
class HandEvent:
    action: str  # grasp | release | touch
    object_id: str
    gesture: str
    at: float = 0.0  # seconds relative to the end of the previous step, <= 0
    hand: str = "right"

    @property
    def duration(self) -> float:
        return 0.0


@dataclass(frozen=True)
class TaskScript:
    steps: tuple
    skeleton: Skeleton = field(default_factory=Skeleton)

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))
        if not self.steps:
            raise ScriptError("empty script")
        for k, step in enumerate(self.steps):
            if isinstance(step, HandEvent):
                if step.action not in HAND_EVENT_GROUPS:
                    raise ScriptError(f"step {k + 1}: unknown hand action {step.action!r}")
                if step.at > 0:
                    raise ScriptError(f"step {k + 1}: hand events cannot be scheduled ahead")
                if k == 0 and step.at != 0:
                    raise ScriptError("step 1: no earlier step to move the event into")
                if k > 0 and -step.at > getattr(self.steps[k - 1], "duration", 0.0):
                    raise ScriptError(f"step {k + 1}: offset reaches beyond the previous step")
            elif not step.duration > 0:
                raise ScriptError(f"step {k + 1}: duration must be positive")

    @property
    def duration(self) -> float:
        return sum(s.duration for s in self.steps)


@dataclass(frozen=True)
class PoseTemplate:
    """Parameter-space pose; angles in degrees."""

    inclination: float  # trunk versus world down, forward lean
    thigh_pitch: float  # thigh versus world down, forward
    knee: float  # angle between thigh and shank vectors
    shoulder: float = 0.0  # upper arm versus world down, forward
    elbow: float = ARM_FLEXION

    def as_array(self) -> np.ndarray:
        return np.array([self.inclination, self.thigh_pitch, self.knee, self.shoulder, self.elbow])


def _center(rule, feature_prefix: str, default: float) -> float:
    vals = [c.mean for c in rule.clauses if c.feature.startswith(feature_prefix)]
    return float(np.mean(vals)) if vals else default


def pose_templates(rules: RuleSet | None = None) -> dict[str, PoseTemplate]:
    """One template per posture rule, at the centre of its accepted intervals.

    Only trunk inclination, leg and arm relative angles are inverted; the
    thigh pitch equals the knee angle so the shank stays vertical.
    """
    rules = rules or default_rules()
    out = {}
    for rule in rules.postures:
        knee = _center(rule, "leg_angle", 0.0)
        out[rule.label] = PoseTemplate(
            inclination=_center(rule, "trunk_inclination", 0.0),
            thigh_pitch=knee,
            knee=knee,
            elbow=_center(rule, "arm_angle", ARM_FLEXION),
        )
    return out


def check_templates(rules: RuleSet | None = None, skeleton: Skeleton | None = None) -> None:
    """Raise :class:`ScriptError` unless every template classifies as itself."""
    rules = rules or default_rules()
    skeleton = skeleton or Skeleton()
    for name, tpl in pose_templates(rules).items():
        pos = forward_model(tpl.as_array()[None, :], np.zeros((1, 2)), skeleton)
        table = kinematics_table(pos, compute_btcs(pos[0]))
        got = classify_frame(table[0], rules)
        if got != name:
            raise ScriptError(f"template for {name!r} classifies as {got!r}")


def forward_model(params: np.ndarray, offsets: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """Marker positions (n, 13, 3) for pose parameters (n, 5) and horizontal offsets (n, 2).

    The subject faces world +Y with the right shoulder toward +X; the ankles
    of a straight pose touch z = 0.
    """
    sk = skeleton
    n = params.shape[0]
    phi, tau, knee, sho, elb = np.radians(params).T
    up = np.array([0.0, 0.0, 1.0])
    fwd = np.array([0.0, 1.0, 0.0])
    right = np.array([1.0, 0.0, 0.0])

    def sagittal(angle):  # unit vector tilted forward from world down
        return -np.cos(angle)[:, None] * up + np.sin(angle)[:, None] * fwd

    height = sk.trunk * np.cos(phi) + sk.thigh * np.cos(tau) + sk.shank * np.cos(tau - knee)
    origin = np.column_stack([offsets[:, 0], offsets[:, 1], height])
    pelvis = origin + sk.trunk * sagittal(phi)
    out = np.empty((n, N_MARKERS, 3))
    for side, sign in (("right", 1.0), ("left", -1.0)):
        shoulder = origin + sign * 0.5 * sk.shoulder_width * right
        elbow = shoulder + sk.upper_arm * sagittal(sho)
        wrist = elbow + sk.forearm * sagittal(sho + elb)
        hip = pelvis + sign * 0.5 * sk.hip_width * right
        knee_p = hip + sk.thigh * sagittal(tau)
        ankle = knee_p + sk.shank * sagittal(tau - knee)
        for name, p in (("shoulder", shoulder), ("elbow", elbow), ("wrist", wrist),
                        ("hip", hip), ("knee", knee_p), ("ankle", ankle)):
            out[:, MARKER_INDEX[f"{side}_{name}"]] = p
    out[:, MARKER_INDEX["pelvis"]] = pelvis
    return out


def _ease(u: np.ndarray) -> np.ndarray:
    return u * u * (3.0 - 2.0 * u)


def _timeline(script: TaskScript, templates: dict[str, PoseTemplate]):
    """Pieces (t0, t1, pose0, pose1, off0, off1) and timed hand events."""
    first = script.steps[0]
    start = first.posture if isinstance(first, (Hold,)) else "standing"
    if start not in templates:
        raise ScriptError(f"unknown posture {start!r}")
    posture = start
    pose = templates[start].as_array()
    off = np.zeros(2)
    t = 0.0
    pieces, events = [], []
    for k, step in enumerate(script.steps, start=1):
        if isinstance(step, Hold):
            if step.posture not in templates:
                raise ScriptError(f"step {k}: unknown posture {step.posture!r}")
            if step.posture != posture:
                raise ScriptError(f"step {k}: hold {step.posture!r} while in {posture!r}; "
                                  "add a transition")
            pieces.append((t, t + step.duration, pose, pose, off, off))
        elif isinstance(step, Transition):
            if step.posture not in templates:
                raise ScriptError(f"step {k}: unknown posture {step.posture!r}")
            target = templates[step.posture].as_array()
            pieces.append((t, t + step.duration, pose, target, off, off))
            pose, posture = target, step.posture
        elif isinstance(step, Walk):
            new = off + np.array([step.dx, step.dy])
            pieces.append((t, t + step.duration, pose, pose, off, new))
            off = new
        else:
            events.append((t + step.at, step))
        t += step.duration
    return pieces, events, t


def synthesize(script: TaskScript, frame_rate: float = 25.0, noise_std: float = DEFAULT_NOISE,
               seed: int = 0, rules: RuleSet | None = None
               ) -> tuple[MotionTrace, list[GestureSample], list[CollisionEvent]]:
    """Marker trace, glove samples and collision events for a task script.

    Deterministic for a given seed. Positions are rounded to micrometres so
    the written files are compact.
    """
    if not frame_rate > 0:
        raise ScriptError("frame rate must be positive")
    if not noise_std >= 0:
        raise ScriptError("noise must be nonnegative")
    rules = rules or default_rules()
    templates = pose_templates(rules)
    pieces, events, total = _timeline(script, templates)
    n = int(round(total * frame_rate))
    if n < 2:
        raise ScriptError("script shorter than two frames")
    times = np.arange(n) / frame_rate
    starts = np.array([p[0] for p in pieces])
    which = np.clip(np.searchsorted(starts, times, side="right") - 1, 0, len(pieces) - 1)
    params = np.empty((n, 5))
    offsets = np.empty((n, 2))
    for k, (t0, t1, p0, p1, o0, o1) in enumerate(pieces):
        rows = which == k
        if not rows.any():
            continue
        s = _ease(np.clip((times[rows] - t0) / (t1 - t0), 0.0, 1.0))[:, None]
        params[rows] = p0 + s * (p1 - p0)
        offsets[rows] = o0 + s * (o1 - o0)
    positions = forward_model(params, offsets, script.skeleton)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        positions = positions + rng.normal(0.0, noise_std, positions.shape)
    positions = np.round(positions, 6) + 0.0  # drop negative zeros
    trace = MotionTrace(np.arange(n), times, positions, 1.0 / frame_rate)

    gestures, collisions = [], []
    contact: dict[str, str] = {}
    for t, ev in events:
        frame = min(int(round(t * frame_rate)), n - 1)
        try:
            pattern = rules.gesture(ev.gesture)
        except KeyError:
            raise ScriptError(f"unknown gesture {ev.gesture!r}") from None
        flex = tuple(FLEXION[f] for f in pattern.fingers)
        gestures.append(GestureSample(frame, ev.hand, flex))
        if ev.action == "release":  # end the contact with the part that began it
            part = contact.pop(ev.object_id, f"{ev.hand}-hand")
            phase = "end"
        else:
            part = f"{ev.hand}-index-tip" if ev.action == "touch" else f"{ev.hand}-hand"
            contact[ev.object_id] = part
            phase = "begin"
        collisions.append(CollisionEvent(frame, "I", (ev.object_id,), phase, part))
    gestures.sort(key=lambda g: g.frame)
    collisions.sort(key=lambda c: c.frame)
    try:
        check_pairing(collisions)
    except ValueError as exc:
        raise ScriptError(f"hand events do not pair up: {exc}") from None
    return trace, gestures, collisions


def expected_motions(script: TaskScript, matrix: TransitionMatrix | None = None,
                     card: DataCard | None = None) -> list[str]:
    """Segment labels a correct analysis must recover from the script alone.

    Each posture transition closes one segment; everything after the last
    transition forms a trailing No-motion segment. A hand event moved back
    into a transition (``at < 0``) counts for the segment that transition
    closes, so its offset must put it before the new posture registers.
    Transitions are assumed to cross no third posture.
    """
    matrix = matrix or default_matrix()
    card = card or default_card()
    posture = script.steps[0].posture if isinstance(script.steps[0], Hold) else "standing"
    closed: list[tuple[str, np.ndarray, list[str]]] = []
    walk = np.zeros(2)
    hands: list[str] = []
    prev = None
    for step in script.steps:
        if isinstance(step, Walk):
            walk = walk + (step.dx, step.dy)
        elif isinstance(step, HandEvent):
            group = HAND_EVENT_GROUPS[step.action]
            if step.at < 0 and isinstance(prev, Transition):
                closed[-1][2].append(group)
            else:
                hands.append(group)
        elif isinstance(step, Transition):
            closed.append((label_transition(posture, step.posture, matrix), walk, hands))
            posture = step.posture
            walk, hands = np.zeros(2), []
        if not isinstance(step, HandEvent):
            prev = step
    closed.append((NO_MOTION, walk, hands))

    labels = []
    for motion, w, hs in closed:
        entries, _ = body_motion_entries(motion, card)
        letters = ""
        if (motion != NO_MOTION or hs) and math.hypot(*w) > MIN_ACTION_DISTANCE:
            letters += "A"
        if entries:
            letters += "B"
        letters += "".join(hs)
        labels.append(letters or motion)
    return labels


def random_script(seed: int, length: int, frame_rate: float = 25.0, dwell: int = 3) -> TaskScript:
    """A valid random script of ``length`` steps over the default postures.

    Holds last at least three dwell periods, transitions only join postures
    whose eased path crosses no third posture, walks happen while standing and
    every grasp is eventually followed by a release of the same object.
    """
    if length < 1:
        raise ValueError("length must be at least 1")
    rng = np.random.default_rng(seed)
    min_hold = 3 * dwell / frame_rate
    postures = sorted({a for a, _ in DIRECT_TRANSITIONS})
    posture = postures[rng.integers(len(postures))]
    steps: list = []
    held: str | None = None
    n_objects = 0

    def hold():
        return Hold(posture, round(float(rng.uniform(min_hold + 0.04, 1.2)), 2))

    while len(steps) < length:
        remaining = length - len(steps)
        if not steps or not isinstance(steps[-1], Hold) or remaining == 1:
            steps.append(hold())
            continue
        options = ["transition", "hold"]
        if posture == "standing":
            options.append("walk")
        options.append("release" if held else "grasp")
        kind = options[rng.integers(len(options))]
        if kind == "transition":
            targets = sorted(b for a, b in DIRECT_TRANSITIONS if a == posture)
            posture = targets[rng.integers(len(targets))]
            steps.append(Transition(posture, round(float(rng.uniform(0.6, 1.2)), 2)))
        elif kind == "walk":
            d = WALK_DISTANCES[rng.integers(len(WALK_DISTANCES))]
            heading = rng.uniform(0, 2 * math.pi)
            dx, dy = round(d * math.cos(heading), 4), round(d * math.sin(heading), 4)
            steps.append(Walk(dx, dy, round(max(0.4, d / 1.2), 2)))
        elif kind == "grasp":
            n_objects += 1
            held = f"obj-{n_objects}"
            steps.append(HandEvent("grasp", held, "Fist"))
        elif kind == "release":
            steps.append(HandEvent("release", held, "Flat Hand"))
            held = None
        else:
            steps.append(hold())
    return TaskScript(tuple(steps))


def lifting_script() -> TaskScript:
    """Lift without walking: half bend, full bend with grasp, arise with release."""
    return TaskScript((
        Hold("standing", 1.0),
        Transition("half-bending", 0.8),
        Transition("bending", 1.0),
        HandEvent("grasp", "box-1", "Fist", at=-0.8),
        Hold("bending", 0.4),
        Transition("half-bending", 0.8),
        Transition("standing", 1.0),
        HandEvent("release", "box-1", "Flat Hand", at=-0.8),
        Hold("standing", 2.0),
    ))


# ------------------------------------------------------------ file format

def _fmt(x: float) -> str:
    return repr(float(x))


def parse_script(data: bytes | str) -> TaskScript:
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    steps = []
    skeleton = Skeleton()
    names = {f.name for f in fields(Skeleton)}
    for number, raw in enumerate(data.split("\n"), start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        tokens = text.split()
        kind = tokens[0]

        def num(tok):
            try:
                return float(tok)
            except ValueError:
                raise FormatError(f"not a number: {tok!r}", number) from None

        if kind == "skeleton":
            values = {}
            for tok in tokens[1:]:
                key, sep, val = tok.partition("=")
                if not sep or key not in names:
                    raise FormatError(f"unknown skeleton field {tok!r}", number)
                values[key] = num(val)
            try:
                skeleton = Skeleton(**{**skeleton.__dict__, **values})
            except ScriptError as exc:
                raise FormatError(str(exc), number) from None
        elif kind in ("hold", "transition"):
            if len(tokens) != 3:
                raise FormatError(f"expected: {kind} <posture> <seconds>", number)
            cls = Hold if kind == "hold" else Transition
            steps.append(cls(tokens[1], num(tokens[2])))
        elif kind == "walk":
            if len(tokens) != 4:
                raise FormatError("expected: walk <dx> <dy> <seconds>", number)
            steps.append(Walk(num(tokens[1]), num(tokens[2]), num(tokens[3])))
        elif kind in HAND_EVENT_GROUPS:
            rest = tokens[1:]
            at, hand = 0.0, "right"
            while len(rest) >= 2 and rest[-2] in ("at", "hand"):
                if rest[-2] == "at":
                    at = num(rest[-1])
                else:
                    hand = rest[-1]
                    if hand not in ("left", "right"):
                        raise FormatError(f"unknown hand {hand!r}", number)
                rest = rest[:-2]
            if len(rest) < 2:
                raise FormatError(f"expected: {kind} <object> <gesture> [at <s>] [hand <side>]",
                                  number)
            steps.append(HandEvent(kind, rest[0], " ".join(rest[1:]), at, hand))
        else:
            raise FormatError(f"unknown step {kind!r}", number)
    try:
        return TaskScript(tuple(steps), skeleton)
    except ScriptError as exc:
        raise FormatError(str(exc)) from None


def dump_script(script: TaskScript) -> bytes:
    sk = script.skeleton
    lines = ["skeleton " + " ".join(f"{f.name}={_fmt(getattr(sk, f.name))}" for f in fields(sk))]
    for s in script.steps:
        if isinstance(s, Hold):
            lines.append(f"hold {s.posture} {_fmt(s.duration)}")
        elif isinstance(s, Transition):
            lines.append(f"transition {s.posture} {_fmt(s.duration)}")
        elif isinstance(s, Walk):
            lines.append(f"walk {_fmt(s.dx)} {_fmt(s.dy)} {_fmt(s.duration)}")
        else:
            line = f"{s.action} {s.object_id} {s.gesture}"
            if s.at:
                line += f" at {_fmt(s.at)}"
            if s.hand != "right":
                line += f" hand {s.hand}"
            lines.append(line)
    return ("\n".join(lines) + "\n").encode("utf-8")


def scripted_sequences(seeds: Sequence[int], length: int = 9) -> list[TaskScript]:
    return [random_script(s, length) for s in seeds]
