import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from mostmotion.kinematics import FEATURE_INDEX, FEATURE_NAMES
from mostmotion.rules import (
    UNKNOWN, Clause, GesturePattern, HandActionRule, PostureClassifier, PostureRule, RuleError,
    classify_frame, classify_frames, classify_sequence, debounce, default_rules,
    detect_hand_actions, dump_rules, load_rules, match_gesture, overlapping_postures, parse_rules,
)
from mostmotion.trace_io import CollisionEvent, GestureSample

SITTING_BLOCK = """
Rules
B sitting
Trunk Z Axis (α) 0 5
Left Leg Relative Angle (θ) 90 20
Right Leg Relative Angle (θ) 90 20
\\Rules
"""

BUTTON_BLOCK = """
Gesture Pointing Index = closed open closed closed closed
Rules
G Touching button
Virtual Object button-*
Interaction Part Hand Gesture Pointing Index
Trigger Positive
\\Rules
"""


def features(**values):
    row = np.zeros(len(FEATURE_NAMES))
    for k, v in values.items():
        row[FEATURE_INDEX[k]] = v
    return row


def legs(theta_left, theta_right=None):
    return {"leg_angle_left": theta_left,
            "leg_angle_right": theta_left if theta_right is None else theta_right}


def test_sitting_block():
    rules = parse_rules(SITTING_BLOCK)
    (rule,) = rules.postures
    assert rule == PostureRule("B", "sitting", (
        Clause("Trunk", "Z Axis", 0, 5),
        Clause("Left Leg", "Relative Angle", 90, 20),
        Clause("Right Leg", "Relative Angle", 90, 20),
    ), 0)
    assert [c.parameter_name for c in rule.clauses] == [
        "trunk_inclination", "leg_relative_angle", "leg_relative_angle"]


def test_button_block():
    (rule,) = parse_rules(BUTTON_BLOCK).hands
    assert (rule.group, rule.label, rule.trigger) == ("G", "Touching button", "positive")
    assert rule.gesture == GesturePattern("Pointing Index", ("closed", "open", "closed", "closed", "closed"))
    assert rule.matches_object("button-7") and not rule.matches_object("box-1")


def test_quoted_annotation_is_ignored():
    rules = parse_rules('Rules\nB sitting\nTrunk Z Axis “Trunk Z Axis (α)” 0 5\n\\Rules\n')
    assert rules.postures[0].clauses == (Clause("Trunk", "Z Axis", 0, 5),)


@pytest.mark.parametrize("text, line", [
    ("Rules\nB sitting\nTrunk Z Axis 0 5\n", 1),
    ("Rules\nB sitting\nTrunk Z Axis 0 0\n\\Rules\n", 3),
    ("Rules\nB sitting\nTrunk Wobble 0 5\n\\Rules\n", 3),
    ("Rules\nB sitting\nElbow Z Axis 0 5\n\\Rules\n", 3),
    ("\n\n\\Rules\n", 3),
    ("Threshold 1.5\n", 1),
    ("Gesture Any = any any any any any\n", 1),
    ("Rules\nQ thing\nTrunk Z Axis 0 5\n\\Rules\n", 2),
    (BUTTON_BLOCK.replace("Pointing Index\nTrigger", "Fist\nTrigger"), 6),
])
def test_malformed_rules_report_line(text, line):
    with pytest.raises(RuleError) as exc:
        parse_rules(text)
    assert exc.value.line == line


def test_default_rules_round_trip():
    rules = default_rules()
    assert parse_rules(dump_rules(rules)) == rules
    assert rules.labels == ("standing", "sitting", "half-bending", "bending")
    assert len(rules.hands) >= 3


def test_load_rules_sources(tmp_path):
    path = tmp_path / "r.txt"
    path.write_bytes(dump_rules(default_rules()))
    assert load_rules(path) == load_rules(str(path)) == load_rules(path.read_bytes()) == default_rules()
    assert load_rules(None) is default_rules()
    with pytest.raises(TypeError):
        load_rules(3)


def test_classify_sitting():
    rules = default_rules()
    assert classify_frame(features(trunk_inclination=2, **legs(85, 95)), rules) == "sitting"


def test_sitting_boundary_is_strict():
    rules = parse_rules(SITTING_BLOCK)
    assert classify_frame(features(trunk_inclination=5, **legs(90)), rules) == UNKNOWN
    assert classify_frame(features(trunk_inclination=4.999, **legs(90)), rules) == "sitting"


def test_classify_bending_and_gap():
    rules = default_rules()
    assert classify_frame(features(trunk_inclination=60), rules) == "bending"
    assert classify_frame(features(trunk_inclination=30), rules) == "half-bending"
    assert classify_frame(features(trunk_inclination=17), rules) == UNKNOWN
    assert classify_frame(features(trunk_inclination=3), rules) == "standing"


def test_first_match_wins():
    rules = parse_rules("Rules\nB wide\nTrunk Z Axis 0 90\n\\Rules\nRules\nB narrow\nTrunk Z Axis 0 5\n\\Rules\n")
    assert classify_frame(features(trunk_inclination=1), rules) == "wide"


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 180), min_size=1, max_size=30), st.floats(0, 180))
def test_vectorized_classification_agrees(incl, leg):
    rules = default_rules()
    X = np.array([features(trunk_inclination=a, **legs(leg)) for a in incl])
    assert list(classify_frames(X, rules)) == [classify_frame(r, rules) for r in X]


def test_debounce_suppresses_blip():
    assert debounce(list("SSBSSS"), 3) == list("SSSSSS")


def test_debounce_accepts_run_retroactively():
    assert debounce(list("SSBBBS"), 3) == list("SSBBBB")


def test_debounce_dwell_one_is_identity():
    raw = list("SBSBBS")
    assert debounce(raw, 1) == raw


def test_debounce_unknown_holds_and_breaks():
    u = UNKNOWN
    assert debounce([u, "S", "S", "B", u, "B", "B", "S"], 2) == ["S", "S", "S", "S", "S", "B", "B", "B"]
    with pytest.raises(ValueError):
        debounce([u, u], 3)
    with pytest.raises(ValueError):
        debounce(["S"], 0)


@given(st.lists(st.sampled_from(["a", "b", "c", UNKNOWN]), min_size=1, max_size=40), st.integers(1, 5))
def test_debounce_runs_are_long(raw, dwell):
    if all(r == UNKNOWN for r in raw):
        return
    out = debounce(raw, dwell)
    assert UNKNOWN not in out and len(out) == len(raw)
    # every accepted change is backed by dwell equal raw labels
    for i in range(1, len(out)):
        if out[i] != out[i - 1]:
            assert raw[i:i + dwell] == [out[i]] * dwell


def test_classify_sequence_constant():
    X = np.array([features(**legs(0))] * 10)
    seq = classify_sequence(X, default_rules(), 3, frames=range(100, 110))
    assert seq.labels == ("standing",) * 10 and seq.frames[0] == 100


def test_match_gesture():
    pointing = default_rules().gesture("Pointing Index")
    fist = default_rules().gesture("Fist")
    assert match_gesture(GestureSample(0, "right", (0.9, 0.1, 0.9, 0.9, 0.9)), pointing)
    assert not match_gesture(GestureSample(0, "right", (0.9,) * 5), pointing)
    assert not match_gesture(GestureSample(0, "right", (0.9, 0.5, 0.9, 0.9, 0.9)), pointing)
    assert match_gesture(GestureSample(0, "right", (0.5,) * 5), fist)
    with pytest.raises(ValueError):
        match_gesture(GestureSample(0, "right", (0.5,) * 5), fist, threshold=1.0)


def test_gesture_code():
    assert default_rules().gesture("Pointing Index").code == 0b11101
    assert GesturePattern("x", ("any", "open", "open", "open", "open")).code is None


POINT = GestureSample(30, "right", (0.9, 0.1, 0.9, 0.9, 0.9))
FLAT = GestureSample(30, "right", (0.1,) * 5)
TOUCH = CollisionEvent(30, "I", ("button-7",), "begin", "right-index-tip")


def test_touching_button_fires():
    rules = default_rules()
    (a,) = detect_hand_actions([POINT], [TOUCH], rules.hands)
    assert (a.frame, a.group, a.label, a.object_id, a.hand) == (30, "G", "Touching button", "button-7", "right")


def test_gesture_without_collision_fires_nothing():
    assert detect_hand_actions([POINT], [], default_rules().hands) == []


def test_wrong_gesture_does_not_fire():
    rules = parse_rules(BUTTON_BLOCK)
    assert detect_hand_actions([FLAT], [TOUCH], rules.hands) == []


def test_gesture_window():
    rules = default_rules()
    late = GestureSample(33, "right", POINT.flexion)
    assert detect_hand_actions([late], [TOUCH], rules.hands) == []
    assert len(detect_hand_actions([late], [TOUCH], rules.hands, window=3)) == 1


def test_other_hand_gesture_ignored():
    left = GestureSample(30, "left", POINT.flexion)
    assert detect_hand_actions([left], [TOUCH], default_rules().hands) == []


def test_type_two_events_are_not_hand_actions():
    ev = CollisionEvent(30, "II", ("wrench-1", "bolt-3"), "begin", None)
    assert detect_hand_actions([POINT], [ev], default_rules().hands) == []


def test_release_button():
    end = CollisionEvent(40, "I", ("button-7",), "end", "right-index-tip")
    (a,) = detect_hand_actions([GestureSample(40, "right", (0.1,) * 5)], [end],
                               default_rules().hands)
    assert (a.group, a.label) == ("P", "Releasing button")


def test_overlap_detection():
    assert overlapping_postures(default_rules()) == []
    text = dump_rules(default_rules()).decode().replace("Trunk Z Axis 32.5 12.5", "Trunk Z Axis 20.0 12.5")
    assert overlapping_postures(parse_rules(text)) == [("standing", "half-bending")]


def test_rule_validation():
    with pytest.raises(ValueError):
        Clause("Trunk", "Z Axis", 0, -1)
    with pytest.raises(ValueError):
        HandActionRule("B", "x", "*", default_rules().gesture("Fist"), "positive", 0)


def test_posture_classifier_estimator():
    clf = PostureClassifier(dwell=2).fit()
    assert clf.get_params() == {"rules": None, "dwell": 2}
    assert clone(clf).dwell == 2
    assert "unknown" in clf.classes_
    X = np.array([features(trunk_inclination=a) for a in (0, 0, 60, 0, 0, 60, 60, 60)])
    assert list(clf.predict_raw(X)) == ["standing", "standing", "bending", "standing", "standing",
                                        "bending", "bending", "bending"]
    assert list(clf.predict(X)) == ["standing"] * 5 + ["bending"] * 3
    with pytest.raises(ValueError):
        clf.predict(np.zeros((3, 4)))
    with pytest.raises(ValueError):
        PostureClassifier(dwell=0).fit()
