import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mostmotion.analyzer import MostAnalyzer
from mostmotion.rules import classify_sequence, default_rules, parse_rules
from mostmotion.kinematics import TraceKinematics
from mostmotion.segmentation import find_key_frames
from mostmotion.synth import (
    DIRECT_TRANSITIONS, HandEvent, Hold, ScriptError, Skeleton, TaskScript, Transition, Walk,
    check_templates, dump_script, expected_motions, lifting_script, parse_script,
    pose_templates, random_script, synthesize,
)
from mostmotion.trace_io import FormatError, serialize_collisions, serialize_gestures, serialize_trace


def labels_of(trace):
    X = TraceKinematics().fit_transform(trace)
    return classify_sequence(X, default_rules(), 3, trace.indices)


def test_templates_classify_as_themselves():
    check_templates()
    assert set(pose_templates()) == {"standing", "sitting", "half-bending", "bending"}


def test_bad_template_detected():
    rules = parse_rules("Rules\nB lean\nTrunk Z Axis 30 5\nTrunk Z Axis 40 5\n\\Rules\n")
    with pytest.raises(ScriptError, match="lean"):
        check_templates(rules)


def test_sit_down_script():
    script = TaskScript((Hold("standing", 1), Transition("sitting", 1), Hold("sitting", 1)))
    trace, gestures, collisions = synthesize(script, 25.0, noise_std=0.003, seed=4)
    assert len(trace) == 75 and trace.frame_interval == 0.04
    assert gestures == [] and collisions == []
    seq = labels_of(trace)
    keys = find_key_frames(seq)
    assert seq.labels[0] == "standing" and seq.labels[-1] == "sitting"
    assert len(keys) == 3 and 25 < keys[1].frame < 50


def test_lifting_script_labels():
    trace, gestures, collisions = synthesize(lifting_script(), seed=1)
    labels = MostAnalyzer().fit(trace, gestures=gestures, collisions=collisions).predict()
    assert labels == ["B", "BG", "B", "BP", "No motion"] == expected_motions(lifting_script())


def test_determinism():
    a = synthesize(lifting_script(), noise_std=0.0, seed=7)
    b = synthesize(lifting_script(), noise_std=0.0, seed=7)
    assert serialize_trace(a[0]) == serialize_trace(b[0])
    c = synthesize(lifting_script(), seed=7)
    d = synthesize(lifting_script(), seed=8)
    assert not np.array_equal(c[0].positions, d[0].positions)


def test_hand_streams():
    _, gestures, collisions = synthesize(lifting_script(), seed=1)
    assert [(c.phase, c.object_ids[0]) for c in collisions] == [("begin", "box-1"), ("end", "box-1")]
    assert [g.frame for g in gestures] == [c.frame for c in collisions]
    assert gestures[0].flexion == (0.9,) * 5


def test_walk_moves_the_trunk_only_horizontally():
    script = TaskScript((Hold("standing", 0.4), Walk(3.0, 4.0, 2.0), Hold("standing", 0.4)))
    trace, _, _ = synthesize(script, noise_std=0.0)
    X = TraceKinematics().fit_transform(trace)
    np.testing.assert_allclose(X[-1, 0:2] - X[0, 0:2], [3.0, 4.0], atol=1e-6)
    assert abs(X[-1, 2] - X[0, 2]) < 1e-6


def test_posture_change_keeps_trunk_in_place():
    trace, _, _ = synthesize(lifting_script(), noise_std=0.0)
    X = TraceKinematics().fit_transform(trace)
    assert np.abs(X[:, 0:2] - X[0, 0:2]).max() < 1e-6


@pytest.mark.parametrize("steps, match", [
    ((Hold("flying", 1),), "unknown posture"),
    ((Hold("standing", 1), Hold("sitting", 1)), "add a transition"),
    ((Hold("standing", 1), HandEvent("grasp", "x", "Jazz Hands")), "unknown gesture"),
    ((Hold("standing", 1), HandEvent("release", "x", "Flat Hand")), "pair"),
    ((Hold("standing", 0.02),), "two frames"),
])
def test_invalid_scripts(steps, match):
    with pytest.raises(ScriptError, match=match):
        synthesize(TaskScript(steps))


@pytest.mark.parametrize("steps", [
    (), (Hold("standing", 0),), (HandEvent("grasp", "x", "Fist", at=-1),),
    (Hold("standing", 1), HandEvent("grasp", "x", "Fist", at=-2)),
    (Hold("standing", 1), HandEvent("grasp", "x", "Fist", at=0.5)),
    (Hold("standing", 1), HandEvent("poke", "x", "Fist")),
])
def test_script_validation(steps):
    with pytest.raises(ScriptError):
        TaskScript(steps)


def test_skeleton_validation():
    with pytest.raises(ScriptError):
        Skeleton(trunk=0)


def test_script_file_round_trip():
    for script in [lifting_script(), random_script(3, 12),
                   TaskScript((Hold("standing", 1), HandEvent("touch", "b-1", "Pointing Index", hand="left")),
                              Skeleton(trunk=0.55))]:
        assert parse_script(dump_script(script)) == script


@pytest.mark.parametrize("text, line", [
    ("hold standing\n", 1), ("\nwalk 1 x 2\n", 2), ("jump 3\n", 1),
    ("skeleton height=2\n", 1), ("hold standing 1\ngrasp box\n", 2),
    ("hold standing 1\ngrasp box Fist hand middle\n", 2),
])
def test_script_parse_errors(text, line):
    with pytest.raises(FormatError) as exc:
        parse_script(text)
    assert exc.value.line == line


def test_random_script_examples():
    s = random_script(1, 5)
    assert len(s.steps) == 5 and isinstance(s.steps[0], Hold) and isinstance(s.steps[-1], Hold)
    assert random_script(1, 9) != random_script(2, 9)
    assert random_script(5, 9) == random_script(5, 9)
    with pytest.raises(ValueError):
        random_script(1, 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 14))
def test_random_scripts_are_valid(seed, length):
    script = random_script(seed, length)
    assert len(script.steps) == length
    names = set(pose_templates())
    posture = script.steps[0].posture
    for step in script.steps:
        if isinstance(step, (Hold, Transition)):
            assert step.posture in names
        if isinstance(step, Transition):
            assert (posture, step.posture) in DIRECT_TRANSITIONS
            posture = step.posture
        if isinstance(step, Walk):
            assert posture == "standing"
    synthesize(script, seed=seed)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_random_scripts_round_trip_through_analysis(seed):
    script = random_script(seed, 9)
    trace, gestures, collisions = synthesize(script, seed=seed)
    got = MostAnalyzer().fit(trace, gestures=gestures, collisions=collisions).predict()
    assert got == expected_motions(script)
