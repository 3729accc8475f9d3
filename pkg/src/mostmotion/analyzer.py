"""End-to-end analysis: trace in, timed MOST report out."""
from __future__ import annotations

from os import PathLike
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .datacard import DataCard, default_card, load_datacard
from .kinematics import TraceKinematics
from .rules import GESTURE_WINDOW, RuleSet, classify_sequence, detect_hand_actions, load_rules
from .segmentation import (
    IDLE_THRESHOLD, STEP_LENGTH, WITHIN_REACH, TransitionMatrix, check_matrix_covers,
    default_matrix, load_matrix, segment_sequence, tool_use_intervals,
)
from .timing import AnalysisReport, TraceInfo, build_report
from .trace_io import CollisionEvent, GestureSample, MotionTrace, check_pairing


def _load(source, default, loader, kind):
    if source is None:
        return default()
    if isinstance(source, kind):
        return source
    if isinstance(source, bytes):
        return loader(source)
    if isinstance(source, (str, PathLike)):
        return loader(Path(source).read_bytes())
    raise TypeError(f"cannot load a {kind.__name__} from {type(source).__name__}")


def _check_frames(name: str, items, trace: MotionTrace) -> None:
    lo, hi = int(trace.indices[0]), int(trace.indices[-1])
    for it in items:
        if not lo <= it.frame <= hi:
            raise ValueError(f"{name} at frame {it.frame} lies outside the trace ({lo}..{hi})")


class MostAnalyzer(BaseEstimator):
    """Segment a motion trace into MOST motions and time them.

    Parameters
    ----------
    rules, card, matrix : object or path, optional
        Rule set, data card and transition matrix; the packaged defaults are
        used when omitted.
    dwell : int
        Frames a new posture must persist before it is accepted.
    gesture_threshold : float, optional
        Finger flexion separating open from closed; defaults to the rule
        file's ``Threshold``.
    step_length, within_reach : float
        Metres per step and the reach limit for the A column.
    idle_threshold : float
        Seconds of No motion before a segment is flagged for review.
    max_degenerate_fraction : float
        Share of frames with degenerate trunk geometry tolerated.
    gesture_window : int
        Frames between a collision and the glove sample used for it.

    Attributes
    ----------
    report_ : AnalysisReport
    labels_ : PostureLabelSequence
        Debounced per-frame postures.
    features_ : ndarray
        Kinematic feature matrix of the trace.
    hand_actions_ : list of HandAction
    """

    def __init__(self, rules=None, card=None, matrix=None, dwell=3, gesture_threshold=None,
                 step_length=STEP_LENGTH, within_reach=WITHIN_REACH,
                 idle_threshold=IDLE_THRESHOLD, max_degenerate_fraction=0.05,
                 gesture_window=GESTURE_WINDOW):
        self.rules = rules
        self.card = card
        self.matrix = matrix
        self.dwell = dwell
        self.gesture_threshold = gesture_threshold
        self.step_length = step_length
        self.within_reach = within_reach
        self.idle_threshold = idle_threshold
        self.max_degenerate_fraction = max_degenerate_fraction
        self.gesture_window = gesture_window

    def _validate_params(self):
        if not (isinstance(self.dwell, (int, np.integer)) and self.dwell >= 1):
            raise ValueError("dwell must be a positive integer")
        if not self.idle_threshold > 0:
            raise ValueError("idle_threshold must be positive")
        if not self.step_length > 0:
            raise ValueError("step_length must be positive")
        if self.gesture_threshold is not None and not 0 < self.gesture_threshold < 1:
            raise ValueError("gesture_threshold must be in (0, 1)")
        if self.gesture_window < 0:
            raise ValueError("gesture_window must be nonnegative")

    def fit(self, X: MotionTrace, y=None, gestures: Sequence[GestureSample] = (),
            collisions: Sequence[CollisionEvent] = ()):
        """Run the full analysis on trace ``X``; ``y`` is ignored."""
        if not isinstance(X, MotionTrace):
            raise TypeError("MostAnalyzer expects a MotionTrace")
        self._validate_params()
        rules: RuleSet = load_rules(self.rules)
        card: DataCard = _load(self.card, default_card, load_datacard, DataCard)
        matrix: TransitionMatrix = _load(self.matrix, default_matrix, load_matrix,
                                         TransitionMatrix)
        gestures = sorted(gestures or (), key=lambda g: g.frame)
        collisions = list(collisions or ())
        _check_frames("gesture sample", gestures, X)
        _check_frames("collision event", collisions, X)
        check_pairing(collisions)

        kin = TraceKinematics(self.max_degenerate_fraction).fit(X)
        features = kin.transform(X)
        labels = classify_sequence(features, rules, self.dwell, X.indices)
        threshold = rules.threshold if self.gesture_threshold is None else self.gesture_threshold
        actions = detect_hand_actions(gestures, collisions, rules.hands, threshold,
                                      self.gesture_window)
        segments = segment_sequence(labels, features, X.frame_interval, matrix, card, actions,
                                    self.step_length, self.within_reach, self.idle_threshold)
        tool_use, warnings = tool_use_intervals(collisions, int(X.indices[-1]))
        warnings = check_matrix_covers(matrix, [r.label for r in rules.postures]) + warnings
        info = TraceInfo(len(X), X.frame_interval, int(X.indices[0]), int(X.indices[-1]),
                         X.marker_set.names, kin.degenerate_frames_)

        self.rules_, self.card_, self.matrix_ = rules, card, matrix
        self.features_ = features
        self.labels_ = labels
        self.hand_actions_ = actions
        self.report_ = build_report(info, segments, warnings, tool_use)
        return self

    def predict(self, X: MotionTrace | None = None) -> list[str]:
        """Motion labels of the segments, in order.

        With a trace, the analysis is rerun on it first (without hand data).
        """
        if X is not None:
            self.fit(X)
        check_is_fitted(self, "report_")
        return self.report_.motion_labels


def analyze(trace: MotionTrace, gestures: Sequence[GestureSample] = (),
            collisions: Sequence[CollisionEvent] = (), **params) -> AnalysisReport:
    """Analyze one trace with :class:`MostAnalyzer` parameters; returns the report."""
    return MostAnalyzer(**params).fit(trace, gestures=gestures, collisions=collisions).report_
