"""MOST work measurement from motion-capture traces.

Traces are segmented into standard static postures by an editable rule file,
posture changes are labelled as MOST body motions, hand actions come from
glove gestures plus collision events, and every segment is timed against the
MOST data card.
"""
__version__ = "0.1.0"

from .analyzer import MostAnalyzer, analyze
from .datacard import CardEntry, DataCard, default_card, dump_datacard, load_datacard, lookup
from .kinematics import (
    FEATURE_NAMES, Btcs, DegenerateGeometryError, KinematicsQualityError, TraceKinematics,
    angle_between, compute_btcs, frame_kinematics, kinematics_table,
)
from .report import read_report, write_report
from .rules import (
    PostureClassifier, RuleSet, classify_frame, classify_sequence, default_rules,
    detect_hand_actions, dump_rules, load_rules, parse_rules,
)
from .segmentation import (
    Segment, TransitionMatrix, action_distance, default_matrix, label_transition,
    segment_sequence,
)
from .synth import TaskScript, lifting_script, parse_script, random_script, synthesize
from .timing import AnalysisReport, InvariantError, actual_time, efficiency, standard_time
from .trace_io import (
    CollisionEvent, FormatError, GestureSample, MotionTrace, parse_collisions, parse_gestures,
    parse_trace, serialize_collisions, serialize_gestures, serialize_trace,
)

__all__ = [
    "AnalysisReport", "Btcs", "CardEntry", "CollisionEvent", "DataCard",
    "DegenerateGeometryError", "FEATURE_NAMES", "FormatError", "GestureSample",
    "InvariantError", "KinematicsQualityError", "MostAnalyzer", "MotionTrace",
    "PostureClassifier", "RuleSet", "Segment", "TaskScript", "TraceKinematics",
    "TransitionMatrix", "action_distance", "actual_time", "analyze", "angle_between",
    "classify_frame", "classify_sequence", "compute_btcs", "default_card", "default_matrix",
    "default_rules", "detect_hand_actions", "dump_datacard", "dump_rules", "efficiency",
    "frame_kinematics", "kinematics_table", "label_transition", "lifting_script",
    "load_datacard", "load_rules", "lookup", "parse_collisions", "parse_gestures",
    "parse_rules", "parse_script", "parse_trace", "random_script", "read_report",
    "segment_sequence", "serialize_collisions", "serialize_gestures", "serialize_trace",
    "standard_time", "synthesize", "write_report",
]
