"""``mostmotion`` command line: analyze, synth, rules-check, card.

Exit codes: 0 success, 1 usage error, 2 input validation error,
3 internal invariant violation.
"""
from __future__ import annotations

import argparse
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .analyzer import MostAnalyzer
from .datacard import GROUPS, default_card, dump_datacard, load_datacard
from .kinematics import KinematicsQualityError
from .report import FORMATS, write_report
from .rules import GESTURE_WINDOW, load_rules, overlapping_postures
from .segmentation import IDLE_THRESHOLD, STEP_LENGTH, WITHIN_REACH, load_matrix
from .synth import DEFAULT_NOISE, ScriptError, parse_script, synthesize
from .timing import InvariantError
from .trace_io import (
    FormatError, parse_collisions, parse_gestures, parse_trace, serialize_collisions,
    serialize_gestures, serialize_trace,
)

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _read(path: str, what: str) -> bytes:
    try:
        return Path(path).read_bytes()
    except FileNotFoundError:
        raise FileNotFoundError(f"{what} file not found: {path}") from None


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _positive(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _unit(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError("must lie strictly between 0 and 1")
    return value


def _emit(data: bytes, output: str | None, stdout) -> None:
    if output:
        Path(output).write_bytes(data)
    else:
        stdout.write(data.decode("utf-8"))


def _where(path: str, exc: FormatError) -> str:
    loc = path
    if exc.line is not None:
        loc += f":{exc.line}"
        if exc.column is not None:
            loc += f":{exc.column}"
    return f"{loc}: {exc.message}"


def cmd_analyze(args, stdout) -> int:
    current = args.trace
    try:
        trace = parse_trace(_read(args.trace, "trace"))
        gestures, collisions = [], []
        if args.gestures:
            current = args.gestures
            gestures = parse_gestures(_read(args.gestures, "gesture"))
        if args.collisions:
            current = args.collisions
            collisions = parse_collisions(_read(args.collisions, "collision"))
        current = args.rules or "rules"
        rules = load_rules(args.rules)
        current = args.card or "card"
        card = load_datacard(_read(args.card, "card")) if args.card else None
        current = args.matrix or "matrix"
        matrix = load_matrix(_read(args.matrix, "matrix")) if args.matrix else None
    except FormatError as exc:
        raise FormatError(_where(current, exc)) from None
    analyzer = MostAnalyzer(rules=rules, card=card, matrix=matrix, dwell=args.dwell,
                            gesture_threshold=args.gesture_threshold,
                            step_length=args.step_length, within_reach=args.within_reach,
                            idle_threshold=args.idle_threshold,
                            max_degenerate_fraction=args.max_degenerate,
                            gesture_window=args.gesture_window)
    analyzer.fit(trace, gestures=gestures, collisions=collisions)
    _emit(write_report(analyzer.report_, args.format), args.output, stdout)
    return EXIT_OK


def cmd_synth(args, stdout) -> int:
    try:
        script = parse_script(_read(args.script, "script"))
    except FormatError as exc:
        raise FormatError(_where(args.script, exc)) from None
    trace, gestures, collisions = synthesize(script, args.frame_rate, args.noise, args.seed)
    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {"trace.txt": serialize_trace(trace), "gestures.txt": serialize_gestures(gestures),
             "collisions.txt": serialize_collisions(collisions)}
    for name, data in files.items():
        (out / name).write_bytes(data)
        stdout.write(f"wrote {out / name}\n")
    return EXIT_OK


def cmd_rules_check(args, stdout) -> int:
    try:
        rules = load_rules(Path(args.rules) if args.rules else None)
    except FormatError as exc:
        raise FormatError(_where(args.rules, exc)) from None
    counts = Counter(r.group for r in list(rules.postures) + list(rules.hands))
    stdout.write(f"posture rules: {len(rules.postures)}\n")
    stdout.write(f"hand rules: {len(rules.hands)}\n")
    stdout.write(f"gestures: {len(rules.gestures)}\n")
    for group in GROUPS:
        if counts[group]:
            stdout.write(f"  {group}: {counts[group]}\n")
    for a, b in overlapping_postures(rules):
        stdout.write(f"warning: posture rules {a!r} and {b!r} overlap; "
                     f"{a!r} wins where both hold\n")
    return EXIT_OK


def cmd_card(args, stdout) -> int:
    if args.card:
        try:
            card = load_datacard(_read(args.card, "card"))
        except FormatError as exc:
            raise FormatError(_where(args.card, exc)) from None
    else:
        card = default_card()
    stdout.write(dump_datacard(card).decode("utf-8"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mostmotion", description="MOST work measurement from motion capture.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="segment a trace and time it against the data card")
    a.add_argument("trace")
    a.add_argument("--gestures", help="glove sample file")
    a.add_argument("--collisions", help="collision event file")
    a.add_argument("--rules", help="rule file (default: shipped rules)")
    a.add_argument("--card", help="data card file (default: shipped card)")
    a.add_argument("--matrix", help="transition matrix file (default: shipped matrix)")
    a.add_argument("--dwell", type=_positive_int, default=3, help="frames a posture must persist")
    a.add_argument("--gesture-threshold", type=_unit, default=None,
                   help="finger flexion separating open from closed (default: rule file)")
    a.add_argument("--gesture-window", type=int, default=GESTURE_WINDOW,
                   help="frames between a collision and its glove sample")
    a.add_argument("--step-length", type=_positive, default=STEP_LENGTH, help="metres per step")
    a.add_argument("--within-reach", type=_positive, default=WITHIN_REACH,
                   help="largest trunk displacement counted as within reach, metres")
    a.add_argument("--idle-threshold", type=_positive, default=IDLE_THRESHOLD,
                   help="seconds of No motion before asking for review")
    a.add_argument("--max-degenerate", type=float, default=0.05,
                   help="tolerated share of degenerate frames")
    a.add_argument("--format", choices=FORMATS, default="table")
    a.add_argument("--output", help="write the report here instead of standard output")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("synth", help="generate trace, gesture and collision files from a script")
    s.add_argument("script")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--frame-rate", type=_positive, default=25.0)
    s.add_argument("--noise", type=float, default=DEFAULT_NOISE, help="marker noise std, metres")
    s.add_argument("--output-dir", default=".")
    s.set_defaults(func=cmd_synth)

    r = sub.add_parser("rules-check", help="summarize a rule file and report overlaps")
    r.add_argument("rules", nargs="?", help="rule file (default: shipped rules)")
    r.set_defaults(func=cmd_rules_check)

    c = sub.add_parser("card", help="print a data card in normalized form")
    c.add_argument("card", nargs="?", help="card file (default: shipped card)")
    c.set_defaults(func=cmd_card)
    return p


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        stderr.write(f"{exc}\n")
        return EXIT_USAGE
    try:
        return args.func(args, stdout)
    except InvariantError as exc:
        stderr.write(f"internal error: {exc}\n")
        return EXIT_INTERNAL
    except (FileNotFoundError, IsADirectoryError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except (ValueError, KinematicsQualityError, ScriptError, OSError) as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
