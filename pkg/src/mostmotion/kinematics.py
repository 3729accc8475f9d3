"""Trunk coordinate system and posture parameters from raw marker positions.

The body-based trunk coordinate system (BTCS) has its origin midway between
the shoulders, +X from the right to the left shoulder, +Z toward the pelvis
and +Y = Z x X pointing to the front of the trunk. Limbs are proximal to
distal vectors, so a straight leg has a relative angle near 0 degrees.

Two code paths compute the same quantities: per-frame functions
(:func:`compute_btcs`, :func:`frame_kinematics`) and the vectorized
:func:`kinematics_table` used for whole traces.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .trace_io import MARKER_INDEX, Frame, MotionTrace

# minimum |sin| between the raw shoulder->pelvis direction and the shoulder line
MIN_TRUNK_SINE = 0.1
_EPS = 1e-9
WORLD_DOWN = np.array([0.0, 0.0, -1.0])

SEGMENTS = {
    "UA": ("shoulder", "elbow"),
    "FA": ("elbow", "wrist"),
    "UL": ("hip", "knee"),
    "LL": ("knee", "ankle"),
}
SEGMENT_NAMES = {"UA": "upper_arm", "FA": "forearm", "UL": "upper_leg", "LL": "lower_leg"}
SIDES = ("left", "right")
ANGLE_NAMES = ("alpha", "beta", "gamma")


def _limb_features():
    return [f"{SEGMENT_NAMES[seg]}_{side}_{a}" for seg in SEGMENTS for side in SIDES
            for a in ANGLE_NAMES]


FEATURE_NAMES: tuple[str, ...] = (
    "origin_x", "origin_y", "origin_z",
    "displacement_x", "displacement_y", "displacement_z",
    "axis_angle_x", "axis_angle_y", "axis_angle_z",
    "trunk_inclination",
    *_limb_features(),
    "arm_angle_left", "arm_angle_right",
    "leg_angle_left", "leg_angle_right",
    "degenerate",
)
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}


class DegenerateGeometryError(ValueError):
    """Markers too close or collinear to define a direction."""


class KinematicsQualityError(ValueError):
    """Too many frames of a trace had degenerate geometry."""


@dataclass(frozen=True, eq=False)
class Btcs:
    origin: np.ndarray  # (3,) world frame
    axes: np.ndarray  # (3, 3), columns X, Y, Z

    @property
    def x(self) -> np.ndarray:
        return self.axes[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.axes[:, 1]

    @property
    def z(self) -> np.ndarray:
        return self.axes[:, 2]

    def to_local(self, point) -> np.ndarray:
        return self.axes.T @ (np.asarray(point, dtype=float) - self.origin)


def _positions(frame) -> np.ndarray:
    return frame.positions if isinstance(frame, Frame) else np.asarray(frame, dtype=float)


def compute_btcs(frame) -> Btcs:
    """Trunk frame of one pose (a :class:`Frame` or a (13, 3) array)."""
    pos = _positions(frame)
    right = pos[MARKER_INDEX["right_shoulder"]]
    left = pos[MARKER_INDEX["left_shoulder"]]
    pelvis = pos[MARKER_INDEX["pelvis"]]
    if not (np.all(np.isfinite(right)) and np.all(np.isfinite(left)) and np.all(np.isfinite(pelvis))):
        raise DegenerateGeometryError("non-finite shoulder or pelvis marker")
    origin = 0.5 * (right + left)
    xv = left - right
    xn = np.linalg.norm(xv)
    if xn < _EPS:
        raise DegenerateGeometryError("shoulder markers coincide")
    x = xv / xn
    zr = pelvis - origin
    zn = np.linalg.norm(zr)
    if zn < _EPS or np.linalg.norm(np.cross(zr, x)) / zn < MIN_TRUNK_SINE:
        raise DegenerateGeometryError("pelvis lies on the shoulder line")
    z = zr - np.dot(zr, x) * x
    z = z / np.linalg.norm(z)
    y = np.cross(z, x)
    return Btcs(origin, np.column_stack([x, y, z]))


def limb_vector(frame, segment: str, side: str) -> np.ndarray:
    """Unit proximal-to-distal vector of a limb segment in the world frame."""
    proximal, distal = SEGMENTS[segment]
    pos = _positions(frame)
    d = pos[MARKER_INDEX[f"{side}_{distal}"]] - pos[MARKER_INDEX[f"{side}_{proximal}"]]
    n = np.linalg.norm(d)
    if not n >= _EPS:
        raise DegenerateGeometryError(f"{side} {SEGMENT_NAMES[segment]} endpoints coincide")
    return d / n


def angle_between(u, v) -> float:
    """Angle between two vectors in degrees, in [0, 180].

    Uses atan2(|u x v|, u . v), which equals the arccos of the clamped
    normalized dot product but is exact for parallel and antiparallel input.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if not (np.linalg.norm(u) > 0 and np.linalg.norm(v) > 0):
        raise ValueError("angle with a zero vector is undefined")
    return float(np.degrees(np.arctan2(np.linalg.norm(np.cross(u, v)), np.dot(u, v))))


def _angles(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise :func:`angle_between` over (n, 3) arrays."""
    cross = np.linalg.norm(np.cross(u, v), axis=-1)
    dot = np.einsum("...i,...i->...", u, v)
    return np.degrees(np.arctan2(cross, dot))


@dataclass(frozen=True, eq=False)
class FrameKinematics:
    btcs: Btcs
    trunk_displacement: np.ndarray  # (x_B, y_B, z_B) in the reference trunk frame, metres
    trunk_axis_angles: np.ndarray  # (alpha_B, beta_B, gamma_B), degrees
    trunk_inclination: float
    limb_orientations: dict  # (segment, side) -> (alpha, beta, gamma)
    arm_angle: dict  # side -> theta_A
    leg_angle: dict  # side -> theta_L
    degenerate: bool = False

    def features(self) -> dict[str, float]:
        out = {
            "origin_x": self.btcs.origin[0], "origin_y": self.btcs.origin[1],
            "origin_z": self.btcs.origin[2],
            "displacement_x": self.trunk_displacement[0],
            "displacement_y": self.trunk_displacement[1],
            "displacement_z": self.trunk_displacement[2],
            "axis_angle_x": self.trunk_axis_angles[0],
            "axis_angle_y": self.trunk_axis_angles[1],
            "axis_angle_z": self.trunk_axis_angles[2],
            "trunk_inclination": self.trunk_inclination,
        }
        for (seg, side), triple in self.limb_orientations.items():
            for name, value in zip(ANGLE_NAMES, triple):
                out[f"{SEGMENT_NAMES[seg]}_{side}_{name}"] = value
        for side in SIDES:
            out[f"arm_angle_{side}"] = self.arm_angle[side]
            out[f"leg_angle_{side}"] = self.leg_angle[side]
        out["degenerate"] = float(self.degenerate)
        return {k: float(out[k]) for k in FEATURE_NAMES}

    def to_array(self) -> np.ndarray:
        f = self.features()
        return np.array([f[k] for k in FEATURE_NAMES])


def frame_kinematics(frame, reference: Btcs) -> FrameKinematics:
    """All posture parameters of one frame against the reference trunk frame."""
    btcs = compute_btcs(frame)
    displacement = reference.to_local(btcs.origin)
    axis_angles = np.array([angle_between(btcs.axes[:, i], reference.axes[:, i]) for i in range(3)])
    limbs = {}
    vectors = {}
    for seg in SEGMENTS:
        for side in SIDES:
            v = limb_vector(frame, seg, side)
            vectors[seg, side] = v
            limbs[seg, side] = tuple(angle_between(v, btcs.axes[:, i]) for i in range(3))
    arm = {s: angle_between(vectors["UA", s], vectors["FA", s]) for s in SIDES}
    leg = {s: angle_between(vectors["UL", s], vectors["LL", s]) for s in SIDES}
    return FrameKinematics(
        btcs=btcs,
        trunk_displacement=displacement,
        trunk_axis_angles=axis_angles,
        trunk_inclination=angle_between(btcs.z, WORLD_DOWN),
        limb_orientations=limbs,
        arm_angle=arm,
        leg_angle=leg,
    )


def _btcs_arrays(pos: np.ndarray):
    right = pos[:, MARKER_INDEX["right_shoulder"]]
    left = pos[:, MARKER_INDEX["left_shoulder"]]
    pelvis = pos[:, MARKER_INDEX["pelvis"]]
    origin = 0.5 * (right + left)
    xv = left - right
    xn = np.linalg.norm(xv, axis=1)
    zr = pelvis - origin
    zn = np.linalg.norm(zr, axis=1)
    bad = ~(xn >= _EPS) | ~(zn >= _EPS)
    with np.errstate(invalid="ignore", divide="ignore"):
        x = xv / xn[:, None]
        sine = np.linalg.norm(np.cross(zr, x), axis=1) / zn
        bad |= ~(sine >= MIN_TRUNK_SINE)
        z = zr - np.einsum("ij,ij->i", zr, x)[:, None] * x
        z = z / np.linalg.norm(z, axis=1)[:, None]
    y = np.cross(z, x)
    axes = np.stack([x, y, z], axis=2)
    return origin, axes, bad


def first_valid_btcs(trace: MotionTrace) -> Btcs:
    origin, axes, bad = _btcs_arrays(trace.positions)
    valid = np.flatnonzero(~bad)
    if valid.size == 0:
        raise KinematicsQualityError("no frame with a valid trunk frame")
    # per-frame path so the reference is bit-identical to compute_btcs
    return compute_btcs(trace.positions[valid[0]])


def kinematics_table(positions: np.ndarray, reference: Btcs) -> np.ndarray:
    """Feature matrix (n, len(FEATURE_NAMES)) for a stack of (13, 3) poses.

    Degenerate frames carry the values of the previous valid frame (leading
    ones the first valid frame) and have ``degenerate`` set to 1.
    """
    pos = np.asarray(positions, dtype=float)
    n = pos.shape[0]
    origin, axes, bad = _btcs_arrays(pos)
    out = np.empty((n, len(FEATURE_NAMES)))
    out[:, 0:3] = origin
    out[:, 3:6] = np.einsum("ji,nj->ni", reference.axes, origin - reference.origin)
    for i in range(3):
        out[:, 6 + i] = _angles(axes[:, :, i], np.broadcast_to(reference.axes[:, i], (n, 3)))
    out[:, 9] = _angles(axes[:, :, 2], np.broadcast_to(WORLD_DOWN, (n, 3)))
    col = 10
    vectors = {}
    for seg, (proximal, distal) in SEGMENTS.items():
        for side in SIDES:
            d = pos[:, MARKER_INDEX[f"{side}_{distal}"]] - pos[:, MARKER_INDEX[f"{side}_{proximal}"]]
            norm = np.linalg.norm(d, axis=1)
            bad |= ~(norm >= _EPS)
            vectors[seg, side] = d
            for i in range(3):
                out[:, col] = _angles(d, axes[:, :, i])
                col += 1
    for side in SIDES:
        out[:, FEATURE_INDEX[f"arm_angle_{side}"]] = _angles(vectors["UA", side], vectors["FA", side])
        out[:, FEATURE_INDEX[f"leg_angle_{side}"]] = _angles(vectors["UL", side], vectors["LL", side])
    out[:, -1] = bad
    if bad.any():
        valid = np.flatnonzero(~bad)
        if valid.size == 0:
            raise KinematicsQualityError("every frame has degenerate geometry")
        # forward fill from the last valid row, backfill the leading run
        src = np.where(~bad, np.arange(n), -1)
        src = np.maximum.accumulate(src)
        src[src < 0] = valid[0]
        out[:, :-1] = out[src, :-1]
    return out


def feature_column(X: np.ndarray, name: str) -> np.ndarray:
    return X[:, FEATURE_INDEX[name]]


class TraceKinematics(TransformerMixin, BaseEstimator):
    """Turn a :class:`MotionTrace` into the per-frame posture feature matrix.

    ``fit`` stores the trunk frame of the first valid frame as the reference
    for displacement and axis angles; ``transform`` returns an array with
    columns :data:`FEATURE_NAMES`.

    Parameters
    ----------
    max_degenerate_fraction : float
        Traces with a larger share of degenerate frames are rejected.
    """

    def __init__(self, max_degenerate_fraction=0.05):
        self.max_degenerate_fraction = max_degenerate_fraction

    def fit(self, X, y=None):
        trace = _check_trace(X)
        if not 0 <= self.max_degenerate_fraction <= 1:
            raise ValueError("max_degenerate_fraction must be in [0, 1]")
        self.reference_ = first_valid_btcs(trace)
        self.n_features_out_ = len(FEATURE_NAMES)
        return self

    def transform(self, X):
        check_is_fitted(self, "reference_")
        trace = _check_trace(X)
        table = kinematics_table(trace.positions, self.reference_)
        n_bad = int(table[:, -1].sum())
        self.degenerate_frames_ = n_bad
        if n_bad > self.max_degenerate_fraction * len(trace):
            raise KinematicsQualityError(
                f"{n_bad} of {len(trace)} frames have degenerate trunk or limb geometry "
                f"(limit {self.max_degenerate_fraction:.0%})")
        return table

    def get_feature_names_out(self, input_features=None):
        return np.asarray(FEATURE_NAMES, dtype=object)


def _check_trace(X) -> MotionTrace:
    if isinstance(X, MotionTrace):
        return X
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 3 and arr.shape[1:] == (13, 3):
        # bare position stacks get unit spacing; only geometry is used here
        return MotionTrace.from_positions(arr, 1.0)
    raise TypeError("expected a MotionTrace or an (n, 13, 3) position array")
