"""Core domain types: property maps, rigid transforms, and cameras.

Per-pixel maps are plain float64 numpy arrays (H x W or H x W x 3);
the types below bundle them with their validity masks and enforce the
construction invariants once, after which instances are immutable and
safe to share across threads.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    ConfidenceOutOfRange,
    InvalidCamera,
    InvalidTransform,
    ShapeMismatch,
    WeightOutOfRange,
)
from .validation import check_finite, check_map, check_mask, check_points

ORTHONORMALITY_TOL = 1e-9
WEIGHT_SUM_TOL = 1e-4


def _freeze(arr):
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class RigidTransform:
    """Rotation + translation element of SE(3), validated at construction."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=np.float64)
        trans = np.asarray(self.translation, dtype=np.float64)
        if rot.shape != (3, 3) or trans.shape != (3,):
            raise ShapeMismatch(
                f"rigid transform: got rotation {rot.shape}, translation {trans.shape}"
            )
        if not (np.isfinite(rot).all() and np.isfinite(trans).all()):
            raise InvalidTransform("rigid transform contains non-finite values")
        err = np.abs(rot.T @ rot - np.eye(3)).max()
        if err > ORTHONORMALITY_TOL:
            raise InvalidTransform(f"rotation not orthonormal (|R'R - I| = {err:.3e})")
        det = np.linalg.det(rot)
        if abs(det - 1.0) > ORTHONORMALITY_TOL:
            raise InvalidTransform(f"rotation determinant {det:.12f} != +1")
        object.__setattr__(self, "rotation", _freeze(rot))
        object.__setattr__(self, "translation", _freeze(trans))

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, mat):
        """Build from a 3x4 or 4x4 row-major pose matrix."""
        mat = np.asarray(mat, dtype=np.float64)
        if mat.shape not in ((3, 4), (4, 4)):
            raise ShapeMismatch(f"pose matrix: expected 3x4 or 4x4, got {mat.shape}")
        return cls(mat[:3, :3], mat[:3, 3])

    def as_matrix34(self):
        return np.hstack([self.rotation, self.translation[:, None]])

    def compose(self, other):
        """Return self applied after ``other``: (self @ other)(P) = self(other(P))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def invert(self):
        rot_inv = self.rotation.T
        return RigidTransform(rot_inv, -rot_inv @ self.translation)

    def apply(self, points):
        """Apply to an (..., 3) array of points."""
        points = check_points(points)
        return points @ self.rotation.T + self.translation


def nearest_rotation(mat):
    """Project a near-rotation 3x3 matrix onto SO(3).

    Use when a rotation has been through lossy storage (float32
    containers) and no longer passes the orthonormality gate.
    """
    mat = np.asarray(mat, dtype=np.float64)
    if mat.shape != (3, 3):
        raise ShapeMismatch(f"rotation: expected (3, 3), got {mat.shape}")
    u, _, vt = np.linalg.svd(mat)
    rot = u @ vt
    if np.linalg.det(rot) < 0:
        rot = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return rot


def compose(a, b):
    """Composition of rigid transforms; apply(compose(a, b), P) = a(b(P))."""
    return a.compose(b)


def invert(t):
    return t.invert()


def apply(t, points):
    return t.apply(points)


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with a single focal length and 2-vector optical center."""

    f: float
    c: np.ndarray

    def __post_init__(self):
        f = float(self.f)
        c = np.asarray(self.c, dtype=np.float64)
        if not np.isfinite(f) or f <= 0:
            raise InvalidCamera(f"focal length must be positive, got {f}")
        if c.shape != (2,) or not np.isfinite(c).all():
            raise InvalidCamera(f"optical center must be a finite 2-vector, got {c}")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "c", _freeze(c))


@dataclass(frozen=True)
class PropertyMaps:
    """The per-image property set for an image pair (I, I').

    Canonically stores the moved-point map (points after both camera and
    object motion, in the other view's frame and timestamp); the scene
    flow is derived on demand as ``points_moved - points``.

    Validity is tri-masked for training data: ``mask_point`` /
    ``mask_motion3d`` / ``mask_motion2d`` default to ``valid`` and gate
    the respective supervision channels.
    """

    points: np.ndarray
    points_moved: np.ndarray
    pose_weight: np.ndarray
    confidence: np.ndarray
    valid: np.ndarray
    mask_point: np.ndarray = None
    mask_motion3d: np.ndarray = None
    mask_motion2d: np.ndarray = None

    def __post_init__(self):
        for name in ("mask_point", "mask_motion3d", "mask_motion2d"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, self.valid)
        for name in (
            "points",
            "points_moved",
            "pose_weight",
            "confidence",
            "valid",
            "mask_point",
            "mask_motion3d",
            "mask_motion2d",
        ):
            object.__setattr__(self, name, _freeze(getattr(self, name)))

    @property
    def flow(self):
        """Scene flow, derived from the canonical moved-point map."""
        return self.points_moved - self.points

    @property
    def shape(self):
        return self.valid.shape

    @classmethod
    def from_moved_points(cls, points, points_moved, pose_weight, confidence,
                          valid=None, **masks):
        return validate_property_maps(
            points, pose_weight, confidence, points_moved=points_moved,
            valid=valid, **masks,
        )

    @classmethod
    def from_flow(cls, points, flow, pose_weight, confidence, valid=None, **masks):
        return validate_property_maps(
            points, pose_weight, confidence, flow=flow, valid=valid, **masks,
        )


def _renormalize(weights, valid):
    """Zero invalid pixels and rescale so valid weights sum to exactly 1."""
    out = np.where(valid, weights, 0.0)
    out = out / out.sum()
    # the division can leave the sum an ulp off either way and rescaling
    # again just oscillates; absorb the residual into the largest weight
    idx = np.unravel_index(np.argmax(out), out.shape)
    for _ in range(5):
        total = out.sum()
        if total == 1.0:
            break
        out[idx] += 1.0 - total
    return out


def validate_property_maps(points, pose_weight, confidence, points_moved=None,
                           flow=None, valid=None, mask_point=None,
                           mask_motion3d=None, mask_motion2d=None):
    """Validate a candidate property set and return an immutable PropertyMaps.

    Exactly one of ``points_moved`` / ``flow`` must be given; the canonical
    state stores moved points (``points + flow`` when flow is supplied).
    Pose weights must lie in (0, 1) on valid pixels and their finite
    entries must sum to 1 within 1e-4; weights on invalid pixels are then
    zeroed and the rest renormalized exactly.  Confidence must be
    strictly greater than 1 on valid pixels.
    """
    points = check_map(points, "points", channels=3)
    if (points_moved is None) == (flow is None):
        raise ShapeMismatch("provide exactly one of points_moved / flow")
    if flow is not None:
        flow = check_map(flow, "flow", channels=3, like=points)
        points_moved = points + flow
    else:
        points_moved = check_map(points_moved, "points_moved", channels=3, like=points)
    pose_weight = check_map(pose_weight, "pose_weight", like=points)
    confidence = check_map(confidence, "confidence", like=points)
    if valid is None:
        valid = np.ones(points.shape[:2], dtype=bool)
    valid = check_mask(valid, "valid", points)

    check_finite(points, "points", valid)
    check_finite(points_moved, "points_moved", valid)
    check_finite(pose_weight, "pose_weight", valid)
    check_finite(confidence, "confidence", valid)

    w_valid = pose_weight[valid]
    if w_valid.size == 0:
        raise ShapeMismatch("no valid pixels")
    if (w_valid <= 0).any() or (w_valid >= 1).any():
        raise WeightOutOfRange(
            f"pose weights must lie in (0, 1); range "
            f"[{w_valid.min():.6g}, {w_valid.max():.6g}]"
        )
    # gate the sum over every finite entry: accepts maps normalized over
    # the whole grid as well as over the valid set, rejects wrong scales
    total = pose_weight[np.isfinite(pose_weight)].sum()
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        raise WeightOutOfRange(f"pose weights sum to {total:.6g}, expected 1")
    pose_weight = _renormalize(pose_weight, valid)

    if (confidence[valid] <= 1).any():
        raise ConfidenceOutOfRange(
            f"confidence must exceed 1; min {confidence[valid].min():.6g}"
        )

    masks = {}
    for name, mask in (("mask_point", mask_point),
                       ("mask_motion3d", mask_motion3d),
                       ("mask_motion2d", mask_motion2d)):
        masks[name] = None if mask is None else check_mask(mask, name, points)

    return PropertyMaps(points, points_moved, pose_weight, confidence, valid, **masks)
