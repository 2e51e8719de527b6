"""Weighted two-view pose solving and scene-flow decomposition.

The pose between an image pair is recovered in closed form from the
point map P and moved-point map Pvt, weighted per pixel: the rigid
transform T minimizing sum_i W_i ||Pvt_i - T P_i||^2 has the classical
SVD solution over the weighted cross-covariance.  An IRLS mode
re-weights by inverse residual norm to minimize the non-squared sum
instead, which is what the reported residual measures in both modes.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .core import PropertyMaps, RigidTransform
from .exceptions import (
    DegenerateConfiguration,
    InsufficientSupport,
    ShapeMismatch,
)
from .validation import check_finite, check_points

IRLS_MAX_ITERS = 20
IRLS_ROT_TOL = 1e-10
RESIDUAL_FLOOR = 1e-8


def _weighted_svd_pose(points, targets, weights):
    """Closed-form weighted Procrustes: argmin_T sum w_i ||q_i - T p_i||^2."""
    w = weights / weights.sum()
    p_bar = w @ points
    q_bar = w @ targets
    p_c = points - p_bar
    q_c = targets - q_bar
    cov = (p_c * w[:, None]).T @ q_c
    u, _, vt = np.linalg.svd(cov)
    v = vt.T
    d = np.sign(np.linalg.det(v @ u.T))
    rot = v @ np.diag([1.0, 1.0, d]) @ u.T
    trans = q_bar - rot @ p_bar
    return rot, trans


def solve_pose_weighted(points, targets, weights, mode="closed_form"):
    """Solve for the rigid transform carrying ``points`` onto ``targets``.

    Accepts flat (N, 3) arrays or (H, W, 3) maps with matching weights.
    ``mode="closed_form"`` minimizes the weighted sum of squared
    distances; ``mode="irls"`` iteratively reweights (at most 20 rounds,
    stopping when the rotation update falls below 1e-10) to minimize the
    weighted sum of unsquared distances.

    Returns (transform, residual) where residual is the weight-normalized
    sum of unsquared point distances under the solved transform, in the
    input point units.
    """
    points = check_points(points, "points").reshape(-1, 3)
    targets = check_points(targets, "targets").reshape(-1, 3)
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    if not (points.shape[0] == targets.shape[0] == weights.shape[0]):
        raise ShapeMismatch(
            f"pose solve: {points.shape[0]} points, {targets.shape[0]} targets, "
            f"{weights.shape[0]} weights"
        )
    keep = weights > 0
    points, targets, weights = points[keep], targets[keep], weights[keep]
    if points.shape[0] < 3:
        raise InsufficientSupport(
            f"pose solve needs >= 3 positively weighted points, got {points.shape[0]}"
        )
    check_finite(points, "points")
    check_finite(targets, "targets")
    check_finite(weights, "weights")

    if mode not in ("closed_form", "irls"):
        raise DegenerateConfiguration(f"unknown pose mode {mode!r}")

    rot, trans = _weighted_svd_pose(points, targets, weights)
    if mode == "irls":
        for _ in range(IRLS_MAX_ITERS):
            res = np.linalg.norm(targets - points @ rot.T - trans, axis=1)
            irls_w = weights / np.maximum(res, RESIDUAL_FLOOR)
            rot_new, trans_new = _weighted_svd_pose(points, targets, irls_w)
            delta = np.abs(rot_new - rot).max()
            rot, trans = rot_new, trans_new
            if delta < IRLS_ROT_TOL:
                break

    transform = RigidTransform(rot, trans)
    w_norm = weights / weights.sum()
    residual = float(
        (w_norm * np.linalg.norm(targets - transform.apply(points), axis=1)).sum()
    )
    return transform, residual


class WeightedPoseSolver(BaseEstimator):
    """Estimator wrapper around the weighted two-view pose solve.

    Parameters
    ----------
    mode : str, "closed_form" or "irls".

    After ``fit(X, y, sample_weight)`` with X the source points and y the
    target points (both (N, 3) or (H, W, 3)), exposes ``rotation_``,
    ``translation_``, ``transform_``, and ``residual_``.
    """

    def __init__(self, mode="closed_form"):
        self.mode = mode

    def fit(self, X, y, sample_weight=None):
        X = check_points(X, "X")
        if sample_weight is None:
            sample_weight = np.ones(X.shape[:-1], dtype=np.float64)
        transform, residual = solve_pose_weighted(X, y, sample_weight, mode=self.mode)
        self.transform_ = transform
        self.rotation_ = transform.rotation
        self.translation_ = transform.translation
        self.residual_ = residual
        return self

    def predict(self, X):
        """Apply the fitted transform to (..., 3) points."""
        return self.transform_.apply(X)


@dataclass(frozen=True)
class FlowDecomposition:
    """Scene flow split into its camera-induced and object-induced parts.

    Invariants, by construction:
      flow_camera + flow_object = flow
      points_viewpoint = T(points)
      points_tracking  = T^-1(points + flow)
    """

    transform: RigidTransform
    residual: float
    points_viewpoint: np.ndarray
    points_tracking: np.ndarray
    flow_camera: np.ndarray
    flow_object: np.ndarray
    valid: np.ndarray


def decompose_flow(maps, mode="closed_form"):
    """Decompose an image pair's scene flow about its rigid pose.

    Solves the weighted pose T from (P, Pvt, W), then splits the flow
    F = Pvt - P into the camera part F_v = T(P) - P and the object part
    F_t = F - F_v, and forms the tracking points P_t = T^-1(Pvt), which
    remove camera motion while keeping object motion.
    """
    if not isinstance(maps, PropertyMaps):
        raise ShapeMismatch(f"expected PropertyMaps, got {type(maps).__name__}")
    valid = maps.valid
    transform, residual = solve_pose_weighted(
        maps.points[valid], maps.points_moved[valid], maps.pose_weight[valid],
        mode=mode,
    )
    points_viewpoint = transform.apply(maps.points)
    flow = maps.points_moved - maps.points
    flow_camera = points_viewpoint - maps.points
    flow_object = flow - flow_camera
    points_tracking = transform.invert().apply(maps.points_moved)
    zero3 = ~valid[..., None]
    return FlowDecomposition(
        transform=transform,
        residual=residual,
        points_viewpoint=np.where(zero3, 0.0, points_viewpoint),
        points_tracking=np.where(zero3, 0.0, points_tracking),
        flow_camera=np.where(zero3, 0.0, flow_camera),
        flow_object=np.where(zero3, 0.0, flow_object),
        valid=valid,
    )


class FlowDecomposer(BaseEstimator):
    """Estimator wrapper around the scene-flow decomposition.

    ``fit(maps)`` takes a PropertyMaps instance and exposes
    ``decomposition_``, ``transform_``, and ``residual_``; ``transform(maps)``
    returns the tracking-point map of a (possibly different) pair under
    the fitted pose.
    """

    def __init__(self, mode="closed_form"):
        self.mode = mode

    def fit(self, X, y=None):
        self.decomposition_ = decompose_flow(X, mode=self.mode)
        self.transform_ = self.decomposition_.transform
        self.residual_ = self.decomposition_.residual
        return self

    def transform(self, X):
        if not isinstance(X, PropertyMaps):
            raise ShapeMismatch(f"expected PropertyMaps, got {type(X).__name__}")
        pt = self.transform_.invert().apply(X.points_moved)
        return np.where(X.valid[..., None], pt, 0.0)


def track_points(maps, transform=None, mode="closed_form"):
    """Camera-motion-free point positions for a pair: T^-1(P + F).

    If ``transform`` is omitted it is solved from the pair itself.
    """
    if transform is None:
        transform = decompose_flow(maps, mode=mode).transform
    pt = transform.invert().apply(maps.points_moved)
    return np.where(maps.valid[..., None], pt, 0.0)


def optical_flow_from_maps(maps, camera, grid=None):
    """2-D pixel motion induced by the full 3-D flow under a camera.

    Projects P and Pvt and differences the pixels; entries where either
    projection fails are invalid.  Returns (flow2d, valid).
    """
    from .geometry import PixelGrid, project

    if grid is None:
        grid = PixelGrid(*maps.shape)
    src = project(maps.points, camera)
    dst = project(maps.points_moved, camera)
    valid = maps.valid & src.valid & dst.valid
    flow2d = np.where(valid[..., None], dst.pixels - src.pixels, 0.0)
    return flow2d, valid
