"""Training losses with hand-derived gradients.

Five terms supervise the per-pixel property maps against ground truth:

  point      confidence-weighted distance on the point map P
  flow       the same form on the moved-point map Pvt
  motion2d   pixel distance between projected moved points and GT pixels
  pose       distance between the solved rigid motion of P and the GT
             rigid motion; its gradient flows only into the pose weights
  viewpoint  confidence-weighted distance between Pvt and the GT points
             under camera motion alone, optionally re-weighted by the
             (gradient-stopped) pose weights for dynamic scenes

Gradients are returned alongside every value so callers can run plain
gradient descent without an autodiff framework.  Each term treats the
mean over its mask as the normalizer and contributes zero (value and
gradient) when its mask is empty.  The distance subgradient at zero
residual is taken as zero.

The pose term's weight gradient goes through the closed-form solve via
the implicit function theorem; a finite-difference reference mode is
kept for verification.
"""

from dataclasses import dataclass

import numpy as np

from .core import PropertyMaps, RigidTransform
from .exceptions import ConfigInvalid, DegenerateConfiguration, ShapeMismatch
from .geometry import project
from .pose import _weighted_svd_pose
from .validation import check_points


@dataclass(frozen=True)
class LossConfig:
    """Term weights and shared constants for the total loss."""

    alpha: float = 0.2
    weight_point: float = 1.0
    weight_flow: float = 0.5
    weight_motion2d: float = 0.3
    weight_pose: float = 0.5
    weight_viewpoint: float = 0.5
    pose_grad_mode: str = "analytic"
    # scale the viewpoint term per pixel by sg(W) * npix (mean-one since
    # the weights sum to 1); keeps moving objects from fighting the term
    viewpoint_uses_pose_weight: bool = True

    def __post_init__(self):
        if self.alpha <= 0:
            raise ConfigInvalid(f"alpha must be positive, got {self.alpha}")
        if self.pose_grad_mode not in ("analytic", "fd"):
            raise ConfigInvalid(f"unknown pose_grad_mode {self.pose_grad_mode!r}")


@dataclass(frozen=True)
class LossReport:
    """Total loss, per-term values, and gradients w.r.t. the predictions.

    ``grads`` maps tensor names ("points", "points_moved", "confidence",
    "pose_weight") to full-map arrays.  A tensor a term stops gradients
    to receives no contribution from that term.
    """

    total: float
    terms: dict
    grads: dict


def _unit(res):
    """Rowwise res / ||res||, with zero rows mapped to zero."""
    norm = np.linalg.norm(res, axis=-1, keepdims=True)
    return np.where(norm > 0, res / np.where(norm > 0, norm, 1.0), 0.0)


def _conf_distance_loss(pred, target, confidence, mask, alpha, scale=None):
    """Shared core of the point / flow / viewpoint losses.

    value = (1/|M|) sum_M (s * C * ||pred - target|| - alpha * log C)
    with s an optional per-pixel constant scale (gradient-stopped).
    Returns value and gradients w.r.t. pred and confidence as full maps.
    """
    cnt = int(mask.sum())
    g_pred = np.zeros_like(pred)
    g_conf = np.zeros(confidence.shape, dtype=np.float64)
    if cnt == 0:
        return 0.0, g_pred, g_conf
    res = pred[mask] - target[mask]
    norm = np.linalg.norm(res, axis=-1)
    c = confidence[mask]
    s = np.ones_like(norm) if scale is None else scale[mask]
    value = float((s * c * norm - alpha * np.log(c)).sum() / cnt)
    g_pred[mask] = (s * c)[:, None] * _unit(res) / cnt
    g_conf[mask] = (s * norm - alpha / c) / cnt
    return value, g_pred, g_conf


def loss_point(points, target_points, confidence, mask, alpha=0.2):
    """Confidence-weighted distance on the point map.

    Returns (value, grads) with gradients w.r.t. ``points`` and
    ``confidence``.
    """
    points = check_points(points, "points")
    target_points = check_points(target_points, "target_points")
    mask = np.asarray(mask, dtype=bool)
    value, g_p, g_c = _conf_distance_loss(
        points, target_points, np.asarray(confidence, dtype=np.float64),
        mask, alpha,
    )
    return value, {"points": g_p, "confidence": g_c}


def loss_flow(points_moved, target_moved, confidence, mask, alpha=0.2):
    """Confidence-weighted distance on the moved-point map.

    Supervising moved points directly is equivalent to supervising the
    flow once the point term anchors P.  Confidence is shared with the
    point term.  Returns (value, grads) w.r.t. ``points_moved`` and
    ``confidence``.
    """
    points_moved = check_points(points_moved, "points_moved")
    target_moved = check_points(target_moved, "target_moved")
    mask = np.asarray(mask, dtype=bool)
    value, g_p, g_c = _conf_distance_loss(
        points_moved, target_moved, np.asarray(confidence, dtype=np.float64),
        mask, alpha,
    )
    return value, {"points_moved": g_p, "confidence": g_c}


def loss_motion2d(points, points_moved, target_pixels, camera, mask):
    """Pixel distance between projected moved points and GT pixels.

    ``points`` is unused; it is kept so the 2-D term lines up with the
    3-D term signatures.  Pixels whose moved point does not project
    (depth at or below the cutoff) contribute zero.  No confidence.
    Returns (value, grads) w.r.t. ``points_moved``.
    """
    points_moved = check_points(points_moved, "points_moved")
    target_pixels = np.asarray(target_pixels, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    g = np.zeros_like(points_moved)
    cnt = int(mask.sum())
    if cnt == 0:
        return 0.0, {"points_moved": g}
    proj = project(points_moved, camera)
    m_eff = mask & proj.valid
    res = np.where(m_eff[..., None], proj.pixels - target_pixels, 0.0)
    norm = np.linalg.norm(res, axis=-1)
    value = float(norm.sum() / cnt)
    u = _unit(res)  # (H, W, 2)
    x, y, z = (points_moved[..., i] for i in range(3))
    z = np.where(m_eff, z, 1.0)
    f = camera.f
    # J = d(pixel)/d(point): rows (f/Z, 0, -fX/Z^2), (0, f/Z, -fY/Z^2)
    gx = f / z * u[..., 0]
    gy = f / z * u[..., 1]
    gz = -f / (z * z) * (x * u[..., 0] + y * u[..., 1])
    g[..., 0] = np.where(m_eff, gx / cnt, 0.0)
    g[..., 1] = np.where(m_eff, gy / cnt, 0.0)
    g[..., 2] = np.where(m_eff, gz / cnt, 0.0)
    return value, {"points_moved": g}


def _pose_term_value(p, q, w, loss_pts, loss_targets):
    rot, trans = _weighted_svd_pose(p, q, w)
    res = loss_pts @ rot.T + trans - loss_targets
    return float(np.linalg.norm(res, axis=1).mean()), rot, trans


def _pose_grad_analytic(p, q, w, rot, loss_pts, unit_res):
    """d(mean ||R P + t - const||) / dw through the closed-form solve.

    Differentiates the weighted SVD solution via the implicit function
    theorem: at the optimum M = R A is symmetric and a weight change dw_i
    rotates R by delta_omega = K^-1 (a_i x b_i) / S with K = tr(M) I - M,
    a_i = R (p_i - pbar), b_i = q_i - qbar, S = sum w.
    """
    total = w.sum()
    w_hat = w / total
    p_bar = w_hat @ p
    q_bar = w_hat @ q
    a = (p - p_bar) @ rot.T
    b = q - q_bar
    cov = ((p - p_bar) * w_hat[:, None]).T @ (q - q_bar)
    m_mat = rot @ cov
    k_mat = np.trace(m_mat) * np.eye(3) - m_mat
    cnt = loss_pts.shape[0]
    g_t = unit_res.sum(axis=0) / cnt
    g_omega = np.cross(loss_pts @ rot.T, unit_res).sum(axis=0) / cnt
    h = g_omega - np.cross(rot @ p_bar, g_t)
    try:
        k_vec = np.linalg.solve(k_mat, h)
    except np.linalg.LinAlgError:
        raise DegenerateConfiguration(
            "pose-loss gradient: rotation sensitivity system is singular "
            "(degenerate point configuration)"
        )
    return (np.cross(a, b) @ k_vec + b @ g_t - a @ g_t) / total


def loss_pose(points, points_moved, pose_weight, target_points,
              target_transform, mask, valid=None, grad_mode="analytic",
              fd_step=1e-5):
    """Distance between solved and GT rigid motion of the point map.

    Solves T from (P, Pvt, W) over the valid pixels, then scores
    mean over mask of ||T(P) - Tbar(Pbar)||.  The returned gradient is
    w.r.t. the pose weights only; the solve's dependence on P and Pvt is
    gradient-stopped by construction.

    ``grad_mode="analytic"`` differentiates through the solve in closed
    form; ``"fd"`` recomputes the solve per weight with central
    differences of ``fd_step`` (reference implementation, quadratic cost).
    """
    points = check_points(points, "points")
    points_moved = check_points(points_moved, "points_moved")
    pose_weight = np.asarray(pose_weight, dtype=np.float64)
    target_points = check_points(target_points, "target_points")
    mask = np.asarray(mask, dtype=bool)
    if valid is None:
        valid = np.ones(mask.shape, dtype=bool)
    valid = np.asarray(valid, dtype=bool)

    g = np.zeros(pose_weight.shape, dtype=np.float64)
    cnt = int(mask.sum())
    if cnt == 0:
        return 0.0, {"pose_weight": g}

    solve_sel = valid & (pose_weight > 0)
    p = points[solve_sel].reshape(-1, 3)
    q = points_moved[solve_sel].reshape(-1, 3)
    w = pose_weight[solve_sel].reshape(-1)
    if p.shape[0] < 3:
        raise DegenerateConfiguration("pose loss: fewer than 3 solve pixels")
    loss_pts = points[mask].reshape(-1, 3)
    loss_targets = target_transform.apply(target_points[mask].reshape(-1, 3))

    value, rot, trans = _pose_term_value(p, q, w, loss_pts, loss_targets)

    if grad_mode == "analytic":
        res = loss_pts @ rot.T + trans - loss_targets
        g[solve_sel] = _pose_grad_analytic(p, q, w, rot, loss_pts, _unit(res))
    elif grad_mode == "fd":
        flat = np.zeros(w.shape[0])
        for i in range(w.shape[0]):
            w_hi = w.copy()
            w_hi[i] += fd_step
            v_hi, _, _ = _pose_term_value(p, q, w_hi, loss_pts, loss_targets)
            w_lo = w.copy()
            w_lo[i] -= fd_step
            v_lo, _, _ = _pose_term_value(p, q, w_lo, loss_pts, loss_targets)
            flat[i] = (v_hi - v_lo) / (2.0 * fd_step)
        g[solve_sel] = flat
    else:
        raise ConfigInvalid(f"unknown grad_mode {grad_mode!r}")
    return value, {"pose_weight": g}


def loss_viewpoint_flow(points_moved, target_viewpoint, confidence, mask,
                        alpha=0.2, pose_weight=None):
    """Confidence-weighted distance between Pvt and the camera-motion-only
    GT points.

    When ``pose_weight`` is given, each pixel is additionally scaled by
    the gradient-stopped weight times the pixel count (mean one, since
    weights sum to one), which suppresses moving objects.  The weights
    receive no gradient from this term.  Returns (value, grads) w.r.t.
    ``points_moved`` and ``confidence``.
    """
    points_moved = check_points(points_moved, "points_moved")
    target_viewpoint = check_points(target_viewpoint, "target_viewpoint")
    mask = np.asarray(mask, dtype=bool)
    scale = None
    if pose_weight is not None:
        npix = pose_weight.size
        scale = np.asarray(pose_weight, dtype=np.float64) * npix
    value, g_p, g_c = _conf_distance_loss(
        points_moved, target_viewpoint,
        np.asarray(confidence, dtype=np.float64), mask, alpha, scale=scale,
    )
    return value, {"points_moved": g_p, "confidence": g_c}


def _accumulate(total_grads, term_grads, weight):
    for key, g in term_grads.items():
        if key in total_grads:
            total_grads[key] = total_grads[key] + weight * g
        else:
            total_grads[key] = weight * g


def total_loss(pred, target, target_transform, camera=None,
               config=LossConfig()):
    """Weighted sum of the five terms for one image pair.

    ``pred`` and ``target`` are PropertyMaps; supervision masks are read
    from the target and intersected with both validity masks.  The 2-D
    motion term needs ``camera`` and is skipped (contributing zero) when
    it is None.  Returns a LossReport.
    """
    if not isinstance(pred, PropertyMaps) or not isinstance(target, PropertyMaps):
        raise ShapeMismatch("total_loss expects PropertyMaps for pred and target")
    if not isinstance(target_transform, RigidTransform):
        raise ShapeMismatch("target_transform must be a RigidTransform")
    if pred.shape != target.shape:
        raise ShapeMismatch(f"pred {pred.shape} vs target {target.shape}")

    both = pred.valid & target.valid
    m_point = target.mask_point & both
    m_flow = target.mask_motion3d & both
    m_2d = target.mask_motion2d & both

    terms = {}
    grads = {
        "points": np.zeros_like(pred.points),
        "points_moved": np.zeros_like(pred.points_moved),
        "confidence": np.zeros_like(pred.confidence),
        "pose_weight": np.zeros_like(pred.pose_weight),
    }

    v, g = loss_point(pred.points, target.points, pred.confidence, m_point,
                      alpha=config.alpha)
    terms["point"] = v
    _accumulate(grads, g, config.weight_point)

    v, g = loss_flow(pred.points_moved, target.points_moved, pred.confidence,
                     m_flow, alpha=config.alpha)
    terms["flow"] = v
    _accumulate(grads, g, config.weight_flow)

    if camera is not None:
        target_pixels = project(target.points_moved, camera)
        v, g = loss_motion2d(pred.points, pred.points_moved,
                             target_pixels.pixels, camera,
                             m_2d & target_pixels.valid)
    else:
        v, g = 0.0, {}
    terms["motion2d"] = v
    _accumulate(grads, g, config.weight_motion2d)

    v, g = loss_pose(pred.points, pred.points_moved, pred.pose_weight,
                     target.points, target_transform, m_point,
                     valid=pred.valid, grad_mode=config.pose_grad_mode)
    terms["pose"] = v
    _accumulate(grads, g, config.weight_pose)

    target_viewpoint = target_transform.apply(target.points)
    v, g = loss_viewpoint_flow(
        pred.points_moved, target_viewpoint, pred.confidence, m_point,
        alpha=config.alpha,
        pose_weight=pred.pose_weight if config.viewpoint_uses_pose_weight else None,
    )
    terms["viewpoint"] = v
    _accumulate(grads, g, config.weight_viewpoint)

    total = (
        config.weight_point * terms["point"]
        + config.weight_flow * terms["flow"]
        + config.weight_motion2d * terms["motion2d"]
        + config.weight_pose * terms["pose"]
        + config.weight_viewpoint * terms["viewpoint"]
    )
    return LossReport(total=total, terms=terms, grads=grads)
