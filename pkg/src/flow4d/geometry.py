"""Pinhole projection, backprojection, and focal-length recovery."""

from dataclasses import dataclass

import numpy as np

from .core import Camera
from .exceptions import DegenerateGeometry, InvalidProjection, ShapeMismatch
from .validation import check_map, check_mask, check_points

MIN_DEPTH = 1e-6
MIN_FOCAL_SUPPORT = 1e-12


@dataclass(frozen=True)
class PixelGrid:
    """Pixel coordinate grid for an H x W image.

    ``convention="center"`` places pixel (row, col) at (col + 0.5, row + 0.5);
    ``"corner"`` places it at (col, row).
    """

    height: int
    width: int
    convention: str = "center"

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0:
            raise ShapeMismatch(f"grid size {self.height}x{self.width}")
        if self.convention not in ("center", "corner"):
            raise InvalidProjection(f"unknown pixel convention {self.convention!r}")

    def coords(self):
        """(H, W, 2) array of (u, v) pixel coordinates."""
        off = 0.5 if self.convention == "center" else 0.0
        u = np.arange(self.width, dtype=np.float64) + off
        v = np.arange(self.height, dtype=np.float64) + off
        uu, vv = np.meshgrid(u, v)
        return np.stack([uu, vv], axis=-1)

    def center(self):
        """Image center in this grid's pixel coordinates."""
        return np.array([self.width / 2.0, self.height / 2.0])


@dataclass(frozen=True)
class ProjectedMap:
    """Projection output: (..., 2) pixel coordinates plus a validity mask."""

    pixels: np.ndarray
    valid: np.ndarray


def project(points, camera):
    """Project (..., 3) camera-frame points through a pinhole camera.

    Points with depth Z <= 1e-6 are marked invalid; their pixel entries
    are zero.  Returns a ProjectedMap.
    """
    points = check_points(points, "points")
    if not isinstance(camera, Camera):
        raise InvalidProjection(f"expected Camera, got {type(camera).__name__}")
    z = points[..., 2]
    valid = np.isfinite(points).all(axis=-1) & (z > MIN_DEPTH)
    z_safe = np.where(valid, z, 1.0)
    uv = camera.f * points[..., :2] / z_safe[..., None] + camera.c
    uv = np.where(valid[..., None], uv, 0.0)
    return ProjectedMap(pixels=uv, valid=valid)


def backproject(depth, camera, grid=None):
    """Lift an H x W depth map to camera-frame points.

    Returns (points, valid): points is (H, W, 3), valid marks pixels with
    finite positive depth.  Invalid pixels get zero points.
    """
    depth = check_map(depth, "depth")
    if depth.ndim != 2:
        raise ShapeMismatch(f"depth must be H x W, got {depth.shape}")
    if grid is None:
        grid = PixelGrid(*depth.shape)
    elif (grid.height, grid.width) != depth.shape:
        raise ShapeMismatch(
            f"grid {grid.height}x{grid.width} does not match depth {depth.shape}"
        )
    valid = np.isfinite(depth) & (depth > 0)
    uv = grid.coords()
    rays = np.empty(depth.shape + (3,), dtype=np.float64)
    rays[..., :2] = (uv - camera.c) / camera.f
    rays[..., 2] = 1.0
    points = np.where(valid[..., None], depth[..., None] * rays, 0.0)
    return points, valid


def rigid_flow(points, transform):
    """Scene flow induced by pure camera motion: T(P) - P."""
    points = check_points(points, "points")
    return transform.apply(points) - points


def _focal_inputs(points, pixels, center, mask):
    points = check_points(points, "points").reshape(-1, 3)
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    if pixels.shape[0] != points.shape[0]:
        raise ShapeMismatch(
            f"focal solve: {points.shape[0]} points vs {pixels.shape[0]} pixels"
        )
    if mask is not None:
        mask = np.asarray(mask, dtype=bool).reshape(-1)
        if mask.shape[0] != points.shape[0]:
            raise ShapeMismatch("focal solve: mask length mismatch")
        points, pixels = points[mask], pixels[mask]
    keep = np.isfinite(points).all(axis=1) & np.isfinite(pixels).all(axis=1)
    keep &= points[:, 2] > MIN_DEPTH
    points, pixels = points[keep], pixels[keep]
    rays = points[:, :2] / points[:, 2:3]
    offsets = pixels - center
    return rays, offsets


def solve_focal(points, pixels, grid_or_center, mask=None, mode="closed_form"):
    """Recover the shared focal length from points and their observed pixels.

    Minimizes sum ||u - f r||mode over valid pixels, where r = (X/Z, Y/Z)
    and u is the observed pixel offset from the image center.
    ``mode="closed_form"`` solves the least-squares problem exactly;
    ``mode="weiszfeld"`` runs 10 reweighting iterations from that start,
    minimizing the non-squared objective for robustness to outliers.
    """
    if isinstance(grid_or_center, PixelGrid):
        center = grid_or_center.center()
    else:
        center = np.asarray(grid_or_center, dtype=np.float64).reshape(2)
    rays, offsets = _focal_inputs(points, pixels, center, mask)
    denom = float((rays * rays).sum())
    if denom < MIN_FOCAL_SUPPORT:
        raise DegenerateGeometry(
            "focal solve: rays have no off-axis support (all points on the optical axis?)"
        )
    f = float((offsets * rays).sum()) / denom

    if mode == "closed_form":
        return f
    if mode != "weiszfeld":
        raise InvalidProjection(f"unknown focal mode {mode!r}")

    for _ in range(10):
        res = np.linalg.norm(offsets - f * rays, axis=1)
        w = 1.0 / np.maximum(res, 1e-8)
        denom = float((w * (rays * rays).sum(axis=1)).sum())
        if denom < MIN_FOCAL_SUPPORT:
            raise DegenerateGeometry("focal solve: reweighting lost all support")
        f = float((w * (offsets * rays).sum(axis=1)).sum()) / denom
    return f


def normalize_points(*point_maps, valid=None):
    """Scale point maps by 1 / (mean Euclidean norm over valid pixels).

    The scale is computed jointly over all provided maps so that relative
    geometry is preserved.  Returns (scaled_maps_tuple, scale).
    """
    if not point_maps:
        raise ShapeMismatch("normalize_points: no maps given")
    maps = [check_points(p, f"map{i}") for i, p in enumerate(point_maps)]
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        norms = [np.linalg.norm(m[valid], axis=-1) for m in maps]
    else:
        norms = [np.linalg.norm(m.reshape(-1, 3), axis=-1) for m in maps]
    all_norms = np.concatenate(norms)
    if all_norms.size == 0:
        raise ShapeMismatch("normalize_points: no valid pixels")
    mean = float(all_norms.mean())
    if mean <= 0:
        raise DegenerateGeometry("normalize_points: all points at the origin")
    scaled = tuple(m / mean for m in maps)
    return scaled, mean
