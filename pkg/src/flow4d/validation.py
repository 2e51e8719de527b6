"""Input validation helpers.

All library math runs on 64-bit floats; these helpers coerce and check
incoming arrays once, at the boundary, so the numeric code can assume
clean inputs.
"""

import numpy as np

from .exceptions import NonFiniteValue, ShapeMismatch


def check_map(arr, name, channels=None, like=None):
    """Coerce ``arr`` to a float64 H x W (x channels) array and check its shape.

    Parameters
    ----------
    arr : array-like
        Candidate per-pixel map.
    name : str
        Name used in error messages.
    channels : int or None
        Expected trailing channel count; ``None`` means a 2-D map.
    like : ndarray or None
        Reference map whose leading H x W must match.
    """
    arr = np.asarray(arr, dtype=np.float64)
    expected_ndim = 2 if channels is None else 3
    if arr.ndim != expected_ndim:
        raise ShapeMismatch(
            f"{name}: expected {expected_ndim}-D array, got shape {arr.shape}"
        )
    if channels is not None and arr.shape[2] != channels:
        raise ShapeMismatch(
            f"{name}: expected {channels} channels, got shape {arr.shape}"
        )
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeMismatch(f"{name}: degenerate shape {arr.shape}")
    if like is not None and arr.shape[:2] != like.shape[:2]:
        raise ShapeMismatch(
            f"{name}: grid {arr.shape[:2]} does not match {like.shape[:2]}"
        )
    return arr


def check_mask(mask, name, like):
    """Coerce ``mask`` to boolean with the same H x W as ``like``."""
    mask = np.asarray(mask)
    if mask.shape != like.shape[:2]:
        raise ShapeMismatch(
            f"{name}: mask shape {mask.shape} does not match {like.shape[:2]}"
        )
    return mask.astype(bool)


def check_finite(arr, name, mask=None):
    """Raise NonFiniteValue if any unmasked element of ``arr`` is not finite."""
    finite = np.isfinite(arr)
    if finite.ndim == 3:
        finite = finite.all(axis=2)
    if mask is not None:
        finite = finite | ~mask
    if not finite.all():
        bad = int((~finite).sum())
        raise NonFiniteValue(f"{name}: {bad} unmasked non-finite pixel(s)")
    return arr


def check_points(points, name="points"):
    """Coerce a free-form point set to float64 with a trailing xyz axis."""
    points = np.asarray(points, dtype=np.float64)
    if points.ndim < 1 or points.shape[-1] != 3:
        raise ShapeMismatch(f"{name}: expected (..., 3) array, got {points.shape}")
    return points
