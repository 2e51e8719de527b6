"""Shared test utilities."""

import numpy as np


def fd_gradient(fn, arr, step=1e-5, indices=None, rng=None, n_samples=None):
    """Central finite differences of scalar fn(arr) at selected entries.

    Returns (indices, fd_values).  With ``n_samples`` set, entries are
    drawn at random (seeded rng required); otherwise every entry is
    probed unless explicit ``indices`` are given.
    """
    if indices is None:
        if n_samples is not None:
            indices = [tuple(rng.integers(0, s) for s in arr.shape)
                       for _ in range(n_samples)]
        else:
            indices = list(np.ndindex(*arr.shape))
    values = np.empty(len(indices))
    for j, ix in enumerate(indices):
        hi = arr.copy()
        hi[ix] += step
        lo = arr.copy()
        lo[ix] -= step
        values[j] = (fn(hi) - fn(lo)) / (2.0 * step)
    return indices, values


def max_rel_error(analytic, fd, floor=1e-10):
    denom = np.maximum(np.abs(fd), floor)
    return float(np.max(np.abs(analytic - fd) / denom))
