"""Multi-frame tracking built on per-pair flow decomposition.

A sequence prediction is one PropertyMaps per pair (anchor frame, frame
n).  Each pair is predicted independently and so carries its own global
scale; pairs are aligned onto the first pair's scale by the ratio of
mean point norms before pose solving.  Tracks are then the per-pair
tracking points (camera motion removed, object motion kept), with the
anchor's own point map as frame zero.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .core import PropertyMaps, RigidTransform
from .exceptions import (
    DegenerateConfiguration,
    DegenerateSet,
    InsufficientSupport,
    ShapeMismatch,
    Unsupported,
)
from .pose import decompose_flow


@dataclass(frozen=True)
class SequencePrediction:
    """Per-pair property maps for one sequence; pair n is (anchor, frame n+1)."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple(self.pairs)
        if not pairs:
            raise ShapeMismatch("sequence needs at least one pair")
        for i, p in enumerate(pairs):
            if not isinstance(p, PropertyMaps):
                raise ShapeMismatch(f"pair {i} is not a PropertyMaps")
            if p.shape != pairs[0].shape:
                raise ShapeMismatch(
                    f"pair {i} shape {p.shape} != pair 0 shape {pairs[0].shape}"
                )
        object.__setattr__(self, "pairs", pairs)

    @property
    def n_frames(self):
        return len(self.pairs) + 1

    @property
    def shape(self):
        return self.pairs[0].shape


def _pair_scale(maps):
    norms = np.linalg.norm(maps.points[maps.valid], axis=-1)
    if norms.size == 0:
        raise DegenerateSet("pair has no valid pixels for scale estimation")
    scale = float(norms.mean())
    if scale <= 0:
        raise DegenerateSet("pair points are all at the origin")
    return scale


def align_scales(prediction):
    """Rescale every pair onto the first pair's global scale.

    The scale of a pair is the mean Euclidean norm of its valid anchor
    points; pair n is multiplied by scale(pair 1) / scale(pair n), so
    anchor maps become mutually consistent.  Returns (aligned, factors).
    """
    if not isinstance(prediction, SequencePrediction):
        prediction = SequencePrediction(tuple(prediction))
    scales = [_pair_scale(p) for p in prediction.pairs]
    factors = np.array([scales[0] / s for s in scales])
    aligned = []
    for maps, factor in zip(prediction.pairs, factors):
        if factor == 1.0:
            aligned.append(maps)
            continue
        aligned.append(PropertyMaps(
            points=maps.points * factor,
            points_moved=maps.points_moved * factor,
            pose_weight=maps.pose_weight,
            confidence=maps.confidence,
            valid=maps.valid,
            mask_point=maps.mask_point,
            mask_motion3d=maps.mask_motion3d,
            mask_motion2d=maps.mask_motion2d,
        ))
    return SequencePrediction(tuple(aligned)), factors


@dataclass(frozen=True)
class TrackSet:
    """Camera-motion-free point trajectories over a sequence.

    positions[k] holds every pixel's 3-D position at frame k (frame 0 is
    the anchor point map itself); valid[k] marks usable entries.  Pairs
    whose pose solve failed are flagged off in ``frame_ok`` and carry an
    identity transform and empty validity.
    """

    positions: np.ndarray   # (n_frames, H, W, 3)
    valid: np.ndarray       # (n_frames, H, W)
    transforms: tuple       # per frame, [0] identity
    factors: np.ndarray     # per frame scale factor applied, [0] = 1
    residuals: np.ndarray   # per frame solve residual, [0] = 0
    frame_ok: np.ndarray    # per frame solve success

    @property
    def n_frames(self):
        return self.positions.shape[0]


def build_tracks(prediction, mode="closed_form", align=True, window=None):
    """Turn per-pair predictions into a TrackSet.

    Pairs are scale-aligned (unless ``align=False``), each pair's pose
    is solved and removed, and the tracking points are stacked per
    frame.  A pair whose solve degenerates is skipped and flagged rather
    than aborting the sequence.

    ``window`` is reserved for re-anchored sliding-window tracking of
    long sequences and is not implemented; passing it raises Unsupported.
    """
    if window is not None:
        raise Unsupported(
            "sliding-window re-anchoring is not implemented; "
            "tracks are always built against the fixed anchor frame"
        )
    if not isinstance(prediction, SequencePrediction):
        prediction = SequencePrediction(tuple(prediction))
    if align:
        prediction, pair_factors = align_scales(prediction)
    else:
        pair_factors = np.ones(len(prediction.pairs))

    h, w = prediction.shape
    n_frames = prediction.n_frames
    positions = np.zeros((n_frames, h, w, 3))
    valid = np.zeros((n_frames, h, w), dtype=bool)
    transforms = [RigidTransform.identity()]
    residuals = np.zeros(n_frames)
    frame_ok = np.ones(n_frames, dtype=bool)

    anchor = prediction.pairs[0]
    positions[0] = np.where(anchor.valid[..., None], anchor.points, 0.0)
    valid[0] = anchor.valid

    for i, maps in enumerate(prediction.pairs):
        k = i + 1
        try:
            dec = decompose_flow(maps, mode=mode)
        except (InsufficientSupport, DegenerateConfiguration, DegenerateSet):
            frame_ok[k] = False
            transforms.append(RigidTransform.identity())
            continue
        positions[k] = dec.points_tracking
        valid[k] = dec.valid
        transforms.append(dec.transform)
        residuals[k] = dec.residual

    factors = np.concatenate([[1.0], pair_factors])
    return TrackSet(
        positions=positions,
        valid=valid,
        transforms=tuple(transforms),
        factors=factors,
        residuals=residuals,
        frame_ok=frame_ok,
    )


class SequenceTracker(BaseEstimator):
    """Estimator wrapper around sequence track building.

    ``fit(X)`` accepts a SequencePrediction (or a list of PropertyMaps)
    and exposes ``tracks_``, ``transforms_``, and ``factors_``.
    """

    def __init__(self, mode="closed_form", align=True):
        self.mode = mode
        self.align = align

    def fit(self, X, y=None):
        self.tracks_ = build_tracks(X, mode=self.mode, align=self.align)
        self.transforms_ = self.tracks_.transforms
        self.factors_ = self.tracks_.factors
        return self


def export_tracks_ascii(tracks, out, stride=1):
    """Write a TrackSet as plain text, one sample per line.

    Columns: ``frame,point_id,x,y,z,valid`` with a leading header line.
    ``point_id`` is the row-major pixel index in the anchor image;
    ``stride`` subsamples pixels.  ``out`` is a path or a text file
    object.  Coordinates are written with full float precision.
    """
    if isinstance(out, (str, bytes)):
        with open(out, "w") as fh:
            export_tracks_ascii(tracks, fh, stride=stride)
        return
    h, w = tracks.positions.shape[1:3]
    pos = tracks.positions.reshape(tracks.n_frames, -1, 3)
    val = tracks.valid.reshape(tracks.n_frames, -1)
    out.write("frame,point_id,x,y,z,valid\n")
    ids = np.arange(h * w)[::stride]
    for frame in range(tracks.n_frames):
        pf, vf = pos[frame], val[frame]
        for pid in ids:
            x, y, z = pf[pid]
            out.write(
                f"{frame},{pid},{x:.17g},{y:.17g},{z:.17g},{int(vf[pid])}\n"
            )
