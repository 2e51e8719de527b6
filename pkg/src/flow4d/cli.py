"""Command-line interface.

Subcommands: synth, decompose, track, eval, export, loss-check.
Exit codes: 0 success, 2 usage error, 3 degenerate geometry, 4 I/O or
corrupt file.  The F4R_THREADS environment variable caps the linear
algebra thread pools; it is applied before numpy is first imported, so
only the standard library may be imported at module level here.
"""

import argparse
import os
import sys

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DEGENERATE = 3
EXIT_IO = 4

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)


def _apply_thread_env():
    value = os.environ.get("F4R_THREADS")
    if value is None or value == "":
        return
    try:
        n = int(value)
        if n < 1:
            raise ValueError
    except ValueError:
        print(f"error: F4R_THREADS must be a positive integer, got {value!r}",
              file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    for var in _THREAD_VARS:
        os.environ[var] = str(n)


def _float_list(text):
    try:
        values = tuple(float(t) for t in text.split(",") if t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad float list {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty threshold list")
    return values


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="flow4d",
        description="Two-view 4D geometry: pose solving, scene-flow "
                    "decomposition, tracking, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scene container")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hw", type=int, nargs=2, default=(64, 64),
                   metavar=("H", "W"))
    p.add_argument("--frames", type=int, default=2)
    p.add_argument("--dynamic-fraction", type=float, default=0.0)
    p.add_argument("--displacement", type=float, default=0.0,
                   help="per-frame dynamic displacement bound (m)")
    p.add_argument("--rotation", type=float, default=0.25,
                   help="per-frame camera rotation bound (rad)")
    p.add_argument("--translation", type=float, default=0.5,
                   help="per-frame camera translation bound (m)")
    p.add_argument("--focal", type=float, default=0.0,
                   help="focal length in pixels (0 = auto)")
    p.add_argument("--pixel-convention", choices=("center", "corner"),
                   default="center")
    p.add_argument("--out", required=True)

    p = sub.add_parser("decompose",
                       help="solve one pair's pose and split its scene flow")
    p.add_argument("--in", dest="path_in", required=True)
    p.add_argument("--pair", type=int, default=None,
                   help="frame index of the pair (anchor, frame); "
                        "scene containers only, default 1")
    p.add_argument("--mode", choices=("closed_form", "irls"),
                   default="closed_form")
    p.add_argument("--out", required=True)

    p = sub.add_parser("track", help="build tracks from a scene container")
    p.add_argument("--in", dest="path_in", required=True)
    p.add_argument("--mode", choices=("closed_form", "irls"),
                   default="closed_form")
    p.add_argument("--no-align", action="store_true",
                   help="skip cross-pair scale alignment")
    p.add_argument("--ascii-out", default=None,
                   help="also write trajectories as CSV text")
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score predicted tracks against GT")
    p.add_argument("--pred", required=True, help="tracks container")
    p.add_argument("--gt", required=True, help="scene or tracks container")
    p.add_argument("--thresholds", type=_float_list,
                   default=(0.1, 0.3, 0.5, 1.0))
    p.add_argument("--max-frames", type=int, default=64)
    p.add_argument("--dynamic-subset", action="store_true",
                   help="also score the GT dynamic region separately")
    p.add_argument("--no-align", action="store_true")
    p.add_argument("--out", default=None, help="write report here instead of stdout")

    p = sub.add_parser("export", help="convert a tracks container to CSV text")
    p.add_argument("--in", dest="path_in", required=True)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--out", required=True)

    p = sub.add_parser("loss-check",
                       help="evaluate the training losses on a perturbed scene")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hw", type=int, nargs=2, default=(16, 16),
                   metavar=("H", "W"))
    p.add_argument("--dynamic-fraction", type=float, default=0.3)
    p.add_argument("--displacement", type=float, default=0.5)
    p.add_argument("--sigma", type=float, default=0.01,
                   help="prediction noise level (m)")
    p.add_argument("--grad-mode", choices=("analytic", "fd"),
                   default="analytic")
    return parser


def _scene_to_tensors(scene):
    import numpy as np

    tensors = {
        "depth": scene.depth,
        "points": scene.points,
        "valid": scene.valid.astype(np.float32),
        "dynamic_mask": scene.dynamic_mask.astype(np.float32),
        "pose_weight": scene.pose_weight,
        "confidence": scene.confidence,
        "transforms": np.stack([t.as_matrix34() for t in scene.transforms]),
        "displacements": np.stack(scene.displacements),
    }
    for k in range(1, scene.n_frames):
        tensors[f"moved_points/{k}"] = scene.moved_points(k)
        tensors[f"viewpoint_points/{k}"] = scene.viewpoint_points(k)
        tensors[f"object_flow/{k}"] = scene.object_flow(k)
        tensors[f"track_points/{k}"] = scene.track_points(k)
    return tensors


def _cmd_synth(args):
    from . import container
    from .synthetic import SceneConfig, make_scene

    config = SceneConfig(
        height=args.hw[0], width=args.hw[1], n_frames=args.frames,
        seed=args.seed, focal=args.focal,
        dynamic_fraction=args.dynamic_fraction,
        displacement_scale=args.displacement,
        rotation_scale=args.rotation, translation_scale=args.translation,
        pixel_convention=args.pixel_convention,
    )
    scene = make_scene(config)
    meta = {
        "kind": "scene",
        "height": config.height,
        "width": config.width,
        "n_frames": config.n_frames,
        "seed": config.seed,
        "focal": scene.camera.f,
        "pixel_convention": config.pixel_convention,
        "dynamic_fraction": config.dynamic_fraction,
        "displacement_scale": config.displacement_scale,
    }
    container.write(args.out, _scene_to_tensors(scene), meta)
    return EXIT_OK


def _require_kind(box, kind, path):
    from .exceptions import ConfigInvalid

    if box.meta.get("kind") != kind:
        raise ConfigInvalid(
            f"{path}: expected a {kind!r} container, got {box.meta.get('kind')!r}"
        )


def _pair_from_scene(box, frame, path):
    """PropertyMaps for pair (anchor, frame) out of a scene container."""
    import numpy as np

    from .core import PropertyMaps
    from .exceptions import ConfigInvalid

    n_frames = int(box.meta.get("n_frames", 0))
    if not 1 <= frame < n_frames:
        raise ConfigInvalid(
            f"{path}: pair index {frame} out of range [1, {n_frames})"
        )
    t = box.tensors
    # oracle weights carry exact zeros on dynamic pixels, so the maps are
    # assembled directly rather than through the strict input validator
    return PropertyMaps(
        points=np.asarray(t["points"], dtype=np.float64),
        points_moved=np.asarray(t[f"moved_points/{frame}"], dtype=np.float64),
        pose_weight=np.asarray(t["pose_weight"], dtype=np.float64),
        confidence=np.asarray(t["confidence"], dtype=np.float64),
        valid=np.asarray(t["valid"]) > 0.5,
    )


def _pair_from_pair_container(box, path):
    """PropertyMaps from a single-pair container (the bindings entry path).

    Required tensors: points (H,W,3), exactly one of points_moved / flow,
    pose_weight (H,W), valid (H,W).  confidence is optional since the
    decomposition never reads it.  Weights may carry exact zeros here,
    so maps are assembled directly, same as the scene path.
    """
    import numpy as np

    from .core import PropertyMaps
    from .exceptions import ShapeMismatch
    from .validation import check_map, check_mask

    t = box.tensors
    for name in ("points", "pose_weight", "valid"):
        if name not in t:
            raise ShapeMismatch(f"{path}: pair container is missing {name!r}")
    if ("points_moved" in t) == ("flow" in t):
        raise ShapeMismatch(
            f"{path}: pair container needs exactly one of points_moved / flow"
        )
    points = check_map(t["points"], "points", channels=3)
    if "flow" in t:
        flow = check_map(t["flow"], "flow", channels=3, like=points)
        moved = points + flow
    else:
        moved = check_map(t["points_moved"], "points_moved", channels=3,
                          like=points)
    weight = check_map(t["pose_weight"], "pose_weight", like=points)
    valid = check_mask(np.asarray(t["valid"]) > 0.5, "valid", points)
    if "confidence" in t:
        conf = check_map(t["confidence"], "confidence", like=points)
    else:
        conf = np.full(points.shape[:2], 2.0)
    return PropertyMaps(points=points, points_moved=moved, pose_weight=weight,
                        confidence=conf, valid=valid)


def _cmd_decompose(args):
    import numpy as np

    from . import container
    from .exceptions import ConfigInvalid
    from .pose import decompose_flow

    box = container.read(args.path_in)
    kind = box.meta.get("kind")
    if kind == "pair":
        if args.pair is not None:
            raise ConfigInvalid(
                f"{args.path_in}: --pair does not apply to a pair container"
            )
        maps = _pair_from_pair_container(box, args.path_in)
        pair = 1
    else:
        _require_kind(box, "scene", args.path_in)
        pair = 1 if args.pair is None else args.pair
        maps = _pair_from_scene(box, pair, args.path_in)
    dec = decompose_flow(maps, mode=args.mode)
    tensors = {
        "rotation": dec.transform.rotation,
        "translation": dec.transform.translation,
        "residual": np.array([dec.residual]),
        "points_viewpoint": dec.points_viewpoint,
        "points_tracking": dec.points_tracking,
        "flow_camera": dec.flow_camera,
        "flow_object": dec.flow_object,
        "valid": dec.valid.astype(np.float32),
    }
    meta = {
        "kind": "decomposition",
        "pair": pair,
        "mode": args.mode,
        "source_seed": box.meta.get("seed"),
    }
    container.write(args.out, tensors, meta)
    return EXIT_OK


def _tracks_from_scene(box, path):
    from .sequence import SequencePrediction

    n_frames = int(box.meta.get("n_frames", 0))
    pairs = [_pair_from_scene(box, k, path) for k in range(1, n_frames)]
    return SequencePrediction(tuple(pairs))


def _cmd_track(args):
    import numpy as np

    from . import container
    from .sequence import build_tracks, export_tracks_ascii

    box = container.read(args.path_in)
    _require_kind(box, "scene", args.path_in)
    prediction = _tracks_from_scene(box, args.path_in)
    tracks = build_tracks(prediction, mode=args.mode, align=not args.no_align)
    tensors = {
        "positions": tracks.positions,
        "valid": tracks.valid.astype(np.float32),
        "transforms": np.stack([t.as_matrix34() for t in tracks.transforms]),
        "factors": tracks.factors,
        "residuals": tracks.residuals,
        "frame_ok": tracks.frame_ok.astype(np.float32),
    }
    meta = {
        "kind": "tracks",
        "n_frames": tracks.n_frames,
        "height": int(tracks.positions.shape[1]),
        "width": int(tracks.positions.shape[2]),
        "mode": args.mode,
        "aligned": not args.no_align,
    }
    container.write(args.out, tensors, meta)
    if args.ascii_out:
        export_tracks_ascii(tracks, args.ascii_out)
    return EXIT_OK


def _gt_tracks(box, path):
    """(positions, valid, dynamic) GT stacks from a scene or tracks container."""
    import numpy as np

    kind = box.meta.get("kind")
    t = box.tensors
    if kind == "tracks":
        return (np.asarray(t["positions"], dtype=np.float64),
                np.asarray(t["valid"]) > 0.5, None)
    if kind == "scene":
        n_frames = int(box.meta.get("n_frames", 0))
        frames = [np.asarray(t["points"], dtype=np.float64)]
        frames += [np.asarray(t[f"track_points/{k}"], dtype=np.float64)
                   for k in range(1, n_frames)]
        valid = np.asarray(t["valid"]) > 0.5
        valid = np.repeat(valid[None], n_frames, axis=0)
        dynamic = np.asarray(t["dynamic_mask"]) > 0.5
        return np.stack(frames), valid, dynamic
    from .exceptions import ConfigInvalid

    raise ConfigInvalid(f"{path}: cannot read ground truth from kind {kind!r}")


def _cmd_eval(args):
    import numpy as np

    from . import container
    from .metrics import MetricConfig, evaluate_tracks

    pred_box = container.read(args.pred)
    _require_kind(pred_box, "tracks", args.pred)
    pred = np.asarray(pred_box.tensors["positions"], dtype=np.float64)
    pred_valid = np.asarray(pred_box.tensors["valid"]) > 0.5

    gt_box = container.read(args.gt)
    gt, gt_valid, dynamic = _gt_tracks(gt_box, args.gt)

    config = MetricConfig(thresholds=args.thresholds, max_frames=args.max_frames)
    report = evaluate_tracks(
        pred, gt, pred_valid, gt_valid, config=config,
        dynamic_subset=dynamic if args.dynamic_subset else None,
        align=not args.no_align,
    )
    text = report.to_text()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_export(args):
    import numpy as np

    from . import container
    from .core import RigidTransform, nearest_rotation
    from .exceptions import ConfigInvalid
    from .sequence import TrackSet, export_tracks_ascii

    box = container.read(args.path_in)
    _require_kind(box, "tracks", args.path_in)
    if args.stride < 1:
        raise ConfigInvalid(f"stride must be >= 1, got {args.stride}")
    t = box.tensors
    # float32 storage knocks rotations slightly off SO(3); project back
    mats = np.asarray(t["transforms"], dtype=np.float64)
    tracks = TrackSet(
        positions=np.asarray(t["positions"], dtype=np.float64),
        valid=np.asarray(t["valid"]) > 0.5,
        transforms=tuple(
            RigidTransform(nearest_rotation(m[:, :3]), m[:, 3]) for m in mats),
        factors=np.asarray(t["factors"], dtype=np.float64),
        residuals=np.asarray(t["residuals"], dtype=np.float64),
        frame_ok=np.asarray(t["frame_ok"]) > 0.5,
    )
    export_tracks_ascii(tracks, args.out, stride=args.stride)
    return EXIT_OK


def _cmd_loss_check(args):
    from .losses import LossConfig, total_loss
    from .synthetic import make_scene, perturb

    scene = make_scene(
        height=args.hw[0], width=args.hw[1], seed=args.seed,
        dynamic_fraction=args.dynamic_fraction,
        displacement_scale=args.displacement,
    )
    target = scene.pair(1)
    pred = perturb(target, sigma_points=args.sigma,
                   sigma_confidence=0.1, seed=args.seed + 1)
    config = LossConfig(pose_grad_mode=args.grad_mode)
    report = total_loss(pred, target, scene.transforms[1],
                        camera=scene.camera, config=config)
    for name in ("point", "flow", "motion2d", "pose", "viewpoint"):
        sys.stdout.write(f"loss_{name} {report.terms[name]:.17g}\n")
    sys.stdout.write(f"loss_total {report.total:.17g}\n")
    return EXIT_OK


_COMMANDS = {
    "synth": _cmd_synth,
    "decompose": _cmd_decompose,
    "track": _cmd_track,
    "eval": _cmd_eval,
    "export": _cmd_export,
    "loss-check": _cmd_loss_check,
}


def main(argv=None):
    _apply_thread_env()
    parser = _build_parser()
    args = parser.parse_args(argv)

    from .exceptions import (
        AllZeroPoints,
        CorruptContainer,
        DegenerateAnchor,
        DegenerateConfiguration,
        DegenerateGeometry,
        DegenerateSet,
        EmptyIntersection,
        EmptyMask,
        Flow4DError,
        InsufficientSupport,
    )

    degenerate = (
        DegenerateGeometry, DegenerateConfiguration, DegenerateAnchor,
        DegenerateSet, InsufficientSupport, AllZeroPoints, EmptyMask,
        EmptyIntersection,
    )
    try:
        return _COMMANDS[args.command](args)
    except degenerate as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except CorruptContainer as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Flow4DError as exc:
        # remaining domain errors are bad inputs or configs
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
