"""Flow-centric two-view 4D geometry.

Point maps and scene flow between an image pair are turned into camera
pose, a rigid/non-rigid flow split, and camera-motion-free point tracks,
with training losses (including a differentiable pose term), synthetic
ground-truth scenes, tracking metrics, and a checksummed binary tensor
container.

Submodules are imported lazily so the command-line entry point can pin
thread pools before any numerical library loads.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    # core types
    "Camera": "core",
    "PropertyMaps": "core",
    "RigidTransform": "core",
    "nearest_rotation": "core",
    "validate_property_maps": "core",
    # geometry
    "PixelGrid": "geometry",
    "ProjectedMap": "geometry",
    "backproject": "geometry",
    "normalize_points": "geometry",
    "project": "geometry",
    "rigid_flow": "geometry",
    "solve_focal": "geometry",
    # pose and decomposition
    "FlowDecomposer": "pose",
    "FlowDecomposition": "pose",
    "WeightedPoseSolver": "pose",
    "decompose_flow": "pose",
    "optical_flow_from_maps": "pose",
    "solve_pose_weighted": "pose",
    "track_points": "pose",
    # losses
    "LossConfig": "losses",
    "LossReport": "losses",
    "loss_flow": "losses",
    "loss_motion2d": "losses",
    "loss_point": "losses",
    "loss_pose": "losses",
    "loss_viewpoint_flow": "losses",
    "total_loss": "losses",
    # synthetic scenes
    "SceneConfig": "synthetic",
    "SyntheticScene": "synthetic",
    "make_scene": "synthetic",
    "perturb": "synthetic",
    # sequences
    "SequencePrediction": "sequence",
    "SequenceTracker": "sequence",
    "TrackSet": "sequence",
    "align_scales": "sequence",
    "build_tracks": "sequence",
    "export_tracks_ascii": "sequence",
    # metrics
    "MedianAligner": "metrics",
    "MetricConfig": "metrics",
    "MetricReport": "metrics",
    "apd3d": "metrics",
    "epe": "metrics",
    "evaluate_tracks": "metrics",
    "median_align": "metrics",
    # container I/O is used via the module: flow4d.container.read/write
    "container": None,
    "exceptions": None,
}

__all__ = sorted(_EXPORTS)


def __getattr__(name):
    target = _EXPORTS.get(name)
    if target is None and name in _EXPORTS:
        return importlib.import_module(f".{name}", __name__)
    if target is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    module = importlib.import_module(f".{target}", __name__)
    value = getattr(module, name)
    globals()[name] = value
    return value


def __dir__():
    return __all__
