"""Synthetic scenes with exact ground truth for every derived quantity.

A scene is built in the anchor camera's coordinate frame (frame 0):
a smooth bumpy depth surface is backprojected to the anchor point map,
a compact blob of pixels is marked dynamic, and each later frame gets a
camera pose (a random walk on SE(3)) plus a world-space displacement
applied to the dynamic pixels only.  Everything downstream -- moved
points, camera/object flow splits, track positions, oracle pose weights
-- follows from those choices in closed form, so tests can pin exact
expectations.

All randomness goes through one ``numpy.random.default_rng(seed)``.
"""

from dataclasses import dataclass

import numpy as np

from .core import Camera, PropertyMaps, RigidTransform
from .exceptions import ConfigInvalid, DegenerateConfiguration
from .geometry import PixelGrid, backproject


@dataclass(frozen=True)
class SceneConfig:
    height: int = 64
    width: int = 64
    n_frames: int = 2
    seed: int = 0
    focal: float = 0.0  # 0 -> 1.2 * max(height, width)
    depth_base: float = 4.0
    dynamic_fraction: float = 0.0
    displacement_scale: float = 0.0  # per-frame dynamic step bound (m)
    rotation_scale: float = 0.25     # per-frame camera rotation bound (rad)
    translation_scale: float = 0.5   # per-frame camera translation bound (m)
    pixel_convention: str = "center"

    def __post_init__(self):
        if self.height < 2 or self.width < 2:
            raise ConfigInvalid("scene must be at least 2x2")
        if self.n_frames < 2:
            raise ConfigInvalid("scene needs at least 2 frames")
        if not 0.0 <= self.dynamic_fraction < 1.0:
            raise ConfigInvalid(
                f"dynamic_fraction must be in [0, 1), got {self.dynamic_fraction}"
            )


def _rotation_from_axis_angle(axis, angle):
    """Rodrigues formula; axis need not be normalized."""
    axis = np.asarray(axis, dtype=np.float64)
    n = np.linalg.norm(axis)
    if n == 0 or angle == 0:
        return np.eye(3)
    k = axis / n
    kx = np.array([
        [0.0, -k[2], k[1]],
        [k[2], 0.0, -k[0]],
        [-k[1], k[0], 0.0],
    ])
    return np.eye(3) + np.sin(angle) * kx + (1.0 - np.cos(angle)) * (kx @ kx)


def _gaussian_field(rng, height, width, n_lo, n_hi, amp_lo, amp_hi,
                    sigma_lo, sigma_hi):
    """Sum of randomly placed isotropic Gaussians over the pixel grid."""
    n = int(rng.integers(n_lo, n_hi + 1))
    vv, uu = np.mgrid[0:height, 0:width].astype(np.float64)
    field = np.zeros((height, width))
    for _ in range(n):
        cu = rng.uniform(0, width)
        cv = rng.uniform(0, height)
        amp = rng.uniform(amp_lo, amp_hi)
        sigma = rng.uniform(sigma_lo, sigma_hi)
        field += amp * np.exp(-((uu - cu) ** 2 + (vv - cv) ** 2) / (2 * sigma ** 2))
    return field


@dataclass(frozen=True)
class SyntheticScene:
    """A generated scene; all arrays are in anchor-camera coordinates."""

    config: SceneConfig
    camera: Camera
    grid: PixelGrid
    depth: np.ndarray
    points: np.ndarray
    valid: np.ndarray
    dynamic_mask: np.ndarray
    transforms: tuple       # per frame, [0] is identity
    displacements: tuple    # per frame (3,) world displacement, [0] zero
    pose_weight: np.ndarray
    confidence: np.ndarray

    @property
    def n_frames(self):
        return self.config.n_frames

    def displaced_points(self, frame):
        """Anchor points with the frame's world displacement on dynamic pixels."""
        d = self.displacements[frame]
        return self.points + self.dynamic_mask[..., None] * d

    def moved_points(self, frame):
        """Pvt for the pair (0, frame): camera motion after object motion."""
        return self.transforms[frame].apply(self.displaced_points(frame))

    def viewpoint_points(self, frame):
        """Anchor points under camera motion alone."""
        return self.transforms[frame].apply(self.points)

    def object_flow(self, frame):
        """GT object part of the scene flow: the rotated injected displacement."""
        d_rot = self.transforms[frame].rotation @ self.displacements[frame]
        return self.dynamic_mask[..., None] * d_rot

    def track_points(self, frame):
        """GT camera-motion-free positions: anchor points plus displacement."""
        return self.displaced_points(frame)

    def pair(self, frame):
        """PropertyMaps for the pair (anchor, frame), with oracle weights.

        Built directly: the oracle pose weight is exactly zero on dynamic
        pixels, which the strict user-input validator would reject.
        """
        if not 1 <= frame < self.n_frames:
            raise ConfigInvalid(f"frame must be in [1, {self.n_frames}), got {frame}")
        return PropertyMaps(
            points=self.points,
            points_moved=self.moved_points(frame),
            pose_weight=self.pose_weight,
            confidence=self.confidence,
            valid=self.valid,
        )

    def pairs(self):
        return [self.pair(k) for k in range(1, self.n_frames)]


def make_scene(config=None, **overrides):
    """Generate a SyntheticScene from a SceneConfig (or keyword overrides)."""
    if config is None:
        config = SceneConfig(**overrides)
    elif overrides:
        raise ConfigInvalid("pass either a config or keyword overrides, not both")
    rng = np.random.default_rng(config.seed)
    h, w = config.height, config.width

    focal = config.focal if config.focal > 0 else 1.2 * max(h, w)
    grid = PixelGrid(h, w, convention=config.pixel_convention)
    camera = Camera(f=focal, c=grid.center())

    # amplitudes are bounded so eight stacked dips stay above zero depth
    depth = config.depth_base + _gaussian_field(
        rng, h, w, 3, 8, -0.35, 0.5, 4.0, 16.0,
    )
    points, valid = backproject(depth, camera, grid)

    if config.dynamic_fraction > 0:
        blob = _gaussian_field(rng, h, w, 4, 7, 0.2, 1.0, 6.0, 14.0)
        thresh = np.quantile(blob, 1.0 - config.dynamic_fraction)
        dynamic = blob > thresh
    else:
        dynamic = np.zeros((h, w), dtype=bool)
    static = valid & ~dynamic
    n_static = int(static.sum())
    if n_static < 3:
        raise DegenerateConfiguration(
            f"scene has {n_static} static pixels; pose solving needs >= 3"
        )

    transforms = [RigidTransform.identity()]
    displacements = [np.zeros(3)]
    for _ in range(1, config.n_frames):
        axis = rng.normal(size=3)
        angle = rng.uniform(-1, 1) * config.rotation_scale
        step = RigidTransform(
            _rotation_from_axis_angle(axis, angle),
            rng.uniform(-1, 1, size=3) * config.translation_scale,
        )
        transforms.append(step.compose(transforms[-1]))
        d_step = rng.uniform(-1, 1, size=3) * config.displacement_scale
        displacements.append(displacements[-1] + d_step)

    pose_weight = np.where(static, 1.0 / n_static, 0.0)
    confidence = np.full((h, w), np.e)

    return SyntheticScene(
        config=config,
        camera=camera,
        grid=grid,
        depth=depth,
        points=points,
        valid=valid,
        dynamic_mask=dynamic,
        transforms=tuple(transforms),
        displacements=tuple(np.asarray(d) for d in displacements),
        pose_weight=pose_weight,
        confidence=confidence,
    )


def perturb(maps, sigma_points=0.01, sigma_confidence=0.0, seed=0):
    """Jitter a PropertyMaps' points and moved points with Gaussian noise.

    Useful for moving predictions off the exact ground truth, where the
    distance losses sit on their subgradient kink.  Confidence is
    jittered multiplicatively above 1; weights and masks are untouched.
    Returns a new PropertyMaps built directly (no weight renormalization).
    """
    rng = np.random.default_rng(seed)
    points = maps.points + rng.normal(0.0, sigma_points, maps.points.shape)
    moved = maps.points_moved + rng.normal(0.0, sigma_points, maps.points.shape)
    conf = maps.confidence
    if sigma_confidence > 0:
        conf = 1.0 + (conf - 1.0) * np.exp(
            rng.normal(0.0, sigma_confidence, conf.shape)
        )
    return PropertyMaps(
        points=points,
        points_moved=moved,
        pose_weight=maps.pose_weight,
        confidence=conf,
        valid=maps.valid,
        mask_point=maps.mask_point,
        mask_motion3d=maps.mask_motion3d,
        mask_motion2d=maps.mask_motion2d,
    )
