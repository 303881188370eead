"""Synthetic point-cloud scenes and corruption models.

Scenes are sampled on simple parametric surfaces (box, sphere, composite
of planes) with known centroid and extent, which double as the regression
ground truth for the downstream task. Corruptions imitate the failure
modes of a scanning range sensor: weather-like noise and drop-out,
platform motion, missing beams, weak echoes, ghost returns from a second
sensor, and impulse returns from crosstalk. Each corruption is a pure,
seeded transform that leaves the ground-truth labels untouched.

Magnitudes: ``moderate`` uses the base numbers below, ``heavy`` doubles
them, and ``magnitude_scale`` multiplies on top (0 gives the identity).

The sensor sits at the coordinate origin and looks down the +x axis;
scenes are placed around SCENE_CENTER, several meters ahead, the way a
vehicle-mounted scanner sees objects. "Range" is distance from the
sensor, so range-proportional corruption noise is far larger than the
1 cm surface noise of a clean scan.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

MIN_POINTS = 16
DEFAULT_POINTS = 256
SURFACE_NOISE = 0.01  # meters

SCENE_CENTER = np.array([8.0, 0.0, 0.0])  # nominal object position ahead of the sensor
SCENE_PLACEMENT_SPREAD = 0.5  # uniform half-width of centroid placement, meters
EXTENT_RANGE = (0.8, 1.6)  # per-axis half-extent range, meters

ELEVATION_BANDS = 16
CROSS_SENSOR_OFFSET = np.array([0.3, 0.0, 0.0])  # meters, fixed ghost displacement


class CorruptionError(ValueError):
    """Corruption output would violate the minimum-point invariant."""


class SceneShape(enum.Enum):
    BOX = "box"
    SPHERE = "sphere"
    PLANE_COMPOSITE = "plane-composite"


class CorruptionKind(enum.Enum):
    FOG = "fog"
    SNOW = "snow"
    RAIN = "rain"
    MOTION_BLUR = "motion_blur"
    BEAM_MISSING = "beam_missing"
    INCOMPLETE_ECHO = "incomplete_echo"
    CROSS_SENSOR = "cross_sensor"
    CROSSTALK = "crosstalk"


class Severity(enum.Enum):
    MODERATE = "moderate"
    HEAVY = "heavy"


# Base (moderate) magnitudes per kind; heavy doubles every number.
_FOG_NOISE_FRACTION = 0.02  # sigma as a fraction of each point's range
_FOG_DROP_FRACTION = 0.05
_SNOW_IMPULSE_FRACTION = 0.05
_SNOW_JITTER_FRACTION = 0.01
_SNOW_IMPULSE_SIGMA = 0.3  # meters around the sensor origin
_RAIN_JITTER_FRACTION = 0.015
_RAIN_DROP_FRACTION = 0.03
_MOTION_BLUR_SIGMA = 0.05  # meters along a shared direction
_BEAM_DROP_FRACTION = 0.25
_ECHO_DROP_FRACTION = 0.25
_CROSS_SENSOR_FRACTION = 0.15
_CROSSTALK_FRACTION = 0.10
_CROSSTALK_BOX_SCALE = 3.0


@dataclass(frozen=True)
class SceneParams:
    centroid: np.ndarray
    extent: np.ndarray  # per-axis half-extent (semi-axis), meters
    shape: SceneShape

    def as_target(self) -> np.ndarray:
        """Ground-truth regression target: centroid then extent."""
        return np.concatenate([self.centroid, self.extent])


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray  # (n, 3) float64
    scene_params: SceneParams

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must be (n, 3), got {pts.shape}")
        if pts.shape[0] < MIN_POINTS:
            raise CorruptionError(f"point cloud has {pts.shape[0]} points, minimum {MIN_POINTS}")
        if not np.isfinite(pts).all():
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class CorruptionSpec:
    kind: CorruptionKind
    severity: Severity
    seed: int

    @property
    def label(self) -> str:
        return f"{self.kind.value}:{self.severity.value}"


def generate_scene(
    shape: SceneShape,
    seed: int,
    n_points: int = DEFAULT_POINTS,
    centroid=None,
    extent=None,
) -> PointCloud:
    """Sample a scene on the given surface with mild Gaussian surface noise.

    The centroid (around SCENE_CENTER) and per-axis half-extent are drawn
    from the seed and recorded as ground truth; pass explicit ``centroid``
    or ``extent`` to pin them. Deterministic for a given (shape, seed).
    """
    shape = SceneShape(shape)
    rng = np.random.default_rng(seed)
    drawn_centroid = SCENE_CENTER + rng.uniform(
        -SCENE_PLACEMENT_SPREAD, SCENE_PLACEMENT_SPREAD, size=3
    )
    drawn_extent = rng.uniform(*EXTENT_RANGE, size=3)
    centroid = drawn_centroid if centroid is None else np.asarray(centroid, dtype=np.float64)
    extent = drawn_extent if extent is None else np.asarray(extent, dtype=np.float64)

    if shape is SceneShape.BOX:
        base = _sample_box_surface(rng, n_points)
    elif shape is SceneShape.SPHERE:
        base = _sample_sphere_surface(rng, n_points)
    else:
        base = _sample_plane_composite(rng, n_points)

    points = centroid + base * extent + rng.normal(0.0, SURFACE_NOISE, size=(n_points, 3))
    return PointCloud(points, SceneParams(centroid, extent, shape))


def _sample_box_surface(rng: np.random.Generator, n: int) -> np.ndarray:
    """Unit box surface: points on the faces of [-1, 1]^3."""
    pts = rng.uniform(-1.0, 1.0, size=(n, 3))
    axis = rng.integers(0, 3, size=n)
    side = rng.integers(0, 2, size=n) * 2.0 - 1.0
    pts[np.arange(n), axis] = side
    return pts


def _sample_sphere_surface(rng: np.random.Generator, n: int) -> np.ndarray:
    """Unit sphere surface via normalized Gaussian directions."""
    u = rng.standard_normal((n, 3))
    norms = np.linalg.norm(u, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    return u / norms


def _sample_plane_composite(rng: np.random.Generator, n: int) -> np.ndarray:
    """Ground plane plus two walls inside the unit box."""
    kind = rng.integers(0, 3, size=n)
    pts = rng.uniform(-1.0, 1.0, size=(n, 3))
    pts[kind == 0, 2] = -1.0  # floor
    pts[kind == 1, 0] = 1.0  # back wall
    pts[kind == 2, 1] = 1.0  # side wall
    return pts


def corrupt(pc: PointCloud, spec: CorruptionSpec, magnitude_scale: float = 1.0) -> PointCloud:
    """Apply one corruption; pure, seeded, ground truth preserved.

    ``magnitude_scale`` multiplies the kind's base magnitudes (useful for
    severity sweeps; 0 is the identity transform).
    """
    if magnitude_scale < 0:
        raise ValueError("magnitude_scale must be nonnegative")
    rng = np.random.default_rng(spec.seed)
    scale = magnitude_scale * (2.0 if spec.severity is Severity.HEAVY else 1.0)
    points = np.array(pc.points)
    handler = _HANDLERS[spec.kind]
    points = handler(points, rng, scale)
    if points.shape[0] < MIN_POINTS:
        raise CorruptionError(
            f"{spec.kind.value}:{spec.severity.value} left {points.shape[0]} points, "
            f"minimum {MIN_POINTS}"
        )
    return PointCloud(points, pc.scene_params)


def _ranges(points: np.ndarray) -> np.ndarray:
    return np.linalg.norm(points, axis=1)


def _drop_random(points: np.ndarray, rng: np.random.Generator, fraction: float) -> np.ndarray:
    count = min(int(math.floor(fraction * len(points))), len(points))
    if count <= 0:
        return points
    drop = rng.choice(len(points), size=count, replace=False)
    keep = np.ones(len(points), dtype=bool)
    keep[drop] = False
    return points[keep]


def _range_jitter(points: np.ndarray, rng: np.random.Generator, fraction: float) -> np.ndarray:
    if fraction <= 0:
        return points
    sigma = fraction * _ranges(points)[:, None]
    return points + rng.standard_normal(points.shape) * sigma


def _fog(points, rng, scale):
    points = _range_jitter(points, rng, scale * _FOG_NOISE_FRACTION)
    return _drop_random(points, rng, scale * _FOG_DROP_FRACTION)


def _snow(points, rng, scale):
    count = int(math.floor(scale * _SNOW_IMPULSE_FRACTION * len(points)))
    points = _range_jitter(points, rng, scale * _SNOW_JITTER_FRACTION)
    if count > 0:
        impulses = rng.normal(0.0, _SNOW_IMPULSE_SIGMA, size=(count, 3))
        points = np.vstack([points, impulses])
    return points


def _rain(points, rng, scale):
    points = _range_jitter(points, rng, scale * _RAIN_JITTER_FRACTION)
    return _drop_random(points, rng, scale * _RAIN_DROP_FRACTION)


def _motion_blur(points, rng, scale):
    direction = rng.standard_normal(3)
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        return points
    direction = direction / norm
    magnitudes = rng.normal(0.0, scale * _MOTION_BLUR_SIGMA, size=(len(points), 1))
    return points + magnitudes * direction


def _beam_missing(points, rng, scale):
    """Drop exactly floor(fraction * n) points, grouped by elevation band."""
    count = min(int(math.floor(scale * _BEAM_DROP_FRACTION * len(points))), len(points))
    if count <= 0:
        return points
    horizontal = np.linalg.norm(points[:, :2], axis=1)
    elevation = np.arctan2(points[:, 2], horizontal)
    lo, hi = elevation.min(), elevation.max()
    span = hi - lo if hi > lo else 1.0
    band = np.minimum(
        (ELEVATION_BANDS * (elevation - lo) / span).astype(int), ELEVATION_BANDS - 1
    )
    order = rng.permutation(ELEVATION_BANDS)
    drop_idx: list[int] = []
    for b in order:
        members = np.flatnonzero(band == b)
        if len(drop_idx) + len(members) <= count:
            drop_idx.extend(members.tolist())
        else:
            need = count - len(drop_idx)
            drop_idx.extend(rng.choice(members, size=need, replace=False).tolist())
        if len(drop_idx) >= count:
            break
    keep = np.ones(len(points), dtype=bool)
    keep[drop_idx] = False
    return points[keep]


def _incomplete_echo(points, rng, scale):
    """Drop weak returns: points whose range proxy falls below the median range."""
    count = int(math.floor(scale * _ECHO_DROP_FRACTION * len(points)))
    if count <= 0:
        return points
    ranges = _ranges(points)
    eligible = np.flatnonzero(ranges < np.median(ranges))
    count = min(count, len(eligible))
    drop = rng.choice(eligible, size=count, replace=False)
    keep = np.ones(len(points), dtype=bool)
    keep[drop] = False
    return points[keep]


def _cross_sensor(points, rng, scale):
    count = min(int(math.floor(scale * _CROSS_SENSOR_FRACTION * len(points))), len(points))
    if count <= 0:
        return points
    chosen = rng.choice(len(points), size=count, replace=False)
    ghosts = points[chosen] + CROSS_SENSOR_OFFSET
    return np.vstack([points, ghosts])


def _crosstalk(points, rng, scale):
    """Add impulse outliers drawn uniformly in the 3x-scaled bounding box."""
    count = int(math.floor(scale * _CROSSTALK_FRACTION * len(points)))
    if count <= 0:
        return points
    lo, hi = points.min(axis=0), points.max(axis=0)
    center, half = (lo + hi) / 2.0, (hi - lo) / 2.0
    half = np.maximum(half * _CROSSTALK_BOX_SCALE, 1e-6)
    outliers = rng.uniform(center - half, center + half, size=(count, 3))
    return np.vstack([points, outliers])


_HANDLERS = {
    CorruptionKind.FOG: _fog,
    CorruptionKind.SNOW: _snow,
    CorruptionKind.RAIN: _rain,
    CorruptionKind.MOTION_BLUR: _motion_blur,
    CorruptionKind.BEAM_MISSING: _beam_missing,
    CorruptionKind.INCOMPLETE_ECHO: _incomplete_echo,
    CorruptionKind.CROSS_SENSOR: _cross_sensor,
    CorruptionKind.CROSSTALK: _crosstalk,
}
