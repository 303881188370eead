"""Permutation-invariant feature extraction and the second sensor modality.

The extractor is a miniature point-set network: a shared two-layer MLP
applied to every point, a max-pool over the point axis, and a two-layer
head on the pooled vector. Because pooling is symmetric, features are
exactly invariant to point order. Three tap levels expose increasingly
processed representations:

    point_level    pooled statistics (max and min) of the first shared
                   layer's activations, 64 dims
    feature_level  the max-pooled vector after the shared stack, 32 dims
    encoder_level  the head output, 32 dims

The extractor is fitted once on clean scenes by regressing the scene
ground truth (centroid and extent) through a temporary linear readout,
then frozen; the readout is discarded. The second modality is a camera
stand-in: a normalized occupancy histogram of the x-y projection on a
fixed 4x4 world grid, with mild seeded sensor noise. Fusion is plain
concatenation, so both inputs are recoverable by slicing.
"""

from __future__ import annotations

import enum
import functools
import json
import struct
from dataclasses import dataclass

import numpy as np

from .scenes import PointCloud, SceneShape, generate_scene

SHARED_WIDTH = 32
FEATURE_DIM = 32
POINT_LEVEL_DIM = 2 * SHARED_WIDTH

# Fixed input conditioning: points are centered on the nominal scene
# position and scaled to unit order before the shared MLP, keeping the
# tanh units out of saturation for forward-looking scene geometry.
INPUT_CENTER = np.array([8.0, 0.0, 0.0])
INPUT_SCALE = 2.0

CAMERA_GRID = 4
CAMERA_DIM = CAMERA_GRID * CAMERA_GRID
# World window of the occupancy grid: covers the sensor origin through the
# scene region ahead of it (x), and the lateral scene span (y).
CAMERA_X_EDGES = (-2.0, 14.0)
CAMERA_Y_EDGES = (-4.0, 4.0)
CAMERA_NOISE_SIGMA = 0.005

FEATURE_MAGIC = b"FEAT"
FEATURE_VERSION = 1


class Tap(enum.Enum):
    POINT_LEVEL = "point"
    FEATURE_LEVEL = "feature"
    ENCODER_LEVEL = "encoder"


class Modality(enum.Enum):
    LIDAR = "lidar"
    CAMERA = "camera"
    FUSED = "fused"


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    tap: Tap
    modality: Modality

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1:
            raise ValueError(f"feature values must be 1-D, got shape {vals.shape}")
        if not np.isfinite(vals).all():
            raise ValueError("feature values must be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.shape[0]


@dataclass
class Extractor:
    """Frozen weights of the point-set feature network."""

    w1: np.ndarray  # (32, 3) shared layer 1
    b1: np.ndarray
    w2: np.ndarray  # (32, 32) shared layer 2
    b2: np.ndarray
    w3: np.ndarray  # (32, 32) head layer 1
    b3: np.ndarray
    w4: np.ndarray  # (32, 32) head layer 2 (linear output)
    b4: np.ndarray

    def forward(self, points: np.ndarray):
        """Full forward pass; returns (H1, H2, pooled, argmax, head_hidden, encoder)."""
        conditioned = (points - INPUT_CENTER) / INPUT_SCALE
        h1 = np.tanh(conditioned @ self.w1.T + self.b1)
        h2 = np.tanh(h1 @ self.w2.T + self.b2)
        amax = h2.argmax(axis=0)
        pooled = h2[amax, np.arange(h2.shape[1])]
        h3 = np.tanh(self.w3 @ pooled + self.b3)
        encoder = self.w4 @ h3 + self.b4
        return h1, h2, pooled, amax, h3, encoder


def extract_features(pc: PointCloud, tap: Tap, extractor: Extractor | None = None) -> FeatureVector:
    """Features of a point cloud at the requested tap level.

    Exactly permutation invariant: mean/max pooling is the only reduction
    over the point axis.
    """
    tap = Tap(tap)
    ext = extractor if extractor is not None else default_extractor()
    h1, _, pooled, _, _, encoder = ext.forward(pc.points)
    if tap is Tap.POINT_LEVEL:
        # max/min pooling keeps the tap exactly (bitwise) permutation invariant.
        values = np.concatenate([h1.max(axis=0), h1.min(axis=0)])
    elif tap is Tap.FEATURE_LEVEL:
        values = pooled
    else:
        values = encoder
    return FeatureVector(values, tap, Modality.LIDAR)


def second_modality(
    pc: PointCloud, seed: int, noise_sigma: float = CAMERA_NOISE_SIGMA
) -> FeatureVector:
    """Camera stand-in: normalized x-y occupancy histogram plus sensor noise.

    The histogram lives on a fixed 4x4 grid over a world window spanning
    the sensor origin through the scene region (so translating a cloud
    shifts the occupancy pattern, and near-sensor artifacts steal mass from
    the scene bins); counts are normalized by the number of in-window
    points before noise.
    """
    rng = np.random.default_rng(seed)
    xy = pc.points[:, :2]
    x_width = (CAMERA_X_EDGES[1] - CAMERA_X_EDGES[0]) / CAMERA_GRID
    y_width = (CAMERA_Y_EDGES[1] - CAMERA_Y_EDGES[0]) / CAMERA_GRID
    ix = np.floor((xy[:, 0] - CAMERA_X_EDGES[0]) / x_width).astype(int)
    iy = np.floor((xy[:, 1] - CAMERA_Y_EDGES[0]) / y_width).astype(int)
    inside = (ix >= 0) & (ix < CAMERA_GRID) & (iy >= 0) & (iy < CAMERA_GRID)
    hist = np.zeros((CAMERA_GRID, CAMERA_GRID))
    np.add.at(hist, (ix[inside], iy[inside]), 1.0)
    total = hist.sum()
    if total > 0:
        hist = hist / total
    values = hist.ravel() + rng.normal(0.0, noise_sigma, size=CAMERA_DIM)
    return FeatureVector(values, Tap.ENCODER_LEVEL, Modality.CAMERA)


def fuse(lidar_f: FeatureVector, cam_f: FeatureVector) -> FeatureVector:
    """Concatenation fusion: [lidar | camera], lossless by construction."""
    if lidar_f.modality is not Modality.LIDAR or cam_f.modality is not Modality.CAMERA:
        raise ValueError("fuse expects (lidar, camera) feature vectors")
    return FeatureVector(
        np.concatenate([lidar_f.values, cam_f.values]), lidar_f.tap, Modality.FUSED
    )


# -- Extractor fitting ---------------------------------------------------------


def _init_extractor(rng: np.random.Generator) -> Extractor:
    def layer(out_dim, in_dim):
        return rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(out_dim, in_dim)), np.zeros(out_dim)

    w1, b1 = layer(SHARED_WIDTH, 3)
    w2, b2 = layer(SHARED_WIDTH, SHARED_WIDTH)
    w3, b3 = layer(FEATURE_DIM, SHARED_WIDTH)
    w4, b4 = layer(FEATURE_DIM, FEATURE_DIM)
    return Extractor(w1, b1, w2, b2, w3, b3, w4, b4)


def fit_extractor(
    n_scenes: int = 240,
    seed: int = 0,
    epochs: int = 60,
    learning_rate: float = 0.01,
    scene_seed_base: int = 10_000,
) -> Extractor:
    """Fit the extractor on clean scenes by regressing (centroid, extent).

    A temporary linear readout maps encoder-level features to the 6-dim
    ground truth; shared stack, head, and readout are trained jointly by
    SGD with manual backprop (gradient through the max-pool routes to the
    argmax point per channel). The readout is dropped afterwards and the
    extractor is frozen. Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    ext = _init_extractor(rng)
    w5 = rng.normal(0.0, 1.0 / np.sqrt(FEATURE_DIM), size=(6, FEATURE_DIM))
    b5 = np.zeros(6)

    shapes = list(SceneShape)
    scenes = [
        generate_scene(shapes[i % len(shapes)], scene_seed_base + i) for i in range(n_scenes)
    ]
    clouds = [s.points for s in scenes]
    targets = [s.scene_params.as_target() for s in scenes]

    for _ in range(epochs):
        order = rng.permutation(n_scenes)
        for idx in order:
            points, target = clouds[idx], targets[idx]
            conditioned = (points - INPUT_CENTER) / INPUT_SCALE
            h1, h2, pooled, amax, h3, encoder = ext.forward(points)
            pred = w5 @ encoder + b5

            d_pred = pred - target  # d(0.5 * ||pred - target||^2)
            d_w5 = np.outer(d_pred, encoder)
            d_b5 = d_pred
            d_enc = w5.T @ d_pred
            d_w4 = np.outer(d_enc, h3)
            d_b4 = d_enc
            d_h3 = ext.w4.T @ d_enc
            d_a3 = d_h3 * (1.0 - h3**2)
            d_w3 = np.outer(d_a3, pooled)
            d_b3 = d_a3
            d_pooled = ext.w3.T @ d_a3
            d_h2 = np.zeros_like(h2)
            d_h2[amax, np.arange(h2.shape[1])] = d_pooled
            d_a2 = d_h2 * (1.0 - h2**2)
            d_w2 = d_a2.T @ h1
            d_b2 = d_a2.sum(axis=0)
            d_h1 = d_a2 @ ext.w2
            d_a1 = d_h1 * (1.0 - h1**2)
            d_w1 = d_a1.T @ conditioned
            d_b1 = d_a1.sum(axis=0)

            lr = learning_rate
            ext.w1 -= lr * d_w1
            ext.b1 -= lr * d_b1
            ext.w2 -= lr * d_w2
            ext.b2 -= lr * d_b2
            ext.w3 -= lr * d_w3
            ext.b3 -= lr * d_b3
            ext.w4 -= lr * d_w4
            ext.b4 -= lr * d_b4
            w5 -= lr * d_w5
            b5 -= lr * d_b5

    return ext


@functools.lru_cache(maxsize=1)
def default_extractor() -> Extractor:
    """The library-wide frozen extractor (fitted once per process, cached)."""
    return fit_extractor()


# -- Feature file format -------------------------------------------------------
#
# Binary layout: magic "FEAT", then little-endian u32 version, u32
# feature_dim, u32 count, u8 tap code, u8 modality code, then count rows of
# feature_dim 32-bit little-endian floats. Metadata (labels, corruption
# specs, seeds) goes to a JSON sidecar at <path>.meta.json.

_HEADER = struct.Struct("<4sIIIBB")
_TAP_CODES = {Tap.POINT_LEVEL: 0, Tap.FEATURE_LEVEL: 1, Tap.ENCODER_LEVEL: 2}
_MODALITY_CODES = {Modality.LIDAR: 0, Modality.CAMERA: 1, Modality.FUSED: 2}
_TAP_FROM_CODE = {v: k for k, v in _TAP_CODES.items()}
_MODALITY_FROM_CODE = {v: k for k, v in _MODALITY_CODES.items()}


def sidecar_path(path) -> str:
    return f"{path}.meta.json"


def write_features(path, vectors: list[FeatureVector], metadata: dict | None = None) -> None:
    if not vectors:
        raise ValueError("cannot write an empty feature file")
    tap, modality = vectors[0].tap, vectors[0].modality
    dim = len(vectors[0])
    for v in vectors:
        if v.tap is not tap or v.modality is not modality or len(v) != dim:
            raise ValueError("all feature vectors in one file must share tap/modality/dim")
    rows = np.stack([v.values for v in vectors]).astype("<f4")
    with open(path, "wb") as f:
        f.write(
            _HEADER.pack(
                FEATURE_MAGIC,
                FEATURE_VERSION,
                dim,
                len(vectors),
                _TAP_CODES[tap],
                _MODALITY_CODES[modality],
            )
        )
        f.write(rows.tobytes())
    if metadata is not None:
        with open(sidecar_path(path), "w") as f:
            json.dump(metadata, f, sort_keys=True, indent=2)
            f.write("\n")


def read_features(path) -> tuple[list[FeatureVector], dict | None]:
    with open(path, "rb") as f:
        head = f.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise ValueError(f"not a feature file: {path}")
        magic, version, dim, count, tap_code, modality_code = _HEADER.unpack(head)
        if magic != FEATURE_MAGIC:
            raise ValueError(f"not a feature file: {path}")
        if version != FEATURE_VERSION:
            raise ValueError(f"unsupported feature file version {version}")
        rows = np.frombuffer(f.read(), dtype="<f4").astype(np.float64)
    if rows.size != dim * count:
        raise ValueError(f"feature file payload has {rows.size} floats, expected {dim * count}")
    tap, modality = _TAP_FROM_CODE[tap_code], _MODALITY_FROM_CODE[modality_code]
    vectors = [FeatureVector(row, tap, modality) for row in rows.reshape(count, dim)]
    metadata = None
    try:
        with open(sidecar_path(path)) as f:
            metadata = json.load(f)
    except FileNotFoundError:
        pass
    return vectors, metadata
