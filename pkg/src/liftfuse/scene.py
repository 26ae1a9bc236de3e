"""Synthetic paired LiDAR/camera scenes with per-voxel class labels.

Objects are axis-aligned boxes and spheres resting on the floor (z = 0).
Class identity is carried mostly by color (one hue family per class) and
only weakly by size (overlapping ranges), so a geometry-only model can not
fully separate the classes while a model that sees the image can.
"""

from __future__ import annotations

import colorsys
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .geometry import CameraModel, GridSpec, PointCloud, project_points, voxelize
from .kernels import zbuffer

SHAPES = ("box", "sphere")
BACKGROUND_GRAY = 0.5
ALBEDO_JITTER = 0.05
SPLAT_DENSITY = 400.0  # surface samples per square meter for rendering

# random stream tags
STREAM_SCENE = 11
STREAM_LIDAR = 12
STREAM_RENDER = 13


@dataclass(frozen=True)
class SceneObject:
    shape: str
    center: np.ndarray
    half_size: np.ndarray  # box half-extents; spheres use a repeated radius
    class_id: int
    color: np.ndarray

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ConfigError(f"unknown shape {self.shape!r}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        hs = np.asarray(self.half_size, dtype=np.float64)
        object.__setattr__(self, "half_size", np.full(3, float(hs.reshape(-1)[0])) if hs.size == 1 else hs.reshape(3))
        object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64).reshape(3))
        if (self.half_size <= 0).any():
            raise ConfigError("object sizes must be positive")
        if self.shape == "sphere" and not np.all(self.half_size == self.half_size[0]):
            raise ConfigError("sphere needs a single radius")

    @classmethod
    def sphere(cls, center, radius, class_id=1, color=(1.0, 0.0, 0.0)) -> "SceneObject":
        return cls("sphere", center, radius, class_id, color)

    @classmethod
    def box(cls, center, half_size, class_id=1, color=(1.0, 0.0, 0.0)) -> "SceneObject":
        return cls("box", center, half_size, class_id, color)

    @property
    def radius(self) -> float:
        return float(self.half_size[0])

    def area(self) -> float:
        if self.shape == "sphere":
            return 4.0 * math.pi * self.radius ** 2
        a, b, c = 2 * self.half_size
        return 2.0 * (a * b + b * c + a * c)

    def sdf(self, p) -> np.ndarray:
        """Signed distance (negative inside) for ``(N, 3)`` points."""
        d = np.asarray(p, dtype=np.float64).reshape(-1, 3) - self.center
        if self.shape == "sphere":
            return np.linalg.norm(d, axis=1) - self.radius
        q = np.abs(d) - self.half_size
        return np.linalg.norm(np.maximum(q, 0.0), axis=1) + np.minimum(q.max(axis=1), 0.0)

    def sample_surface(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` points uniformly distributed over the surface area."""
        if n == 0:
            return np.zeros((0, 3))
        if self.shape == "sphere":
            d = rng.normal(size=(n, 3))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            return self.center + self.radius * d
        h = self.half_size
        # faces come in +/- pairs per axis; pick an axis by face area, then a side
        face_area = np.array([h[1] * h[2], h[0] * h[2], h[0] * h[1]])
        axis = rng.choice(3, size=n, p=face_area / face_area.sum())
        side = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        local = rng.uniform(-1.0, 1.0, size=(n, 3)) * h
        local[np.arange(n), axis] = side * h[axis]
        return self.center + local


@dataclass(frozen=True)
class Scene:
    objects: tuple = ()
    bounds: tuple = ((0.0, 0.0, 0.0), (8.0, 8.0, 4.0))

    def __len__(self):
        return len(self.objects)

    def areas(self) -> np.ndarray:
        return np.array([o.area() for o in self.objects])


@dataclass(frozen=True)
class DatasetSpec:
    n_train: int = 200
    n_val: int = 50
    seed: int = 0
    n_points: int = 4096
    lidar_noise: float = 0.02
    color_noise: float = 0.05
    n_classes: int = 3
    min_objects: int = 1
    max_objects: int = 4
    grid_dims: tuple = (32, 32, 16)
    voxel_size: float = 0.25
    image_size: tuple = (64, 64)
    camera_eye: tuple = (-5.0, 4.0, 3.0)
    camera_target: tuple = (4.0, 4.0, 1.0)
    focal: float = 40.0

    def __post_init__(self):
        for name in ("grid_dims", "image_size", "camera_eye", "camera_target"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.n_train < 1 or self.n_val < 1 or self.n_points < 1 or self.n_classes < 1:
            raise ConfigError("dataset counts must be positive")
        if self.lidar_noise < 0 or self.color_noise < 0:
            raise ConfigError("noise sigmas must be nonnegative")
        if not 1 <= self.min_objects <= self.max_objects <= 8:
            raise ConfigError("object counts must satisfy 1 <= min <= max <= 8")
        if self.voxel_size <= 0 or self.focal <= 0:
            raise ConfigError("voxel size and focal length must be positive")

    def grid(self) -> GridSpec:
        return GridSpec(np.zeros(3), self.voxel_size, self.grid_dims)

    def camera(self) -> CameraModel:
        return CameraModel.look_at(self.camera_eye, self.camera_target, self.focal, self.image_size)

    def bounds(self) -> tuple:
        g = self.grid()
        return tuple(g.origin.tolist()), tuple((g.origin + g.extent).tolist())


def class_color(class_id: int, n_classes: int) -> np.ndarray:
    """Base albedo of a class: evenly spaced hues, so distinct classes get distinct colors."""
    if not 1 <= class_id <= n_classes:
        raise ConfigError(f"class id {class_id} outside 1..{n_classes}")
    return np.array(colorsys.hsv_to_rgb((class_id - 1) / n_classes, 0.8, 0.85))


def _rng(seed, tag: int) -> np.random.Generator:
    seed = [int(s) for s in np.atleast_1d(seed)]
    return np.random.default_rng(seed + [tag])


def generate_scene(seed, spec: DatasetSpec) -> Scene:
    """Deterministic random scene; ``seed`` may be an int or a sequence of ints."""
    rng = _rng(seed, STREAM_SCENE)
    lo, hi = (np.array(b) for b in spec.bounds())
    n = int(rng.integers(spec.min_objects, spec.max_objects + 1))
    objects = []
    for _ in range(n):
        c = int(rng.integers(1, spec.n_classes + 1))
        shape = SHAPES[int(rng.integers(0, 2))]
        # class-dependent but overlapping size ranges
        scale = 0.35 + 0.12 * (c - 1) + rng.uniform(0.0, 0.35)
        half = np.full(3, scale) if shape == "sphere" else scale * rng.uniform(0.7, 1.3, size=3)
        half = np.minimum(half, (hi - lo) / 4)
        xy = rng.uniform(lo[:2] + half[:2], hi[:2] - half[:2])
        center = np.array([xy[0], xy[1], lo[2] + half[2]])
        color = np.clip(class_color(c, spec.n_classes) + rng.normal(0.0, ALBEDO_JITTER, size=3), 0.0, 1.0)
        objects.append(SceneObject(shape, center, half if shape == "box" else half[0], c, color))
    return Scene(tuple(objects), (tuple(lo), tuple(hi)))


def sample_surfaces(scene: Scene, n_points: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Area-uniform surface samples over all objects; returns points and owning object index."""
    if len(scene) == 0 or n_points == 0:
        return np.zeros((0, 3)), np.zeros(0, dtype=np.int64)
    areas = scene.areas()
    counts = rng.multinomial(n_points, areas / areas.sum())
    pts = [o.sample_surface(int(k), rng) for o, k in zip(scene.objects, counts)]
    owner = np.repeat(np.arange(len(scene)), counts)
    return np.concatenate(pts), owner


def sample_lidar(scene: Scene, n_points: int, noise_sigma: float, seed) -> PointCloud:
    """Uniform surface samples plus isotropic Gaussian noise."""
    rng = _rng(seed, STREAM_LIDAR)
    pts, _ = sample_surfaces(scene, n_points, rng)
    if noise_sigma > 0 and len(pts):
        pts = pts + rng.normal(0.0, noise_sigma, size=pts.shape)
    return PointCloud(pts)


def rasterize(points, colors, camera: CameraModel, dilate: bool = True) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nearest-depth splatting of colored points.

    Returns ``(color (3, H, W), depth (H, W), hit (H, W))``; empty pixels have
    infinite depth and zero color. With ``dilate`` each empty pixel takes the
    nearest-depth hit among its 3x3 neighbors.
    """
    H, W = camera.image_size
    u, v, z, valid = project_points(camera, points)
    sel = np.nonzero(valid)[0]
    pix = np.floor(v[sel]).astype(np.int64) * W + np.floor(u[sel]).astype(np.int64)
    winner = zbuffer(pix, z[sel], H * W)
    hit = winner >= 0
    depth = np.full(H * W, np.inf)
    src = np.full(H * W, -1, dtype=np.int64)
    depth[hit] = z[sel][winner[hit]]
    src[hit] = sel[winner[hit]]
    depth, src, hit = depth.reshape(H, W), src.reshape(H, W), hit.reshape(H, W)
    if dilate:
        dp = np.pad(depth, 1, constant_values=np.inf)
        sp = np.pad(src, 1, constant_values=-1)
        shifts = [(a, b) for a in range(3) for b in range(3)]
        stack_d = np.stack([dp[a:a + H, b:b + W] for a, b in shifts])
        stack_s = np.stack([sp[a:a + H, b:b + W] for a, b in shifts])
        best = np.argmin(stack_d, axis=0)
        fill = ~hit & np.isfinite(np.take_along_axis(stack_d, best[None], 0)[0])
        src = np.where(fill, np.take_along_axis(stack_s, best[None], 0)[0], src)
        depth = np.where(fill, np.take_along_axis(stack_d, best[None], 0)[0], depth)
        hit = hit | fill
    color = np.zeros((3, H, W))
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    color[:, hit] = colors[src[hit]].T
    return color, depth, hit


def render_image(scene: Scene, camera: CameraModel, color_noise: float = 0.05, seed=0,
                 density: float = SPLAT_DENSITY) -> np.ndarray:
    """Splat-rendered ``(3, H, W)`` image in ``[0, 1]`` on a gray background."""
    rng = _rng(seed, STREAM_RENDER)
    H, W = camera.image_size
    image = np.full((3, H, W), BACKGROUND_GRAY)
    if len(scene):
        n = int(math.ceil(scene.areas().sum() * density))
        pts, owner = sample_surfaces(scene, n, rng)
        albedo = np.stack([o.color for o in scene.objects])[owner]
        color, _, hit = rasterize(pts, albedo, camera)
        image[:, hit] = color[:, hit]
    if color_noise > 0:
        image = image + rng.normal(0.0, color_noise, size=image.shape)
    return np.clip(image, 0.0, 1.0)


def _intersection_tests(obj: SceneObject, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Whether the object's surface meets each closed voxel box ``[lo, hi]``."""
    c, h = obj.center, obj.half_size
    if obj.shape == "sphere":
        near = np.linalg.norm(np.clip(c, lo, hi) - c, axis=1)
        far = np.linalg.norm(np.maximum(np.abs(c - lo), np.abs(c - hi)), axis=1)
        return (near <= obj.radius) & (far >= obj.radius)
    overlap = np.all((lo <= c + h) & (hi >= c - h), axis=1)
    inside = np.all((lo > c - h) & (hi < c + h), axis=1)
    return overlap & ~inside


def label_voxels(scene: Scene, grid: GridSpec, margin: float = 0.0) -> np.ndarray:
    """Per-voxel class ids (``int32``, grid-shaped); 0 where no object surface crosses the voxel.

    When several surfaces cross a voxel, the object whose surface is nearest to
    the voxel center wins (lowest object index on exact ties). A positive
    ``margin`` grows every voxel box by that much on each side before testing,
    which absorbs sensor noise that pushes points into neighboring voxels.
    """
    if margin < 0:
        raise ConfigError("margin must be nonnegative")
    idx = grid.all_indices()
    centers = grid.origin + (idx + 0.5) * grid.voxel_size
    lo = grid.origin + idx * grid.voxel_size - margin
    hi = grid.origin + (idx + 1) * grid.voxel_size + margin
    best = np.full(len(idx), np.inf)
    labels = np.zeros(len(idx), dtype=np.int32)
    for obj in scene.objects:
        hit = _intersection_tests(obj, lo, hi)
        dist = np.abs(obj.sdf(centers))
        take = hit & (dist < best)
        best[take] = dist[take]
        labels[take] = obj.class_id
    return labels.reshape(grid.dims)


@dataclass
class SceneSample:
    cloud: PointCloud
    image: np.ndarray
    labels: np.ndarray  # grid-shaped int32; nonzero only on occupied voxels
    camera: CameraModel
    grid: GridSpec
    scene: Scene | None = field(default=None, repr=False)

    def __post_init__(self):
        H, W = self.camera.image_size
        if self.image.shape != (3, H, W):
            raise ConfigError(f"image shape {self.image.shape} does not match camera {self.camera.image_size}")
        if self.labels.shape != tuple(self.grid.dims):
            raise ConfigError("label array must match the grid")

    def voxels(self):
        return voxelize(self.cloud, self.grid)


def make_sample(scene: Scene, spec: DatasetSpec, seed) -> SceneSample:
    grid, camera = spec.grid(), spec.camera()
    cloud = sample_lidar(scene, spec.n_points, spec.lidar_noise, seed)
    image = render_image(scene, camera, spec.color_noise, seed)
    labels = label_voxels(scene, grid, margin=3.0 * spec.lidar_noise)
    occupied = np.zeros(grid.dims, dtype=bool)
    occupied[tuple(voxelize(cloud, grid).coords.T)] = True
    return SceneSample(cloud, image, np.where(occupied, labels, 0).astype(np.int32), camera, grid, scene)


SPLITS = {"train": 0, "val": 1}


def scene_seed(spec: DatasetSpec, split: str, i: int) -> tuple:
    return (spec.seed, SPLITS[split], i)


def generate_split(spec: DatasetSpec, split: str) -> list[SceneSample]:
    n = spec.n_train if split == "train" else spec.n_val
    out = []
    for i in range(n):
        s = scene_seed(spec, split, i)
        out.append(make_sample(generate_scene(s, spec), spec, s))
    return out


def generate_dataset(spec: DatasetSpec) -> tuple[list[SceneSample], list[SceneSample]]:
    return generate_split(spec, "train"), generate_split(spec, "val")
