"""On-disk dataset format.

Each sample is one binary file (all values little-endian)::

    b"PFSAMPL1"
    f64 x 7     grid: origin (3), voxel size, dims (3)
    f64 x 18    camera: fx, fy, cx, cy, rotation (9, row-major), translation (3), image H, W
    u64         number of points N
    f64 x 3N    points, row-major
    f64 x 3HW   image, channel-major
    i32 x HWD   labels, row-major over the grid

The dataset directory holds ``index.ini`` listing the generating spec, the
sample files with their SHA-256 digests, and a digest over the whole set.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import struct
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from .errors import ConfigError, UsageError
from .geometry import CameraModel, GridSpec, PointCloud
from .scene import DatasetSpec, SceneSample, generate_split

MAGIC = b"PFSAMPL1"
INDEX_NAME = "index.ini"


def dumps_sample(sample: SceneSample) -> bytes:
    g = sample.grid
    grid_arr = np.concatenate([g.origin, [g.voxel_size], np.asarray(g.dims, dtype=np.float64)])
    pts = np.ascontiguousarray(sample.cloud.points, dtype="<f8")
    parts = [
        MAGIC,
        grid_arr.astype("<f8").tobytes(),
        sample.camera.to_array().astype("<f8").tobytes(),
        struct.pack("<Q", len(pts)),
        pts.tobytes(),
        np.ascontiguousarray(sample.image, dtype="<f8").tobytes(),
        np.ascontiguousarray(sample.labels, dtype="<i4").tobytes(),
    ]
    return b"".join(parts)


def loads_sample(blob: bytes) -> SceneSample:
    if blob[:8] != MAGIC:
        raise ConfigError("not a sample file (bad magic)")
    buf = io.BytesIO(blob[8:])

    def take(dtype, count):
        size = np.dtype(dtype).itemsize * count
        raw = buf.read(size)
        if len(raw) != size:
            raise ConfigError("truncated sample file")
        return np.frombuffer(raw, dtype=dtype).copy()

    ga = take("<f8", 7)
    grid = GridSpec(ga[:3], float(ga[3]), tuple(int(d) for d in ga[4:]))
    camera = CameraModel.from_array(take("<f8", 18))
    (n,) = struct.unpack("<Q", buf.read(8))
    points = take("<f8", 3 * n).reshape(n, 3)
    H, W = camera.image_size
    image = take("<f8", 3 * H * W).reshape(3, H, W)
    labels = take("<i4", int(np.prod(grid.dims))).reshape(grid.dims)
    if buf.read(1):
        raise ConfigError("trailing bytes in sample file")
    return SceneSample(PointCloud(points), image.astype(np.float64), labels.astype(np.int32), camera, grid)


def sha256_hex(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def dataset_digest(samples) -> str:
    """SHA-256 over the serialized samples in order."""
    h = hashlib.sha256()
    for s in samples:
        h.update(dumps_sample(s))
    return h.hexdigest()


def spec_to_dict(spec: DatasetSpec) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(spec).items()}


def spec_from_dict(d: dict) -> DatasetSpec:
    known = {f.name for f in fields(DatasetSpec)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown dataset keys: {sorted(unknown)}")
    return DatasetSpec(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})


def _ini_value(v) -> str:
    return " ".join(repr(x) for x in v) if isinstance(v, (list, tuple)) else repr(v)


def _parse_ini_value(text: str, like):
    if isinstance(like, tuple):
        return tuple(type(e)(float(x)) if isinstance(e, float) else int(x) for e, x in zip(like, text.split()))
    if isinstance(like, bool):
        return text == "True"
    return type(like)(float(text)) if isinstance(like, float) else int(text)


def write_dataset(root, spec: DatasetSpec) -> str:
    """Generate and store both splits; returns the dataset digest."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    index = configparser.ConfigParser()
    index.optionxform = str
    index["spec"] = {k: _ini_value(v) for k, v in asdict(spec).items()}
    whole = hashlib.sha256()
    for split in ("train", "val"):
        (root / split).mkdir(exist_ok=True)
        section = {}
        for i, sample in enumerate(generate_split(spec, split)):
            blob = dumps_sample(sample)
            name = f"{split}/{i:05d}.pfs"
            (root / name).write_bytes(blob)
            section[name] = sha256_hex(blob)
            whole.update(blob)
        index[split] = section
    digest = whole.hexdigest()
    index["dataset"] = {"sha256": digest, "format": "PFSAMPL1"}
    with open(root / INDEX_NAME, "w", encoding="utf-8") as fh:
        index.write(fh)
    return digest


def read_index(root) -> tuple[DatasetSpec, dict, str]:
    path = Path(root) / INDEX_NAME
    if not path.exists():
        raise UsageError(f"no dataset index at {path}")
    index = configparser.ConfigParser()
    index.optionxform = str
    index.read(path, encoding="utf-8")
    defaults = DatasetSpec()
    try:
        kw = {k: _parse_ini_value(v, getattr(defaults, k)) for k, v in index["spec"].items()}
        spec = DatasetSpec(**kw)
        files = {split: dict(index[split]) for split in ("train", "val")}
        digest = index["dataset"]["sha256"]
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"malformed dataset index: {exc}") from exc
    return spec, files, digest


def read_dataset(root, verify: bool = True) -> tuple[DatasetSpec, list, list, str]:
    root = Path(root)
    spec, files, digest = read_index(root)
    splits = {}
    whole = hashlib.sha256()
    for split in ("train", "val"):
        samples = []
        for name, expected in files[split].items():
            blob = (root / name).read_bytes()
            if verify and sha256_hex(blob) != expected:
                raise ConfigError(f"checksum mismatch for {name}")
            whole.update(blob)
            samples.append(loads_sample(blob))
        splits[split] = samples
    if verify and whole.hexdigest() != digest:
        raise ConfigError("dataset digest mismatch")
    return spec, splits["train"], splits["val"], digest
