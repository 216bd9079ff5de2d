"""Sample generation, occlusion augmentation, and the dataset file format.

Every sample derives its own generator stream from (dataset seed, sample
id), so generation is order-independent and reproducible byte for byte.
The camera sits at the origin looking at the object, which is placed at a
random position in front of it; the partial view keeps camera-facing
points, drops self-occluded ones with a coarse depth grid, and adds depth
noise.

Ground-truth rotations for the cylinder category are canonicalized against
the view direction (spin and flip), because a cylinder's observations
cannot distinguish those symmetry-equivalent poses; without a view-anchored
convention the NOCS labels would be unlearnable.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BadSpec, EmptyView
from ..geometry import Pose, model_to_observation, rotation_about_axis, rotation_from_quaternion
from .shapes import CATEGORIES, ShapeSpec, generate_shape, sample_shape_spec

GENERATOR_VERSION = 1
MAGIC = b"CPDS"
FORMAT_VERSION = 1

N_SURFACE = 1024        # supervision surface samples per model
DEPTH_GRID = 64
DEPTH_MARGIN = 0.005    # meters
NOISE_SIGMA = 0.002     # meters
FACING_MARGIN = -0.1
MIN_VIEW_POINTS = 32


@dataclass
class Sample:
    sample_id: int
    category_id: int
    pose: Pose
    partial: np.ndarray     # (n_part, 3) observation frame
    model_obs: np.ndarray   # (N_SURFACE, 3) observation frame
    model_cad: np.ndarray   # (N_SURFACE, 3) canonical frame, unit diagonal

    @property
    def category(self) -> str:
        return CATEGORIES[self.category_id]


@dataclass
class DatasetManifest:
    split: str
    count: int
    seed: int
    categories: tuple[str, ...] = CATEGORIES
    n_part: int = 1024
    generator_version: int = GENERATOR_VERSION

    def as_text(self) -> str:
        return (
            f"split = {self.split}\n"
            f"count = {self.count}\n"
            f"seed = {self.seed}\n"
            f"categories = {','.join(self.categories)}\n"
            f"n_part = {self.n_part}\n"
            f"generator_version = {self.generator_version}\n"
        )

    @classmethod
    def from_text(cls, text: str) -> "DatasetManifest":
        kv = {}
        for line in text.splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                kv[k.strip()] = v.strip()
        return cls(
            split=kv["split"],
            count=int(kv["count"]),
            seed=int(kv["seed"]),
            categories=tuple(kv["categories"].split(",")),
            n_part=int(kv["n_part"]),
            generator_version=int(kv["generator_version"]),
        )


def sample_pose(rng: np.random.Generator, size_canonical: np.ndarray,
                t_lateral: float = 0.5, depth_range=(0.5, 1.5),
                scale_range=(0.1, 0.4)) -> Pose:
    """Uniform rotation, position in the camera frustum box, metric scale."""
    rotation = rotation_from_quaternion(rng.standard_normal(4))
    t = np.array([
        rng.uniform(-t_lateral, t_lateral),
        rng.uniform(-t_lateral, t_lateral),
        rng.uniform(*depth_range),
    ])
    scale = rng.uniform(*scale_range)
    return Pose(rotation, t, scale * size_canonical)


_FLIP_X = rotation_about_axis([1.0, 0.0, 0.0], np.pi)


def canonicalize_cylinder_rotation(rotation: np.ndarray, view_dir: np.ndarray) -> np.ndarray:
    """Pick the symmetry-equivalent rotation determined by the view.

    Flip: the object +z axis points toward the camera (world z as the
    tie-break). Spin: the camera direction sits at azimuth zero in the
    object frame. Both choices are functions of observable geometry.
    """
    axis_world = rotation[:, 2]
    key = float(axis_world @ (-view_dir))
    if abs(key) < 1e-9:
        key = float(axis_world[2])
    if key < 0:
        rotation = rotation @ _FLIP_X
    u = rotation.T @ (-view_dir)
    alpha = float(np.arctan2(u[1], u[0]))
    return rotation @ rotation_about_axis([0.0, 0.0, 1.0], alpha)


def render_partial(model_obs: np.ndarray, normals_obs: np.ndarray,
                   view_dir: np.ndarray, n_part: int, rng: np.random.Generator,
                   noise_sigma: float = NOISE_SIGMA) -> np.ndarray:
    """Self-occluded view: normal culling, depth-grid occlusion, noise, resample."""
    view = np.asarray(view_dir, dtype=np.float64)
    view = view / np.linalg.norm(view)
    facing = (normals_obs @ view) < FACING_MARGIN
    pts = model_obs[facing]
    if pts.shape[0] >= MIN_VIEW_POINTS:
        pts = pts[_depth_grid_visible(pts, view)]
    if pts.shape[0] < MIN_VIEW_POINTS:
        raise EmptyView(f"only {pts.shape[0]} points survived the view test")

    pts = pts + noise_sigma * rng.standard_normal(pts.shape) if noise_sigma else pts.copy()
    m = pts.shape[0]
    if m >= n_part:
        keep = rng.choice(m, size=n_part, replace=False)
        return pts[keep]
    extra = rng.choice(m, size=n_part - m, replace=True)
    return np.concatenate([pts, pts[extra]])


def _depth_grid_visible(pts: np.ndarray, view: np.ndarray) -> np.ndarray:
    ref = np.array([0.0, 0.0, 1.0]) if abs(view[2]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(view, ref)
    u /= np.linalg.norm(u)
    w = np.cross(view, u)
    px, py = pts @ u, pts @ w
    depth = pts @ view
    gx = _bin_index(px)
    gy = _bin_index(py)
    cell = gx * DEPTH_GRID + gy
    order = np.argsort(depth, kind="stable")
    front = np.full(DEPTH_GRID * DEPTH_GRID, np.inf)
    for i in order:
        c = cell[i]
        if depth[i] < front[c]:
            front[c] = depth[i]
    return depth <= front[cell] + DEPTH_MARGIN


def _bin_index(coords: np.ndarray) -> np.ndarray:
    lo, hi = coords.min(), coords.max()
    span = max(hi - lo, 1e-12)
    return np.minimum(((coords - lo) / span * DEPTH_GRID).astype(np.int64), DEPTH_GRID - 1)


def occlusion_augment(partial: np.ndarray, fraction: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Mask an extent band off one image-plane edge, then resample to size.

    The band direction is drawn from {+x, -x, +y, -y} (top, bottom, left,
    right of the roughly camera-aligned frame).
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"occlusion fraction must be in [0, 1), got {fraction}")
    if fraction == 0.0:
        return partial
    n = partial.shape[0]
    axis = int(rng.integers(0, 2))
    sign = 1.0 if rng.integers(0, 2) else -1.0
    values = sign * partial[:, axis]
    lo, hi = values.min(), values.max()
    keep = values <= hi - fraction * (hi - lo)
    kept = partial[keep]
    if kept.shape[0] == 0:  # everything masked; fall back to the closest point
        kept = partial[np.argmin(values)][None, :]
    m = kept.shape[0]
    if m >= n:
        return kept[:n]
    extra = rng.choice(m, size=n - m, replace=True)
    return np.concatenate([kept, kept[extra]])


def _sample_rng(seed: int, sample_id: int, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng([seed, sample_id, salt, 0x5EED])


def generate_sample(seed: int, sample_id: int, categories=CATEGORIES,
                    n_part: int = 1024) -> Sample:
    """Build one sample; category cycles with the id for an even mix."""
    rng = _sample_rng(seed, sample_id)
    category = categories[sample_id % len(categories)]
    category_id = CATEGORIES.index(category)
    spec = sample_shape_spec(category, rng, n_points=N_SURFACE)
    model_cad, normals, size_canonical = generate_shape(spec, rng)

    for _ in range(16):
        pose = sample_pose(rng, size_canonical)
        view = pose.t / np.linalg.norm(pose.t)
        if category == "cylinder":
            pose = Pose(canonicalize_cylinder_rotation(pose.R, view), pose.t, pose.s)
        model_obs = model_to_observation(model_cad, pose)
        normals_obs = normals @ pose.R.T
        try:
            partial = render_partial(model_obs, normals_obs, view, n_part, rng)
        except EmptyView:
            continue
        return Sample(sample_id, category_id, pose, partial, model_obs, model_cad)
    raise BadSpec(f"no visible view found for sample {sample_id} ({category})")


def generate_split(manifest: DatasetManifest) -> list[Sample]:
    if any(c not in CATEGORIES for c in manifest.categories):
        raise BadSpec(f"unknown categories in {manifest.categories}")
    return [
        generate_sample(manifest.seed, i, manifest.categories, manifest.n_part)
        for i in range(manifest.count)
    ]


# -- serialization ---------------------------------------------------------

def _pack_cloud(cloud: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(cloud, dtype="<f4")
    return struct.pack("<I", arr.shape[0]) + arr.tobytes()


def write_dataset(path, manifest: DatasetManifest, samples: list[Sample]) -> None:
    chunks = [MAGIC, struct.pack("<I", FORMAT_VERSION)]
    text = manifest.as_text().encode("utf-8")
    chunks.append(struct.pack("<I", len(text)))
    chunks.append(text)
    for s in samples:
        chunks.append(struct.pack("<II", s.sample_id, s.category_id))
        pose_vals = np.concatenate([s.pose.R.reshape(-1), s.pose.t, s.pose.s])
        chunks.append(np.ascontiguousarray(pose_vals, dtype="<f8").tobytes())
        chunks.append(_pack_cloud(s.partial))
        chunks.append(_pack_cloud(s.model_obs))
        chunks.append(_pack_cloud(s.model_cad))
    path = Path(path)
    path.write_bytes(b"".join(chunks))
    path.with_suffix(path.suffix + ".manifest.txt").write_text(manifest.as_text())


def load_dataset(path) -> tuple[DatasetManifest, list[Sample]]:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise ValueError(f"{path} is not a dataset file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset version {version}")
    (text_len,) = struct.unpack_from("<I", blob, 8)
    offset = 12
    manifest = DatasetManifest.from_text(blob[offset:offset + text_len].decode("utf-8"))
    offset += text_len

    def read_cloud(off):
        (count,) = struct.unpack_from("<I", blob, off)
        off += 4
        arr = np.frombuffer(blob, dtype="<f4", count=count * 3, offset=off)
        return arr.reshape(count, 3).copy(), off + 12 * count

    samples = []
    for _ in range(manifest.count):
        sid, cid = struct.unpack_from("<II", blob, offset)
        offset += 8
        pose_vals = np.frombuffer(blob, dtype="<f8", count=15, offset=offset).copy()
        offset += 120
        pose = Pose(pose_vals[:9].reshape(3, 3), pose_vals[9:12], pose_vals[12:15])
        partial, offset = read_cloud(offset)
        model_obs, offset = read_cloud(offset)
        model_cad, offset = read_cloud(offset)
        samples.append(Sample(sid, cid, pose, partial, model_obs, model_cad))
    return manifest, samples
