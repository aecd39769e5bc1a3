"""Synthetic partial-overlap registration pairs and XYZ point cloud files."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import ConfigError, EmptyCloudError, GenerationError, ParseError
from .geometry import RigidTransform, apply_transform, check_cloud, random_rotation

SHAPE_KINDS = ("box-room", "multi-sphere", "plane-clusters")
SPLITS = ("train", "val", "test")
# seeds of split s, pair i: base * SEED_STRIDE + SPLIT_OFFSET[s] + i
SEED_STRIDE = 10_000_000
SPLIT_OFFSET = {"train": 0, "val": 3_000_000, "test": 6_000_000}
MAX_PER_SPLIT = 3_000_000


@dataclass(frozen=True)
class SynthConfig:
    n_points: int = 256
    overlap_target: float = 0.5
    rotation_max: float = math.radians(45.0)
    translation_max: float = 0.5
    noise_sigma: float = 0.005
    shape_kind: str = "box-room"
    seed: int = 0

    def __post_init__(self):
        if self.n_points < 32:
            raise ConfigError("n_points must be >= 32")
        if not 0 < self.overlap_target <= 1:
            raise ConfigError("overlap_target must be in (0, 1]")
        if self.noise_sigma < 0 or self.rotation_max < 0 or self.translation_max < 0:
            raise ConfigError("noise, rotation and translation bounds must be >= 0")
        if self.shape_kind not in SHAPE_KINDS + ("mixed",):
            raise ConfigError(f"shape_kind must be one of {SHAPE_KINDS + ('mixed',)}")


@dataclass(frozen=True, eq=False)
class RegistrationPair:
    P: np.ndarray
    Q: np.ndarray
    T_gt: RigidTransform
    mask_P: np.ndarray
    mask_Q: np.ndarray
    seed: int

    @property
    def overlap(self):
        return min(float(self.mask_P.mean()), float(self.mask_Q.mean()))


# -- scene generation ---------------------------------------------------------

def _box_surface(rng, lo, hi, n, faces=(0, 1, 2, 3, 4, 5)):
    """Uniform samples on the listed faces of an axis-aligned box.

    Face ``2*a`` is the low side of axis ``a``, ``2*a + 1`` the high side.
    """
    size = hi - lo
    areas = np.array([size[(f // 2 + 1) % 3] * size[(f // 2 + 2) % 3] for f in faces])
    choice = rng.choice(len(faces), size=n, p=areas / areas.sum())
    pts = lo + rng.uniform(size=(n, 3)) * size
    for c, f in enumerate(faces):
        sel = choice == c
        axis = f // 2
        pts[sel, axis] = hi[axis] if f % 2 else lo[axis]
    return pts


def _box_room(rng, n):
    n_furniture = rng.integers(3, 6)
    boxes = []
    for _ in range(n_furniture):
        size = rng.uniform([0.12, 0.12, 0.1], [0.4, 0.4, 0.5])
        lo = rng.uniform(0.0, 1.0 - size)
        lo[2] = 0.0
        boxes.append((lo, lo + size))
    # room walls (no ceiling) take about half of the samples
    n_room = n // 2
    parts = [_box_surface(rng, np.zeros(3), np.ones(3), n_room, faces=(0, 1, 2, 3, 4))]
    areas = np.array([_exposed_area(lo, hi) for lo, hi in boxes])
    counts = _split_count(rng, n - n_room, areas)
    for (lo, hi), c in zip(boxes, counts):
        parts.append(_box_surface(rng, lo, hi, c, faces=(0, 1, 2, 3, 5)))
    return np.concatenate(parts)


def _exposed_area(lo, hi):
    s = hi - lo
    return 2 * s[2] * (s[0] + s[1]) + s[0] * s[1]


def _split_count(rng, total, weights):
    counts = np.floor(total * weights / weights.sum()).astype(int)
    counts[rng.integers(len(counts))] += total - counts.sum()
    return counts


def _multi_sphere(rng, n):
    k = rng.integers(3, 7)
    centres = rng.uniform(0.2, 0.8, size=(k, 3))
    radii = rng.uniform(0.08, 0.25, size=k)
    counts = _split_count(rng, n, radii ** 2)
    parts = []
    for c, r, m in zip(centres, radii, counts):
        d = rng.normal(size=(m, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        parts.append(c + r * d)
    return np.concatenate(parts)


def _plane_clusters(rng, n):
    n_planes = rng.integers(3, 5)
    n_clusters = rng.integers(3, 6)
    n_plane_pts = int(n * 0.6)
    parts = []
    for m in _split_count(rng, n_plane_pts, np.ones(n_planes)):
        centre = rng.uniform(0.2, 0.8, size=3)
        normal = rng.normal(size=3)
        normal /= np.linalg.norm(normal)
        u = np.cross(normal, [1.0, 0.0, 0.0] if abs(normal[0]) < 0.9 else [0.0, 1.0, 0.0])
        u /= np.linalg.norm(u)
        v = np.cross(normal, u)
        ab = rng.uniform(-0.3, 0.3, size=(m, 2))
        parts.append(centre + ab[:, :1] * u + ab[:, 1:] * v)
    for m in _split_count(rng, n - n_plane_pts, np.ones(n_clusters)):
        centre = rng.uniform(0.15, 0.85, size=3)
        parts.append(centre + rng.normal(scale=rng.uniform(0.02, 0.06), size=(m, 3)))
    return np.concatenate(parts)


_GENERATORS = {"box-room": _box_room, "multi-sphere": _multi_sphere, "plane-clusters": _plane_clusters}


def generate_scene(config, seed=None):
    """Scene with ``2 * n_points`` points, enough to cut two overlapping views from.

    ``seed`` overrides ``config.seed``.
    """
    rng = np.random.default_rng(config.seed if seed is None else seed)
    return _scene(rng, config)


def _scene(rng, config):
    kind = config.shape_kind
    if kind == "mixed":
        kind = SHAPE_KINDS[rng.integers(len(SHAPE_KINDS))]
    pts = _GENERATORS[kind](rng, 2 * config.n_points)
    return pts[rng.permutation(pts.shape[0])]


def sample_transform(rng, rotation_max, translation_max):
    R = random_rotation(rng, rotation_max) if rotation_max > 0 else np.eye(3)
    if translation_max > 0:
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        t = d * translation_max * rng.uniform() ** (1.0 / 3.0)
    else:
        t = np.zeros(3)
    return RigidTransform(R, t)


def make_pair(scene, config, rng=None, seed=0, max_attempts=100):
    """Cut two views of ``scene`` by opposite half-spaces and move the second one.

    Each view has ``config.n_points`` points; the overlap fraction is drawn
    uniformly in ``[overlap_target, 1]``. ``T_gt`` maps P onto Q.
    """
    scene = check_cloud(scene, "scene")
    rng = rng if rng is not None else np.random.default_rng(seed)
    n = config.n_points
    if scene.shape[0] < n:
        raise GenerationError(f"scene has {scene.shape[0]} points, need at least {n}")
    for _ in range(max_attempts):
        overlap = rng.uniform(config.overlap_target, 1.0)
        used = min(int(math.floor(n * (2.0 - overlap))), scene.shape[0])
        used = max(used, n)
        subset = np.sort(rng.choice(scene.shape[0], size=used, replace=False))
        pts = scene[subset]
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        order = np.argsort(pts @ direction, kind="stable")
        q_idx, p_idx = order[:n], order[used - n:]
        shared = np.zeros(used, dtype=bool)
        shared[order[used - n:n]] = True
        realized = (2 * n - used) / n
        if realized + 1e-12 >= config.overlap_target:
            break
    else:
        raise GenerationError("could not reach the overlap target")

    p_idx = p_idx[rng.permutation(n)]
    q_idx = q_idx[rng.permutation(n)]
    T = sample_transform(rng, config.rotation_max, config.translation_max)
    P = pts[p_idx]
    Q = apply_transform(pts[q_idx], T)
    if config.noise_sigma > 0:
        P = P + rng.normal(scale=config.noise_sigma, size=P.shape)
        Q = Q + rng.normal(scale=config.noise_sigma, size=Q.shape)
    return RegistrationPair(P, Q, T, shared[p_idx], shared[q_idx], seed)


def pair_seed(base_seed, split, index):
    if split not in SPLIT_OFFSET:
        raise ConfigError(f"split must be one of {SPLITS}")
    if not 0 <= index < MAX_PER_SPLIT:
        raise ConfigError("pair index out of range")
    return base_seed * SEED_STRIDE + SPLIT_OFFSET[split] + index


def generate_pair(config, seed):
    rng = np.random.default_rng(seed)
    return make_pair(_scene(rng, config), config, rng=rng, seed=seed)


def dataset(config, count, split="train"):
    """Deterministic iterator of ``count`` pairs for ``split``."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    for i in range(count):
        yield generate_pair(config, pair_seed(config.seed, split, i))


# -- files --------------------------------------------------------------------

def read_cloud(path):
    """Read whitespace-separated ``x y z`` lines; ``#`` lines and blank lines are skipped."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            fields = text.split()
            if len(fields) != 3:
                raise ParseError(f"expected 3 values, got {len(fields)}", lineno)
            try:
                xyz = [float(f) for f in fields]
            except ValueError:
                raise ParseError(f"not a number in {text!r}", lineno) from None
            if not all(math.isfinite(v) for v in xyz):
                raise ParseError("non-finite coordinate", lineno)
            rows.append(xyz)
    if not rows:
        raise EmptyCloudError(f"{path}: no points")
    return np.array(rows, dtype=np.float64)


def write_cloud(cloud, path, comment=None):
    cloud = check_cloud(cloud)
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        for x, y, z in cloud:
            fh.write(f"{x:.17g} {y:.17g} {z:.17g}\n")


def read_meta(path):
    with open(path, "r", encoding="utf-8") as fh:
        tokens = [t for line in fh if not line.lstrip().startswith("#") for t in line.split()]
    if len(tokens) != 12:
        raise ParseError(f"{path}: expected 12 values, found {len(tokens)}")
    try:
        return RigidTransform.from_list([float(t) for t in tokens])
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None


def write_meta(transform, path):
    vals = transform.to_list()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(" ".join(f"{v:.17g}" for v in vals[:9]) + "\n")
        fh.write(" ".join(f"{v:.17g}" for v in vals[9:]) + "\n")


def pair_paths(directory, split, index):
    base = Path(directory) / f"{split}_{index}"
    return Path(f"{base}_P.xyz"), Path(f"{base}_Q.xyz"), Path(f"{base}.meta")


def write_pair(pair, directory, split, index):
    os.makedirs(directory, exist_ok=True)
    p_path, q_path, meta_path = pair_paths(directory, split, index)
    write_cloud(pair.P, p_path)
    write_cloud(pair.Q, q_path)
    write_meta(pair.T_gt, meta_path)
    return p_path, q_path, meta_path


def load_split(directory, split):
    """Pairs ``(P, Q, T_gt)`` stored under ``directory`` for ``split``, by ascending index."""
    out = []
    index = 0
    while True:
        p_path, q_path, meta_path = pair_paths(directory, split, index)
        if not p_path.exists():
            break
        out.append((read_cloud(p_path), read_cloud(q_path), read_meta(meta_path)))
        index += 1
    return out
