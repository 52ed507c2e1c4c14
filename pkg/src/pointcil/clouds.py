"""Procedural 3D point clouds: shape samplers, normalization, xyz files.

Shapes are sampled on analytic surfaces centered at the origin.  Centrally
symmetric kinds are sampled in antithetic pairs (p, -p) so the centroid of
an even-sized, jitter-free cloud is exactly zero; re-centering during
normalization then leaves surface distances intact (e.g. a raw sphere keeps
all norms equal to the radius).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class PointCloud:
    """N x 3 float64 coordinates with a class label and a sample id."""

    points: np.ndarray
    label: str = ""
    id: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
            raise ValueError(f"PointCloud: expected (N, 3) with N >= 1, got {pts.shape}")
        if not np.isfinite(pts).all():
            raise ValueError("PointCloud: coordinates must be finite")
        self.points = pts

    @property
    def n(self) -> int:
        return self.points.shape[0]


def _pair_antithetic(half: np.ndarray, n: int) -> np.ndarray:
    """Interleave (p, -p) pairs; one trailing unpaired point when n is odd."""
    out = np.empty((n, 3), dtype=np.float64)
    out[0 : 2 * (n // 2) : 2] = half[: n // 2]
    out[1 : 2 * (n // 2) : 2] = -half[: n // 2]
    if n % 2:
        out[-1] = half[n // 2]
    return out


def _sample_sphere(rng, n):
    half = rng.normal(size=((n + 1) // 2, 3))
    half /= np.linalg.norm(half, axis=1, keepdims=True)
    return _pair_antithetic(half, n)


def _cube_face_points(rng, n, half_extents):
    """Uniform samples on the surface of an axis-aligned box."""
    hx, hy, hz = half_extents
    areas = np.array([hy * hz, hx * hz, hx * hy])
    axis = rng.choice(3, size=n, p=areas / areas.sum())
    sign = rng.choice([-1.0, 1.0], size=n)
    u = rng.uniform(-1.0, 1.0, size=n)
    v = rng.uniform(-1.0, 1.0, size=n)
    pts = np.empty((n, 3))
    ext = np.array([hx, hy, hz])
    for i in range(n):
        a = axis[i]
        b, c = (a + 1) % 3, (a + 2) % 3
        pts[i, a] = sign[i] * ext[a]
        pts[i, b] = u[i] * ext[b]
        pts[i, c] = v[i] * ext[c]
    return pts


_CUBE_HALF = 1.0 / np.sqrt(3.0)


def _sample_cube(rng, n):
    half = _cube_face_points(rng, (n + 1) // 2, (_CUBE_HALF,) * 3)
    return _pair_antithetic(half, n)


def _sample_cylinder(rng, n):
    m = (n + 1) // 2
    phi = rng.uniform(0.0, 2.0 * np.pi, size=m)
    z = rng.uniform(-0.8, 0.8, size=m)
    half = np.stack([0.5 * np.cos(phi), 0.5 * np.sin(phi), z], axis=1)
    return _pair_antithetic(half, n)


# Cone: apex at z = +0.8, base circle of radius 0.7 at z = -0.4.
_CONE_APEX = 0.8
_CONE_BASE_Z = -0.4
_CONE_R = 0.7


def _sample_cone(rng, n):
    s = np.sqrt(rng.uniform(0.0, 1.0, size=n))  # area-uniform along the slant
    phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
    r = s * _CONE_R
    z = _CONE_APEX - s * (_CONE_APEX - _CONE_BASE_Z)
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


_TORUS_R = 0.65
_TORUS_r = 0.25


def _sample_torus(rng, n):
    m = (n + 1) // 2
    phi = rng.uniform(0.0, 2.0 * np.pi, size=m)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=m)
    w = _TORUS_R + _TORUS_r * np.cos(theta)
    half = np.stack([w * np.cos(phi), w * np.sin(phi), _TORUS_r * np.sin(theta)], axis=1)
    return _pair_antithetic(half, n)


def _sample_pyramid(rng, n):
    apex = np.array([0.0, 0.0, 0.8])
    b, z0 = 0.6, -0.4
    corners = np.array([[b, b, z0], [-b, b, z0], [-b, -b, z0], [b, -b, z0]])
    slant = np.linalg.norm(apex - (corners[0] + corners[1]) / 2.0)
    tri_area = b * slant
    base_area = (2 * b) ** 2
    areas = np.array([tri_area] * 4 + [base_area])
    face = rng.choice(5, size=n, p=areas / areas.sum())
    u = rng.uniform(0.0, 1.0, size=n)
    v = rng.uniform(0.0, 1.0, size=n)
    pts = np.empty((n, 3))
    for i in range(n):
        if face[i] < 4:
            c0, c1 = corners[face[i]], corners[(face[i] + 1) % 4]
            a, bb = u[i], v[i]
            if a + bb > 1.0:  # reflect into the triangle
                a, bb = 1.0 - a, 1.0 - bb
            pts[i] = apex + a * (c0 - apex) + bb * (c1 - apex)
        else:
            pts[i] = [b * (2 * u[i] - 1), b * (2 * v[i] - 1), z0]
    return pts


_ELLIPSOID_AXES = np.array([0.9, 0.55, 0.4])


def _sample_ellipsoid(rng, n):
    return _sample_sphere(rng, n) * _ELLIPSOID_AXES


_HELIX_TURNS = 2.5
_HELIX_R = 0.6


def _sample_helix(rng, n):
    t = rng.uniform(-_HELIX_TURNS * np.pi, _HELIX_TURNS * np.pi, size=n)
    z = t * (0.75 / (_HELIX_TURNS * np.pi))
    return np.stack([_HELIX_R * np.cos(t), _HELIX_R * np.sin(t), z], axis=1)


_CROSS_ARMS = ((0.9, 0.2, 0.2), (0.2, 0.9, 0.2), (0.2, 0.2, 0.9))


def _sample_cross(rng, n):
    m = (n + 1) // 2
    arm = rng.choice(3, size=m)
    half = np.empty((m, 3))
    for i in range(m):
        half[i] = _cube_face_points(rng, 1, _CROSS_ARMS[arm[i]])[0]
    return _pair_antithetic(half, n)


def _sample_ring(rng, n):
    m = (n + 1) // 2
    phi = rng.uniform(0.0, 2.0 * np.pi, size=m)
    half = np.stack([0.9 * np.cos(phi), 0.9 * np.sin(phi), np.zeros(m)], axis=1)
    return _pair_antithetic(half, n)


_SAMPLERS = {
    "sphere": _sample_sphere,
    "cube": _sample_cube,
    "cylinder": _sample_cylinder,
    "cone": _sample_cone,
    "torus": _sample_torus,
    "pyramid": _sample_pyramid,
    "ellipsoid": _sample_ellipsoid,
    "helix": _sample_helix,
    "cross": _sample_cross,
    "ring": _sample_ring,
}

SHAPE_KINDS = tuple(sorted(_SAMPLERS))


def _clipped_noise(rng, shape, jitter):
    """Gaussian noise whose per-point vector norm is clipped at 3 * jitter."""
    noise = rng.normal(0.0, jitter, size=shape)
    norms = np.linalg.norm(noise, axis=1, keepdims=True)
    cap = 3.0 * jitter
    return noise * np.minimum(1.0, cap / np.maximum(norms, 1e-300))


def generate_shape(kind: str, n_points: int, seed: int, jitter: float = 0.0,
                   scale=None) -> PointCloud:
    """Sample a raw (unnormalized) surface cloud of the given kind.

    `scale` optionally stretches the shape per axis before jitter is added.
    Jitter is Gaussian with the noise-vector norm clipped at 3 * jitter, so
    every point stays within 3 * jitter of the analytic surface.
    """
    if kind not in _SAMPLERS:
        raise ValueError(f"generate_shape: unknown kind {kind!r}; known: {SHAPE_KINDS}")
    if n_points < 16:
        raise ValueError(f"generate_shape: n_points must be >= 16, got {n_points}")
    if jitter < 0:
        raise ValueError(f"generate_shape: jitter must be >= 0, got {jitter}")
    rng = np.random.Generator(np.random.PCG64(seed))
    pts = _SAMPLERS[kind](rng, n_points)
    if scale is not None:
        scale = np.asarray(scale, dtype=np.float64)
        if scale.shape != (3,) or (scale <= 0).any():
            raise ValueError(f"generate_shape: scale must be 3 positive factors, got {scale}")
        pts = pts * scale
    if jitter > 0:
        pts = pts + _clipped_noise(rng, pts.shape, jitter)
    return PointCloud(points=pts, label=kind, id=f"{kind}_{seed}")


def normalize_unit_sphere(points: np.ndarray) -> np.ndarray:
    """Center on the centroid and scale so the farthest point has norm 1."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3 or pts.shape[0] < 1:
        raise ValueError(f"normalize_unit_sphere: expected (N, 3), got {pts.shape}")
    centered = pts - pts.mean(axis=0)
    radius = np.linalg.norm(centered, axis=1).max()
    if radius < 1e-12:
        raise ValueError("normalize_unit_sphere: degenerate cloud, all points coincide")
    return centered / radius


def save_xyz(cloud: PointCloud, path) -> None:
    """Write 'label <name>' then one 'x y z' line per point (8 decimals)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"label {cloud.label}\n")
        for x, y, z in cloud.points:
            fh.write(f"{x:.8f} {y:.8f} {z:.8f}\n")


def load_xyz(path) -> PointCloud:
    """Parse an xyz file; the sample id is the file stem."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("label "):
        raise ValueError(f"{path.name} line 1: expected 'label <name>' header")
    label = lines[0][len("label "):].strip()
    if not label:
        raise ValueError(f"{path.name} line 1: empty label")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ValueError(f"{path.name} line {lineno}: expected 3 coordinates, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ValueError(f"{path.name} line {lineno}: unparseable coordinate in {line!r}") from None
    if not rows:
        raise ValueError(f"{path.name}: no points after the header")
    return PointCloud(points=np.array(rows, dtype=np.float64), label=label, id=path.stem)


# Class catalog: the 10 kinds plus anisotropically scaled variants, so
# experiments can draw more classes than there are kinds.  Scaling happens
# before normalization, which preserves the anisotropy.
CLASS_CATALOG = (
    ("sphere", "sphere", None),
    ("cube", "cube", None),
    ("cylinder", "cylinder", None),
    ("cone", "cone", None),
    ("torus", "torus", None),
    ("pyramid", "pyramid", None),
    ("ellipsoid", "ellipsoid", None),
    ("helix", "helix", None),
    ("cross", "cross", None),
    ("ring", "ring", None),
    ("cube_flat", "cube", (1.0, 1.0, 0.22)),
    ("cone_narrow", "cone", (0.4, 0.4, 1.0)),
    ("torus_stretched", "torus", (1.5, 0.75, 1.0)),
    ("ellipsoid_flat", "ellipsoid", (1.0, 1.2, 0.3)),
    ("cylinder_squat", "cylinder", (1.4, 1.4, 0.35)),
    ("pyramid_tall", "pyramid", (0.5, 0.5, 1.4)),
)

_CATALOG_BY_NAME = {name: (kind, scale) for name, kind, scale in CLASS_CATALOG}
CATALOG_NAMES = tuple(name for name, _, _ in CLASS_CATALOG)


def synth_sample(class_name: str, n_points: int, jitter: float, rng) -> np.ndarray:
    """One augmented, normalized training/test sample for a catalog class.

    Augmentation: random rotation about z, mild per-axis scale jitter
    (within 5%), then clipped Gaussian point noise.
    """
    if class_name not in _CATALOG_BY_NAME:
        raise ValueError(f"synth_sample: unknown class {class_name!r}")
    kind, scale = _CATALOG_BY_NAME[class_name]
    pts = _SAMPLERS[kind](rng, n_points)
    if scale is not None:
        pts = pts * np.asarray(scale)
    pts = pts * rng.uniform(0.95, 1.05, size=3)
    angle = rng.uniform(0.0, 2.0 * np.pi)
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    pts = pts @ rot.T
    if jitter > 0:
        pts = pts + _clipped_noise(rng, pts.shape, jitter)
    return normalize_unit_sphere(pts)


def _sample_rng(seed: int, class_name: str, split: str, index: int):
    class_index = CATALOG_NAMES.index(class_name)
    split_code = 0 if split == "train" else 1
    ss = np.random.SeedSequence([seed, class_index, split_code, index])
    return np.random.Generator(np.random.PCG64(ss))


def make_dataset(root, classes, train_per_class: int, test_per_class: int,
                 n_points: int = 256, jitter: float = 0.02, seed: int = 0) -> dict:
    """Write root/<class>/<split>_<idx>.xyz for every class; return the inventory.

    Each sample's RNG is derived from (seed, class, split, index), so output
    bytes are independent of generation order and identical across runs.
    """
    root = Path(root)
    inventory = {}
    for name in classes:
        if name not in _CATALOG_BY_NAME:
            raise ValueError(f"make_dataset: unknown class {name!r}; catalog: {CATALOG_NAMES}")
        class_dir = root / name
        class_dir.mkdir(parents=True, exist_ok=True)
        ids = {"train": [], "test": []}
        for split, count in (("train", train_per_class), ("test", test_per_class)):
            for idx in range(count):
                rng = _sample_rng(seed, name, split, idx)
                pts = synth_sample(name, n_points, jitter, rng)
                sid = f"{split}_{idx:03d}"
                save_xyz(PointCloud(points=pts, label=name, id=sid), class_dir / f"{sid}.xyz")
                ids[split].append(sid)
        inventory[name] = ids
    return inventory


def scan_dataset(root) -> dict:
    """Rebuild the {class: {split: [ids]}} inventory from a dataset directory."""
    root = Path(root)
    if not root.is_dir():
        raise ValueError(f"scan_dataset: {root} is not a directory")
    inventory = {}
    for class_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        ids = {"train": [], "test": []}
        for f in sorted(class_dir.glob("*.xyz")):
            split = f.stem.split("_")[0]
            if split in ids:
                ids[split].append(f.stem)
        if ids["train"] or ids["test"]:
            inventory[class_dir.name] = ids
    if not inventory:
        raise ValueError(f"scan_dataset: no samples found under {root}")
    return inventory
