"""Multi-view orthographic depth maps and image export.

A view orbits the origin at a fixed elevation.  Points project along the
camera axis; per-pixel depth is the normalized camera-axis distance, so
near is dark and empty background stays at exactly 1.0 (white).  Every
point splats a small square window into a min z-buffer.

Pixel arithmetic is deliberately simple (one expression per quantity) so
an independent per-point reimplementation reproduces images bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .clouds import PointCloud


@dataclass(frozen=True)
class ViewTransform:
    """Orbit camera: azimuth/elevation in radians, distance from origin."""

    azimuth: float
    elevation: float
    distance: float = 2.0

    @property
    def axis(self) -> np.ndarray:
        """Unit vector from the origin toward the camera."""
        ce, se = np.cos(self.elevation), np.sin(self.elevation)
        ca, sa = np.cos(self.azimuth), np.sin(self.azimuth)
        return np.array([ce * ca, ce * sa, se])

    @property
    def right(self) -> np.ndarray:
        ca, sa = np.cos(self.azimuth), np.sin(self.azimuth)
        return np.array([-sa, ca, 0.0])

    @property
    def up(self) -> np.ndarray:
        ce, se = np.cos(self.elevation), np.sin(self.elevation)
        ca, sa = np.cos(self.azimuth), np.sin(self.azimuth)
        return np.array([-se * ca, -se * sa, ce])


def camera_views(n_views: int, elevation_deg: float = 20.0,
                 distance: float = 2.0) -> list:
    """Evenly spaced azimuths starting at 0, shared elevation."""
    if n_views < 1:
        raise ValueError(f"camera_views: need at least one view, got {n_views}")
    elev = np.deg2rad(elevation_deg)
    return [ViewTransform(azimuth=2.0 * np.pi * k / n_views, elevation=elev,
                          distance=distance) for k in range(n_views)]


@dataclass
class DepthMap:
    """H x W float64 depth image in [0, 1]; 1.0 is empty background."""

    pixels: np.ndarray
    view: ViewTransform = None

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 2:
            raise ValueError(f"DepthMap: expected (H, W), got {px.shape}")
        self.pixels = px


def render_depth(cloud, view: ViewTransform, height: int = 64, width: int = 64,
                 splat: int = 3) -> DepthMap:
    """Project a unit-normalized cloud into a min z-buffer depth map.

    Depth is (axis_distance - (distance - 1)) / 2, which spans [0, 1] for
    points inside the unit sphere.  Each point writes a splat x splat
    window (clipped at the borders) centered on its pixel.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"render_depth: expected (N, 3) points, got {pts.shape}")
    if height < 1 or width < 1:
        raise ValueError(f"render_depth: bad image size {height}x{width}")
    if splat < 1:
        raise ValueError(f"render_depth: splat must be >= 1, got {splat}")
    norms = np.linalg.norm(pts, axis=1)
    if norms.max() > 1.0 + 1e-6:
        raise ValueError(f"render_depth: cloud not unit-normalized (max norm {norms.max():.4f})")

    # explicit left-to-right sums, not a matmul: BLAS reductions may differ
    # in the last ulp, which flips floor() at pixel boundaries
    x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
    r, up, ax = view.right, view.up, view.axis
    u = x * r[0] + y * r[1] + z * r[2]
    v = x * up[0] + y * up[1] + z * up[2]
    t = view.distance - (x * ax[0] + y * ax[1] + z * ax[2])
    depth = (t - (view.distance - 1.0)) / 2.0

    cols = np.floor((u + 1.0) / 2.0 * width).astype(np.int64)
    rows = np.floor((1.0 - v) / 2.0 * height).astype(np.int64)
    np.clip(cols, 0, width - 1, out=cols)
    np.clip(rows, 0, height - 1, out=rows)

    img = np.ones((height, width), dtype=np.float64)
    half = splat // 2
    for dy in range(-half, splat - half):
        for dx in range(-half, splat - half):
            rr = rows + dy
            cc = cols + dx
            ok = (rr >= 0) & (rr < height) & (cc >= 0) & (cc < width)
            np.minimum.at(img, (rr[ok], cc[ok]), depth[ok])
    return DepthMap(pixels=img, view=view)


@dataclass
class BackgroundMasks:
    """Boolean masks: exactly-white pixels and confirmed background."""

    white: np.ndarray
    background: np.ndarray

    def __post_init__(self):
        if self.white.shape != self.background.shape:
            raise ValueError("BackgroundMasks: mask shapes differ")
        if (self.background & ~self.white).any():
            raise ValueError("BackgroundMasks: background must be a subset of white")


_BG_WINDOW = 9  # all-white test window; border padded with white (width 4)


def detect_background(pixels: np.ndarray) -> BackgroundMasks:
    """Mark background pixels: white and surrounded by a 9x9 all-white window.

    The image border is padded with white, so a white pixel at the edge
    only needs its in-image neighborhood white.  Pixels near the silhouette
    stay unmarked, which protects object boundaries during compositing.
    """
    px = np.asarray(pixels, dtype=np.float64)
    if px.ndim != 2:
        raise ValueError(f"detect_background: expected (H, W), got {px.shape}")
    white = px == 1.0
    pad = _BG_WINDOW // 2
    padded = np.pad(white, pad, mode="constant", constant_values=True)
    windows = np.lib.stride_tricks.sliding_window_view(padded, (_BG_WINDOW, _BG_WINDOW))
    background = windows.all(axis=(2, 3))
    return BackgroundMasks(white=white, background=background)


@dataclass
class EnhancedImage:
    """H x W x 3 float64 image in [0, 1]."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"EnhancedImage: expected (H, W, 3), got {px.shape}")
        self.pixels = px


def compose_enhanced(gray: np.ndarray, background: np.ndarray, color) -> EnhancedImage:
    """Paint background pixels with `color`, replicate gray elsewhere.

    Linear in the color: d(pixel)/d(color_k) is exactly the background
    indicator on channel k.
    """
    gray = np.asarray(gray, dtype=np.float64)
    background = np.asarray(background, dtype=bool)
    color = np.asarray(color, dtype=np.float64)
    if gray.ndim != 2:
        raise ValueError(f"compose_enhanced: expected (H, W) gray image, got {gray.shape}")
    if background.shape != gray.shape:
        raise ValueError("compose_enhanced: mask shape differs from image")
    if color.shape != (3,):
        raise ValueError(f"compose_enhanced: color must have 3 channels, got {color.shape}")
    if (color < 0).any() or (color > 1).any():
        raise ValueError(f"compose_enhanced: color must lie in [0, 1], got {color}")
    mask = background[..., None].astype(np.float64)
    out = gray[..., None] * (1.0 - mask) + color * mask
    return EnhancedImage(pixels=out)


def _quantize(px: np.ndarray) -> np.ndarray:
    """Map [0, 1] floats to bytes, ties rounding up (0.5 -> 128)."""
    return np.clip(np.floor(px * 255.0 + 0.5), 0, 255).astype(np.uint8)


def export_image(pixels, path) -> None:
    """Write a 2D array as binary PGM (P5) or an (H, W, 3) array as PPM (P6)."""
    px = pixels.pixels if isinstance(pixels, (DepthMap, EnhancedImage)) else np.asarray(pixels)
    px = np.asarray(px, dtype=np.float64)
    if px.min() < 0.0 or px.max() > 1.0:
        raise ValueError("export_image: pixel values must lie in [0, 1]")
    data = _quantize(px)
    if px.ndim == 2:
        magic, h, w = b"P5", px.shape[0], px.shape[1]
    elif px.ndim == 3 and px.shape[2] == 3:
        magic, h, w = b"P6", px.shape[0], px.shape[1]
    else:
        raise ValueError(f"export_image: expected (H, W) or (H, W, 3), got {px.shape}")
    with open(path, "wb") as fh:
        fh.write(magic + b"\n" + f"{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_image(path) -> np.ndarray:
    """Read a binary PGM/PPM written by export_image; returns uint8."""
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if len(parts) < 4 or parts[0] not in (b"P5", b"P6"):
        raise ValueError(f"read_image: {path} is not a binary PGM/PPM")
    w, h = (int(x) for x in parts[1].split())
    if parts[2] != b"255":
        raise ValueError(f"read_image: unsupported maxval {parts[2]!r}")
    channels = 1 if parts[0] == b"P5" else 3
    data = np.frombuffer(parts[3][: h * w * channels], dtype=np.uint8)
    if data.size != h * w * channels:
        raise ValueError(f"read_image: truncated pixel data in {path}")
    return data.reshape((h, w) if channels == 1 else (h, w, 3))
