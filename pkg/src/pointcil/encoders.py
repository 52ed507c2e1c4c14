"""Feature encoders: point-token transformer and frozen image towers.

The point branch is the only deep trainable component.  Tokenization
(farthest-point centers + kNN groups) is pure geometry in numpy; the
learned part starts at the group embedding.  All argmax/nearest ties
break lexicographically by coordinates and the cloud is processed in
lexicographic order, so tokenization is invariant to input permutation
down to the bit.

Image towers (the depth feature extractor and the zero-shot scorer) are
frozen at construction.  Their weights come from a seeded numpy stream
rather than torch init, so checksums are reproducible across torch
versions and machines.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .clouds import PointCloud
from .prototypes import PrototypeMatrix


def tokenize_points(points, tokens: int, k: int = None):
    """Group a cloud into `tokens` kNN neighborhoods around FPS centers.

    Returns (groups, centers): groups is (tokens, k, 6) float64 holding
    [neighbor - center, center] rows, centers is (tokens, 3).  With
    tokens=1 and default k the single group covers the entire cloud.
    """
    pts = points.points if isinstance(points, PointCloud) else np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"tokenize_points: expected (N, 3), got {pts.shape}")
    n = pts.shape[0]
    if tokens < 1:
        raise ValueError(f"tokenize_points: tokens must be >= 1, got {tokens}")
    if tokens > n:
        raise ValueError(f"tokenize_points: {tokens} tokens exceed {n} points")
    if k is None:
        k = min(n, max(4, (2 * n) // tokens))
    if not 1 <= k <= n:
        raise ValueError(f"tokenize_points: group size {k} out of range [1, {n}]")

    # Lexicographic ordering makes every later reduction independent of
    # the caller's point order.
    order = np.lexsort((pts[:, 2], pts[:, 1], pts[:, 0]))
    p = pts[order]

    centroid = p.mean(axis=0)
    mind = ((p - centroid) ** 2).sum(axis=1)
    chosen = np.zeros(n, dtype=bool)
    selected = []
    for _ in range(tokens):
        best = mind[~chosen].max() if chosen.any() else mind.max()
        cand = np.flatnonzero((mind == best) & ~chosen)
        idx = int(cand[0])
        selected.append(idx)
        chosen[idx] = True
        mind = np.minimum(mind, ((p - p[idx]) ** 2).sum(axis=1))

    groups = np.empty((tokens, k, 6), dtype=np.float64)
    centers = p[selected]
    for ti, ci in enumerate(selected):
        dist = ((p - p[ci]) ** 2).sum(axis=1)
        nb = np.lexsort((p[:, 2], p[:, 1], p[:, 0], dist))[:k]
        groups[ti, :, :3] = p[nb] - p[ci]
        groups[ti, :, 3:] = p[ci]
    return groups, centers


class TokenEmbed(nn.Module):
    """Two-layer point MLP with max-pooling over each group."""

    def __init__(self, dim: int):
        super().__init__()
        self.fc1 = nn.Linear(6, dim)
        self.fc2 = nn.Linear(dim, dim)

    def forward(self, groups):
        # groups: (B, T, k, 6) -> (B, T, dim)
        h = torch.relu(self.fc1(groups))
        h = self.fc2(h)
        return h.max(dim=-2).values


class AttentionBlock(nn.Module):
    """Pre-norm transformer block; key/value source is swappable.

    With kv=None this is plain self-attention.  Passing kv attends the
    block's queries over the external tokens instead (separate norm for
    the external source, shared projections otherwise).
    """

    def __init__(self, dim: int, heads: int):
        super().__init__()
        if dim % heads != 0:
            raise ValueError(f"AttentionBlock: dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = dim // heads
        self.ln1 = nn.LayerNorm(dim)
        self.ln_kv = nn.LayerNorm(dim)
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)
        self.ln2 = nn.LayerNorm(dim)
        self.ffn = nn.Sequential(nn.Linear(dim, 2 * dim), nn.ReLU(), nn.Linear(2 * dim, dim))

    def _split(self, x):
        b, t, _ = x.shape
        return x.view(b, t, self.heads, self.head_dim).transpose(1, 2)

    def forward(self, x, kv=None, need_weights: bool = False):
        qsrc = self.ln1(x)
        src = qsrc if kv is None else self.ln_kv(kv)
        q = self._split(self.q_proj(qsrc))
        k = self._split(self.k_proj(src))
        v = self._split(self.v_proj(src))
        scores = q @ k.transpose(-2, -1) / math.sqrt(self.head_dim)
        weights = torch.softmax(scores, dim=-1)
        ctx = (weights @ v).transpose(1, 2).reshape(x.shape)
        x = x + self.out_proj(ctx)
        x = x + self.ffn(self.ln2(x))
        return x, (weights if need_weights else None)


@dataclass
class PointFeatureSet:
    """Point-branch outputs: per-layer inputs, last tokens, pooled final."""

    tokens: torch.Tensor          # (B, T, d) last-layer tokens
    final: torch.Tensor           # (B, d) projected mean-pooled feature
    intermediates: list = field(default_factory=list)  # inputs to each block


class PointEncoder(nn.Module):
    """Token embedding, `layers` attention blocks, mean-pool, linear head."""

    def __init__(self, dim: int = 64, layers: int = 12, heads: int = 4):
        super().__init__()
        self.dim = dim
        self.embed = TokenEmbed(dim)
        self.blocks = nn.ModuleList(AttentionBlock(dim, heads) for _ in range(layers))
        self.head = nn.Linear(dim, dim)

    def forward(self, groups, hook=None, collect: bool = False) -> PointFeatureSet:
        """Run the trunk.  `hook(i, x)` may return a replacement for block
        i's output; returning None runs the block unchanged."""
        x = self.embed(groups)
        inters = []
        for i, block in enumerate(self.blocks):
            if collect:
                inters.append(x)
            y = hook(i, x) if hook is not None else None
            x = block(x)[0] if y is None else y
        final = self.head(x.mean(dim=1))
        return PointFeatureSet(tokens=x, final=final, intermediates=inters)


def encode_points(encoder: PointEncoder, cloud, tokens: int, k: int = None,
                  hook=None, collect: bool = False) -> PointFeatureSet:
    """Tokenize one cloud and run the encoder; squeezes the batch dim."""
    groups, _ = tokenize_points(cloud, tokens, k)
    batch = torch.from_numpy(groups).to(next(encoder.parameters()).dtype).unsqueeze(0)
    out = encoder(batch, hook=hook, collect=collect)
    return PointFeatureSet(
        tokens=out.tokens.squeeze(0),
        final=out.final.squeeze(0),
        intermediates=[t.squeeze(0) for t in out.intermediates],
    )


def _seed_frozen(module: nn.Module, seed: int) -> None:
    """Fill parameters from a numpy PCG64 stream, in definition order."""
    rng = np.random.Generator(np.random.PCG64(seed))
    with torch.no_grad():
        for name, p in module.named_parameters():
            if p.ndim >= 2:
                std = math.sqrt(2.0 / (p.shape[0] + p.shape[1]))
                vals = rng.normal(0.0, std, size=tuple(p.shape))
            elif name.endswith("bias"):
                vals = np.zeros(p.shape)
            else:
                vals = np.ones(p.shape)
            p.copy_(torch.from_numpy(vals.astype(np.float32)))


class FrozenImageTower(nn.Module):
    """Patch transformer with frozen, seed-derived weights.

    Used twice: as the depth feature extractor (1 input channel, same
    number of blocks as the point trunk) and as the zero-shot image
    scorer (3 channels, shallower).  Position codes are regenerated from
    the seed per token count, so one tower serves any resolution whose
    sides divide by the patch size.
    """

    def __init__(self, dim: int, layers: int, heads: int, patch: int,
                 channels: int, seed: int):
        super().__init__()
        self.dim = dim
        self.patch = patch
        self.channels = channels
        self.seed = seed
        self.patch_embed = nn.Linear(patch * patch * channels, dim)
        self.blocks = nn.ModuleList(AttentionBlock(dim, heads) for _ in range(layers))
        self.final_norm = nn.LayerNorm(dim)
        self.head = nn.Linear(dim, dim)
        _seed_frozen(self, seed)
        self.requires_grad_(False)
        self.eval()
        self._pos_cache = {}

    def _pos(self, n_tokens: int) -> torch.Tensor:
        if n_tokens not in self._pos_cache:
            ss = np.random.SeedSequence([self.seed, 911, n_tokens])
            rng = np.random.Generator(np.random.PCG64(ss))
            pos = rng.normal(0.0, 0.02, size=(n_tokens, self.dim)).astype(np.float32)
            self._pos_cache[n_tokens] = torch.from_numpy(pos)
        return self._pos_cache[n_tokens]

    def patchify(self, images: torch.Tensor) -> torch.Tensor:
        """(B, H, W) or (B, H, W, C) -> (B, T, patch*patch*C), row-major."""
        if images.ndim == 3:
            images = images.unsqueeze(-1)
        b, h, w, c = images.shape
        if c != self.channels:
            raise ValueError(f"patchify: expected {self.channels} channels, got {c}")
        p = self.patch
        if h % p or w % p:
            raise ValueError(f"patchify: {h}x{w} not divisible by patch {p}")
        x = images.reshape(b, h // p, p, w // p, p, c)
        x = x.permute(0, 1, 3, 2, 4, 5)
        return x.reshape(b, (h // p) * (w // p), p * p * c)

    def forward(self, images: torch.Tensor, collect: bool = False):
        """Returns (pooled (B, d), list of per-block input tokens).

        Input values are flipped to 1 - v before embedding: depth maps use
        a white (1.0) background, and the flip maps empty regions to zero
        so pooled features are driven by content, not by the background.
        """
        x = self.patch_embed(1.0 - self.patchify(images))
        x = x + self._pos(x.shape[1]).to(x.dtype)
        inters = []
        for block in self.blocks:
            if collect:
                inters.append(x)
            x, _ = block(x)
        x = self.final_norm(x)
        pooled = self.head(x.mean(dim=1))
        return pooled, inters


@dataclass
class DepthFeatureSet:
    """View-averaged depth features: per-layer tokens plus pooled final."""

    layers: list                # length n_blocks, each (T_img, d)
    final: torch.Tensor         # (d,)


def encode_depth(tower: FrozenImageTower, depth_maps, collect: bool = True) -> DepthFeatureSet:
    """Encode one sample's view stack; features are averaged over views."""
    if hasattr(depth_maps, "ndim"):
        stack = np.asarray(depth_maps, dtype=np.float32)
    else:
        maps = [m.pixels if hasattr(m, "pixels") else np.asarray(m) for m in depth_maps]
        if len(maps) == 0:
            raise ValueError("encode_depth: no depth maps")
        shapes = {m.shape for m in maps}
        if len(shapes) != 1:
            raise ValueError(f"encode_depth: mixed resolutions {sorted(shapes)}")
        stack = np.stack(maps).astype(np.float32)
    if stack.ndim != 3:
        raise ValueError(f"encode_depth: expected (V, H, W), got {stack.shape}")
    with torch.no_grad():
        pooled, inters = tower(torch.from_numpy(stack), collect=collect)
    return DepthFeatureSet(
        layers=[t.mean(dim=0) for t in inters],
        final=pooled.mean(dim=0),
    )


def zero_shot_logits(tower: FrozenImageTower, images, prototypes: PrototypeMatrix,
                     temperature: float = 1.0) -> torch.Tensor:
    """Cosine logits of view-embedded images against prototype rows.

    Per-view embeddings are unit-normalized, scored against the (already
    unit) prototype rows, scaled by 1/temperature, then view-averaged.
    """
    if temperature <= 0:
        raise ValueError(f"zero_shot_logits: temperature must be > 0, got {temperature}")
    if hasattr(images, "ndim"):
        stack = torch.as_tensor(np.asarray(images, dtype=np.float32))
    else:
        arrs = [im.pixels if hasattr(im, "pixels") else np.asarray(im) for im in images]
        stack = torch.from_numpy(np.stack(arrs).astype(np.float32))
    if stack.ndim != 4 or stack.shape[-1] != 3:
        raise ValueError(f"zero_shot_logits: expected (V, H, W, 3), got {tuple(stack.shape)}")
    with torch.no_grad():
        emb, _ = tower(stack)
    emb = emb / emb.norm(dim=-1, keepdim=True).clamp_min(1e-12)
    proto = torch.from_numpy(prototypes.matrix.astype(np.float32))
    return (emb @ proto.T / temperature).mean(dim=0)


def param_checksum(module: nn.Module) -> str:
    """sha256 over name-sorted parameters as little-endian float32 bytes."""
    digest = hashlib.sha256()
    params = dict(module.named_parameters())
    for name in sorted(params):
        digest.update(name.encode("utf-8"))
        arr = params[name].detach().cpu().numpy().astype("<f4")
        digest.update(arr.tobytes())
    return digest.hexdigest()


@dataclass(frozen=True)
class EncoderConfig:
    """Shared dimensions for both branches, read from a config dict."""

    dim: int = 64
    layers: int = 12
    heads: int = 4
    tokens: int = 32
    patch: int = 8
    zs_layers: int = 3
    depth_seed: int = 7001
    zs_seed: int = 7002

    def __post_init__(self):
        if self.dim % self.heads:
            raise ValueError(f"EncoderConfig: dim {self.dim} not divisible by heads {self.heads}")
        for name in ("dim", "layers", "heads", "tokens", "patch", "zs_layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"EncoderConfig: {name} must be >= 1")

    @classmethod
    def from_config(cls, cfg: dict) -> "EncoderConfig":
        return cls(
            dim=cfg["encoder.dim"], layers=cfg["encoder.layers"],
            heads=cfg["encoder.heads"], tokens=cfg["encoder.tokens"],
            patch=cfg["encoder.patch"], zs_layers=cfg["encoder.zs_layers"],
            depth_seed=cfg["encoder.depth_seed"], zs_seed=cfg["encoder.zs_seed"],
        )

    def build_point_encoder(self) -> PointEncoder:
        return PointEncoder(dim=self.dim, layers=self.layers, heads=self.heads)

    def build_depth_tower(self) -> FrozenImageTower:
        return FrozenImageTower(dim=self.dim, layers=self.layers, heads=self.heads,
                                patch=self.patch, channels=1, seed=self.depth_seed)

    def build_zero_shot_tower(self) -> FrozenImageTower:
        return FrozenImageTower(dim=self.dim, layers=self.zs_layers, heads=self.heads,
                                patch=self.patch, channels=3, seed=self.zs_seed)
