"""Depth-guided rectification of the point branch.

Selected trunk layers swap their self-attention source for depth tokens
(cross-attention); a short side branch runs the same attention twice,
once intact and once with the strongest attention entries suppressed,
and a consistency loss ties the two trajectories' batch similarity
structures together.  The aggregator then mixes the point, side-branch,
and depth features into the final geometric descriptor.
"""

from __future__ import annotations

import math

import torch
from torch import nn

from .encoders import AttentionBlock


def attention(query: torch.Tensor, key: torch.Tensor, value: torch.Tensor):
    """Scaled dot-product attention; returns (output, weights).

    Weights are softmax(Q K^T / sqrt(d)) row-wise over keys.
    """
    if query.shape[-1] != key.shape[-1]:
        raise ValueError(f"attention: query dim {query.shape[-1]} != key dim {key.shape[-1]}")
    if key.shape[-2] != value.shape[-2]:
        raise ValueError(f"attention: {key.shape[-2]} keys vs {value.shape[-2]} values")
    scores = query @ key.transpose(-2, -1) / math.sqrt(query.shape[-1])
    weights = torch.softmax(scores, dim=-1)
    return weights @ value, weights


def fuse_layer(block: AttentionBlock, index: int, tokens: torch.Tensor,
               depth_tokens, rectified_layers):
    """Run one trunk block, cross-attending to depth tokens when selected.

    Exactly one branch applies: layers in `rectified_layers` use the depth
    tokens as the key/value source, all others self-attend.
    """
    if index in rectified_layers:
        if depth_tokens is None:
            raise ValueError(f"fuse_layer: layer {index} is rectified but no depth tokens given")
        return block(tokens, kv=depth_tokens, need_weights=True)
    return block(tokens, need_weights=True)


def masked_attention(weights: torch.Tensor, values: torch.Tensor,
                     mask_ratio: float, direction: str = "keep"):
    """Zero the strongest attention entries per row, no renormalization.

    With direction "keep", mask_ratio is the kept fraction: the top
    ceil((1 - mask_ratio) * k) entries of each row are zeroed.  With
    "mask" the ratio is the masked fraction instead.  At least one entry
    (the row maximum) is always suppressed; entries tied with the cut
    value are suppressed too, so a uniform row is zeroed entirely.
    Returns (masked_weights, masked_weights @ values).
    """
    if not 0.0 <= mask_ratio <= 1.0:
        raise ValueError(f"masked_attention: mask_ratio must be in [0, 1], got {mask_ratio}")
    if direction not in ("keep", "mask"):
        raise ValueError(f"masked_attention: direction must be 'keep' or 'mask', got {direction!r}")
    if weights.shape[-1] != values.shape[-2]:
        raise ValueError(
            f"masked_attention: {weights.shape[-1]} attention columns vs {values.shape[-2]} value rows")
    k = weights.shape[-1]
    frac = (1.0 - mask_ratio) if direction == "keep" else mask_ratio
    # the epsilon absorbs float noise in frac * k (0.3 * 10 must drop 3, not 4)
    drop = max(1, math.ceil(frac * k - 1e-9))
    cut = torch.sort(weights, dim=-1, descending=True).values[..., drop - 1 : drop]
    masked = weights * (weights < cut)
    return masked, masked @ values


def mc_loss(unmasked: torch.Tensor, masked: torch.Tensor) -> torch.Tensor:
    """Mean squared gap between the two batch cosine-similarity matrices.

    Both inputs are (B, d); the loss averages (sim_u[i,j] - sim_m[i,j])^2
    over all B^2 pairs, so it is 0 when masking leaves the batch geometry
    intact and is invariant to sample order.
    """
    if unmasked.ndim != 2 or masked.ndim != 2:
        raise ValueError("mc_loss: expected (B, d) feature matrices")
    if unmasked.shape != masked.shape:
        raise ValueError(f"mc_loss: shape mismatch {tuple(unmasked.shape)} vs {tuple(masked.shape)}")
    for name, t in (("unmasked", unmasked), ("masked", masked)):
        if (t.norm(dim=-1) < 1e-12).any():
            raise ValueError(f"mc_loss: zero-norm row in {name} features")
    un = unmasked / unmasked.norm(dim=-1, keepdim=True)
    mn = masked / masked.norm(dim=-1, keepdim=True)
    return ((un @ un.T - mn @ mn.T) ** 2).mean()


class MaskedBranchLayer(nn.Module):
    """One single-head self-attention layer run over two trajectories.

    The unmasked and masked paths share this layer's weights; the masked
    path suppresses its strongest attention entries before applying the
    values.  Residual connections keep token magnitudes stable across
    stacked layers.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.ln = nn.LayerNorm(dim)
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def _attend(self, x):
        h = self.ln(x)
        out, weights = attention(self.q_proj(h), self.k_proj(h), self.v_proj(h))
        return out, weights, self.v_proj(h)

    def forward(self, x_plain: torch.Tensor, x_masked: torch.Tensor,
                mask_ratio: float, direction: str = "keep"):
        ctx, _, _ = self._attend(x_plain)
        x_plain = x_plain + self.out_proj(ctx)
        _, weights, values = self._attend(x_masked)
        _, ctx_m = masked_attention(weights, values, mask_ratio, direction)
        x_masked = x_masked + self.out_proj(ctx_m)
        return x_plain, x_masked


class CrossViewAggregator(nn.Module):
    """Mix point, side-branch, and depth features into one descriptor.

    output = mix((reduce(cat(point, branch)) + w * depth) * gate), where
    `gate` is a learnable per-dimension vector and `w` a fixed scalar.
    With gate = 0 the output collapses to mix's bias; with w = 0 the
    depth feature drops out entirely.
    """

    def __init__(self, dim: int, w: float = 1.0, gate_init: float = 1.0):
        super().__init__()
        self.reduce = nn.Linear(2 * dim, dim)
        self.mix = nn.Linear(dim, dim)
        self.gate = nn.Parameter(torch.full((dim,), float(gate_init)))
        self.w = float(w)

    def forward(self, point_final: torch.Tensor, branch_final: torch.Tensor,
                depth_final: torch.Tensor) -> torch.Tensor:
        if not (point_final.shape == branch_final.shape == depth_final.shape):
            raise ValueError(
                f"CrossViewAggregator: mismatched shapes {tuple(point_final.shape)}, "
                f"{tuple(branch_final.shape)}, {tuple(depth_final.shape)}")
        inner = self.reduce(torch.cat([point_final, branch_final], dim=-1))
        inner = inner + self.w * depth_final
        return self.mix(inner * self.gate)
