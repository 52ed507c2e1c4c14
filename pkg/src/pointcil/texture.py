"""Texture path: synthesize a background color and align image embeddings.

A small head maps the point feature to an RGB color used to paint depth-map
backgrounds; the colored views are embedded by the frozen image scorer and
pulled toward the class anchor with a cosine loss.  Classification adds the
resulting zero-shot logits to the geometric logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn


class ColorGenerator(nn.Module):
    """Two-layer head: features -> (tanh + 1) / 2, one value per channel.

    Output always lies in [0, 1]^3; zero weights and biases give exactly
    mid-gray (0.5, 0.5, 0.5).
    """

    def __init__(self, dim: int, hidden_ratio: float = 0.5):
        super().__init__()
        hidden = max(1, int(round(dim * hidden_ratio)))
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, 3)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        if not torch.isfinite(features).all():
            raise ValueError("ColorGenerator: non-finite input features")
        z = self.fc2(torch.relu(self.fc1(features)))
        return (torch.tanh(z) + 1.0) / 2.0


def synth_color(generator: ColorGenerator, features: torch.Tensor) -> torch.Tensor:
    """Functional wrapper for the color head."""
    return generator(features)


def alignment_loss(view_embeddings: torch.Tensor, anchor: torch.Tensor) -> torch.Tensor:
    """Mean (1 - cos) / 2 between each view embedding and a class anchor.

    Accepts (V, d) with (d,), or batched (B, V, d) with (B, d).  The value
    lies in [0, 1]: 0 at perfect alignment, 1 at opposition.
    """
    if view_embeddings.ndim == anchor.ndim + 1:
        anchor = anchor.unsqueeze(-2)
    elif view_embeddings.ndim != anchor.ndim:
        raise ValueError(
            f"alignment_loss: incompatible shapes {tuple(view_embeddings.shape)} vs {tuple(anchor.shape)}")
    e_norm = view_embeddings.norm(dim=-1)
    a_norm = anchor.norm(dim=-1)
    if (e_norm < 1e-12).any() or (a_norm < 1e-12).any():
        raise ValueError("alignment_loss: zero-norm embedding or anchor")
    cos = (view_embeddings * anchor).sum(dim=-1) / (e_norm * a_norm)
    return ((1.0 - cos) / 2.0).mean()


@dataclass
class LogitsBundle:
    """Per-class scores: geometric term, optional visual term, their sum."""

    geometric: torch.Tensor
    visual: torch.Tensor  # None when the visual path is off
    total: torch.Tensor


def fused_logits(geometric: torch.Tensor, visual: torch.Tensor = None) -> LogitsBundle:
    """Sum the geometric and visual logits; visual=None disables the term."""
    if visual is None:
        return LogitsBundle(geometric=geometric, visual=None, total=geometric)
    if geometric.shape != visual.shape:
        raise ValueError(
            f"fused_logits: shape mismatch {tuple(geometric.shape)} vs {tuple(visual.shape)}")
    return LogitsBundle(geometric=geometric, visual=visual, total=geometric + visual)
