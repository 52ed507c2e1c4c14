"""The full model: rectified point trunk, masked side branch, texture path.

One forward pass produces everything a training step needs: the pooled
point feature, the two side-branch trajectories, the aggregated geometric
descriptor, the synthesized background color, the colored views' frozen
embeddings, and the fused per-class logits.  Depth features arrive
precomputed (they are constant per sample) as part of the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .encoders import EncoderConfig
from .rectify import CrossViewAggregator, MaskedBranchLayer
from .texture import ColorGenerator, LogitsBundle, fused_logits


@dataclass
class ForwardOutputs:
    point_final: torch.Tensor      # (B, d)
    branch_plain: torch.Tensor     # (B, d)
    branch_masked: torch.Tensor    # (B, d)
    fused: torch.Tensor            # (B, d) aggregated geometric descriptor
    color: torch.Tensor            # (B, 3) or None when the visual path is off
    view_embeddings: torch.Tensor  # (B, V, d) or None
    logits: LogitsBundle


class RectifiedShapeNet(nn.Module):
    """Point transformer with depth-rectified layers and a texture head."""

    def __init__(self, enc_cfg: EncoderConfig, rectified_layers=(0, 4, 8),
                 branch_layers: int = 2, mask_ratio: float = 0.9,
                 mask_direction: str = "keep", w: float = 1.0,
                 gate_init: float = 1.0, color_hidden_ratio: float = 0.5,
                 temperature: float = 1.0):
        super().__init__()
        rect = tuple(sorted(set(int(i) for i in rectified_layers)))
        if rect and not (0 <= rect[0] and rect[-1] < enc_cfg.layers):
            raise ValueError(f"rectified layers {rect} out of range for {enc_cfg.layers} blocks")
        if temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {temperature}")
        self.enc_cfg = enc_cfg
        self.rectified_layers = rect
        self.mask_ratio = float(mask_ratio)
        self.mask_direction = mask_direction
        self.temperature = float(temperature)
        self.encoder = enc_cfg.build_point_encoder()
        self.branch = nn.ModuleList(MaskedBranchLayer(enc_cfg.dim) for _ in range(branch_layers))
        self.aggregator = CrossViewAggregator(enc_cfg.dim, w=w, gate_init=gate_init)
        self.color_gen = ColorGenerator(enc_cfg.dim, color_hidden_ratio)
        self.zs_tower = enc_cfg.build_zero_shot_tower()

    @classmethod
    def from_config(cls, cfg: dict) -> "RectifiedShapeNet":
        return cls(
            EncoderConfig.from_config(cfg),
            rectified_layers=cfg["sagr.L_r"],
            branch_layers=cfg["sagr.N_sa"],
            mask_ratio=cfg["sagr.M_R"],
            mask_direction=cfg["sagr.mask_direction"],
            w=cfg["sagr.w"],
            gate_init=cfg["sagr.lambda_init"],
            color_hidden_ratio=cfg["tam.hidden_ratio"],
            temperature=cfg["tam.temperature"],
        )

    def trainable_parameters(self):
        return [p for p in self.parameters() if p.requires_grad]

    def _rect_hook(self, depth_layers: torch.Tensor):
        rect = set(self.rectified_layers)

        def hook(i, x):
            if i in rect:
                return self.encoder.blocks[i](x, kv=depth_layers[:, i])[0]
            return None

        return hook

    def trunk(self, groups: torch.Tensor, depth_layers: torch.Tensor = None):
        """Rectified encoder pass; returns the PointFeatureSet with layer inputs."""
        hook = None
        if depth_layers is not None and self.rectified_layers:
            hook = self._rect_hook(depth_layers)
        return self.encoder(groups, hook=hook, collect=True)

    def _branch_input(self, feats) -> torch.Tensor:
        # The side branch taps the output of the last rectified layer
        # (the input of the following block), or the final tokens when
        # nothing is rectified or the last block is.
        if self.rectified_layers:
            j = self.rectified_layers[-1] + 1
            if j < len(feats.intermediates):
                return feats.intermediates[j]
        return feats.tokens

    def branch_features(self, feats):
        """Run the two side-branch trajectories; returns pooled (plain, masked)."""
        x_plain = x_masked = self._branch_input(feats)
        for layer in self.branch:
            x_plain, x_masked = layer(x_plain, x_masked, self.mask_ratio, self.mask_direction)
        return x_plain.mean(dim=1), x_masked.mean(dim=1)

    @staticmethod
    def compose_views(gray: torch.Tensor, background: torch.Tensor,
                      color: torch.Tensor) -> torch.Tensor:
        """Paint each view's background with its sample's color (B, V, H, W, 3)."""
        g = gray.unsqueeze(-1)
        m = background.unsqueeze(-1)
        return g * (1.0 - m) + m * color[:, None, None, None, :]

    def visual_logits(self, enhanced: torch.Tensor, proto_t: torch.Tensor):
        """Embed colored views with the frozen scorer; cosine logits vs anchors."""
        b, v = enhanced.shape[:2]
        emb, _ = self.zs_tower(enhanced.flatten(0, 1))
        emb = emb / emb.norm(dim=-1, keepdim=True).clamp_min(1e-12)
        logits = emb @ proto_t.T / self.temperature
        return logits.view(b, v, -1).mean(dim=1), emb.view(b, v, -1)

    def forward_batch(self, batch: dict, proto_t: torch.Tensor,
                      use_visual: bool = True) -> ForwardOutputs:
        feats = self.trunk(batch["groups"], batch.get("depth_layers"))
        branch_plain, branch_masked = self.branch_features(feats)
        fused = self.aggregator(feats.final, branch_plain, batch["depth_final"])
        geometric = fused @ proto_t.T
        if use_visual:
            color = self.color_gen(feats.final)
            enhanced = self.compose_views(batch["gray"], batch["background"], color)
            visual, emb = self.visual_logits(enhanced, proto_t)
            bundle = fused_logits(geometric, visual)
        else:
            color, emb = None, None
            bundle = fused_logits(geometric)
        return ForwardOutputs(
            point_final=feats.final, branch_plain=branch_plain,
            branch_masked=branch_masked, fused=fused, color=color,
            view_embeddings=emb, logits=bundle,
        )

    def point_features(self, batch: dict) -> torch.Tensor:
        """Rectified trunk finals only (used for routing and exemplar picks)."""
        return self.trunk(batch["groups"], batch.get("depth_layers")).final
