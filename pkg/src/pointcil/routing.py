"""Base/novel routing: a binary discriminator over frozen base features.

After the base task is frozen, a small MLP learns to score how "base-like"
a sample's point feature is.  At inference the score routes each sample
either to the frozen base network (restricted to base classes) or to the
adapted network (restricted to the novel classes seen so far).  Replayed
exemplars keep old classes represented, one stored sample per class.
"""

from __future__ import annotations

import csv

import numpy as np
import torch
from torch import nn


def relabel_binary(labels, base_classes) -> np.ndarray:
    """Map class names to 1 (base) / 0 (novel) against the base set."""
    base = set(base_classes)
    out = np.empty(len(labels), dtype=np.float64)
    for i, name in enumerate(labels):
        out[i] = 1.0 if name in base else 0.0
    return out


class Discriminator(nn.Module):
    """Two-layer MLP emitting the probability that a feature is base-like."""

    def __init__(self, dim: int, hidden_ratio: float = 0.5):
        super().__init__()
        hidden = max(1, int(round(dim * hidden_ratio)))
        self.fc1 = nn.Linear(dim, hidden)
        self.fc2 = nn.Linear(hidden, 1)

    def forward(self, features: torch.Tensor) -> torch.Tensor:
        h = torch.relu(self.fc1(features))
        return torch.sigmoid(self.fc2(h)).squeeze(-1)


def bnd_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Binary cross-entropy over probabilities in [0, 1].

    Probabilities are clamped away from exact 0/1 by 1e-7 (the gap must
    survive float32 rounding near 1) so a confident wrong prediction
    yields a large finite loss instead of inf.
    """
    if pred.shape != target.shape:
        raise ValueError(f"bnd_loss: shape mismatch {tuple(pred.shape)} vs {tuple(target.shape)}")
    for name, t in (("pred", pred), ("target", target)):
        if (t < 0).any() or (t > 1).any():
            raise ValueError(f"bnd_loss: {name} values must lie in [0, 1]")
    p = pred.clamp(1e-7, 1.0 - 1e-7)
    return -(target * torch.log(p) + (1.0 - target) * torch.log(1.0 - p)).mean()


def route(prob: float, threshold: float) -> str:
    """Route by score: strictly above the threshold goes to the base net."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"route: threshold must be in [0, 1], got {threshold}")
    return "base" if prob > threshold else "novel"


def predict_with_routing(prob: float, base_logits, novel_logits,
                         threshold: float, novel_offset: int) -> int:
    """Pick a global class index from routed, label-space-restricted logits.

    Base-routed samples argmax over base classes only; novel-routed ones
    argmax over the novel classes, whose global indices start at
    `novel_offset`.
    """
    if route(prob, threshold) == "base":
        if base_logits is None:
            raise ValueError("predict_with_routing: routed to base but no base logits given")
        return int(torch.as_tensor(base_logits).argmax())
    if novel_logits is None:
        raise ValueError("predict_with_routing: routed to novel but no novel logits given")
    return novel_offset + int(torch.as_tensor(novel_logits).argmax())


def select_exemplars(features, sample_ids, count: int = 1) -> list:
    """Greedily pick samples whose running mean best matches the class mean.

    With count=1 this is simply the sample nearest the class mean.  Ties
    break toward the lexicographically smallest sample id, so selection
    does not depend on input order.
    """
    feats = np.asarray(features, dtype=np.float64)
    ids = list(sample_ids)
    if feats.ndim != 2 or feats.shape[0] != len(ids):
        raise ValueError(f"select_exemplars: {feats.shape} features vs {len(ids)} ids")
    if len(ids) == 0:
        raise ValueError("select_exemplars: empty class")
    if not 1 <= count <= len(ids):
        raise ValueError(f"select_exemplars: count {count} out of range [1, {len(ids)}]")
    order = sorted(range(len(ids)), key=lambda i: ids[i])
    feats = feats[order]
    ids = [ids[i] for i in order]
    mean = feats.mean(axis=0)
    picked = []
    acc = np.zeros_like(mean)
    remaining = list(range(len(ids)))
    for step in range(count):
        dists = [np.linalg.norm(mean - (acc + feats[i]) / (step + 1)) for i in remaining]
        best = remaining[int(np.argmin(dists))]
        picked.append(best)
        acc = acc + feats[best]
        remaining.remove(best)
    return [ids[i] for i in picked]


def export_logit_histogram(probs, path) -> None:
    """Write decile counts of discriminator scores as CSV."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size == 0:
        raise ValueError("export_logit_histogram: no scores")
    if (probs < 0).any() or (probs > 1).any():
        raise ValueError("export_logit_histogram: scores must lie in [0, 1]")
    bins = np.minimum((probs * 10).astype(int), 9)
    counts = np.bincount(bins, minlength=10)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_low", "bin_high", "count"])
        for b in range(10):
            writer.writerow([f"{b / 10:.1f}", f"{(b + 1) / 10:.1f}", int(counts[b])])


def read_logit_histogram(path) -> np.ndarray:
    """Read decile counts back from CSV."""
    counts = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["bin_low", "bin_high", "count"]:
            raise ValueError(f"read_logit_histogram: unexpected header {header!r}")
        for row in reader:
            counts.append(int(row[2]))
    if len(counts) != 10:
        raise ValueError(f"read_logit_histogram: expected 10 bins, got {len(counts)}")
    return np.array(counts)
