import numpy as np
import pytest
import torch

from pointcil.texture import (ColorGenerator, LogitsBundle, alignment_loss,
                              fused_logits, synth_color)


def _fd_grad(fn, x, eps=1e-6):
    g = torch.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        hi = fn(x).item()
        flat[i] = orig - eps
        lo = fn(x).item()
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * eps)
    return g


def test_color_generator_range():
    gen = ColorGenerator(dim=16)
    colors = gen(torch.randn(8, 16) * 10)
    assert colors.shape == (8, 3)
    assert (colors >= 0).all() and (colors <= 1).all()


def test_color_generator_zero_weights_give_mid_gray():
    gen = ColorGenerator(dim=16)
    with torch.no_grad():
        for p in gen.parameters():
            p.zero_()
        colors = gen(torch.randn(4, 16))
    assert torch.equal(colors, torch.full((4, 3), 0.5))


def test_color_generator_oracle():
    torch.manual_seed(1)
    gen = ColorGenerator(dim=8, hidden_ratio=0.5).eval()
    assert gen.fc1.out_features == 4
    x = torch.randn(2, 8)
    with torch.no_grad():
        got = gen(x)
        z = gen.fc2(torch.relu(gen.fc1(x)))
        want = (torch.tanh(z) + 1.0) / 2.0
    assert torch.equal(got, want)
    assert torch.equal(synth_color(gen, x), got)


def test_color_generator_hidden_floor():
    gen = ColorGenerator(dim=2, hidden_ratio=0.1)
    assert gen.fc1.out_features == 1


def test_color_generator_rejects_non_finite():
    gen = ColorGenerator(dim=4)
    bad = torch.tensor([[1.0, float("nan"), 0.0, 0.0]])
    with pytest.raises(ValueError, match="non-finite"):
        gen(bad)


def test_alignment_loss_extremes():
    anchor = torch.tensor([1.0, 0.0, 0.0], dtype=torch.float64)
    aligned = anchor.repeat(3, 1) * 2.5  # scale must not matter
    assert alignment_loss(aligned, anchor).item() == pytest.approx(0.0, abs=1e-12)
    opposed = -anchor.repeat(3, 1)
    assert alignment_loss(opposed, anchor).item() == pytest.approx(1.0, abs=1e-12)
    orthogonal = torch.tensor([[0.0, 1.0, 0.0]], dtype=torch.float64)
    assert alignment_loss(orthogonal, anchor).item() == pytest.approx(0.5, abs=1e-12)


def test_alignment_loss_matches_view_mean_oracle(rng):
    emb = torch.from_numpy(rng.normal(size=(4, 6)))
    anchor = torch.from_numpy(rng.normal(size=6))
    got = alignment_loss(emb, anchor).item()
    total = 0.0
    for v in range(4):
        e = emb[v].numpy()
        a = anchor.numpy()
        cos = e @ a / (np.linalg.norm(e) * np.linalg.norm(a))
        total += (1.0 - cos) / 2.0
    assert got == pytest.approx(total / 4, abs=1e-12)


def test_alignment_loss_batched_matches_loop(rng):
    emb = torch.from_numpy(rng.normal(size=(3, 4, 6)))
    anchors = torch.from_numpy(rng.normal(size=(3, 6)))
    got = alignment_loss(emb, anchors).item()
    per_sample = [alignment_loss(emb[b], anchors[b]).item() for b in range(3)]
    assert got == pytest.approx(np.mean(per_sample), abs=1e-12)


def test_alignment_loss_gradient_matches_finite_differences(rng):
    emb0 = torch.from_numpy(rng.normal(size=(3, 5)))
    anchor = torch.from_numpy(rng.normal(size=5))

    emb = emb0.clone().requires_grad_(True)
    alignment_loss(emb, anchor).backward()
    fd = _fd_grad(lambda t: alignment_loss(t, anchor), emb0.clone())
    rel = (emb.grad - fd).norm() / max(fd.norm().item(), 1e-12)
    assert rel < 1e-6


def test_alignment_loss_validation(rng):
    emb = torch.from_numpy(rng.normal(size=(3, 5)))
    with pytest.raises(ValueError, match="incompatible"):
        alignment_loss(emb, torch.zeros(2, 3, 5, 5))
    with pytest.raises(ValueError, match="zero-norm"):
        alignment_loss(emb, torch.zeros(5, dtype=torch.float64))
    bad = emb.clone()
    bad[1] = 0.0
    with pytest.raises(ValueError, match="zero-norm"):
        alignment_loss(bad, torch.ones(5, dtype=torch.float64))


def test_fused_logits_sum_and_passthrough(rng):
    g = torch.from_numpy(rng.normal(size=(2, 7)))
    v = torch.from_numpy(rng.normal(size=(2, 7)))
    bundle = fused_logits(g, v)
    assert isinstance(bundle, LogitsBundle)
    assert torch.equal(bundle.total, g + v)
    assert torch.equal(bundle.geometric, g)
    assert torch.equal(bundle.visual, v)

    geo_only = fused_logits(g)
    assert geo_only.visual is None
    assert torch.equal(geo_only.total, g)


def test_fused_logits_shape_mismatch(rng):
    with pytest.raises(ValueError, match="mismatch"):
        fused_logits(torch.zeros(2, 7), torch.zeros(2, 6))
