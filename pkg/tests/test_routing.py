import numpy as np
import pytest
import torch

from pointcil.routing import (Discriminator, bnd_loss,
                              export_logit_histogram, predict_with_routing,
                              read_logit_histogram, relabel_binary, route,
                              select_exemplars)


def test_relabel_binary():
    labels = ["sphere", "helix", "cube", "helix"]
    out = relabel_binary(labels, base_classes=("sphere", "cube"))
    np.testing.assert_array_equal(out, [1.0, 0.0, 1.0, 0.0])
    assert out.dtype == np.float64


def test_discriminator_outputs_probabilities():
    disc = Discriminator(dim=16)
    probs = disc(torch.randn(12, 16) * 5)
    assert probs.shape == (12,)
    assert (probs > 0).all() and (probs < 1).all()


def test_bnd_loss_matches_manual_bce(rng):
    pred = torch.from_numpy(rng.uniform(0.05, 0.95, size=8))
    target = torch.from_numpy((rng.random(8) > 0.5).astype(np.float64))
    got = bnd_loss(pred, target).item()
    p = pred.numpy()
    t = target.numpy()
    want = -(t * np.log(p) + (1 - t) * np.log(1 - p)).mean()
    assert got == pytest.approx(want, abs=1e-12)


def test_bnd_loss_perfect_and_confident_wrong():
    perfect = bnd_loss(torch.tensor([1.0, 0.0]), torch.tensor([1.0, 0.0]))
    assert perfect.item() == pytest.approx(0.0, abs=1e-6)
    # confident wrong stays finite thanks to the clamp, in float32 too
    wrong = bnd_loss(torch.tensor([1.0, 0.0]), torch.tensor([0.0, 1.0]))
    assert np.isfinite(wrong.item())
    assert wrong.item() > 10.0


def test_bnd_loss_gradient_matches_finite_differences(rng):
    pred0 = torch.from_numpy(rng.uniform(0.2, 0.8, size=6))
    target = torch.from_numpy((rng.random(6) > 0.5).astype(np.float64))
    pred = pred0.clone().requires_grad_(True)
    bnd_loss(pred, target).backward()
    # closed form: d/dp of BCE mean is (p - t) / (p (1 - p) n)
    p = pred0.numpy()
    t = target.numpy()
    want = (p - t) / (p * (1 - p) * 6)
    np.testing.assert_allclose(pred.grad.numpy(), want, atol=1e-9)


def test_bnd_loss_validation():
    with pytest.raises(ValueError, match="mismatch"):
        bnd_loss(torch.zeros(3), torch.zeros(4))
    with pytest.raises(ValueError, match="pred"):
        bnd_loss(torch.tensor([1.5]), torch.tensor([1.0]))
    with pytest.raises(ValueError, match="target"):
        bnd_loss(torch.tensor([0.5]), torch.tensor([-1.0]))


def test_route_threshold_is_strict():
    assert route(0.11, 0.1) == "base"
    assert route(0.1, 0.1) == "novel"  # equality stays novel
    assert route(0.09, 0.1) == "novel"
    with pytest.raises(ValueError, match="threshold"):
        route(0.5, 1.5)


def test_predict_with_routing():
    base = torch.tensor([0.1, 0.9, 0.2])
    novel = torch.tensor([0.3, 0.8])
    # base route: global index is the base argmax
    assert predict_with_routing(0.9, base, novel, threshold=0.1, novel_offset=3) == 1
    # novel route: offset by the number of base classes
    assert predict_with_routing(0.05, base, novel, threshold=0.1, novel_offset=3) == 4
    with pytest.raises(ValueError, match="no base"):
        predict_with_routing(0.9, None, novel, threshold=0.1, novel_offset=3)
    with pytest.raises(ValueError, match="no novel"):
        predict_with_routing(0.05, base, None, threshold=0.1, novel_offset=3)


def test_select_exemplars_count_one_is_nearest_mean(rng):
    feats = rng.normal(size=(10, 6))
    ids = [f"s{i:02d}" for i in range(10)]
    picked = select_exemplars(feats, ids, count=1)
    dists = np.linalg.norm(feats - feats.mean(axis=0), axis=1)
    assert picked == [ids[int(np.argmin(dists))]]


def test_select_exemplars_greedy_oracle(rng):
    feats = rng.normal(size=(8, 4))
    ids = [f"s{i}" for i in range(8)]
    picked = select_exemplars(feats, ids, count=3)
    assert len(picked) == len(set(picked)) == 3

    # replicate the greedy rule independently
    mean = feats.mean(axis=0)
    remaining = list(range(8))
    acc = np.zeros(4)
    expect = []
    for step in range(3):
        best, best_d = None, None
        for i in remaining:
            d = np.linalg.norm(mean - (acc + feats[i]) / (step + 1))
            if best is None or d < best_d:
                best, best_d = i, d
        expect.append(ids[best])
        acc += feats[best]
        remaining.remove(best)
    assert picked == expect


def test_select_exemplars_order_invariant(rng):
    feats = rng.normal(size=(9, 5))
    ids = [f"s{i}" for i in range(9)]
    base = select_exemplars(feats, ids, count=2)
    perm = rng.permutation(9)
    assert select_exemplars(feats[perm], [ids[i] for i in perm], count=2) == base


def test_select_exemplars_tie_breaks_by_id():
    feats = np.array([[1.0, 0.0], [1.0, 0.0], [-2.0, 0.0]])
    picked = select_exemplars(feats, ["zz", "aa", "mm"], count=1)
    # rows 0 and 1 are equidistant from the mean: the smaller id wins
    assert picked == ["aa"]


def test_select_exemplars_validation(rng):
    feats = rng.normal(size=(4, 3))
    with pytest.raises(ValueError, match="ids"):
        select_exemplars(feats, ["a", "b"], count=1)
    with pytest.raises(ValueError, match="empty"):
        select_exemplars(np.zeros((0, 3)), [], count=1)
    with pytest.raises(ValueError, match="count"):
        select_exemplars(feats, list("abcd"), count=5)


def test_histogram_round_trip(tmp_path):
    probs = [0.05, 0.07, 0.93, 0.99, 1.0, 0.55]
    path = tmp_path / "hist.csv"
    export_logit_histogram(probs, path)
    counts = read_logit_histogram(path)
    assert counts.sum() == 6
    assert counts[0] == 2          # 0.05, 0.07
    assert counts[5] == 1          # 0.55
    assert counts[9] == 3          # 0.93, 0.99, and 1.0 folds into the top bin
    text = path.read_text().splitlines()
    assert text[0] == "bin_low,bin_high,count"
    assert len(text) == 11


def test_histogram_bin_edges(tmp_path):
    # values exactly on an edge go to the upper bin (0.1 -> bin 1)
    path = tmp_path / "h.csv"
    export_logit_histogram([0.1, 0.2], path)
    counts = read_logit_histogram(path)
    assert counts[1] == 1 and counts[2] == 1


def test_histogram_validation(tmp_path):
    with pytest.raises(ValueError, match="no scores"):
        export_logit_histogram([], tmp_path / "x.csv")
    with pytest.raises(ValueError, match="0, 1"):
        export_logit_histogram([1.2], tmp_path / "x.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,c\n")
    with pytest.raises(ValueError, match="header"):
        read_logit_histogram(bad)
    short = tmp_path / "short.csv"
    short.write_text("bin_low,bin_high,count\n0.0,0.1,3\n")
    with pytest.raises(ValueError, match="10 bins"):
        read_logit_histogram(short)
