import numpy as np
import pytest

from pointcil.checkpoint import load_checkpoint, save_checkpoint


def test_round_trip(tmp_path, rng):
    arrays = {
        "net.block0.weight": rng.normal(size=(8, 4)).astype(np.float32),
        "net.block0.bias": rng.normal(size=8).astype(np.float32),
        "scalar": np.float32(3.5),
        "empty_rank3": rng.normal(size=(2, 3, 5)).astype(np.float32),
    }
    path = tmp_path / "ckpt.bin"
    save_checkpoint(arrays, path)
    back = load_checkpoint(path)
    assert set(back) == set(arrays)
    for name in arrays:
        got = back[name]
        want = np.asarray(arrays[name], dtype=np.float32)
        assert got.shape == want.shape
        np.testing.assert_array_equal(got, want)


def test_bytes_insensitive_to_insertion_order(tmp_path, rng):
    a = rng.normal(size=(4, 4)).astype(np.float32)
    b = rng.normal(size=6).astype(np.float32)
    save_checkpoint({"alpha": a, "beta": b}, tmp_path / "one.bin")
    save_checkpoint({"beta": b, "alpha": a}, tmp_path / "two.bin")
    assert (tmp_path / "one.bin").read_bytes() == (tmp_path / "two.bin").read_bytes()


def test_handwritten_record_layout(tmp_path):
    # one record: name "w" (1 byte), rank 2, shape (1, 2), data [1.0, 2.0]
    save_checkpoint({"w": np.array([[1.0, 2.0]], dtype=np.float32)}, tmp_path / "w.bin")
    raw = (tmp_path / "w.bin").read_bytes()
    expect = (
        (1).to_bytes(4, "little")
        + b"w"
        + (2).to_bytes(4, "little")
        + (1).to_bytes(4, "little")
        + (2).to_bytes(4, "little")
        + np.array([1.0, 2.0], dtype="<f4").tobytes()
    )
    assert raw == expect


def test_float64_downcast(tmp_path):
    save_checkpoint({"x": np.array([1.0 + 1e-12], dtype=np.float64)}, tmp_path / "x.bin")
    back = load_checkpoint(tmp_path / "x.bin")
    assert back["x"].dtype == np.float32
    assert back["x"][0] == np.float32(1.0 + 1e-12)


def test_truncated_archive(tmp_path):
    save_checkpoint({"w": np.zeros((4, 4), dtype=np.float32)}, tmp_path / "w.bin")
    raw = (tmp_path / "w.bin").read_bytes()
    (tmp_path / "cut.bin").write_bytes(raw[:-3])
    with pytest.raises(ValueError, match="truncated"):
        load_checkpoint(tmp_path / "cut.bin")


def test_empty_archive(tmp_path):
    save_checkpoint({}, tmp_path / "none.bin")
    assert load_checkpoint(tmp_path / "none.bin") == {}
