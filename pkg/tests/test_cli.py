import csv

import numpy as np
import pytest

from pointcil.cli import cli_main
from pointcil.clouds import make_dataset
from pointcil.config import DEFAULTS, write_config
from pointcil.rendering import read_image

CLASSES = ["sphere", "cube", "torus", "cone"]


def _tiny_cfg():
    cfg = dict(DEFAULTS)
    cfg.update({
        "data.points": 64,
        "render.views": 2, "render.height": 16, "render.width": 16,
        "encoder.dim": 16, "encoder.layers": 3, "encoder.heads": 2,
        "encoder.tokens": 4, "encoder.patch": 4, "encoder.zs_layers": 1,
        "sagr.L_r": (0, 2), "sagr.N_sa": 1,
        "train.base_epochs": 1, "train.inc_epochs": 1, "train.batch": 8,
        "bnd.epochs": 2, "bnd.batch": 2,
        "schedule.base_classes": 2, "schedule.tasks": 2, "schedule.shots": 2,
        "schedule.classes": ",".join(CLASSES),
    })
    return cfg


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    make_dataset(root, CLASSES, train_per_class=4, test_per_class=2,
                 n_points=64, seed=0)
    return root


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory, data_dir):
    base = tmp_path_factory.mktemp("cli_run")
    cfg_path = base / "run.cfg"
    write_config(_tiny_cfg(), cfg_path)
    out = base / "out"
    rc = cli_main(["train", "--config", str(cfg_path), "--data", str(data_dir),
                   "--out", str(out)])
    assert rc == 0
    return out


def test_gen_data_with_names(tmp_path, capsys):
    out = tmp_path / "ds"
    rc = cli_main(["gen-data", "--out", str(out), "--classes", "sphere,helix",
                   "--train-per-class", "2", "--test-per-class", "1",
                   "--points", "32"])
    assert rc == 0
    assert "4 samples for 2 classes" not in capsys.readouterr().out  # 6 samples
    assert sorted(p.name for p in out.iterdir()) == ["helix", "sphere"]
    assert len(list((out / "sphere").glob("*.xyz"))) == 3


def test_gen_data_with_count(tmp_path, capsys):
    out = tmp_path / "ds"
    rc = cli_main(["gen-data", "--out", str(out), "--classes", "2",
                   "--train-per-class", "1", "--test-per-class", "1",
                   "--points", "32"])
    assert rc == 0
    assert "wrote 4 samples for 2 classes" in capsys.readouterr().out
    # catalog order: the first two entries
    assert sorted(p.name for p in out.iterdir()) == ["cube", "sphere"]


def test_gen_data_count_out_of_range(tmp_path, capsys):
    rc = cli_main(["gen-data", "--out", str(tmp_path / "ds"), "--classes", "99"])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_gen_data_unknown_class(tmp_path, capsys):
    rc = cli_main(["gen-data", "--out", str(tmp_path / "ds"),
                   "--classes", "sphere,decahedron", "--points", "32"])
    assert rc == 1
    assert "decahedron" in capsys.readouterr().err


def test_render_depth(tmp_path, data_dir, capsys):
    sample = data_dir / "sphere" / "train_000.xyz"
    out = tmp_path / "views"
    rc = cli_main(["render-depth", "--input", str(sample), "--views", "3",
                   "--size", "16", "16", "--out", str(out)])
    assert rc == 0
    pgms = sorted(out.glob("*.pgm"))
    assert [p.name for p in pgms] == ["view_00.pgm", "view_01.pgm", "view_02.pgm"]
    img = read_image(pgms[0])
    assert img.shape == (16, 16)
    assert (img < 255).any()  # the object is visible
    assert not list(out.glob("*.ppm"))


def test_render_depth_with_color(tmp_path, data_dir):
    sample = data_dir / "cube" / "train_001.xyz"
    out = tmp_path / "views"
    # 32x32: small enough to be quick, big enough that the conservative
    # background window finds pixels to paint
    rc = cli_main(["render-depth", "--input", str(sample), "--views", "1",
                   "--size", "32", "32", "--color", "1.0,0.0,0.0",
                   "--out", str(out)])
    assert rc == 0
    ppm = read_image(out / "view_00.ppm")
    assert ppm.shape == (32, 32, 3)
    # painted background is pure red somewhere
    assert (ppm == np.array([255, 0, 0])).all(axis=-1).any()


def test_render_depth_bad_color(tmp_path, data_dir, capsys):
    rc = cli_main(["render-depth", "--input", str(data_dir / "sphere" / "train_000.xyz"),
                   "--views", "1", "--color", "1.5,0.0,0.0",
                   "--out", str(tmp_path / "v")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_render_depth_missing_input(tmp_path, capsys):
    rc = cli_main(["render-depth", "--input", str(tmp_path / "nope.xyz"),
                   "--out", str(tmp_path / "v")])
    assert rc == 1


def test_metrics_published_rows(capsys):
    rc = cli_main(["metrics", "--acc",
                   "81.0,20.2,2.3,1.7,0.8,1.0,1.0,1.3,0.9,0.5,1.6"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "AA = 10.2" in out
    assert "delta_A = 59.3" in out

    rc = cli_main(["metrics", "--acc",
                   "81.0,79.5,78.3,75.2,75.1,74.8,72.3,71.3,70.0,68.8,67.3"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "AA = 74.0" in out
    assert "delta_A = 1.8" in out


def test_metrics_single_value(capsys):
    rc = cli_main(["metrics", "--acc", "90.0"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "AA = 90.0" in out
    assert "delta_A" not in out


def test_metrics_garbage(capsys):
    assert cli_main(["metrics", "--acc", "ninety"]) == 1
    assert "error:" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert cli_main([]) == 1
    capsys.readouterr()
    assert cli_main(["no-such-command"]) == 1
    capsys.readouterr()
    assert cli_main(["train", "--config", "x"]) == 1  # missing required flags
    err = capsys.readouterr().err
    assert "error:" in err
    assert "usage:" in err


def test_internal_errors_exit_2(tmp_path, capsys, monkeypatch):
    import pointcil.cli as cli_mod

    def boom(*a, **kw):
        raise TypeError("wires crossed")

    monkeypatch.setattr(cli_mod, "make_dataset", boom)
    rc = cli_main(["gen-data", "--out", str(tmp_path / "ds"), "--classes", "sphere"])
    assert rc == 2
    assert "Traceback" in capsys.readouterr().err


def test_train_outputs(trained_run, capsys):
    for name in ("report.csv", "manifest.txt", "checkpoint.bin", "histogram.csv"):
        assert (trained_run / name).exists(), name


def test_train_stdout_format(tmp_path, data_dir, capsys):
    cfg = _tiny_cfg()
    cfg_path = tmp_path / "ft.cfg"
    write_config(cfg, cfg_path)
    rc = cli_main(["train", "--config", str(cfg_path), "--data", str(data_dir),
                   "--out", str(tmp_path / "ft_out"), "--variant", "ft"])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("task 0: acc = ")
    assert any(l.startswith("AA = ") for l in lines)
    assert any(l.startswith("delta_A = ") for l in lines)
    # ft variant writes no router histogram
    assert not (tmp_path / "ft_out" / "histogram.csv").exists()


def test_train_bad_config(tmp_path, data_dir, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("trian.seed = 3\n")
    rc = cli_main(["train", "--config", str(bad), "--data", str(data_dir),
                   "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "unknown key" in capsys.readouterr().err


def test_eval_reproduces_manifest_accuracy(trained_run, data_dir, capsys):
    rc = cli_main(["eval", "--run", str(trained_run), "--data", str(data_dir)])
    assert rc == 0
    lines = capsys.readouterr().out.splitlines()
    recomputed = float(lines[0].split("=")[1])
    recorded = float(lines[1].split("=")[1])
    assert recomputed == recorded


def test_dump_features(trained_run, data_dir, tmp_path, capsys):
    out = tmp_path / "features.csv"
    rc = cli_main(["dump-features", "--run", str(trained_run),
                   "--data", str(data_dir), "--out", str(out)])
    assert rc == 0
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["class", "id"] + [f"f{i}" for i in range(16)]
    assert len(rows) == 1 + 4 * 2  # header + two test samples per class
    classes = {r[0] for r in rows[1:]}
    assert classes == set(CLASSES)
    vec = np.array([float(v) for v in rows[1][2:]])
    assert np.isfinite(vec).all()


def test_eval_missing_run(tmp_path, data_dir, capsys):
    rc = cli_main(["eval", "--run", str(tmp_path / "nope"), "--data", str(data_dir)])
    assert rc == 1
    assert "error:" in capsys.readouterr().err
