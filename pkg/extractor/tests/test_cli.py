"""CLI surface: exit codes, stderr shape, and the printed manifest path."""

import json

import numpy as np
import pytest
from PIL import Image

from lsextract.cli import main


def _paint(path, seed):
    rng = np.random.default_rng(seed)
    Image.fromarray(rng.integers(0, 255, (32, 32, 3), dtype=np.uint8), "RGB").save(path)


@pytest.fixture()
def tiny_dataset(tmp_path):
    for cls in ("a", "b"):
        d = tmp_path / "data" / cls
        d.mkdir(parents=True)
        _paint(d / "img.png", seed=ord(cls))
    return tmp_path / "data"


def test_success_prints_manifest_path(tiny_dataset, tmp_path, capsys):
    out = tmp_path / "feats"
    code = main([
        "--dataset", str(tiny_dataset),
        "--model", "resnet18-random",
        "--out", str(out),
        "--batch-size", "2",
    ])
    assert code == 0
    printed = capsys.readouterr().out.strip()
    assert printed.endswith(".json")
    payload = json.loads((out / "resnet18-random.json").read_text())
    assert payload["n_samples"] == 2
    assert (out / payload["labels_path"]).read_text() == "0\n1\n"


def test_missing_required_flags_is_usage_error(capsys):
    code = main(["--model", "resnet18-random"])
    assert code == 1
    assert "required" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    code = main(["--frobnicate"])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_unknown_model_exits_2(tiny_dataset, tmp_path, capsys):
    code = main([
        "--dataset", str(tiny_dataset), "--model", "vgg-nope", "--out", str(tmp_path / "o"),
    ])
    assert code == 2
    assert "unknown model" in capsys.readouterr().err


def test_decode_failures_reported_per_file(tmp_path, capsys):
    data = tmp_path / "flat"
    data.mkdir()
    _paint(data / "fine.png", 1)
    (data / "bad1.png").write_bytes(b"nope")
    (data / "bad2.png").write_bytes(b"also nope")
    code = main([
        "--dataset", str(data), "--model", "resnet18-random", "--out", str(tmp_path / "o"),
    ])
    assert code == 2
    err = capsys.readouterr().err
    assert err.count("failed: ") == 2
    assert "bad1.png" in err and "bad2.png" in err


def test_list_models(capsys):
    assert main(["--list-models"]) == 0
    out = capsys.readouterr().out
    for model_id in ("resnet18-imagenet", "resnet50-imagenet", "mocov2-resnet50"):
        assert model_id in out


def test_custom_name(tiny_dataset, tmp_path):
    out = tmp_path / "feats"
    code = main([
        "--dataset", str(tiny_dataset),
        "--model", "resnet18-random",
        "--out", str(out),
        "--name", "phi1",
    ])
    assert code == 0
    assert (out / "phi1.json").exists() and (out / "phi1.f32").exists()
