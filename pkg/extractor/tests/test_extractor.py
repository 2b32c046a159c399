"""Offline end-to-end tests: a seeded random-weight encoder from the
registry over generated fixture images, round-tripped through the
downstream loader. No weights are downloaded anywhere in here."""

import json

import numpy as np
import pytest
import torch
from PIL import Image

from lsextract import (
    DatasetError,
    RegistryError,
    build_model,
    build_transform,
    extract,
    get_spec,
    load_registry,
    open_source,
)
from lsextract.registry import strip_checkpoint_prefixes

MODEL = "resnet18-random"  # offline: seeded init, no checkpoint, no hub


def _paint(path, seed, size=(40, 40)):
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 255, size=(*size, 3), dtype=np.uint8)
    Image.fromarray(arr, "RGB").save(path)


@pytest.fixture(scope="module")
def fixture_images(tmp_path_factory):
    """4 tiny images, 2 per class, under train/<class>/ subdirectories."""
    root = tmp_path_factory.mktemp("imgs")
    seed = 100
    for cls, names in (("cats", ["b.png", "a.png"]), ("dogs", ["d.png", "c.png"])):
        d = root / "train" / cls
        d.mkdir(parents=True)
        for fname in names:
            _paint(d / fname, seed=seed)
            seed += 1
    return root


class TestImageSource:
    def test_canonical_order_is_sorted_paths(self, fixture_images):
        src = open_source(str(fixture_images), split="train")
        assert src.n_samples == 4
        # cats/a.png, cats/b.png, dogs/c.png, dogs/d.png -> 0 0 1 1
        assert src.labels == [0, 0, 1, 1]

    def test_flat_folder_has_no_labels(self, tmp_path):
        _paint(tmp_path / "x.png", 1)
        _paint(tmp_path / "y.png", 2)
        src = open_source(str(tmp_path))
        assert src.n_samples == 2
        assert src.labels is None

    def test_missing_split(self, tmp_path):
        with pytest.raises(DatasetError, match="does not exist"):
            open_source(str(tmp_path), split="val")

    def test_no_images(self, tmp_path):
        (tmp_path / "readme.txt").write_text("not an image\n")
        with pytest.raises(DatasetError, match="no images"):
            open_source(str(tmp_path))

    def test_unknown_name(self):
        with pytest.raises(DatasetError, match="neither a directory"):
            open_source("imagenet-22k")

    def test_decode_failures_reported_per_file(self, tmp_path):
        _paint(tmp_path / "good.png", 3)
        (tmp_path / "broken.png").write_bytes(b"this is not a png")
        src = open_source(str(tmp_path))
        with pytest.raises(DatasetError) as err:
            list(src)
        assert len(err.value.failures) == 1
        path, reason = err.value.failures[0]
        assert path.endswith("broken.png") and reason


class TestRegistry:
    def test_every_entry_is_complete(self):
        registry = load_registry()
        assert {"resnet18-imagenet", "resnet50-imagenet", "mocov2-resnet50"} <= set(registry)
        for spec in registry.values():
            assert spec.dim > 0 and spec.crop <= spec.resize
            assert len(spec.mean) == 3 and len(spec.std) == 3

    def test_unknown_model(self):
        with pytest.raises(RegistryError, match="unknown model"):
            get_spec("resnet-9000")

    def test_random_model_is_seeded(self):
        spec = get_spec(MODEL)
        a = build_model(spec)
        b = build_model(spec)
        pa = torch.cat([p.flatten() for p in a.parameters()])
        pb = torch.cat([p.flatten() for p in b.parameters()])
        assert torch.equal(pa, pb)
        assert not a.training
        assert all(not p.requires_grad for p in a.parameters())

    def test_checkpoint_model_requires_checkpoint(self):
        with pytest.raises(RegistryError, match="--checkpoint"):
            build_model(get_spec("mocov2-resnet50"))

    def test_transform_is_deterministic(self, fixture_images):
        spec = get_spec(MODEL)
        t = build_transform(spec)
        img = Image.open(next((fixture_images / "train" / "cats").glob("*.png")))
        x1, x2 = t(img.convert("RGB")), t(img.convert("RGB"))
        assert torch.equal(x1, x2)
        assert x1.shape == (3, spec.crop, spec.crop)


class TestCheckpointSurgery:
    def test_wrapper_prefixes_and_heads_stripped(self):
        w = torch.zeros(1)
        state = {
            "module.encoder_q.conv1.weight": w,
            "encoder_q.layer1.0.bn1.bias": w,
            "module.layer2.0.conv2.weight": w,
            "backbone.layer3.1.bn2.weight": w,
            "module.encoder_q.fc.0.weight": w,  # projection head: dropped
            "head.proj.weight": w,
        }
        out = strip_checkpoint_prefixes(state)
        assert set(out) == {
            "conv1.weight",
            "layer1.0.bn1.bias",
            "layer2.0.conv2.weight",
            "layer3.1.bn2.weight",
        }

    def test_nested_state_dict_unwrapped(self):
        inner = {"conv1.weight": torch.zeros(1)}
        assert strip_checkpoint_prefixes({"state_dict": inner, "epoch": 7}) == inner

    def test_matching_checkpoint_loads(self, tmp_path):
        from lsextract.registry import _ARCHS, _load_checkpoint

        torch.manual_seed(1)
        donor = _ARCHS["resnet18"]()
        wrapped = {f"module.encoder_q.{k}": v for k, v in donor.state_dict().items()}
        path = tmp_path / "ckpt.pth"
        torch.save({"state_dict": wrapped, "epoch": 3}, path)

        target = _ARCHS["resnet18"]()
        _load_checkpoint(target, str(path))
        assert torch.equal(target.conv1.weight, donor.conv1.weight)

    def test_mismatched_checkpoint_rejected(self, tmp_path):
        path = tmp_path / "bad.pth"
        torch.save({"conv1.weight": torch.zeros(3, 3)}, path)
        from lsextract.registry import _ARCHS, _load_checkpoint

        with pytest.raises(RegistryError, match="does not match"):
            _load_checkpoint(_ARCHS["resnet18"](), str(path))


@pytest.fixture(scope="module")
def extracted(fixture_images, tmp_path_factory):
    out = tmp_path_factory.mktemp("feats")
    return extract(str(fixture_images), MODEL, out, split="train", batch_size=3)


class TestExtraction:
    def test_manifest_shape_contract(self, extracted):
        payload = json.loads(extracted.read_text())
        spec = get_spec(MODEL)
        assert payload["n_samples"] == 4
        assert payload["dim"] == spec.dim
        assert payload["dtype"] == "f32"
        assert payload["pre_normalized"] is False
        data = extracted.parent / payload["data_path"]
        assert data.stat().st_size == 4 * spec.dim * 4

    def test_reextraction_identical_bytes(self, fixture_images, extracted, tmp_path):
        again = extract(
            str(fixture_images), MODEL, tmp_path, split="train", batch_size=3
        )
        a = extracted.parent
        b = again.parent
        stem = extracted.stem
        assert (a / f"{stem}.json").read_bytes() == (b / f"{stem}.json").read_bytes()
        assert (a / f"{stem}.f32").read_bytes() == (b / f"{stem}.f32").read_bytes()
        assert (a / f"{stem}_labels.txt").read_bytes() == (b / f"{stem}_labels.txt").read_bytes()

    def test_round_trip_through_downstream_loader(self, extracted):
        from labelsearch import load_labels, load_space

        space = load_space(extracted)
        spec = get_spec(MODEL)
        assert space.n_samples == 4
        assert space.dim == spec.dim
        assert np.all(np.isfinite(space.matrix))
        assert space.manifest.labels_path is not None
        labels = load_labels(extracted.parent / space.manifest.labels_path)
        # sidecar aligns with canonical order: cats, cats, dogs, dogs
        assert labels.labels.tolist() == [0, 0, 1, 1]

    def test_batch_size_does_not_change_features(self, fixture_images, extracted, tmp_path):
        one_by_one = extract(
            str(fixture_images), MODEL, tmp_path, split="train", batch_size=1
        )
        a = np.frombuffer((extracted.parent / f"{extracted.stem}.f32").read_bytes(), "<f4")
        b = np.frombuffer((one_by_one.parent / f"{one_by_one.stem}.f32").read_bytes(), "<f4")
        np.testing.assert_allclose(
            a.reshape(4, -1), b.reshape(4, -1), rtol=1e-4, atol=1e-5
        )

    def test_flat_folder_writes_no_labels(self, tmp_path):
        for i in range(3):
            _paint(tmp_path / f"img{i}.png", seed=50 + i)
        manifest = extract(str(tmp_path), MODEL, tmp_path / "out", batch_size=2)
        payload = json.loads(manifest.read_text())
        assert "labels_path" not in payload
        assert payload["n_samples"] == 3

    def test_decode_failure_aborts_without_artifacts(self, tmp_path):
        _paint(tmp_path / "ok.png", 9)
        (tmp_path / "junk.png").write_bytes(b"\x89PNG but not really")
        out = tmp_path / "out"
        with pytest.raises(DatasetError) as err:
            extract(str(tmp_path), MODEL, out, batch_size=2)
        assert err.value.failures
        assert not list(out.glob("*")) if out.exists() else True

    def test_bad_batch_size(self, fixture_images, tmp_path):
        with pytest.raises(DatasetError, match="batch_size"):
            extract(str(fixture_images), MODEL, tmp_path, split="train", batch_size=0)
