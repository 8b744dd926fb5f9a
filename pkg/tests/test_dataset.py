import logging

import numpy as np
import pytest
from PIL import Image
from scipy import stats

from whtpack.dataset import (
    DatasetConfig,
    EpochPlan,
    epoch_batches,
    generate_synthetic,
    load_dataset,
    load_images,
    plan_epochs,
    read_image,
    stack,
)
from whtpack.errors import ConfigError, SizeError


@pytest.fixture(scope="module")
def tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("tree")
    generate_synthetic(root, classes=4, per_class=50, size=16, seed=3)
    return root


def test_split_counts(tree):
    train, val = load_dataset(DatasetConfig(str(tree), working_size=(16, 16), val_fraction=0.2, seed=1))
    assert len(train) == 160 and len(val) == 40
    per_class = np.bincount([it.label for it in val])
    assert per_class.tolist() == [10, 10, 10, 10]


def test_split_deterministic_and_disjoint(tree):
    cfg = DatasetConfig(str(tree), working_size=(16, 16), seed=5)
    a_train, a_val = load_dataset(cfg)
    b_train, b_val = load_dataset(cfg)
    assert [it.source_id for it in a_val] == [it.source_id for it in b_val]
    assert {it.source_id for it in a_train}.isdisjoint({it.source_id for it in a_val})
    other = load_dataset(DatasetConfig(str(tree), working_size=(16, 16), seed=6))[1]
    assert [it.source_id for it in other] != [it.source_id for it in a_val]


def test_images_valid(tree):
    items = load_images(DatasetConfig(str(tree), working_size=(8, 16)))
    x, y = stack(items)
    assert x.shape == (200, 8, 16, 3)
    assert np.all(np.isfinite(x)) and x.min() >= 0.0 and x.max() <= 1.0
    assert set(y.tolist()) == {0, 1, 2, 3}


def test_resize_non_square(tmp_path, rng):
    d = tmp_path / "a"
    d.mkdir()
    arr = (rng.random((1080, 1920, 3)) * 255).astype(np.uint8)
    Image.fromarray(arr).save(d / "big.png")
    img = read_image(d / "big.png", (256, 256))
    assert img.shape == (256, 256, 3)
    assert 0.0 <= img.min() and img.max() <= 1.0


def test_ppm_decoding(tmp_path):
    d = tmp_path / "c0"
    d.mkdir()
    pixels = bytes([255, 0, 0, 0, 255, 0, 0, 0, 255, 255, 255, 255])
    (d / "x.ppm").write_bytes(b"P6\n2 2\n255\n" + pixels)
    items = load_images(DatasetConfig(str(tmp_path), working_size=(2, 2)))
    assert len(items) == 1
    np.testing.assert_array_equal(items[0].image[0, 0], [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(items[0].image[1, 1], [1.0, 1.0, 1.0])


def test_missing_class_directory(tree):
    with pytest.raises(ConfigError):
        load_images(DatasetConfig(str(tree), classes=["small_rocks", "nope"], working_size=(16, 16)))


def test_undecodable_skipped(tmp_path, caplog):
    for name in ("a", "b"):
        (tmp_path / name).mkdir()
        Image.new("RGB", (4, 4), (10, 20, 30)).save(tmp_path / name / "ok.png")
    (tmp_path / "a" / "broken.png").write_bytes(b"not an image")
    with caplog.at_level(logging.WARNING):
        items = load_images(DatasetConfig(str(tmp_path), working_size=(4, 4)))
    assert len(items) == 2
    assert "broken.png" in caplog.text


def test_class_with_only_bad_files(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "a" / "bad.ppm").write_bytes(b"garbage")
    with pytest.raises(ConfigError):
        load_images(DatasetConfig(str(tmp_path), working_size=(4, 4)))


@pytest.mark.parametrize("kwargs", [
    dict(working_size=(100, 64)), dict(val_fraction=0.0), dict(val_fraction=1.0), dict(classes=[]),
])
def test_config_validation(kwargs):
    with pytest.raises(ConfigError):
        DatasetConfig("x", **kwargs)


def test_generate_counts(tmp_path):
    paths = generate_synthetic(tmp_path, classes=4, per_class=50, size=256, seed=7)
    assert len(paths) == 200
    assert len([p for p in tmp_path.iterdir() if p.is_dir()]) == 4
    with Image.open(paths[0]) as im:
        assert im.size == (256, 256) and im.mode == "RGB"


def test_generate_byte_identical(tmp_path):
    a = generate_synthetic(tmp_path / "a", classes=3, per_class=4, size=32, seed=11)
    b = generate_synthetic(tmp_path / "b", classes=3, per_class=4, size=32, seed=11)
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]
    c = generate_synthetic(tmp_path / "c", classes=3, per_class=4, size=32, seed=12)
    assert [p.read_bytes() for p in a] != [p.read_bytes() for p in c]


@pytest.mark.parametrize("kwargs", [dict(classes=1), dict(classes=9), dict(per_class=3), dict(size=48),
                                    dict(variant="easy", classes=3), dict(variant="odd")])
def test_generate_validation(tmp_path, kwargs):
    with pytest.raises(ConfigError):
        generate_synthetic(tmp_path, **kwargs)


def test_easy_variant_threshold_separable(tmp_path):
    generate_synthetic(tmp_path, classes=2, per_class=40, size=64, seed=0, variant="easy")
    x, y = stack(load_images(DatasetConfig(str(tmp_path), working_size=(64, 64))))
    means = x.mean(axis=(1, 2, 3))
    # classes are "bright" (label 0, sorted first) and "dark" (label 1)
    threshold = 0.5 * (means[y == 0].min() + means[y == 1].max())
    pred = (means < threshold).astype(int)
    assert np.mean(pred == y) == 1.0


def test_epoch_batches_counts():
    b = epoch_batches(50, EpochPlan(100, 8), 0)
    assert len(b) == 13 and [len(x) for x in b] == [8] * 12 + [4]
    b = epoch_batches(1000, EpochPlan(500, 32), 0)
    assert len(b) == 16 and [len(x) for x in b] == [32] * 15 + [20]
    assert EpochPlan(500, 32).batches_per_epoch == 16


def test_epoch_wraparound_covers_small_sets():
    b = np.concatenate(epoch_batches(30, EpochPlan(100, 8), 0))
    counts = np.bincount(b, minlength=30)
    # three full passes plus a partial fourth
    assert counts.min() >= 3 and counts.max() <= 4 and counts.sum() == 100


def test_epoch_plan_deterministic():
    plan = EpochPlan(100, 8, epochs=3, shuffle_seed=4)
    a = [np.concatenate(e) for e in plan_epochs(40, plan)]
    b = [np.concatenate(e) for e in plan_epochs(40, plan)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[0], a[1])


def test_epoch_sampling_uniform():
    plan = EpochPlan(100, 10, epochs=400, shuffle_seed=0)
    counts = np.zeros(73)
    for batches in plan_epochs(73, plan):
        counts += np.bincount(np.concatenate(batches), minlength=73)
    _, p = stats.chisquare(counts)
    assert p > 1e-3


def test_epoch_errors():
    with pytest.raises(SizeError):
        epoch_batches(0, EpochPlan(10, 2), 0)
    with pytest.raises(ConfigError):
        EpochPlan(4, 8)
    with pytest.raises(ConfigError):
        EpochPlan(10, 2, epochs=0)
