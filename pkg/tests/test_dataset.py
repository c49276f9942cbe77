"""Dataset discovery, transforms, stratified split, batching and export."""

import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cryocurate import dataset
from cryocurate.dataset import (
    DatasetManifest,
    Record,
    SplitConfig,
    TransformSpec,
    batches,
    discover,
    export,
    gaussian_kernel,
    get_item,
    load_export,
    split,
    transform_gaussian_blur,
    transform_normalize_minmax,
    transform_pad_to,
    transform_rescale,
    transform_standardize,
)
from cryocurate.errors import ClassTooSmall, EmptyDataset, ShapeMismatch, UnknownClass

from conftest import make_mrc_bytes


def make_dataset_dir(root: Path, rib: int = 4, tub: int = 6) -> Path:
    """rib_*/tub_* MRC files; file k (in sorted order) holds constant value k."""
    root.mkdir(parents=True, exist_ok=True)
    names = [f"rib_{k:03d}.mrc" for k in range(rib)] + \
            [f"tub_{k:03d}.mrc" for k in range(tub)]
    for value, name in enumerate(sorted(names)):
        payload = make_mrc_bytes(np.full((4, 4), float(value), dtype=np.float32))
        (root / name).write_bytes(payload)
    return root


class TestDiscover:
    def test_labels_and_ordering(self, tmp_path):
        manifest = discover(make_dataset_dir(tmp_path / "d"))
        assert manifest.classes == ("rib", "tub")
        assert len(manifest) == 10
        assert [r.class_label for r in manifest.records[:4]] == ["rib"] * 4
        assert manifest.records[0].suffix == "000"

    def test_split_at_first_underscore(self, tmp_path):
        d = tmp_path / "d"
        d.mkdir()
        (d / "tub_extra_001.mrc").write_bytes(
            make_mrc_bytes(np.zeros((2, 2), dtype=np.float32)))
        manifest = discover(d)
        assert manifest.records[0].class_label == "tub"
        assert manifest.records[0].suffix == "extra_001"

    def test_no_underscore_skipped_with_warning(self, tmp_path, caplog):
        d = make_dataset_dir(tmp_path / "d", rib=2, tub=0)
        (d / "orphan.mrc").write_bytes(
            make_mrc_bytes(np.zeros((2, 2), dtype=np.float32)))
        with caplog.at_level("WARNING"):
            manifest = discover(d)
        assert len(manifest) == 2
        assert any("orphan.mrc" in rec.message for rec in caplog.records)

    def test_classes_filter(self, tmp_path):
        manifest = discover(make_dataset_dir(tmp_path / "d"), classes=["tub"])
        assert manifest.classes == ("tub",)
        assert len(manifest) == 6

    def test_unknown_class(self, tmp_path):
        with pytest.raises(UnknownClass):
            discover(make_dataset_dir(tmp_path / "d"), classes=["tub", "ghost"])

    def test_dataset_size_cap(self, tmp_path):
        manifest = discover(make_dataset_dir(tmp_path / "d"), dataset_size=3)
        assert len(manifest) == 3
        assert manifest.classes == ("rib",)  # first 3 sorted files are all rib

    def test_empty_directory(self, tmp_path):
        d = tmp_path / "empty"
        d.mkdir()
        with pytest.raises(EmptyDataset):
            discover(d)

    def test_discover_opens_no_files(self, tmp_path, monkeypatch):
        reads = []
        monkeypatch.setattr(dataset, "_read_file",
                            lambda path: reads.append(path) or b"")
        discover(make_dataset_dir(tmp_path / "d"))
        assert reads == []


class TestGetItem:
    def test_decodes_value_and_label(self, tmp_path):
        manifest = discover(make_dataset_dir(tmp_path / "d"))
        image, label = get_item(manifest, 5)
        assert label == manifest.records[5].class_label
        np.testing.assert_array_equal(
            image.data, np.full((1, 4, 4), 5.0, dtype=np.float32))

    def test_one_read_per_item(self, tmp_path, monkeypatch):
        manifest = discover(make_dataset_dir(tmp_path / "d"))
        reads = []
        original = dataset._read_file.__wrapped__ if hasattr(
            dataset._read_file, "__wrapped__") else dataset._read_file

        def counting(path):
            reads.append(path)
            return original(path)

        monkeypatch.setattr(dataset, "_read_file", counting)
        get_item(manifest, 0)
        get_item(manifest, 9)
        assert reads == [manifest.records[0].path, manifest.records[9].path]

    def test_transforms_applied(self, tmp_path):
        manifest = discover(make_dataset_dir(tmp_path / "d"),
                            transforms=TransformSpec.parse("minmax"))
        image, _ = get_item(manifest, 3)
        # constant input file: minmax maps it to all zeros
        np.testing.assert_array_equal(image.data, np.zeros((1, 4, 4), np.float32))


class TestTransforms:
    def test_minmax_oracle(self):
        out = transform_normalize_minmax(np.array([1.0, 3.0, 5.0]))
        np.testing.assert_allclose(out, [0.0, 0.5, 1.0], atol=1e-7)
        assert out.dtype == np.float32

    def test_minmax_constant(self):
        np.testing.assert_array_equal(
            transform_normalize_minmax(np.full((3, 3), 7.0)), np.zeros((3, 3)))

    def test_standardize_oracle(self):
        # population std of [0, 2, 4] is sqrt(8/3)
        std = math.sqrt(8.0 / 3.0)
        out = transform_standardize(np.array([0.0, 2.0, 4.0]))
        np.testing.assert_allclose(out, [-2.0 / std, 0.0, 2.0 / std], atol=1e-6)

    def test_standardize_constant(self):
        np.testing.assert_array_equal(
            transform_standardize(np.full(4, 9.0)), np.zeros(4))

    def test_standardize_near_idempotent(self):
        arr = np.arange(12, dtype=np.float64).reshape(3, 4) ** 2
        once = transform_standardize(arr)
        twice = transform_standardize(once)
        np.testing.assert_allclose(twice, once, atol=1e-5)

    def test_gaussian_kernel_normalized_symmetric(self):
        k = gaussian_kernel(1.5, 7)
        assert k.sum() == pytest.approx(1.0)
        np.testing.assert_allclose(k, k[::-1])

    @pytest.mark.parametrize("sigma,kernel", [(0.0, 5), (-1.0, 5), (1.0, 4), (1.0, 1)])
    def test_kernel_validation(self, sigma, kernel):
        with pytest.raises(ValueError):
            gaussian_kernel(sigma, kernel)

    def test_blur_impulse_matches_outer_product(self):
        impulse = np.zeros((9, 9))
        impulse[4, 4] = 1.0
        out = transform_gaussian_blur(impulse, sigma=1.0, kernel=5)
        k = gaussian_kernel(1.0, 5)
        expected = np.zeros((9, 9))
        expected[2:7, 2:7] = np.outer(k, k)
        np.testing.assert_allclose(out, expected, atol=1e-7)

    def test_blur_preserves_constant(self):
        out = transform_gaussian_blur(np.full((6, 6), 3.5), sigma=2.0)
        np.testing.assert_allclose(out, np.full((6, 6), 3.5), atol=1e-6)

    def test_blur_skips_singleton_axis(self):
        arr = np.random.default_rng(0).normal(size=(1, 8, 8))
        out3 = transform_gaussian_blur(arr, sigma=1.0)
        out2 = transform_gaussian_blur(arr[0], sigma=1.0)
        np.testing.assert_allclose(out3[0], out2, atol=1e-6)

    def test_rescale_checkerboard(self):
        board = np.indices((4, 4)).sum(axis=0) % 2
        out = transform_rescale(board.astype(float), (2, 2))
        np.testing.assert_allclose(out, np.full((2, 2), 0.5), atol=1e-7)

    def test_rescale_identity(self):
        arr = np.arange(16, dtype=np.float64).reshape(4, 4)
        np.testing.assert_allclose(transform_rescale(arr, (4, 4)), arr)

    def test_rescale_factor(self):
        out = transform_rescale(np.zeros((4, 6)), 0.5)
        assert out.shape == (2, 3)

    def test_rescale_rank_mismatch(self):
        with pytest.raises(ValueError):
            transform_rescale(np.zeros((4, 4)), (2, 2, 2))

    def test_pad_to_centers(self):
        out = transform_pad_to(np.ones((2, 2)), (4, 4))
        assert out.shape == (4, 4)
        np.testing.assert_array_equal(out[1:3, 1:3], np.ones((2, 2)))
        assert out.sum() == pytest.approx(4.0)

    def test_pad_to_smaller_raises(self):
        with pytest.raises(ValueError):
            transform_pad_to(np.ones((4, 4)), (2, 4))

    def test_spec_parse_describe_round_trip(self):
        text = "standardize,blur:1.5:5,rescale:32x32,pad:40x40,minmax"
        spec = TransformSpec.parse(text)
        assert spec.describe() == [
            "standardize", "blur:1.5:5", "rescale:32x32", "pad:40x40", "minmax"]
        assert TransformSpec.parse(",".join(spec.describe())) == spec

    def test_spec_unknown_step(self):
        with pytest.raises(ValueError):
            TransformSpec.parse("sharpen:2")

    def test_pipeline_order_matters(self):
        arr = np.arange(64, dtype=np.float64).reshape(8, 8) ** 2
        a = TransformSpec.parse("standardize,blur:1.0").apply(arr)
        b = TransformSpec.parse("blur:1.0,standardize").apply(arr)
        assert not np.allclose(a, b)


def make_manifest(class_sizes: dict) -> DatasetManifest:
    records = []
    for label in sorted(class_sizes):
        for k in range(class_sizes[label]):
            records.append(Record(path=Path(f"{label}_{k}.mrc"),
                                  class_label=label, suffix=str(k)))
    return DatasetManifest(records=tuple(records),
                           classes=tuple(sorted(class_sizes)), datatype="mrc")


class TestSplit:
    def test_ceiling_rule(self):
        manifest = make_manifest({"a": 10, "b": 5})
        train, val = split(manifest, SplitConfig(train_fraction=0.8, seed=1))
        per_class = lambda m, label: sum(r.class_label == label for r in m.records)
        assert per_class(train, "a") == 8 and per_class(val, "a") == 2
        assert per_class(train, "b") == 4 and per_class(val, "b") == 1

    def test_deterministic_for_seed(self):
        manifest = make_manifest({"a": 9, "b": 7})
        config = SplitConfig(train_fraction=0.7, seed=42)
        first = split(manifest, config)
        second = split(manifest, config)
        assert first[0].records == second[0].records
        assert first[1].records == second[1].records

    def test_class_too_small(self):
        with pytest.raises(ClassTooSmall):
            split(make_manifest({"a": 5, "b": 1}),
                  SplitConfig(train_fraction=0.5, seed=0))

    def test_unstratified_allows_tiny_class(self):
        manifest = make_manifest({"a": 5, "b": 1})
        train, val = split(manifest, SplitConfig(train_fraction=0.5, seed=0,
                                                 stratified=False))
        assert len(train.records) == 3 and len(val.records) == 3

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.2, 1.5])
    def test_fraction_validation(self, fraction):
        with pytest.raises(ValueError):
            SplitConfig(train_fraction=fraction)

    @settings(max_examples=100, deadline=None)
    @given(
        sizes=st.dictionaries(st.sampled_from(["a", "b", "c"]),
                              st.integers(2, 12), min_size=1),
        fraction=st.floats(0.05, 0.95),
        seed=st.integers(0, 2**32),
    )
    def test_partition_property(self, sizes, fraction, seed):
        manifest = make_manifest(sizes)
        config = SplitConfig(train_fraction=fraction, seed=seed)
        train, val = split(manifest, config)
        # train and val partition the records
        assert set(train.records) | set(val.records) == set(manifest.records)
        assert set(train.records) & set(val.records) == set()
        assert len(train.records) + len(val.records) == len(manifest.records)
        # per-class ceiling rule
        for label, n in sizes.items():
            got = sum(r.class_label == label for r in train.records)
            assert got == math.ceil(fraction * n)
        # determinism
        again_train, again_val = split(manifest, config)
        assert again_train.records == train.records
        assert again_val.records == val.records


class TestBatches:
    def test_sizes_4_4_2(self, tmp_path):
        manifest = discover(make_dataset_dir(tmp_path / "d"))
        got = list(batches(manifest, 4))
        assert [len(b.labels) for b in got] == [4, 4, 2]
        assert got[0].data.dtype == np.float32
        assert got[0].data.shape == (4, 1, 4, 4)

    def test_drop_last(self, tmp_path):
        manifest = discover(make_dataset_dir(tmp_path / "d"))
        got = list(batches(manifest, 4, drop_last=True))
        assert [len(b.labels) for b in got] == [4, 4]

    def test_labels_index_classes(self, tmp_path):
        manifest = discover(make_dataset_dir(tmp_path / "d"))
        batch = next(batches(manifest, 10))
        decoded = [batch.classes[i] for i in batch.labels]
        assert decoded == [r.class_label for r in manifest.records]

    def test_shape_mismatch_names_both_files(self, tmp_path):
        d = make_dataset_dir(tmp_path / "d", rib=2, tub=0)
        (d / "tub_big.mrc").write_bytes(
            make_mrc_bytes(np.zeros((8, 8), dtype=np.float32)))
        manifest = discover(d)
        with pytest.raises(ShapeMismatch) as err:
            list(batches(manifest, 3))
        assert "rib_000.mrc" in str(err.value) and "tub_big.mrc" in str(err.value)

    def test_bad_batch_size(self, tmp_path):
        manifest = discover(make_dataset_dir(tmp_path / "d"))
        with pytest.raises(ValueError):
            next(batches(manifest, 0))


class TestExport:
    def test_round_trip(self, tmp_path):
        manifest = discover(make_dataset_dir(tmp_path / "d"))
        out = tmp_path / "export"
        index = export(manifest, out, batch_size=4)
        assert [e["file"] for e in index["batches"]] == [
            "batch_0.npy", "batch_1.npy", "batch_2.npy"]
        arrays, labels, classes = load_export(out)
        assert classes == ["rib", "tub"]
        assert labels == [r.class_label for r in manifest.records]
        stacked = np.concatenate(arrays)
        assert stacked.shape == (10, 1, 4, 4)
        np.testing.assert_array_equal(
            stacked[:, 0, 0, 0], np.arange(10, dtype=np.float32))

    def test_export_deterministic(self, tmp_path):
        manifest = discover(make_dataset_dir(tmp_path / "d"))
        a, b = tmp_path / "a", tmp_path / "b"
        export(manifest, a, batch_size=4)
        export(manifest, b, batch_size=4)
        for name in ("batch_0.npy", "batch_1.npy", "batch_2.npy",
                     "classes.txt", "export_index.json"):
            assert (a / name).read_bytes() == (b / name).read_bytes()
