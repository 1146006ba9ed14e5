"""IDX parsing (including exhaustive header corruption) and synthetic data."""

import struct

import numpy as np
import pytest

from bvib.datasets import (
    Dataset,
    IdxFormatError,
    load_idx_dataset,
    parse_idx,
    synth_dataset,
    train_test_split,
)


def image_fixture() -> bytes:
    # two 2x2 images
    return struct.pack(">IIII", 0x00000803, 2, 2, 2) + bytes([10, 20, 30, 40, 50, 60, 70, 80])


def label_fixture() -> bytes:
    return struct.pack(">II", 0x00000801, 2) + bytes([3, 7])


class TestParseIdx:
    def test_image_fixture_parses(self):
        images = parse_idx(image_fixture())
        assert images.shape == (2, 4)
        assert images.dtype == np.uint8
        assert list(images[0]) == [10, 20, 30, 40]

    def test_label_fixture_parses(self):
        labels = parse_idx(label_fixture())
        assert list(labels) == [3, 7]

    def test_wrong_magic(self):
        data = struct.pack(">IIII", 0x00000802, 2, 2, 2) + bytes(8)
        with pytest.raises(IdxFormatError, match="magic"):
            parse_idx(data)

    def test_truncated_payload(self):
        with pytest.raises(IdxFormatError, match="payload"):
            parse_idx(image_fixture()[:-1])

    def test_oversized_payload(self):
        with pytest.raises(IdxFormatError, match="payload"):
            parse_idx(image_fixture() + b"\x00")

    def test_every_single_byte_header_corruption_rejected(self):
        fixture = image_fixture()
        header_len = 16
        for pos in range(header_len):
            for delta in range(1, 256):
                corrupted = bytearray(fixture)
                corrupted[pos] = (corrupted[pos] + delta) % 256
                try:
                    parse_idx(bytes(corrupted))
                except IdxFormatError:
                    continue
                pytest.fail(f"header byte {pos} corrupted by +{delta} was accepted")


class TestLoadDataset:
    def test_pair_loads_and_scales(self, tmp_path):
        img = tmp_path / "img.idx"
        lab = tmp_path / "lab.idx"
        img.write_bytes(image_fixture())
        lab.write_bytes(label_fixture())
        ds = load_idx_dataset(img, lab)
        assert ds.x.shape == (2, 4)
        assert 0.0 <= ds.x.min() and ds.x.max() <= 1.0
        assert ds.x[0, 0] == pytest.approx(10 / 255)
        assert list(ds.y) == [3, 7]

    def test_count_mismatch(self, tmp_path):
        img = tmp_path / "img.idx"
        lab = tmp_path / "lab.idx"
        img.write_bytes(image_fixture())
        lab.write_bytes(struct.pack(">II", 0x00000801, 3) + bytes([1, 2, 3]))
        with pytest.raises(IdxFormatError, match="count"):
            load_idx_dataset(img, lab)


class TestSynth:
    def test_zero_spread_collapses_to_means(self):
        ds = synth_dataset(classes=3, per_class=5, dim=8, spread=0.0, seed=1)
        for c in range(3):
            rows = ds.x[ds.y == c]
            assert np.allclose(rows, rows[0])

    def test_deterministic_per_seed(self):
        a = synth_dataset(classes=4, per_class=6, dim=10, spread=0.3, seed=9)
        b = synth_dataset(classes=4, per_class=6, dim=10, spread=0.3, seed=9)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
        c = synth_dataset(classes=4, per_class=6, dim=10, spread=0.3, seed=10)
        assert not np.array_equal(a.x, c.x)

    def test_nearest_mean_classifier_is_perfect_at_zero_spread(self):
        ds = synth_dataset(classes=5, per_class=4, dim=16, spread=0.0, seed=2)
        means = np.stack([ds.x[ds.y == c][0] for c in range(5)])
        distances = ((ds.x[:, None, :] - means[None, :, :]) ** 2).sum(-1)
        assert np.array_equal(distances.argmin(axis=1), ds.y)

    def test_class_balance(self):
        ds = synth_dataset(classes=3, per_class=7, dim=4, spread=0.1, seed=3)
        assert [int((ds.y == c).sum()) for c in range(3)] == [7, 7, 7]

    def test_validation(self):
        with pytest.raises(ValueError):
            synth_dataset(classes=1)
        with pytest.raises(ValueError):
            synth_dataset(per_class=0)
        with pytest.raises(ValueError):
            synth_dataset(spread=-0.1)


class TestSplit:
    def test_split_sizes_and_disjointness(self):
        ds = synth_dataset(classes=3, per_class=10, dim=4, spread=0.1, seed=4)
        train, test = train_test_split(ds, 20, 5)
        assert len(train) == 20 and len(test) == 5
        assert np.array_equal(np.vstack([train.x, test.x]), ds.x[:25])

    def test_oversized_split_rejected(self):
        ds = synth_dataset(classes=2, per_class=3, dim=4, spread=0.1, seed=5)
        with pytest.raises(ValueError):
            train_test_split(ds, 5, 2)
