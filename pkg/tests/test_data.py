import numpy as np
import pytest

from bplcz.data import (
    DataError,
    Sample,
    SampleSet,
    balanced_subsample,
    load_so2sat,
    load_split,
    make_synthetic,
    read_provenance,
    save_split,
    synthetic_means,
    write_so2sat,
)
from conftest import write_container


class TestLoadSo2Sat:
    def test_three_rows(self, tiny_container):
        ds = load_so2sat(tiny_container)
        assert len(ds) == 3
        for s in ds:
            assert s.sar.shape == (32, 32, 8)
            assert s.ms.shape == (32, 32, 10)
        assert list(ds.labels) == [0, 5, 16]

    def test_channel_order_preserved(self, tmp_path):
        sen1 = np.broadcast_to(np.arange(8.0), (1, 32, 32, 8)).copy()
        sen2 = np.broadcast_to(np.arange(10.0), (1, 32, 32, 10)).copy()
        label = np.eye(17)[[4]]
        ds = load_so2sat(write_container(tmp_path / "c.h5", sen1, sen2, label))
        assert np.array_equal(ds[0].sar[5, 7], np.arange(8.0))
        assert np.array_equal(ds[0].ms[0, 0], np.arange(10.0))

    def test_last_position_is_class_16(self, tmp_path):
        label = np.zeros((1, 17))
        label[0, -1] = 1
        ds = load_so2sat(write_container(tmp_path / "c.h5", np.zeros((1, 32, 32, 8)), np.zeros((1, 32, 32, 10)), label))
        assert ds[0].label == 16

    def test_all_zero_row_names_row(self, tmp_path):
        label = np.eye(17)[[0, 1, 2]]
        label[1] = 0
        path = write_container(tmp_path / "c.h5", np.zeros((3, 32, 32, 8)), np.zeros((3, 32, 32, 10)), label)
        with pytest.raises(DataError, match="row 1"):
            load_so2sat(path)

    def test_missing_array(self, tmp_path):
        path = write_container(tmp_path / "c.h5", np.zeros((1, 32, 32, 8)), None, np.eye(17)[[0]])
        with pytest.raises(DataError, match="sen2"):
            load_so2sat(path)

    def test_shape_mismatch(self, tmp_path):
        path = write_container(tmp_path / "c.h5", np.zeros((1, 32, 32, 7)), np.zeros((1, 32, 32, 10)), np.eye(17)[[0]])
        with pytest.raises(DataError, match="sen1"):
            load_so2sat(path)

    def test_non_finite(self, tmp_path):
        sen2 = np.zeros((2, 32, 32, 10))
        sen2[1, 3, 3, 3] = np.nan
        path = write_container(tmp_path / "c.h5", np.zeros((2, 32, 32, 8)), sen2, np.eye(17)[[0, 1]])
        with pytest.raises(DataError, match="sen2.*row 1"):
            load_so2sat(path)

    def test_round_trip_through_writer(self, tmp_path, synthetic_small):
        path = write_so2sat(synthetic_small, tmp_path / "s.h5")
        back = load_so2sat(path)
        assert np.array_equal(back.labels, synthetic_small.labels)
        np.testing.assert_array_equal(back.sar, synthetic_small.sar)


class TestSample:
    def test_rejects_wrong_shape(self):
        with pytest.raises(DataError):
            Sample(np.zeros((32, 32, 7)), np.zeros((32, 32, 10)), 0)

    def test_rejects_label(self):
        with pytest.raises(DataError):
            Sample(np.zeros((32, 32, 8)), np.zeros((32, 32, 10)), 17)


class TestBalancedSubsample:
    def test_forced_selection(self):
        ds = make_synthetic(17, 1, 0.5, 0)
        split = balanced_subsample(ds, 1, 0, seed=5)
        assert sorted(split.train.ids) == list(range(17))
        assert len(split.test) == 0

    def test_uniform_histogram_and_disjoint(self):
        ds = make_synthetic(17, 9, 0.1, 1)
        split = balanced_subsample(ds, 4, 40, seed=47)
        assert np.all(split.train.class_counts() == 4)
        assert len(split.test) == 40
        assert not set(split.train.ids) & set(split.test.ids)

    def test_deterministic(self):
        ds = make_synthetic(17, 6, 0.1, 1)
        a = balanced_subsample(ds, 3, 20, seed=47)
        b = balanced_subsample(ds, 3, 20, seed=47)
        assert a.train.digest() == b.train.digest()
        assert a.test.digest() == b.test.digest()
        assert a.provenance == b.provenance

    def test_seed_changes_draw(self):
        ds = make_synthetic(17, 6, 0.1, 1)
        a = balanced_subsample(ds, 3, 20, seed=47)
        b = balanced_subsample(ds, 3, 20, seed=48)
        assert a.train.digest() != b.train.digest()

    def test_insufficient_class(self):
        ds = make_synthetic(17, 3, 0.1, 1)
        keep = np.flatnonzero(ds.labels != 5)
        ds = ds.subset(np.concatenate([keep, np.flatnonzero(ds.labels == 5)[:1]]))
        with pytest.raises(DataError, match="class 5 .* has 1 samples"):
            balanced_subsample(ds, 2, 0, seed=0)

    def test_insufficient_remainder(self):
        ds = make_synthetic(17, 2, 0.1, 1)
        with pytest.raises(DataError, match="test set"):
            balanced_subsample(ds, 1, 18, seed=0)

    def test_normalization_stats_from_train_only(self):
        ds = make_synthetic(17, 5, 0.3, 2)
        split = balanced_subsample(ds, 2, 10, seed=0)
        sar_mean, sar_std, ms_mean, ms_std = split.channel_stats()
        np.testing.assert_allclose(sar_mean, split.train.sar.reshape(-1, 8).mean(0), rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(ms_std, split.train.ms.reshape(-1, 10).std(0), rtol=1e-5)

    def test_save_load_round_trip(self, tmp_path):
        ds = make_synthetic(17, 3, 0.1, 1)
        split = balanced_subsample(ds, 2, 5, seed=47)
        path = save_split(split, tmp_path / "split")
        assert path.suffix == ".npz"
        back = load_split(path)
        assert back.train.digest() == split.train.digest()
        assert back.test.digest() == split.test.digest()
        assert back.provenance == split.provenance
        text = path.with_suffix(".txt").read_text()
        assert "seed=47" in text.splitlines()
        assert read_provenance(path.with_suffix(".txt"))["per_class"] == "2"


class TestMakeSynthetic:
    def test_zero_noise_same_class_identical(self):
        ds = make_synthetic(17, 10, 0.0, 3)
        assert len(ds) == 170
        for c in range(17):
            members = np.flatnonzero(ds.labels == c)
            for i in members[1:]:
                assert np.array_equal(ds.sar[i], ds.sar[members[0]])
                assert np.array_equal(ds.ms[i], ds.ms[members[0]])

    def test_class_means_differ(self):
        means = synthetic_means(17)
        for a in range(17):
            for b in range(a + 1, 17):
                assert np.any(means[a] != means[b])
        ds = make_synthetic(17, 1, 0.0, 0)
        for a in range(17):
            for b in range(a + 1, 17):
                assert not np.array_equal(ds[a].sar, ds[b].sar)

    def test_deterministic(self):
        assert make_synthetic(5, 3, 0.7, 9).digest() == make_synthetic(5, 3, 0.7, 9).digest()

    def test_noise_scale(self):
        ds = make_synthetic(2, 50, 2.0, 0)
        resid = ds.sar - synthetic_means(2)[ds.labels][:, None, None, :8]
        assert abs(resid.std() - 2.0) < 0.02

    @pytest.mark.parametrize("args", [(1, 1, 0.0), (18, 1, 0.0), (5, 0, 0.0), (5, 1, -0.1)])
    def test_invalid(self, args):
        with pytest.raises(ValueError):
            make_synthetic(*args, seed=0)

    def test_samples_satisfy_invariants(self, synthetic_small):
        for s in synthetic_small:
            assert s.sar.shape == (32, 32, 8) and s.ms.shape == (32, 32, 10)
            assert 0 <= s.label <= 16
            assert np.isfinite(s.sar).all() and np.isfinite(s.ms).all()


def test_sampleset_slice(synthetic_small):
    part = synthetic_small[2:5]
    assert isinstance(part, SampleSet)
    assert list(part.ids) == [2, 3, 4]
