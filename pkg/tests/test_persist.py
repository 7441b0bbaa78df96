import numpy as np
import pytest

from simchan.baselines import MlpModel, elm_train, mlp_train
from simchan.chanscene import LabeledDataset, generate_dataset, indoor_room
from simchan.persist import (
    VERSION,
    FormatError,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
)
from simchan.simnet import SimilarityModel, predict_batch
from simchan.train import TrainConfig


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def mapping_ds():
    ds = generate_dataset(indoor_room(n_subcarriers=4), 12, "channel_mapping", 0.01, subset_size=3)
    ds.split[6:] = 1
    return ds


@pytest.fixture
def pos_ds():
    rng = np.random.default_rng(0)
    return LabeledDataset(crandn(rng, 30, 5), rng.uniform(0, 10, (30, 3)), "positioning", 5, 1)


class TestDataset:
    def test_round_trip(self, tmp_path, mapping_ds):
        p = tmp_path / "d.bin"
        save_dataset(mapping_ds, p)
        back = load_dataset(p)
        assert back.equals(mapping_ds)
        assert back.antenna_subset == mapping_ds.antenna_subset
        assert back.split.tolist() == [0] * 6 + [1] * 6

    def test_round_trip_no_subset(self, tmp_path, pos_ds):
        p = tmp_path / "d.bin"
        save_dataset(pos_ds, p)
        back = load_dataset(p)
        assert back.equals(pos_ds) and back.antenna_subset is None

    def test_empty(self, tmp_path):
        ds = LabeledDataset(np.zeros((0, 4), complex), np.zeros((0, 3)), "positioning", 4, 1)
        save_dataset(ds, tmp_path / "e.bin")
        assert len(load_dataset(tmp_path / "e.bin")) == 0

    def test_truncated(self, tmp_path, mapping_ds):
        p = tmp_path / "d.bin"
        save_dataset(mapping_ds, p)
        data = p.read_bytes()
        p.write_bytes(data[:-5])
        with pytest.raises(FormatError, match=r"truncated dataset: expected \d+ bytes, file has \d+"):
            load_dataset(p)

    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"NOT-A-FILE" + bytes(40))
        with pytest.raises(FormatError, match="not a SIMCHAN-DS file"):
            load_dataset(p)

    def test_version_bump(self, tmp_path, pos_ds):
        p = tmp_path / "d.bin"
        save_dataset(pos_ds, p)
        data = bytearray(p.read_bytes())
        data[10] = VERSION + 1
        p.write_bytes(bytes(data))
        with pytest.raises(FormatError, match=f"version {VERSION + 1}"):
            load_dataset(p)

    def test_model_file_is_not_dataset(self, tmp_path):
        p = tmp_path / "m.bin"
        save_model(SimilarityModel(np.ones((2, 3)), np.ones((1, 3)), 1), p)
        with pytest.raises(FormatError, match="not a SIMCHAN-DS"):
            load_dataset(p)


class TestModel:
    def test_simnet_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        m = SimilarityModel(crandn(rng, 6, 15), rng.standard_normal((4, 15)), 4, self_exclusion=True)
        save_model(m, tmp_path / "s.bin")
        back = load_model(tmp_path / "s.bin", "simnet")
        assert back.k == 4 and back.self_exclusion
        assert back.get_params().tobytes() == m.get_params().tobytes()
        X = crandn(rng, 10, 6)
        for a, b in zip(predict_batch(m, X), predict_batch(back, X)):
            assert a.tobytes() == b.tobytes()

    def test_mlp_round_trip(self, tmp_path, pos_ds):
        m, _ = mlp_train(pos_ds, TrainConfig(epochs=2, batch_size=10, loss_kind="positioning"), hidden=9)
        save_model(m, tmp_path / "m.bin")
        back = load_model(tmp_path / "m.bin")
        assert isinstance(back, MlpModel)
        assert back.predict(pos_ds.inputs[:10]).tobytes() == m.predict(pos_ds.inputs[:10]).tobytes()
        assert back.target_scale == m.target_scale

    def test_elm_round_trip(self, tmp_path, pos_ds):
        m = elm_train(pos_ds, hidden=17)
        save_model(m, tmp_path / "e.bin")
        back = load_model(tmp_path / "e.bin", "elm")
        assert back.ridge == m.ridge
        assert back.predict(pos_ds.inputs[:10]).tobytes() == m.predict(pos_ds.inputs[:10]).tobytes()

    def test_kind_mismatch(self, tmp_path, pos_ds):
        save_model(elm_train(pos_ds, hidden=5), tmp_path / "e.bin")
        with pytest.raises(FormatError, match="file holds 'elm', expected 'simnet'"):
            load_model(tmp_path / "e.bin", "simnet")

    def test_truncated_model(self, tmp_path):
        p = tmp_path / "s.bin"
        save_model(SimilarityModel(np.ones((2, 3)), np.ones((1, 3)), 1), p)
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(FormatError, match="truncated"):
            load_model(p)

    def test_not_serialisable(self, tmp_path):
        with pytest.raises(TypeError):
            save_model(object(), tmp_path / "x.bin")
