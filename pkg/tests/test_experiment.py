import numpy as np
import pytest

from simchan.cli import main
from simchan.experiment import (
    REPORT_HEADER,
    ExperimentConfig,
    MetricsReport,
    emit_report,
    run_experiment,
)
from simchan.persist import load_dataset, load_model


def small_mapping(**over):
    raw = {
        "seed": 5,
        "L_list": [20, 40],
        "k_list": [2],
        "scene": {"n_subcarriers": 4},
        "train": {"epochs": 2, "batch_size": 16},
        "eval": {"test_size": 10},
    }
    raw.update(over)
    return ExperimentConfig.default("channel_mapping", **raw)


def small_positioning(**over):
    raw = {
        "L_list": [40],
        "k_list": [2, 4],
        "scene": {"n_subcarriers": 8},
        "train": {"epochs": 2, "batch_size": 16},
        "eval": {"test_size": 15},
        "baselines": {"mlp_epochs": 3, "mlp_hidden": 8, "elm_hidden": 30},
    }
    raw.update(over)
    return ExperimentConfig.default("positioning", **raw)


class TestConfig:
    def test_defaults(self):
        cfg = ExperimentConfig.default("channel_mapping")
        assert cfg.L_list == [250, 1000, 4000] and cfg.k_list == [5]
        assert cfg.train.shuffle_seed == cfg.seed

    def test_nested_override_keeps_siblings(self):
        cfg = small_mapping()
        assert cfg.scene["n_subcarriers"] == 4
        assert cfg.scene["preset"] == "indoor_room"
        assert cfg.train.loss_kind == "spectral_efficiency"

    def test_bad_task(self):
        with pytest.raises(ValueError, match="task"):
            ExperimentConfig.from_dict({"task": "denoising"})

    def test_bad_sizes(self):
        with pytest.raises(ValueError):
            small_mapping(L_list=[])
        with pytest.raises(ValueError):
            small_mapping(L_list=[0])


class TestRunExperiment:
    def test_zero_epochs_init_equals_fine_tuned(self):
        rep = run_experiment(small_mapping(train={"epochs": 0}))
        for L in (20, 40):
            assert rep.value(L, 2, "init") == rep.value(L, 2, "fine_tuned")

    def test_mapping_rows_and_bound(self):
        rep = run_experiment(small_mapping())
        assert not rep.partial
        # 2 L values x 1 k x (init, fine_tuned, upper_bound)
        assert len(rep.rows) == 6
        for L in (20, 40):
            assert rep.value(L, 2, "upper_bound") >= rep.value(L, 2, "fine_tuned")

    def test_positioning_rows(self):
        rep = run_experiment(small_positioning())
        # 1 L x 2 k x 4 stages x 2 metrics
        assert len(rep.rows) == 16
        for k in (2, 4):
            assert rep.value(40, k, "mlp", "mean_error_m") == rep.value(40, 2, "mlp", "mean_error_m")

    def test_failed_cell_is_recorded(self, tmp_path):
        rep = run_experiment(small_mapping(L_list=[3], k_list=[3]))
        assert rep.partial
        text = (tmp_path / "r.csv")
        emit_report(rep, text)
        assert ",failed,nan," in text.read_text()


class TestEmitReport:
    def test_deterministic_bytes(self, tmp_path):
        a = emit_report(run_experiment(small_mapping()), tmp_path / "a.csv")
        b = emit_report(run_experiment(small_mapping()), tmp_path / "b.csv")
        assert open(a, "rb").read() == open(b, "rb").read()

    def test_reemission_identical(self, tmp_path):
        rep = run_experiment(small_mapping())
        emit_report(rep, tmp_path / "a.csv")
        emit_report(rep, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_empty_report_header_only(self, tmp_path):
        path = emit_report(MetricsReport("positioning", 0), tmp_path)
        assert path.endswith("positioning.csv")
        assert open(path).read() == ",".join(REPORT_HEADER) + "\n"

    def test_values_round_trip_exactly(self, tmp_path):
        rep = run_experiment(small_mapping())
        lines = (tmp_path / "r.csv")
        emit_report(rep, lines)
        rows = [ln.split(",") for ln in lines.read_text().splitlines()[1:]]
        assert len(rows) == len(rep.rows)
        for r in rows:
            assert float(r[4]) == rep.value(int(r[0]), int(r[1]), r[2], r[3])
            assert r[5] == "NA"

    def test_runtime_recorded_when_asked(self, tmp_path):
        rep = run_experiment(small_mapping(eval={"test_size": 10, "record_runtime": True}))
        emit_report(rep, tmp_path / "r.csv")
        rows = [ln.split(",") for ln in (tmp_path / "r.csv").read_text().splitlines()[1:]]
        assert all(float(r[5]) >= 0 for r in rows)


CONFIG = """
task = "positioning"
seed = 2
L_list = [30]
k_list = [2]
[scene]
n_subcarriers = 8
[train]
epochs = 2
batch_size = 10
[eval]
test_size = 12
[baselines]
mlp_epochs = 2
mlp_hidden = 8
elm_hidden = 20
"""


class TestCli:
    @pytest.fixture
    def cfg(self, tmp_path):
        p = tmp_path / "cfg.toml"
        p.write_text(CONFIG)
        return str(p)

    def test_gen_train_eval(self, tmp_path, cfg, capsys):
        train = str(tmp_path / "train.bin")
        test = str(tmp_path / "test.bin")
        assert main(["gen", "--config", cfg, "--out", train]) == 0
        assert main(["gen", "--config", cfg, "--split", "test", "--out", test]) == 0
        tr, te = load_dataset(train), load_dataset(test)
        assert len(tr) == 30 and len(te) == 12
        assert tr.n_subcarriers == 1 and np.all(te.split == 1)
        for kind in ("simnet", "mlp", "elm"):
            model = str(tmp_path / f"{kind}.bin")
            hist = str(tmp_path / f"{kind}.csv")
            assert main(["train", "--config", cfg, "--data", train, "--model", kind, "--k", "2",
                         "--out", model, "--history", hist]) == 0
            load_model(model, kind)
            assert open(hist).readline() == "epoch,loss\n"
            assert main(["eval", "--model", model, "--data", test]) == 0
        out = capsys.readouterr().out
        assert out.count("mean_error_m") == 3

    def test_gen_raw_keeps_channels(self, tmp_path, cfg):
        p = str(tmp_path / "raw.bin")
        main(["gen", "--config", cfg, "--raw", "--size", "4", "--out", p])
        ds = load_dataset(p)
        assert len(ds) == 4 and ds.n_subcarriers == 8

    def test_mapping_eval_prints_ratio(self, tmp_path, capsys):
        train, test, model = (str(tmp_path / n) for n in ("a.bin", "b.bin", "m.bin"))
        common = ["--task", "channel_mapping"]
        main(["gen", *common, "--size", "20", "--out", train])
        main(["gen", *common, "--split", "test", "--size", "5", "--out", test])
        main(["train", *common, "--data", train, "--k", "3", "--out", model])
        main(["eval", "--model", model, "--data", test])
        assert "ratio" in capsys.readouterr().out

    def test_report(self, tmp_path, cfg):
        out = tmp_path / "reports"
        assert main(["report", "--config", cfg, "--out", str(out)]) == 0
        lines = (out / "positioning.csv").read_text().splitlines()
        assert lines[0] == ",".join(REPORT_HEADER)
        assert len(lines) == 1 + 4 * 2

    def test_seed_override(self, tmp_path, cfg):
        a, b = str(tmp_path / "a.bin"), str(tmp_path / "b.bin")
        main(["gen", "--config", cfg, "--size", "3", "--out", a])
        main(["gen", "--config", cfg, "--size", "3", "--seed", "9", "--out", b])
        assert not load_dataset(a).equals(load_dataset(b))

    def test_selftest(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert out.count("[PASS]") == 3 and "[FAIL]" not in out

    def test_missing_task(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["gen", "--out", str(tmp_path / "x.bin")])
