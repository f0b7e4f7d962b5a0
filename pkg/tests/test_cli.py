import csv
import subprocess
import sys

import pytest

from multivfl import cli
from multivfl.config import ExperimentConfig, parse_config
from multivfl.errors import ConfigurationError

FAST = ["--dataset", "synthetic", "--set", "D=2", "--set", "K=2", "--set", "samples_per_owner=64",
        "--set", "synthetic_train=400", "--set", "synthetic_test=100", "--set", "local_lr=0.05"]


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestParseConfig:
    def test_empty_file_gives_defaults(self, tmp_path):
        cfg_file = tmp_path / "empty.cfg"
        cfg_file.write_text("")
        cfg = parse_config(cfg_file, {"data_dir": "/data/mnist"})
        assert (cfg.D, cfg.K, cfg.batch_size, cfg.local_lr) == (4, 5, 64, 0.001)
        assert (cfg.beta1, cfg.beta2, cfg.eta_s, cfg.s, cfg.samples_per_owner) == (0.9, 0.99, 1e-3, 1e-3, 5000)
        assert cfg.rounds == 500 and cfg.optimizer == "fedavg" and cfg.scenario == "iid"

    def test_file_values_and_comments(self, tmp_path):
        cfg_file = tmp_path / "a.cfg"
        cfg_file.write_text("# experiment\ndataset = synthetic\n\nscenario = 2niid  # two skewed owners\nbeta1 = 0.8\n")
        cfg = parse_config(cfg_file)
        assert cfg.scenario == "2niid" and cfg.beta1 == 0.8

    def test_flag_overrides_file(self, tmp_path):
        cfg_file = tmp_path / "a.cfg"
        cfg_file.write_text("dataset = synthetic\nrounds = 500\n")
        assert parse_config(cfg_file, {"rounds": 50}).rounds == 50

    def test_bad_optimizer_names_valid_set(self):
        with pytest.raises(ConfigurationError, match="fedavg, fedadam, fedyogi, feddemonadam"):
            parse_config(None, {"dataset": "synthetic", "optimizer": "fedadamm"})

    def test_all_problems_reported_at_once(self, tmp_path):
        cfg_file = tmp_path / "bad.cfg"
        cfg_file.write_text("colour = blue\nbeta2 = 1.5\nrounds = many\nscenario = 9niid\n")
        with pytest.raises(ConfigurationError) as info:
            parse_config(cfg_file)
        msg = str(info.value)
        for fragment in ("unknown key 'colour'", "beta2", "rounds", "9niid", "data_dir"):
            assert fragment in msg

    def test_malformed_line(self, tmp_path):
        cfg_file = tmp_path / "bad.cfg"
        cfg_file.write_text("rounds 5\n")
        with pytest.raises(ConfigurationError, match="line 1"):
            parse_config(cfg_file)

    def test_architecture_keys_reach_the_world(self):
        from multivfl import protocol
        from multivfl.dataio import synth_dataset

        cfg = parse_config(None, {"dataset": "synthetic", "cut_channels": "4", "label_conv_channels": "3",
                                  "label_hidden": "16", "K": "1", "samples_per_owner": "10"})
        world = protocol.build_world(synth_dataset(0, 40), None, **cfg.world_kwargs())
        assert world.data_owners[0].net.output_shape == (7, 28, 4)
        assert world.label_net.params["0.weight"].shape == (3, 4, 3, 3)
        assert world.label_net.params["3.weight"].shape == (16, 3 * 14 * 14)

    def test_missing_dataset_path(self):
        with pytest.raises(ConfigurationError, match="data_dir"):
            parse_config(None, {})


class TestRunExperiment:
    def test_row_count_and_schema(self, tmp_path, capsys):
        out = tmp_path / "m.csv"
        assert cli.main(FAST + ["--rounds", "3", "--out", str(out)]) == 0
        rows = read_rows(out)
        assert rows[0] == list(cli.CSV_COLUMNS)
        assert len(rows) == 4
        assert [r[0] for r in rows[1:]] == ["1", "2", "3"]
        for r in rows[1:]:
            assert all(float(x) == float(x) for x in (r[4], r[5], r[6]))  # finite, not NaN
            assert 0.0 <= float(r[5]) <= 1.0
        assert "multivfl: 3 rounds" in capsys.readouterr().out

    def test_demon_beta1_decreasing(self, tmp_path):
        out = tmp_path / "m.csv"
        assert cli.main(FAST + ["--rounds", "4", "--optimizer", "feddemonadam", "--out", str(out)]) == 0
        betas = [float(r[6]) for r in read_rows(out)[1:]]
        assert all(a > b for a, b in zip(betas, betas[1:])) and betas[-1] == 0.0

    def test_byte_identical_reruns(self, tmp_path):
        paths = [tmp_path / f"{i}.csv" for i in range(3)]
        args = FAST + ["--rounds", "2", "--optimizer", "fedadam", "--seed", "7"]
        assert cli.main(args + ["--out", str(paths[0])]) == 0
        assert cli.main(args + ["--out", str(paths[1])]) == 0
        assert cli.main(args + ["--threads", "4", "--out", str(paths[2])]) == 0
        assert paths[0].read_bytes() == paths[1].read_bytes() == paths[2].read_bytes()

    def test_compare_mode(self, tmp_path):
        out = tmp_path / "cmp.csv"
        assert cli.main(FAST + ["--rounds", "2", "--compare", "--out", str(out)]) == 0
        rows = read_rows(out)[1:]
        assert [r[2] for r in rows] == ["fedavg"] * 2 + ["fedadam"] * 2 + ["fedyogi"] * 2 + ["feddemonadam"] * 2
        assert len({r[3] for r in rows}) == 1

    def test_wall_timing(self, tmp_path):
        out = tmp_path / "m.csv"
        assert cli.main(FAST + ["--rounds", "1", "--set", "timing=wall", "--out", str(out)]) == 0
        assert int(read_rows(out)[1][7]) >= 0

    def test_config_error_exit_code(self, capsys):
        assert cli.main(["--dataset", "synthetic", "--optimizer", "sgd"]) == 2
        assert "optimizer" in capsys.readouterr().err

    def test_runtime_error_exit_code(self, tmp_path, capsys):
        # 1niid with a tiny synthetic set cannot supply 64 samples of {0, 1}
        code = cli.main(FAST + ["--rounds", "1", "--scenario", "1niid", "--set", "synthetic_train=60",
                                "--out", str(tmp_path / "x.csv")])
        assert code == 2
        assert "short by" in capsys.readouterr().err

    def test_missing_data_dir_files(self, tmp_path, capsys):
        code = cli.main(["--data-dir", str(tmp_path), "--rounds", "1", "--out", str(tmp_path / "x.csv")])
        assert code == 2
        assert "train-images-idx3-ubyte" in capsys.readouterr().err

    def test_run_experiment_with_datasets(self, tmp_path):
        cfg = ExperimentConfig(dataset="synthetic", D=2, K=2, rounds=1, samples_per_owner=32, synthetic_train=200,
                               synthetic_test=50, out=str(tmp_path / "m.csv"))
        assert cli.run_experiment(cfg) == 0
        assert len(read_rows(tmp_path / "m.csv")) == 2


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.csv"
    proc = subprocess.run([sys.executable, "-m", "multivfl", *FAST, "--rounds", "1", "--out", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert len(read_rows(out)) == 2
