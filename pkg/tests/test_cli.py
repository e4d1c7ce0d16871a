"""End-to-end tests of the command-line front end."""

import json
import os

import numpy as np
import pytest

from elastinet import cli
from elastinet import data as edata
from elastinet.network import init_model, load_model

FAST_GEN = ["--duration", "20", "--dt", "0.5"]


def run(*args):
    return cli.main([str(a) for a in args])


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def assert_dirs_byte_identical(a, b):
    names_a = sorted(os.listdir(a))
    names_b = sorted(os.listdir(b))
    assert names_a == names_b
    for name in names_a:
        fa, fb = os.path.join(a, name), os.path.join(b, name)
        assert read_bytes(fa) == read_bytes(fb), f"{name} differs"


def config_of(out_dir, command):
    with open(os.path.join(out_dir, f"{command}.config.json")) as fh:
        return json.load(fh)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("series")
    code = run("gen-data", "--out-dir", d, *FAST_GEN,
               "--paths", "uniaxial-tension-x", "uniaxial-compression-y")
    assert code == 0
    return d


@pytest.fixture(scope="module")
def se_model_dir(tmp_path_factory, data_dir):
    d = tmp_path_factory.mktemp("se-model")
    code = run("train", "--series", data_dir / "uniaxial-tension-x.csv",
               data_dir / "uniaxial-compression-y.csv",
               "--variant", "SE", "--epochs", 0, "--out-dir", d,
               "--save-dataset")
    assert code == 0
    return d


@pytest.fixture(scope="module")
def pf_model_dir(tmp_path_factory, data_dir):
    d = tmp_path_factory.mktemp("pf-model")
    code = run("train", "--series", data_dir / "uniaxial-tension-x.csv",
               "--variant", "PF", "--epochs", 1, "--batch", 64,
               "--out-dir", d)
    assert code == 0
    return d


class TestGenData:
    def test_default_writes_fifteen_series(self, tmp_path):
        out = tmp_path / "raw"
        assert run("gen-data", "--out-dir", out, *FAST_GEN) == 0
        csvs = sorted(p for p in os.listdir(out) if p.endswith(".csv"))
        assert len(csvs) == 15
        assert not (out / cli.MARKER_NAME).exists()
        cfg = config_of(out, "gen-data")
        assert cfg["params"]["noise_amplitude"] == 0.05
        assert len(cfg["params"]["paths"]) == 15

    def test_single_path_and_fixed_seed_determinism(self, tmp_path):
        outs = [tmp_path / "a", tmp_path / "b"]
        for out in outs:
            assert run("gen-data", "--out-dir", out, *FAST_GEN,
                       "--paths", "shear-negative-yz", "--seed", 3) == 0
            assert sorted(os.listdir(out)) == ["gen-data.config.json",
                                               "shear-negative-yz.csv"]
        assert_dirs_byte_identical(*outs)

    def test_unknown_path_name_is_a_config_error(self, tmp_path):
        assert run("gen-data", "--out-dir", tmp_path / "x", *FAST_GEN,
                   "--paths", "torsion-w") == 2

    def test_replay_is_byte_identical(self, data_dir, tmp_path):
        out = tmp_path / "again"
        assert run("replay", data_dir / "gen-data.config.json",
                   "--out-dir", out) == 0
        assert_dirs_byte_identical(data_dir, out)


class TestFilter:
    def test_window_one_is_the_identity(self, data_dir, tmp_path):
        out = tmp_path / "w1"
        src = data_dir / "uniaxial-tension-x.csv"
        assert run("filter", "--inputs", src, "--window", 1,
                   "--out-dir", out) == 0
        raw = edata.load_series(src)
        filt = edata.load_series(out / "uniaxial-tension-x.csv")
        np.testing.assert_allclose(filt.stresses, raw.stresses, atol=1e-10)
        assert filt.metadata["filter_window"] == "1"

    def test_second_pass_changes_less_than_the_first(self, data_dir,
                                                     tmp_path):
        src = data_dir / "uniaxial-tension-x.csv"
        once, twice = tmp_path / "once", tmp_path / "twice"
        assert run("filter", "--inputs", src, "--window", 15,
                   "--out-dir", once) == 0
        assert run("filter", "--inputs", once / "uniaxial-tension-x.csv",
                   "--window", 15, "--out-dir", twice) == 0
        raw = edata.load_series(src).stresses
        f1 = edata.load_series(once / "uniaxial-tension-x.csv").stresses
        f2 = edata.load_series(twice / "uniaxial-tension-x.csv").stresses
        first_pass = np.sqrt(np.mean((f1 - raw) ** 2))
        second_pass = np.sqrt(np.mean((f2 - f1) ** 2))
        assert second_pass < first_pass

    def test_duplicate_basenames_rejected(self, data_dir, tmp_path):
        src = data_dir / "uniaxial-tension-x.csv"
        assert run("filter", "--inputs", src, src,
                   "--out-dir", tmp_path / "dup") == 2

    def test_missing_input_leaves_partial_marker(self, tmp_path):
        out = tmp_path / "broken"
        assert run("filter", "--inputs", tmp_path / "nope.csv",
                   "--out-dir", out) == 3
        assert (out / cli.MARKER_NAME).exists()
        assert not (out / "filter.config.json").exists()


class TestTrain:
    def test_epochs_zero_writes_the_initialization(self, se_model_dir):
        bundle = load_model(se_model_dir / "model.json")
        dataset = edata.load_dataset(se_model_dir / "dataset.json")
        fresh = init_model(0, "SE", normalizer=dataset.normalizer)
        for got, want in zip(bundle.net.params, fresh.net.params):
            np.testing.assert_array_equal(got, want)
        with open(se_model_dir / "loss.csv") as fh:
            lines = fh.read().splitlines()
        assert len(lines) == 1  # header only

    def test_resolved_config_records_defaults(self, se_model_dir):
        cfg = config_of(se_model_dir, "train")
        p = cfg["params"]
        assert p["batch"] == 512
        assert p["learning_rate"] == 0.002
        assert p["variant"] == "SE"
        assert all(os.path.isabs(s) for s in p["series"])

    def test_requires_exactly_one_data_source(self, se_model_dir, data_dir,
                                              tmp_path):
        assert run("train", "--epochs", 0, "--out-dir", tmp_path / "n") == 2
        assert run("train", "--series", data_dir / "uniaxial-tension-x.csv",
                   "--dataset", se_model_dir / "dataset.json",
                   "--epochs", 0, "--out-dir", tmp_path / "b") == 2

    def test_prebuilt_dataset_sets_the_variant(self, se_model_dir, tmp_path):
        out = tmp_path / "fromds"
        assert run("train", "--dataset", se_model_dir / "dataset.json",
                   "--variant", "PF", "--epochs", 0, "--out-dir", out) == 0
        assert config_of(out, "train")["params"]["variant"] == "SE"
        assert load_model(out / "model.json").variant == "SE"

    def test_replay_reproduces_training_byte_identically(self, data_dir,
                                                         tmp_path):
        first, second = tmp_path / "r1", tmp_path / "r2"
        assert run("train", "--series", data_dir / "uniaxial-tension-x.csv",
                   "--variant", "SE", "--epochs", 2, "--batch", 32,
                   "--out-dir", first) == 0
        assert run("replay", first / "train.config.json",
                   "--out-dir", second) == 0
        assert_dirs_byte_identical(first, second)


class TestTransfer:
    def test_transfer_and_replay(self, data_dir, pf_model_dir, tmp_path):
        first, second = tmp_path / "t1", tmp_path / "t2"
        args = ("transfer", "--model", pf_model_dir / "model.json",
                "--series", data_dir / "uniaxial-tension-x.csv",
                "--constraint", "frame-invariance", "--epochs", 1,
                "--batch", 64, "--w-penalty-tangent", 0)
        assert run(*args, "--out-dir", first) == 0
        trace_rows = read_bytes(first / "loss.csv").splitlines()
        assert len(trace_rows) == 2  # header + one epoch
        assert run("replay", first / "transfer.config.json",
                   "--out-dir", second) == 0
        assert_dirs_byte_identical(first, second)

    def test_constraint_is_mandatory(self, data_dir, pf_model_dir, tmp_path):
        with pytest.raises(SystemExit) as err:
            run("transfer", "--model", pf_model_dir / "model.json",
                "--series", data_dir / "uniaxial-tension-x.csv",
                "--epochs", 1, "--out-dir", tmp_path / "x")
        assert err.value.code == 2

    def test_symmetry_penalty_needs_the_pf_variant(self, se_model_dir,
                                                   tmp_path):
        assert run("transfer", "--model", se_model_dir / "model.json",
                   "--dataset", se_model_dir / "dataset.json",
                   "--constraint", "symmetry", "--epochs", 1,
                   "--out-dir", tmp_path / "x") == 2


class TestValidate:
    FAST = ("--directions", 36, "--iterations", 25, "--pairs", 10)

    def test_all_audits_write_reports(self, pf_model_dir, tmp_path):
        out = tmp_path / "audit"
        assert run("validate", "--model", pf_model_dir / "model.json",
                   "--which", "all", *self.FAST,
                   "--min-training-j", 0.9, "--out-dir", out) == 0
        expected = {"ellipticity.json", "ellipticity.txt",
                    "growth.json", "growth.txt", "growth.csv",
                    "convexity.json", "convexity.txt",
                    "anisotropy.json", "anisotropy.txt", "anisotropy.csv",
                    "validate.config.json"}
        assert set(os.listdir(out)) == expected
        growth = json.loads(read_bytes(out / "growth.json"))
        assert growth["min_training_j"] == 0.9
        assert len(growth["j"]) == 19

    def test_sweep_mode_emits_sweep_artifacts(self, pf_model_dir, tmp_path):
        out = tmp_path / "sweep"
        assert run("validate", "--model", pf_model_dir / "model.json",
                   "--which", "ellipticity", *self.FAST,
                   "--sweep-axes", "xy", "--sweep-to", 0.97,
                   "--sweep-steps", 3, "--out-dir", out) == 0
        assert (out / "ellipticity-sweep.json").exists()
        rows = read_bytes(out / "ellipticity-sweep.csv").splitlines()
        assert rows[0] == b"label,f,g,d,passed"
        assert not (out / "ellipticity.json").exists()

    def test_sweep_rejected_for_growth(self, pf_model_dir, tmp_path):
        assert run("validate", "--model", pf_model_dir / "model.json",
                   "--which", "growth", "--sweep-axes", "x",
                   "--sweep-steps", 3, "--out-dir", tmp_path / "x") == 2

    def test_missing_model_is_a_data_error(self, tmp_path):
        assert run("validate", "--model", tmp_path / "ghost.json",
                   "--which", "growth", "--out-dir", tmp_path / "x") == 3


class TestTangents:
    def test_reference_table_files(self, se_model_dir, tmp_path):
        out = tmp_path / "tab"
        assert run("tangents", "--model", se_model_dir / "model.json",
                   "--pressures", "reference", "--out-dir", out) == 0
        rows = read_bytes(out / "table-reference.csv").splitlines()
        assert rows[0] == b"label,SE,PF,sigma_eps"
        assert len(rows) == 14
        text = read_bytes(out / "table-reference.txt").decode()
        assert text.count("D") >= 13

    def test_unreachable_pressure_exits_numerical(self, se_model_dir,
                                                  tmp_path):
        out = tmp_path / "bad"
        assert run("tangents", "--model", se_model_dir / "model.json",
                   "--pressures=-1e9", "--out-dir", out) == 4
        assert (out / cli.MARKER_NAME).exists()

    def test_duplicate_states_rejected(self, se_model_dir, tmp_path):
        assert run("tangents", "--model", se_model_dir / "model.json",
                   "--pressures", "5", "5.0",
                   "--out-dir", tmp_path / "x") == 2


class TestReplayGuards:
    def test_unknown_command_rejected(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"version": 1, "command": "explode",
                                   "threads": None, "params": {}}))
        assert run("replay", cfg, "--out-dir", tmp_path / "x") == 2

    def test_parameter_set_must_match(self, data_dir, tmp_path):
        doc = config_of(data_dir, "gen-data")
        doc["params"]["bogus"] = 1
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(doc))
        assert run("replay", cfg, "--out-dir", tmp_path / "x") == 2

    def test_malformed_json_is_a_data_error(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text("{not json")
        assert run("replay", cfg, "--out-dir", tmp_path / "x") == 3


class TestInterface:
    def test_help_prints_defaults(self, capsys):
        with pytest.raises(SystemExit) as err:
            run("train", "--help")
        assert err.value.code == 0
        text = capsys.readouterr().out
        assert "--learning-rate" in text
        assert "512" in text and "0.002" in text

    def test_thread_cap_accepted(self, data_dir, tmp_path):
        assert run("filter", "--inputs", data_dir / "uniaxial-tension-x.csv",
                   "--window", 1, "--threads", 1,
                   "--out-dir", tmp_path / "x") == 0
        assert run("filter", "--inputs", data_dir / "uniaxial-tension-x.csv",
                   "--window", 1, "--threads", 0,
                   "--out-dir", tmp_path / "y") == 2
