import csv

import numpy as np
import pytest
from numpy.testing import assert_allclose
from PIL import Image

import omf_tools
from data_io import load_matrix, load_vector, save_matrix
from factorization_presets import FactorizationKind
from omf_tools import COMPARE_HEADER, ExperimentConfig, build_parser, experiment_from_args, main
from online_learner import CheckpointRecord, MetricsTrace

SYNTHETIC = "8,6,200,2,0.01"


def stdout_value(out, key):
    for line in out.splitlines():
        if line.startswith(key + " "):
            return line.split()[1]
    raise AssertionError(f"{key} not printed in {out!r}")


class TestExperimentConfig:
    def test_text_round_trip(self):
        config = ExperimentConfig(synthetic=SYNTHETIC, k=6, l1_weight=0.25, center=False, purge=True, forget_start=7)
        assert ExperimentConfig.from_text(config.to_text()) == config

    def test_comments_and_spacing(self):
        config = ExperimentConfig.from_text("# run 1\ndata = x.bin\nk=32\nnormalize   =   no\n")
        assert (config.data, config.k, config.normalize) == ("x.bin", 32, False)

    @pytest.mark.parametrize("text", [
        "data = x.bin\nno_such_key = 3\n",
        "data = x.bin\nk = many\n",
        "data = x.bin\npurge = maybe\n",
        "data = x.bin\nthis line has no separator\n",
    ])
    def test_bad_text(self, text):
        with pytest.raises(ValueError):
            ExperimentConfig.from_text(text)

    @pytest.mark.parametrize("values", [
        dict(),
        dict(data="x.bin", synthetic=SYNTHETIC),
        dict(data="x.bin", preset="pca"),
        dict(data="x.bin", constraint="box"),
        dict(data="x.bin", test_fraction=0.0),
        dict(synthetic="8,6,200"),
        dict(data="x.bin", channels=2),
    ])
    def test_invalid(self, values):
        with pytest.raises(ValueError):
            ExperimentConfig(**values)

    def test_group_penalty_selects_group_learning(self):
        config = ExperimentConfig(data="x.bin", penalty="group", group_size=4)
        assert config.preset_kind().kind == FactorizationKind.GROUP_DICT_LEARN
        with pytest.raises(ValueError):
            ExperimentConfig(data="x.bin", penalty="group", preset="nmf").preset_kind()

    def test_preprocessing_defaults(self):
        assert ExperimentConfig(data="x.bin").preprocessing() == (True, True)
        assert ExperimentConfig(data="x.bin", preset="nmf").preprocessing() == (False, False)
        assert ExperimentConfig(data="x.bin", center=False).preprocessing() == (False, True)


class TestArguments:
    def test_flags_override_file(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text(f"synthetic = {SYNTHETIC}\nk = 12\nbatch_size = 64\n")
        args = build_parser().parse_args(["train", "-c", str(path), "--k", "20", "--no-center"])
        config = experiment_from_args(args, environ={})
        assert (config.k, config.batch_size, config.center) == (20, 64, False)

    def test_seed_from_environment(self):
        args = build_parser().parse_args(["train", "--synthetic", SYNTHETIC])
        assert experiment_from_args(args, environ={"OMF_SEED": "7"}).seed == 7
        assert experiment_from_args(args, environ={}).seed == 0
        with pytest.raises(ValueError):
            experiment_from_args(args, environ={"OMF_SEED": "seven"})

    def test_seed_flag_wins(self):
        args = build_parser().parse_args(["train", "--synthetic", SYNTHETIC, "--seed", "3"])
        assert experiment_from_args(args, environ={"OMF_SEED": "7"}).seed == 3

    @pytest.mark.parametrize("argv", [
        [],
        ["fly"],
        ["lasso", "x.bin", "d.bin"],
        ["lasso", "x.bin", "d.bin", "--lambda", "0.1", "--budget", "1"],
        ["project", "b.bin", "--constraint", "box"],
        ["train", "--k", "many"],
        ["train", "--synthetic", SYNTHETIC, "--preset", "pca"],
        ["factorize", "--synthetic", SYNTHETIC, "--constraint", "box"],
        ["train", "--synthetic", SYNTHETIC, "--penalty", "l0"],
        ["train", "--synthetic", SYNTHETIC, "--mode", "offline"],
    ])
    def test_usage_errors_exit_with_one(self, argv):
        with pytest.raises(SystemExit) as info:
            main(argv)
        assert info.value.code == 1

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["--version"])
        assert info.value.code == 0
        assert omf_tools.__version__ in capsys.readouterr().out


class TestTrain:
    def test_outputs(self, tmp_path):
        out = tmp_path / "run"
        code = main(["train", "--synthetic", SYNTHETIC, "--k", "6", "--eta", "20", "--iterations", "8",
                     "-o", str(out)])
        assert code == 0
        assert load_matrix(out / "dictionary.bin").shape == (8, 6)
        trace = MetricsTrace.read_csv(out / "metrics.csv")
        assert trace[-1].iteration == 8
        assert np.isfinite(trace[-1].test_obj)
        saved = ExperimentConfig.from_text((out / "experiment.cfg").read_text())
        assert (saved.k, saved.iterations, saved.output) == (6, 8, str(out))
        log = (out / "run.log").read_text().splitlines()
        assert log[0].startswith("=== ") and log[-1].endswith("End of run ===")
        assert "Iterations: 8" in log

    def test_same_seed_same_dictionary(self, tmp_path):
        argv = ["train", "--synthetic", SYNTHETIC, "--k", "6", "--eta", "20", "--iterations", "6", "--threads", "2"]
        assert main(argv + ["-o", str(tmp_path / "a")]) == 0
        assert main(argv + ["-o", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "dictionary.bin").read_bytes() == (tmp_path / "b" / "dictionary.bin").read_bytes()

    def test_group_penalty(self, tmp_path):
        out = tmp_path / "group"
        assert main(["train", "--synthetic", SYNTHETIC, "--k", "6", "--penalty", "group", "--group-size", "4",
                     "--eta", "5", "--iterations", "6", "-o", str(out)]) == 0
        assert load_matrix(out / "dictionary.bin").shape == (8, 6)

    def test_batch_mode_and_constraint(self, tmp_path):
        out = tmp_path / "batch"
        assert main(["train", "--synthetic", SYNTHETIC, "--k", "6", "--mode", "batch", "--iterations", "3",
                     "--constraint", "fused", "--gamma1", "0.1", "--gamma2", "0.1", "-o", str(out)]) == 0
        assert len(MetricsTrace.read_csv(out / "metrics.csv")) == 3

    def test_batch_and_online_agree(self, tmp_path):
        common = ["train", "--synthetic", SYNTHETIC, "--k", "6", "--lambda", "0.1", "--seed", "2"]
        assert main(common + ["--eta", "10", "--epochs", "10", "-o", str(tmp_path / "online")]) == 0
        assert main(common + ["--mode", "batch", "--iterations", "20", "-o", str(tmp_path / "batch")]) == 0
        online = MetricsTrace.read_csv(tmp_path / "online" / "metrics.csv")[-1].test_obj
        batch = MetricsTrace.read_csv(tmp_path / "batch" / "metrics.csv")[-1].test_obj
        assert online == pytest.approx(batch, rel=0.05)

    def test_images(self, tmp_path, rng):
        photos = tmp_path / "photos"
        photos.mkdir()
        for name in ("a.pgm", "b.pgm"):
            Image.fromarray(rng.integers(0, 256, size=(24, 24), dtype=np.uint8)).save(photos / name)
        out = tmp_path / "patches"
        assert main(["train", "--images", str(photos), "--patch", "4", "--max-patches", "300", "--k", "8",
                     "--eta", "25", "--iterations", "4", "-o", str(out)]) == 0
        assert load_matrix(out / "dictionary.bin").shape == (16, 8)

    def test_empty_image_folder(self, tmp_path):
        (tmp_path / "empty").mkdir()
        assert main(["train", "--images", str(tmp_path / "empty"), "-o", str(tmp_path / "run")]) == 2

    def test_missing_data_file(self, tmp_path):
        assert main(["train", "--data", str(tmp_path / "absent.bin"), "-o", str(tmp_path / "run")]) == 2

    def test_no_data_source(self, tmp_path):
        assert main(["train", "-o", str(tmp_path / "run")]) == 2


class TestFactorize:
    def test_nmf_outputs(self, tmp_path, rng, capsys):
        data = tmp_path / "data.bin"
        save_matrix(np.abs(rng.standard_normal((6, 100))), data)
        out = tmp_path / "nmf"
        assert main(["factorize", "--data", str(data), "--preset", "nmf", "--k", "3", "--eta", "10",
                     "--iterations", "5", "-o", str(out)]) == 0
        codes = load_matrix(out / "codes.bin")
        assert codes.shape == (3, 90)
        assert np.all(codes >= 0)
        assert np.all(load_matrix(out / "dictionary.bin") >= 0)
        density = float(stdout_value(capsys.readouterr().out, "density"))
        assert 0.0 < density <= 1.0

    def test_nmf_rejects_signed_data(self, tmp_path, rng):
        data = tmp_path / "data.bin"
        save_matrix(rng.standard_normal((6, 40)), data)
        assert main(["factorize", "--data", str(data), "--preset", "nmf", "--k", "2", "-o",
                     str(tmp_path / "nmf")]) == 2


class TestLasso:
    @pytest.fixture
    def problem(self, tmp_path):
        x, D = tmp_path / "x.txt", tmp_path / "D.txt"
        save_matrix(np.array([2.0, -0.5, 0.1]), x, text=True)
        save_matrix(np.eye(3), D, text=True)
        return x, D

    def test_lambda(self, problem, tmp_path, capsys):
        x, D = problem
        out = tmp_path / "code.txt"
        assert main(["lasso", str(x), str(D), "--lambda", "0.7", "-o", str(out), "--text"]) == 0
        assert_allclose(load_vector(out), [1.3, 0.0, 0.0], atol=1e-14)
        printed = capsys.readouterr().out
        assert stdout_value(printed, "nnz") == "1"
        assert float(stdout_value(printed, "kkt_residual")) < 1e-12
        assert float(stdout_value(printed, "objective")) == pytest.approx(0.5 * (0.49 + 0.25 + 0.01) + 0.7 * 1.3)

    def test_budget(self, problem, tmp_path):
        x, D = problem
        out = tmp_path / "code.bin"
        assert main(["lasso", str(x), str(D), "--budget", "1.0", "-o", str(out)]) == 0
        assert_allclose(load_vector(out), [1.0, 0.0, 0.0], atol=1e-14)

    def test_size_mismatch(self, problem, tmp_path):
        x, _ = problem
        D = tmp_path / "D4.txt"
        save_matrix(np.eye(4), D, text=True)
        assert main(["lasso", str(x), str(D), "--lambda", "0.1", "-o", str(tmp_path / "c.bin")]) == 2

    def test_malformed_dictionary(self, problem, tmp_path):
        x, _ = problem
        D = tmp_path / "bad.txt"
        D.write_text("3 3\n1 0 0\n")
        assert main(["lasso", str(x), str(D), "--lambda", "0.1", "-o", str(tmp_path / "c.bin")]) == 2


class TestProject:
    @pytest.fixture
    def vector(self, tmp_path):
        path = tmp_path / "b.txt"
        save_matrix(np.array([3.0, 4.0]), path, text=True)
        return path

    def test_l2_ball(self, vector, tmp_path, capsys):
        out = tmp_path / "u.bin"
        assert main(["project", str(vector), "-o", str(out)]) == 0
        assert_allclose(load_vector(out), [0.6, 0.8])
        assert float(stdout_value(capsys.readouterr().out, "constraint_value")) == pytest.approx(1.0)

    def test_l1_ball(self, vector, tmp_path):
        out = tmp_path / "u.bin"
        assert main(["project", str(vector), "--constraint", "elastic", "-o", str(out)]) == 0
        assert_allclose(load_vector(out), [0.0, 1.0], atol=1e-12)

    def test_fused_ball(self, vector, tmp_path, capsys):
        out = tmp_path / "u.bin"
        assert main(["project", str(vector), "--constraint", "fused", "--gamma1", "0.2", "--gamma2", "0.3",
                     "-o", str(out)]) == 0
        assert float(stdout_value(capsys.readouterr().out, "constraint_value")) == pytest.approx(1.0, abs=1e-8)


class TestCompare:
    @staticmethod
    def write_run(directory, objectives):
        directory.mkdir()
        trace = MetricsTrace([CheckpointRecord(i + 1, 0.1 * (i + 1), obj, obj, obj, 2.0, 0.0)
                              for i, obj in enumerate(objectives)])
        trace.write_csv(directory / "metrics.csv")

    def test_merge(self, tmp_path):
        self.write_run(tmp_path / "online", [0.5, 0.4])
        self.write_run(tmp_path / "batch", [0.6])
        out = tmp_path / "merged.csv"
        assert main(["compare", str(tmp_path / "*" / "metrics.csv"), "-o", str(out)]) == 0
        with open(out, newline="") as f:
            rows = list(csv.reader(f))
        assert tuple(rows[0]) == COMPARE_HEADER
        assert [row[0] for row in rows[1:]] == ["batch", "online", "online"]
        assert [float(row[2]) for row in rows[1:]] == [0.6, 0.5, 0.4]

    def test_plain_file_label(self, tmp_path):
        path = tmp_path / "sweep_rho.csv"
        path.write_text("iter,wall_clock_s,test_obj\n1,0.5,0.25\n")
        out = tmp_path / "merged.csv"
        assert main(["compare", str(path), "-o", str(out)]) == 0
        assert out.read_text().splitlines()[1] == "sweep_rho,0.5,0.25"

    @pytest.mark.parametrize("content", ["iter,test_obj\n1,0.5\n", "iter,wall_clock_s,test_obj\n1,fast,0.5\n"])
    def test_malformed_metrics(self, tmp_path, content):
        path = tmp_path / "metrics.csv"
        path.write_text(content)
        assert main(["compare", str(path), "-o", str(tmp_path / "merged.csv")]) == 2

    def test_nothing_matches(self, tmp_path):
        assert main(["compare", str(tmp_path / "*.csv"), "-o", str(tmp_path / "merged.csv")]) == 2
