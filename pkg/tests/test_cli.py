"""End-to-end CLI behavior: subcommands, exit codes, file outputs, and
figure rendering alongside delimited reports."""
import filecmp
import os

import pytest

from lightnet.cli import main
from lightnet.data import load_chip_dataset, split_samples
from lightnet.train import checkpoint_load, evaluate, metrics_csv

ARCH_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "arch")


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "ds"
    code = main(["synth", "--classes", "5", "--train-per-class", "6",
                 "--test-per-class", "4", "--resolution", "64",
                 "--seed", "1", "--out", str(out)])
    assert code == 0
    return out


class TestAnalyze:
    def test_builtin_report_totals_in_band(self, capsys):
        assert main(["analyze", "--arch", "builtin:mobilenetv3-large",
                     "--input", "224x224x3"]) == 0
        out = capsys.readouterr().out
        total_line = [ln for ln in out.splitlines() if ln.startswith("total")][0]
        total = int(total_line.split()[-1].replace(",", ""))
        assert 0.15e9 <= total <= 0.25e9

    def test_compare_last_stage_ratio_line_reads_49(self, capsys):
        assert main(["analyze", "--compare-last-stage",
                     "--input", "224x224x3"]) == 0
        out = capsys.readouterr().out
        ratio_lines = [ln for ln in out.splitlines() if "ratio" in ln]
        assert ratio_lines and ratio_lines[0].strip().endswith("49")

    def test_missing_file_exits_1_without_traceback(self, capsys):
        assert main(["analyze", "--arch", "/no/such/arch.json"]) == 1
        err = capsys.readouterr().err
        assert "error:" in err
        assert "Traceback" not in err

    def test_bad_input_shape_exits_1(self, capsys):
        assert main(["analyze", "--input", "224x224"]) == 1

    def test_csv_out_with_figure(self, tmp_path, capsys):
        out = tmp_path / "report.csv"
        assert main(["analyze", "--format", "csv", "--out", str(out)]) == 0
        assert out.exists()
        assert (tmp_path / "report.png").exists()
        assert out.read_text().splitlines()[1] == "layer,out_shape,params,madds"

    def test_user_arch_file(self, capsys):
        assert main(["analyze", "--arch",
                     os.path.join(ARCH_DIR, "a_convnets.json"),
                     "--convention", "flops"]) == 0
        assert "a-convnets" in capsys.readouterr().out


class TestSynth:
    def test_default_sized_dataset_layout(self, tmp_path):
        out = tmp_path / "full"
        assert main(["synth", "--out", str(out)]) == 0
        class_dirs = [d for d in os.listdir(out)
                      if os.path.isdir(out / d)]
        assert len(class_dirs) == 10
        pgms = [f for d in class_dirs for f in os.listdir(out / d)
                if f.endswith(".pgm")]
        assert len(pgms) == 1500  # (100 train + 50 test) x 10 classes
        assert (out / "manifest.csv").exists()

    def test_same_seed_identical_trees(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["synth", "--classes", "3", "--train-per-class", "4",
                         "--test-per-class", "2", "--seed", "9",
                         "--out", str(out)]) == 0
        for cls in os.listdir(a):
            if not os.path.isdir(a / cls):
                continue
            for f in os.listdir(a / cls):
                assert filecmp.cmp(a / cls / f, b / cls / f, shallow=False)
        assert (a / "manifest.csv").read_bytes() == (b / "manifest.csv").read_bytes()

    def test_single_class_rejected(self, capsys):
        assert main(["synth", "--classes", "1", "--out", "/tmp/nope"]) == 1


class TestTrainEval:
    def test_round_trip_matches_in_process_evaluation(self, dataset_dir, tmp_path, capsys):
        ckpt = tmp_path / "model.ckpt"
        assert main(["train", "--data", str(dataset_dir), "--checkpoint",
                     str(ckpt), "--epochs", "2", "--seed", "0"]) == 0
        assert ckpt.exists()
        stem = str(ckpt)[:-len(".ckpt")]
        assert os.path.exists(stem + ".history.csv")
        assert os.path.exists(stem + ".history.png")
        capsys.readouterr()

        metrics_out = tmp_path / "metrics.csv"
        assert main(["eval", "--data", str(dataset_dir), "--checkpoint",
                     str(ckpt), "--out", str(metrics_out)]) == 0
        cli_table = capsys.readouterr().out
        assert "Average" in cli_table
        assert (tmp_path / "metrics.png").exists()

        samples, _ = load_chip_dataset(dataset_dir)
        _, test_s = split_samples(samples)
        model = checkpoint_load(ckpt)
        in_process = evaluate(model, test_s, resolution=64, channel_mode="gray1")
        assert metrics_out.read_text() == metrics_csv(in_process)

    def test_per_class_too_large_names_class(self, dataset_dir, tmp_path, capsys):
        code = main(["train", "--data", str(dataset_dir), "--checkpoint",
                     str(tmp_path / "x.ckpt"), "--per-class", "999",
                     "--epochs", "1"])
        assert code == 1
        assert "class_0" in capsys.readouterr().err

    def test_missing_dataset_exits_1(self, tmp_path, capsys):
        assert main(["train", "--data", str(tmp_path / "none"),
                     "--checkpoint", str(tmp_path / "x.ckpt")]) == 1


class TestSweep:
    def test_csv_rows_and_figure(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        assert main(["sweep", "--data", str(dataset_dir), "--k-list", "2,3",
                     "--seeds", "0,1", "--epochs", "1", "--out", str(out)]) == 0
        lines = out.read_text().strip().splitlines()
        assert len(lines) == 1 + 4 + 2  # header, 4 run rows, 2 summary rows
        assert (tmp_path / "sweep.png").exists()

    def test_bad_k_list_exits_1(self, dataset_dir, tmp_path, capsys):
        assert main(["sweep", "--data", str(dataset_dir), "--k-list", "2,x",
                     "--out", str(tmp_path / "s.csv")]) == 1


class TestGradcheckCommand:
    def test_passes_and_lists_families(self, capsys):
        assert main(["gradcheck", "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") >= 10
        assert "bneck" in out and "conv2d" in out


class TestUsageErrors:
    def test_unknown_flag_exits_1_with_usage(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["analyze", "--frobnicate"])
        assert exc.value.code == 1
        assert "usage" in capsys.readouterr().err.lower()

    def test_unknown_subcommand_exits_1(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["transmogrify"])
        assert exc.value.code == 1
