import csv
import filecmp

import pytest

from cli import build_parser, main, resolve_run_config
from config import Config
from dataset import load_dataset, load_profile, normalize, stratified_split
from errors import ConfigurationError
from fitness import FitnessKind

from .conftest import write_credit_csv, write_profile

QUIET = ["--log-file", ""]


def _run_args(profile, output, *extra):
    return QUIET + [
        "run", "--dataset", str(profile), "--population", "12", "--generations", "2",
        "--n-runs", "2", "--output", str(output), *extra,
    ]


def _same_tree(left, right) -> bool:
    comparison = filecmp.dircmp(left, right)
    if comparison.left_only or comparison.right_only or comparison.funny_files:
        return False
    _, mismatch, errors = filecmp.cmpfiles(left, right, comparison.common_files, shallow=False)
    if mismatch or errors:
        return False
    return all(_same_tree(left / name, right / name) for name in comparison.common_dirs)


class TestRunCommand:
    """Test the run subcommand"""

    def test_writes_summary(self, tmp_path, credit_profile, capsys):
        out = tmp_path / "out"
        assert main(_run_args(credit_profile, out, "--fitness", "equal")) == 0

        lines = (out / "summary.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "technique,tp_rate,tn_rate,accuracy"
        assert len(lines) == 2
        assert lines[1].startswith("C_equal,")
        assert (out / "runs" / "run_1.tree").is_file()
        assert "C_equal" in capsys.readouterr().out

    def test_several_kinds(self, tmp_path, credit_profile):
        out = tmp_path / "out"
        assert main(_run_args(credit_profile, out, "--fitness", "equal,errors-median")) == 0
        assert (out / "equal" / "runs" / "run_0.csv").is_file()
        assert (out / "errors-median" / "runs" / "run_0.csv").is_file()
        assert len((out / "summary.csv").read_text(encoding="utf-8").splitlines()) == 3

    def test_byte_identical_reruns(self, tmp_path, credit_profile):
        first, second = tmp_path / "first", tmp_path / "second"
        assert main(_run_args(credit_profile, first, "--seed", "7", "--fitness", "errors")) == 0
        assert main(_run_args(credit_profile, second, "--seed", "7", "--fitness", "errors")) == 0
        assert _same_tree(first, second)

    @pytest.mark.integration
    def test_worker_count_does_not_change_output(self, tmp_path, credit_profile):
        first, second = tmp_path / "jobs1", tmp_path / "jobs2"
        assert main(_run_args(credit_profile, first, "--seed", "7", "--jobs", "1")) == 0
        assert main(_run_args(credit_profile, second, "--seed", "7", "--jobs", "2")) == 0
        assert _same_tree(first, second)

    def test_missing_data_file(self, tmp_path, capsys):
        missing = tmp_path / "absent.csv"
        profile = write_profile(tmp_path / "absent.profile", missing)
        assert main(_run_args(profile, tmp_path / "out")) == 1
        assert str(missing) in capsys.readouterr().err

    def test_missing_profile(self, tmp_path, capsys):
        profile = tmp_path / "nowhere.profile"
        assert main(_run_args(profile, tmp_path / "out")) == 1
        assert str(profile) in capsys.readouterr().err

    def test_non_numeric_profile_fraction(self, tmp_path, credit_csv, capsys):
        profile = write_profile(tmp_path / "half.profile", credit_csv, majority_test_fraction="half")
        assert main(_run_args(profile, tmp_path / "out")) == 1
        assert "majority_test_fraction" in capsys.readouterr().err

    def test_invalid_parameter_names_field(self, tmp_path, credit_profile, capsys):
        assert main(_run_args(credit_profile, tmp_path / "out", "--tournament", "50")) == 1
        assert "tournament_size" in capsys.readouterr().err

    def test_unknown_fitness(self, tmp_path, credit_profile, capsys):
        assert main(_run_args(credit_profile, tmp_path / "out", "--fitness", "auc")) == 1
        assert "auc" in capsys.readouterr().err

    def test_help_lists_every_flag(self, capsys):
        with pytest.raises(SystemExit) as exc_info:
            build_parser().parse_args(["sweep", "--help"])
        assert exc_info.value.code == 0
        text = capsys.readouterr().out
        for flag in ("--dataset", "--config", "--fitness", "--seed", "--population", "--generations",
                     "--n-runs", "--crossover", "--mutation", "--tournament", "--max-depth", "--elitism",
                     "--output", "--jobs", "--fixed-split", "--scaled", "--sizes"):
            assert flag in text


class TestResolveConfig:
    """Test layering of defaults, presets, config files and flags"""

    def _resolve(self, *argv):
        return resolve_run_config(build_parser().parse_args(["run", *argv]), Config())

    def test_defaults(self, credit_profile):
        run_config = self._resolve("--dataset", str(credit_profile))
        params = run_config.params
        assert run_config.n_runs == 30
        assert params.population_size == 500
        assert params.generations == 1000
        assert params.p_crossover == 0.9
        assert params.p_mutation == 0.1
        assert params.tournament_size == 3
        assert params.max_depth == 17
        assert params.elitism_count == 1
        assert params.init_depth_range == (2, 6)
        assert run_config.fitness == [FitnessKind.EQUAL]
        assert run_config.fixed_split is False

    def test_scaled_preset(self, credit_profile):
        run_config = self._resolve("--dataset", str(credit_profile), "--scaled")
        assert (run_config.params.population_size, run_config.params.generations, run_config.n_runs) == (100, 100, 10)

    def test_flags_override_preset(self, credit_profile):
        run_config = self._resolve("--dataset", str(credit_profile), "--scaled", "--population", "40")
        assert run_config.params.population_size == 40
        assert run_config.params.generations == 100

    def test_config_file_then_flags(self, tmp_path, credit_profile):
        config_file = tmp_path / "run.env"
        config_file.write_text(
            f"dataset={credit_profile}\npopulation=60\ngenerations=5\nfitness=errors,errors-mean\n"
            "fixed_split=true\nunknown_key=1\n",
            encoding="utf-8",
        )
        run_config = self._resolve("--config", str(config_file), "--generations", "9")
        assert run_config.params.population_size == 60
        assert run_config.params.generations == 9
        assert run_config.fitness == [FitnessKind.ERRORS, FitnessKind.ERRORS_MEAN]
        assert run_config.fixed_split is True

    def test_bad_config_value(self, tmp_path, credit_profile):
        config_file = tmp_path / "run.env"
        config_file.write_text("population=many\n", encoding="utf-8")
        with pytest.raises(ConfigurationError, match="population"):
            self._resolve("--dataset", str(credit_profile), "--config", str(config_file))

    def test_one_probability_implies_the_other(self, credit_profile):
        run_config = self._resolve("--dataset", str(credit_profile), "--mutation", "0.25")
        assert run_config.params.p_crossover == 0.75
        assert run_config.params.p_mutation == 0.25

    def test_probabilities_must_sum_to_one(self, credit_profile):
        with pytest.raises(ConfigurationError, match="p_crossover"):
            self._resolve("--dataset", str(credit_profile), "--crossover", "0.5", "--mutation", "0.2")

    def test_dataset_required(self):
        with pytest.raises(ConfigurationError, match="--dataset"):
            self._resolve()

    def test_small_max_depth_narrows_init_range(self, credit_profile):
        run_config = self._resolve("--dataset", str(credit_profile), "--max-depth", "4")
        assert run_config.params.init_depth_range == (2, 4)


class TestSweepCommand:
    """Test the sweep subcommand"""

    def _sweep(self, profile, output, *extra):
        return main(QUIET + ["sweep", "--dataset", str(profile), "--generations", "0", "--n-runs", "1",
                             "--output", str(output), *extra])

    def test_default_sizes(self, tmp_path, credit_profile):
        assert self._sweep(credit_profile, tmp_path) == 0
        with open(tmp_path / "sweep.csv", newline="") as handle:
            rows = list(csv.DictReader(handle))
        assert sorted({int(row["size"]) for row in rows}) == [100, 200, 300, 400, 500]
        assert all(row["generation"] == "0" for row in rows)

    def test_one_size(self, tmp_path, credit_profile):
        assert self._sweep(credit_profile, tmp_path, "--sizes", "100") == 0
        lines = (tmp_path / "sweep.csv").read_text(encoding="utf-8").splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("100,0,")

    def test_rejects_several_kinds(self, tmp_path, credit_profile, capsys):
        assert self._sweep(credit_profile, tmp_path, "--fitness", "equal,errors") == 1
        assert "exactly one fitness kind" in capsys.readouterr().err
        assert not (tmp_path / "sweep.csv").exists()


class TestPredictCommand:
    """Test the predict subcommand"""

    def test_sign_rule_per_row(self, tmp_path, capsys):
        tree = tmp_path / "model.tree"
        tree.write_text("(sub x0 x1)\n", encoding="utf-8")
        rows = tmp_path / "rows.csv"
        rows.write_text("0.7,0.2\n0.1,0.9\n", encoding="utf-8")

        assert main(QUIET + ["predict", str(tree), str(rows)]) == 0
        assert capsys.readouterr().out.splitlines() == ["minority", "majority"]

    def test_labelled_rows_print_metrics(self, tmp_path, capsys):
        tree = tmp_path / "model.tree"
        tree.write_text("(sub x0 x1)\n", encoding="utf-8")
        rows = tmp_path / "rows.csv"
        rows.write_text("0.7,0.2,bad\n0.1,0.9,good\n0.9,0.1,good\n", encoding="utf-8")

        assert main(QUIET + ["predict", str(tree), str(rows), "--label-column", "-1",
                             "--minority-value", "bad"]) == 0
        out = capsys.readouterr().out.splitlines()
        assert out[:3] == ["minority", "majority", "minority"]
        assert out[3] == "TP Rate: 1.000 - TN Rate: 0.500 - Accuracy: 0.667"

    def test_replay_of_run_tree_matches_run_metrics(self, tmp_path, credit_profile, capsys):
        out = tmp_path / "out"
        assert main(_run_args(credit_profile, out, "--seed", "3", "--n-runs", "1")) == 0
        capsys.readouterr()

        profile = load_profile(credit_profile)
        data, _ = normalize(load_dataset(profile))
        _, test = stratified_split(data, profile.split_spec(3))
        split_file = tmp_path / "test_split.csv"
        split_file.write_text(
            "".join(",".join([*(repr(float(v)) for v in row), label]) + "\n"
                    for row, label in zip(test.features, test.labels)),
            encoding="utf-8",
        )
        assert main(QUIET + ["predict", str(out / "runs" / "run_0.tree"), str(split_file),
                             "--label-column", "-1", "--minority-value", "bad"]) == 0
        printed = capsys.readouterr().out.splitlines()[-1]

        with open(out / "runs" / "metrics.csv", newline="") as handle:
            stored = next(csv.DictReader(handle))
        expected = (f"TP Rate: {float(stored['tp_rate']):.3f} - TN Rate: {float(stored['tn_rate']):.3f} - "
                    f"Accuracy: {float(stored['accuracy']):.3f}")
        assert printed == expected

    def test_profile_normalization(self, tmp_path, capsys):
        data_file = write_credit_csv(tmp_path / "raw.csv", 8, 4)
        profile = write_profile(tmp_path / "raw.profile", data_file)
        tree = tmp_path / "model.tree"
        tree.write_text("(sub x0 0.5)\n", encoding="utf-8")
        rows = tmp_path / "rows.csv"
        rows.write_text("1000,0,0,0\n-1000,0,0,0\n", encoding="utf-8")

        assert main(QUIET + ["predict", str(tree), str(rows), "--profile", str(profile)]) == 0
        assert capsys.readouterr().out.splitlines() == ["minority", "majority"]

    def test_malformed_tree(self, tmp_path, capsys):
        tree = tmp_path / "broken.tree"
        tree.write_text("(sub x0 banana)\n", encoding="utf-8")
        rows = tmp_path / "rows.csv"
        rows.write_text("0.7,0.2\n", encoding="utf-8")
        assert main(QUIET + ["predict", str(tree), str(rows)]) == 1
        assert "banana" in capsys.readouterr().err

    def test_feature_beyond_data(self, tmp_path, capsys):
        tree = tmp_path / "wide.tree"
        tree.write_text("(add x0 x5)\n", encoding="utf-8")
        rows = tmp_path / "rows.csv"
        rows.write_text("0.7,0.2\n", encoding="utf-8")
        assert main(QUIET + ["predict", str(tree), str(rows)]) == 1
        assert "x5" in capsys.readouterr().err

    def test_label_column_needs_minority_value(self, tmp_path, capsys):
        tree = tmp_path / "model.tree"
        tree.write_text("x0\n", encoding="utf-8")
        rows = tmp_path / "rows.csv"
        rows.write_text("0.7,bad\n", encoding="utf-8")
        assert main(QUIET + ["predict", str(tree), str(rows), "--label-column", "-1"]) == 1
        assert "--minority-value" in capsys.readouterr().err
