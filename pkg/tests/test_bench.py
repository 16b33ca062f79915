"""Tests for the benchmark harness: aggregation, comparison, export."""

import numpy as np
import pytest

from activepool import bench
from activepool._seeds import derive_seed
from activepool.bench import (
    CURVE_HEADER,
    CompareRow,
    ConfigError,
    ExperimentConfig,
    LearningCurve,
    aggregate,
    compare,
    export,
    load_curve,
    resolve_workers,
    run_experiment,
)
from activepool.dataset import generate_gaussian_mixture, stratified_split
from activepool.engine import TrialHistory
from activepool.models import LdaTrainer


def history(accuracies, labels_used=None, completed=True, hid="ms"):
    if labels_used is None:
        labels_used = list(range(6, 6 + 4 * len(accuracies), 4))
    return TrialHistory(
        heuristic_id=hid,
        labels_used=list(labels_used),
        accuracies=list(accuracies),
        state=None,
        completed=completed,
        error=None if completed else "boom",
    )


def small_dataset(seed=0, n=14):
    cov = 0.36 * np.eye(2)
    specs = [
        ([0.0, 0.0], cov, n),
        ([4.0, 0.0], cov, n),
        ([2.0, 3.5], cov, n),
    ]
    return generate_gaussian_mixture(specs, seed=seed)


class TestAggregate:
    def test_mean_and_population_std(self):
        curve = aggregate([history([0.4, 0.8]), history([0.6, 1.0])], "h")
        np.testing.assert_allclose(curve.mean_accuracy, [0.5, 0.9])
        # population std (ddof 0): sqrt(mean((x - mean)^2)) = 0.1 exactly
        np.testing.assert_allclose(curve.std_accuracy, [0.1, 0.1])
        assert curve.n_trials == 2
        assert curve.config_hash == "h"
        assert curve.heuristic_id == "ms"
        np.testing.assert_array_equal(curve.labels_used, [6, 10])

    def test_single_trial_std_zero(self):
        curve = aggregate([history([0.75])])
        np.testing.assert_array_equal(curve.std_accuracy, [0.0])
        assert curve.n_trials == 1

    def test_failed_trials_dropped_with_warning(self, caplog):
        trials = [history([0.4, 0.8]), history([0.0], completed=False)]
        with caplog.at_level("WARNING", logger="activepool.bench"):
            curve = aggregate(trials)
        assert curve.n_trials == 1
        np.testing.assert_allclose(curve.mean_accuracy, [0.4, 0.8])
        assert "aggregating 1 of 2 trials" in caplog.text

    def test_no_completed_trials(self):
        with pytest.raises(ValueError, match="no completed trials"):
            aggregate([history([0.5], completed=False)])

    def test_grid_mismatch(self):
        trials = [history([0.4, 0.8]), history([0.5, 0.9], labels_used=[6, 11])]
        with pytest.raises(ValueError, match="disagree on the labels_used grid"):
            aggregate(trials)


def make_curve(hid, means, used=(6, 10), stds=None):
    means = np.asarray(means, dtype=float)
    if stds is None:
        stds = np.zeros_like(means)
    return LearningCurve(
        heuristic_id=hid,
        labels_used=np.asarray(used, dtype=np.int64),
        mean_accuracy=means,
        std_accuracy=np.asarray(stds, dtype=float),
        n_trials=3,
    )


class TestCompare:
    def test_rows_sorted_and_diffed(self):
        curves = {
            "random": make_curve("random", [0.5, 0.7]),
            "ms": make_curve("ms", [0.6, 0.9]),
            "bt": make_curve("bt", [0.4, 0.8]),
        }
        rows = compare(curves, budget=10)
        assert [r.heuristic_id for r in rows] == ["ms", "bt", "random"]
        by_id = {r.heuristic_id: r for r in rows}
        assert by_id["random"].diff_vs_random == 0.0
        np.testing.assert_allclose(by_id["ms"].diff_vs_random, 0.2)
        np.testing.assert_allclose(by_id["bt"].diff_vs_random, 0.1)
        assert isinstance(rows[0], CompareRow)

    def test_mean_ties_break_on_id(self):
        curves = {
            "random": make_curve("random", [0.5]),
            "ms": make_curve("ms", [0.5]),
            "bt": make_curve("bt", [0.5]),
        }
        rows = compare(curves, budget=6)
        assert [r.heuristic_id for r in rows] == ["bt", "ms", "random"]

    def test_missing_random_baseline(self):
        with pytest.raises(ValueError, match="random baseline"):
            compare({"ms": make_curve("ms", [0.5])}, budget=6)

    def test_budget_off_grid(self):
        curves = {"random": make_curve("random", [0.5, 0.7])}
        with pytest.raises(ValueError, match=r"budget 7 is not on the evaluation grid"):
            compare(curves, budget=7)


class TestConfigValidation:
    def test_defaults_pass(self):
        ExperimentConfig().validate()

    @pytest.mark.parametrize(
        "kwargs, message",
        [
            (dict(classifier="forest"), "unknown classifier"),
            (dict(heuristics=()), "no heuristics"),
            (dict(heuristics=("margin",)), "unknown heuristic"),
            (dict(heuristics=("ms", "ms")), "duplicate heuristic"),
            (dict(heuristics=("ms",), classifier="lda"), "per-class decision values"),
            (dict(heuristic_params={"bt": {}}), "unused heuristic"),
            (dict(q="n+7"), "q must be"),
            (dict(q=0), "q must be >= 1"),
            (dict(trials=0), "trials"),
            (dict(per_class_initial=0), "per_class_initial"),
            (dict(pool_size=0), "pool_size"),
            (dict(kernel_kind="poly"), "kernel kind"),
            (dict(max_iterations=-1), "max_iterations"),
            (dict(label_budget=0), "label_budget"),
            (dict(eval_every=0), "eval_every"),
            (dict(heuristics=("kl-max",)), "retrains per candidate"),
        ],
    )
    def test_rejects(self, kwargs, message):
        with pytest.raises(ConfigError, match=message):
            ExperimentConfig(**kwargs).validate()

    def test_kl_max_allowed_with_lda_or_override(self):
        ExperimentConfig(heuristics=("kl-max",), classifier="lda").validate()
        ExperimentConfig(
            heuristics=("kl-max",),
            heuristic_params={"kl-max": {"allow_svm": True}},
        ).validate()

    def test_resolve_q(self):
        assert ExperimentConfig(q="n+5").resolve_q(3) == 8
        assert ExperimentConfig(q="n+20").resolve_q(4) == 24
        assert ExperimentConfig(q=12).resolve_q(3) == 12


class TestResolveWorkers:
    def test_explicit_value(self, monkeypatch):
        monkeypatch.setenv("AL_THREADS", "3")
        assert resolve_workers() == 3

    def test_default_is_bounded(self, monkeypatch):
        monkeypatch.delenv("AL_THREADS", raising=False)
        assert 1 <= resolve_workers() <= 4

    @pytest.mark.parametrize("raw", ["0", "-2", "two"])
    def test_rejects_bad_values(self, monkeypatch, raw):
        monkeypatch.setenv("AL_THREADS", raw)
        with pytest.raises(ConfigError, match="AL_THREADS"):
            resolve_workers()


def lda_config(**overrides):
    base = dict(
        heuristics=("bt",),
        classifier="lda",
        q=3,
        trials=2,
        max_iterations=2,
        per_class_initial=2,
        pool_size=12,
        master_seed=5,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestRunExperiment:
    def test_random_baseline_added_and_curves_shaped(self, monkeypatch):
        monkeypatch.setenv("AL_THREADS", "1")
        dataset = small_dataset()
        result = run_experiment(dataset, lda_config())
        assert set(result.curves) == {"bt", "random"}
        for curve in result.curves.values():
            np.testing.assert_array_equal(curve.labels_used, [6, 9, 12])
            assert curve.n_trials == 2
            assert curve.config_hash == result.config_hash
            assert np.all(curve.mean_accuracy >= 0.0)
            assert np.all(curve.mean_accuracy <= 1.0)
        assert result.failures == ()
        assert len(result.standard_per_trial) == 2
        np.testing.assert_allclose(
            result.standard_mean, np.mean(result.standard_per_trial)
        )

    def test_standard_reference_matches_manual_fit(self, monkeypatch):
        """The reference row is a plain fit on the whole training universe."""
        monkeypatch.setenv("AL_THREADS", "1")
        dataset = small_dataset()
        config = lda_config()
        result = run_experiment(dataset, config)
        split = stratified_split(
            dataset,
            config.per_class_initial,
            config.pool_size,
            seed=derive_seed(config.master_seed, bench._TAG_SPLIT, 0),
            standardize=config.standardize,
        )
        features = split.transform_features(dataset)
        universe = np.sort(np.concatenate([split.labeled_idx, split.pool_idx]))
        model = LdaTrainer(shrinkage=config.lda_shrinkage).fit(
            features[universe], dataset.labels[universe], dataset.n_classes
        )
        predicted = model.predict(features[split.test_idx])
        expected = float(np.mean(predicted == dataset.labels[split.test_idx]))
        np.testing.assert_allclose(result.standard_per_trial[0], expected)

    def test_thread_count_never_changes_results(self, monkeypatch):
        dataset = small_dataset()
        monkeypatch.setenv("AL_THREADS", "1")
        serial = run_experiment(dataset, lda_config())
        monkeypatch.setenv("AL_THREADS", "3")
        threaded = run_experiment(dataset, lda_config())
        assert serial.config_hash == threaded.config_hash
        assert serial.standard_per_trial == threaded.standard_per_trial
        for hid in serial.curves:
            np.testing.assert_array_equal(
                serial.curves[hid].mean_accuracy, threaded.curves[hid].mean_accuracy
            )
            np.testing.assert_array_equal(
                serial.curves[hid].std_accuracy, threaded.curves[hid].std_accuracy
            )

    def test_svm_path_with_pinned_hyperparameters(self, monkeypatch):
        monkeypatch.setenv("AL_THREADS", "1")
        dataset = small_dataset()
        config = ExperimentConfig(
            heuristics=("ms",),
            classifier="svm",
            q=3,
            trials=2,
            max_iterations=1,
            per_class_initial=2,
            pool_size=12,
            svm_c=10.0,
            svm_gamma=0.5,
            master_seed=3,
        )
        result = run_experiment(dataset, config)
        assert set(result.curves) == {"ms", "random"}
        lines = dict(line.split("=", 1) for line in result.config_lines)
        assert lines["svm_c"] == repr(10.0)
        assert lines["svm_gamma"] == repr(0.5)

    def test_hyperparameters_resolved_by_cross_validation(self, monkeypatch, caplog):
        monkeypatch.setenv("AL_THREADS", "1")
        dataset = small_dataset()
        config = ExperimentConfig(
            heuristics=("ms",),
            classifier="svm",
            q=3,
            trials=1,
            max_iterations=1,
            per_class_initial=2,
            pool_size=12,
            svm_c=None,
            svm_gamma=0.5,
            cv_folds=3,
            master_seed=3,
        )
        with caplog.at_level("INFO", logger="activepool.bench"):
            result = run_experiment(dataset, config)
        assert "resolved hyperparameters" in caplog.text
        lines = dict(line.split("=", 1) for line in result.config_lines)
        assert float(lines["svm_c"]) > 0.0

    def test_config_hash_is_sha256_of_lines(self, monkeypatch):
        import hashlib

        monkeypatch.setenv("AL_THREADS", "1")
        result = run_experiment(small_dataset(), lda_config())
        digest = hashlib.sha256("\n".join(result.config_lines).encode()).hexdigest()
        assert result.config_hash == digest

    def test_heuristic_params_appear_in_config_lines(self, monkeypatch):
        monkeypatch.setenv("AL_THREADS", "1")
        config = lda_config(
            heuristics=("bt", "neqb"),
            heuristic_params={"neqb": {"k_members": 4, "bag_fraction": 0.9}},
        )
        result = run_experiment(small_dataset(), config)
        joined = "\n".join(result.config_lines)
        assert "params[neqb]=bag_fraction=0.9,k_members=4" in joined

    def test_empty_test_set_rejected(self):
        dataset = small_dataset(n=6)
        with pytest.raises(ConfigError, match="no samples left"):
            run_experiment(dataset, lda_config(pool_size=12))


class TestExportAndLoad:
    def build(self, monkeypatch, tmp_path, subdir):
        monkeypatch.setenv("AL_THREADS", "1")
        result = run_experiment(small_dataset(), lda_config())
        out = tmp_path / subdir
        written = export(result, out)
        return result, out, written

    def test_file_set(self, monkeypatch, tmp_path):
        _, out, written = self.build(monkeypatch, tmp_path, "a")
        names = sorted(p.name for p in written)
        assert names == ["config.txt", "curve_bt.csv", "curve_random.csv", "summary.csv"]
        assert all(p.parent == out for p in written)

    def test_round_trip_is_exact(self, monkeypatch, tmp_path):
        result, out, _ = self.build(monkeypatch, tmp_path, "a")
        for hid, curve in result.curves.items():
            loaded = load_curve(out / f"curve_{hid}.csv")
            assert loaded.heuristic_id == hid
            np.testing.assert_array_equal(loaded.labels_used, curve.labels_used)
            # repr round-trips floats exactly, so equality is the contract
            np.testing.assert_array_equal(loaded.mean_accuracy, curve.mean_accuracy)
            np.testing.assert_array_equal(loaded.std_accuracy, curve.std_accuracy)

    def test_rerun_is_byte_identical(self, monkeypatch, tmp_path):
        _, first, _ = self.build(monkeypatch, tmp_path, "a")
        _, second, _ = self.build(monkeypatch, tmp_path, "b")
        for path in sorted(first.iterdir()):
            twin = second / path.name
            assert path.read_bytes() == twin.read_bytes()

    def test_summary_contains_standard_row(self, monkeypatch, tmp_path):
        result, out, _ = self.build(monkeypatch, tmp_path, "a")
        lines = (out / "summary.csv").read_text().strip().splitlines()
        assert lines[0] == "heuristic,labels_used,mean_acc,std_acc,n_trials"
        standard = [line for line in lines if line.startswith("standard,")]
        assert len(standard) == 1
        fields = standard[0].split(",")
        np.testing.assert_allclose(float(fields[2]), result.standard_mean)
        assert fields[4] == "2"

    def test_load_curve_rejects_wrong_header(self, tmp_path):
        path = tmp_path / "curve_ms.csv"
        path.write_text("labels,acc\n6,0.5\n")
        with pytest.raises(ValueError, match="not a curve file"):
            load_curve(path)

    def test_load_curve_name_without_prefix(self, tmp_path):
        path = tmp_path / "mystery.csv"
        path.write_text(CURVE_HEADER + "\n6,0.5,0.0\n")
        assert load_curve(path).heuristic_id == "mystery"
