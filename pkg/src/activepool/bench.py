"""Benchmark harness: repeated-trial learning curves and their exports.

An experiment runs every requested heuristic over the same per-trial
stratified splits (plus the uniform-random baseline, added when absent, and
a "standard" reference fit on the initial set and pool together), aggregates
the per-trial curves pointwise and writes them to CSV. All randomness
derives from one master seed per documented tags, so reruns are
byte-identical; hyperparameters are resolved once up front (refits during a
run would break that, so the harness keeps ``refit_every=0``).

Worker threads are capped by the ``AL_THREADS`` environment variable;
results are keyed by task, so the thread count never changes the output.
"""

from __future__ import annotations

import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._seeds import derive_seed
from .dataset import Dataset, stratified_split
from .engine import (
    HEURISTIC_IDS,
    MARGIN_IDS,
    StoppingRule,
    TrialHistory,
    build_heuristic,
    run_curve,
)
from .kernels import KernelConfig
from .models import LdaTrainer, SvmTrainer, cross_validate

logger = logging.getLogger(__name__)

_TAG_SPLIT = 11
_TAG_RUN = 12
_TAG_CV = 13
_TAG_DATA = 14

CURVE_HEADER = "labels_used,mean_acc,std_acc"


class ConfigError(ValueError):
    """Invalid experiment configuration (maps to exit code 2 in the CLI)."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one benchmark run."""

    heuristics: tuple = ("ms", "random")
    heuristic_params: dict = field(default_factory=dict)
    classifier: str = "svm"
    q: int | str = "n+5"
    trials: int = 10
    max_iterations: int | None = None
    label_budget: int | None = None
    per_class_initial: int = 5
    pool_size: int = 300
    standardize: bool = True
    svm_c: float | None = None
    svm_gamma: float | None = None
    kernel_kind: str = "rbf"
    lda_shrinkage: float = 0.1
    cv_folds: int = 5
    eval_every: int = 1
    master_seed: int = 0

    def validate(self):
        if self.classifier not in ("svm", "lda"):
            raise ConfigError(f"unknown classifier {self.classifier!r}")
        if not self.heuristics:
            raise ConfigError("no heuristics requested")
        seen = set()
        for hid in self.heuristics:
            if hid not in HEURISTIC_IDS:
                raise ConfigError(f"unknown heuristic {hid!r}; expected one of {HEURISTIC_IDS}")
            if hid in seen:
                raise ConfigError(f"duplicate heuristic {hid!r}")
            seen.add(hid)
            if self.classifier == "lda" and hid in MARGIN_IDS:
                raise ConfigError(
                    f"heuristic {hid!r} needs per-class decision values; "
                    "use the svm classifier"
                )
        for hid in self.heuristic_params:
            if hid not in self.heuristics:
                raise ConfigError(f"parameters given for unused heuristic {hid!r}")
        if isinstance(self.q, str) and self.q not in ("n+5", "n+20"):
            raise ConfigError(f"q must be an integer, 'n+5' or 'n+20', got {self.q!r}")
        if isinstance(self.q, int) and self.q < 1:
            raise ConfigError("q must be >= 1")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.per_class_initial < 1:
            raise ConfigError("per_class_initial must be >= 1")
        if self.pool_size < 1:
            raise ConfigError("pool_size must be >= 1")
        if self.kernel_kind not in ("rbf", "linear"):
            raise ConfigError(f"unknown kernel kind {self.kernel_kind!r}")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ConfigError("max_iterations must be >= 0")
        if self.label_budget is not None and self.label_budget < 1:
            raise ConfigError("label_budget must be >= 1")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")
        # kl-max gating happens in the engine too, but failing at config time
        # gives a cleaner error and the right exit code.
        if self.classifier == "svm" and "kl-max" in self.heuristics:
            if not self.heuristic_params.get("kl-max", {}).get("allow_svm", False):
                raise ConfigError(
                    "kl-max retrains per candidate; use the lda classifier or "
                    "set the allow_svm heuristic parameter"
                )

    def resolve_q(self, n_classes: int) -> int:
        if isinstance(self.q, str):
            return n_classes + (5 if self.q == "n+5" else 20)
        return int(self.q)


@dataclass(frozen=True)
class LearningCurve:
    """Pointwise mean and population std of per-trial accuracy curves."""

    heuristic_id: str
    labels_used: np.ndarray
    mean_accuracy: np.ndarray
    std_accuracy: np.ndarray
    n_trials: int
    config_hash: str = ""


@dataclass
class ExperimentResult:
    curves: dict
    standard_mean: float
    standard_per_trial: tuple
    config_lines: tuple
    config_hash: str
    failures: tuple


def resolve_workers() -> int:
    """Worker-thread cap from AL_THREADS (default: up to 4 cores)."""
    raw = os.environ.get("AL_THREADS")
    if raw is None:
        return max(1, min(4, os.cpu_count() or 1))
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"AL_THREADS must be a positive integer, got {raw!r}") from None
    if value < 1:
        raise ConfigError(f"AL_THREADS must be a positive integer, got {raw!r}")
    return value


def aggregate(histories: list[TrialHistory], config_hash: str = "") -> LearningCurve:
    """Pointwise mean/std over completed trials (population std, ddof 0)."""
    completed = [h for h in histories if h.completed]
    if not completed:
        raise ValueError("no completed trials to aggregate")
    if len(completed) < len(histories):
        logger.warning(
            "aggregating %d of %d trials for %s (rest failed)",
            len(completed),
            len(histories),
            histories[0].heuristic_id,
        )
    grid = completed[0].labels_used
    for h in completed[1:]:
        if h.labels_used != grid:
            raise ValueError("trials disagree on the labels_used grid")
    acc = np.array([h.accuracies for h in completed])
    return LearningCurve(
        heuristic_id=completed[0].heuristic_id,
        labels_used=np.asarray(grid, dtype=np.int64),
        mean_accuracy=acc.mean(axis=0),
        std_accuracy=acc.std(axis=0, ddof=0),
        n_trials=len(completed),
        config_hash=config_hash,
    )


def _config_lines(config: ExperimentConfig, dataset: Dataset, resolved) -> tuple:
    kernel, c_penalty, q = resolved
    items = {
        "classifier": config.classifier,
        "cv_folds": config.cv_folds,
        "eval_every": config.eval_every,
        "heuristics": ",".join(config.heuristics),
        "kernel_kind": config.kernel_kind,
        "label_budget": config.label_budget,
        "lda_shrinkage": repr(config.lda_shrinkage),
        "master_seed": config.master_seed,
        "max_iterations": config.max_iterations,
        "n_classes": dataset.n_classes,
        "n_samples": dataset.n_samples,
        "per_class_initial": config.per_class_initial,
        "pool_size": config.pool_size,
        "q_raw": config.q,
        "q_resolved": q,
        "standardize": config.standardize,
        "trials": config.trials,
        "version": __version__,
    }
    if config.classifier == "svm":
        items["svm_c"] = repr(c_penalty)
        items["svm_gamma"] = repr(kernel.gamma) if kernel.kind == "rbf" else "n/a"
    for hid in sorted(config.heuristic_params):
        params = config.heuristic_params[hid]
        rendered = ",".join(f"{k}={params[k]!r}" for k in sorted(params))
        items[f"params[{hid}]"] = rendered
    return tuple(f"{key}={items[key]}" for key in sorted(items))


def run_experiment(dataset: Dataset, config: ExperimentConfig) -> ExperimentResult:
    """Run all heuristic/trial combinations and aggregate the curves.

    Per-trial splits are derived from the master seed and shared across
    heuristics (paired trials); the random baseline is appended when the
    configuration leaves it out.
    """
    config.validate()
    n_classes = dataset.n_classes
    q = config.resolve_q(n_classes)
    heuristic_ids = list(config.heuristics)
    if "random" not in heuristic_ids:
        heuristic_ids.append("random")

    splits = [
        stratified_split(
            dataset,
            config.per_class_initial,
            config.pool_size,
            seed=derive_seed(config.master_seed, _TAG_SPLIT, trial),
            standardize=config.standardize,
        )
        for trial in range(config.trials)
    ]
    for split in splits:
        if len(split.test_idx) == 0:
            raise ConfigError(
                "no samples left for the test set; reduce pool_size or per_class_initial"
            )

    # Resolve hyperparameters once per experiment so every heuristic, every
    # trial, and the standard reference share them (the comparison under test
    # is between heuristics, not model selections). Cross-validation runs on
    # the first trial's full training universe (initial set plus pool): the
    # standard reference consumes those labels anyway, and the initial set
    # alone is far too small to rank a 2-d hyperparameter grid.
    if config.classifier == "svm":
        if config.kernel_kind == "linear":
            kernel_grid = (KernelConfig("linear"),)
        elif config.svm_gamma is not None:
            kernel_grid = (KernelConfig("rbf", config.svm_gamma),)
        else:
            kernel_grid = None  # default gamma grid
        c_grid = None if config.svm_c is None else (config.svm_c,)
        kernel_fixed = config.kernel_kind == "linear" or config.svm_gamma is not None
        if config.svm_c is None or not kernel_fixed:
            features0 = splits[0].transform_features(dataset)
            universe0 = np.sort(np.concatenate([splits[0].labeled_idx, splits[0].pool_idx]))
            kernel, c_penalty = cross_validate(
                features0[universe0],
                dataset.labels[universe0],
                n_classes,
                kernel_grid=kernel_grid,
                c_grid=c_grid,
                folds=config.cv_folds,
                seed=derive_seed(config.master_seed, _TAG_CV),
            )
            logger.info("resolved hyperparameters: kernel=%s C=%g", kernel, c_penalty)
        else:
            kernel = kernel_grid[0]
            c_penalty = config.svm_c
        trainer = SvmTrainer(kernel=kernel, c_penalty=c_penalty)
    else:
        kernel, c_penalty = None, None
        trainer = LdaTrainer(shrinkage=config.lda_shrinkage)

    stopping = StoppingRule(
        max_iterations=config.max_iterations, label_budget=config.label_budget
    )

    def one_run(h_index: int, trial: int) -> TrialHistory:
        hid = heuristic_ids[h_index]
        params = config.heuristic_params.get(hid, {})
        return run_curve(
            dataset,
            splits[trial],
            hid,
            trainer,
            q,
            stopping=stopping,
            seed=derive_seed(config.master_seed, _TAG_RUN, trial, h_index),
            heuristic_params=params,
            refit_every=0,
            eval_every=config.eval_every,
        )

    tasks = [(h, t) for h in range(len(heuristic_ids)) for t in range(config.trials)]
    histories = {}
    workers = resolve_workers()
    if workers == 1:
        for h, t in tasks:
            histories[(h, t)] = one_run(h, t)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {key: pool.submit(one_run, *key) for key in tasks}
            for key, future in futures.items():
                histories[key] = future.result()

    resolved = (kernel, c_penalty, q)
    lines = _config_lines(config, dataset, resolved)
    config_hash = hashlib.sha256("\n".join(lines).encode()).hexdigest()

    curves = {}
    failures = []
    for h, hid in enumerate(heuristic_ids):
        per_trial = [histories[(h, t)] for t in range(config.trials)]
        for t, history in enumerate(per_trial):
            if not history.completed:
                failures.append(f"{hid} trial {t}: {history.error}")
        curves[hid] = aggregate(per_trial, config_hash)

    standard = []
    for trial in range(config.trials):
        split = splits[trial]
        features = split.transform_features(dataset)
        full = np.sort(np.concatenate([split.labeled_idx, split.pool_idx]))
        model = trainer.fit(features[full], dataset.labels[full], n_classes)
        predictions = model.predict(features[split.test_idx])
        standard.append(float(np.mean(predictions == dataset.labels[split.test_idx])))

    return ExperimentResult(
        curves=curves,
        standard_mean=float(np.mean(standard)),
        standard_per_trial=tuple(standard),
        config_lines=lines,
        config_hash=config_hash,
        failures=tuple(failures),
    )


@dataclass(frozen=True)
class CompareRow:
    heuristic_id: str
    mean_accuracy: float
    std_accuracy: float
    diff_vs_random: float


def compare(curves, budget: int) -> list[CompareRow]:
    """Rank heuristics by mean accuracy at one labels_used budget.

    The budget must be a point on every curve's evaluation grid, and the
    random baseline must be among the curves (its diff is zero by
    definition).
    """
    if "random" not in curves:
        raise ValueError("comparison needs the random baseline curve")
    values = {}
    for hid, curve in curves.items():
        where = np.flatnonzero(curve.labels_used == budget)
        if len(where) == 0:
            raise ValueError(
                f"budget {budget} is not on the evaluation grid of {hid!r} "
                f"(grid: {curve.labels_used.tolist()})"
            )
        point = int(where[0])
        values[hid] = (float(curve.mean_accuracy[point]), float(curve.std_accuracy[point]))
    random_mean = values["random"][0]
    rows = [
        CompareRow(hid, mean, std, mean - random_mean)
        for hid, (mean, std) in values.items()
    ]
    rows.sort(key=lambda r: (-r.mean_accuracy, r.heuristic_id))
    return rows


def export(result: ExperimentResult, out_dir) -> list[Path]:
    """Write curve_<id>.csv per heuristic, summary.csv and config.txt.

    Floats are written with ``repr`` so a read back reproduces them exactly;
    nothing time- or host-dependent is included, making repeated exports of
    the same result byte-identical.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for hid in sorted(result.curves):
        curve = result.curves[hid]
        lines = [CURVE_HEADER]
        for used, mean, std in zip(curve.labels_used, curve.mean_accuracy, curve.std_accuracy):
            lines.append(f"{int(used)},{float(mean)!r},{float(std)!r}")
        path = out / f"curve_{hid}.csv"
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        written.append(path)

    summary = ["heuristic,labels_used,mean_acc,std_acc,n_trials"]
    for hid in sorted(result.curves):
        curve = result.curves[hid]
        summary.append(
            f"{hid},{int(curve.labels_used[-1])},{float(curve.mean_accuracy[-1])!r},"
            f"{float(curve.std_accuracy[-1])!r},{curve.n_trials}"
        )
    per_trial = np.asarray(result.standard_per_trial)
    summary.append(
        f"standard,,{float(result.standard_mean)!r},{float(per_trial.std(ddof=0))!r},{len(per_trial)}"
    )
    path = out / "summary.csv"
    path.write_text("\n".join(summary) + "\n", encoding="utf-8")
    written.append(path)

    path = out / "config.txt"
    path.write_text("\n".join(result.config_lines) + "\n", encoding="utf-8")
    written.append(path)
    return written


def load_curve(path) -> LearningCurve:
    """Read one exported curve CSV back into a LearningCurve."""
    path = Path(path)
    text = path.read_text(encoding="utf-8").strip().splitlines()
    if not text or text[0] != CURVE_HEADER:
        raise ValueError(f"{path}: not a curve file (missing '{CURVE_HEADER}' header)")
    name = path.stem
    hid = name[len("curve_"):] if name.startswith("curve_") else name
    used, mean, std = [], [], []
    for line in text[1:]:
        a, b, c = line.split(",")
        used.append(int(a))
        mean.append(float(b))
        std.append(float(c))
    return LearningCurve(
        heuristic_id=hid,
        labels_used=np.array(used, dtype=np.int64),
        mean_accuracy=np.array(mean),
        std_accuracy=np.array(std),
        n_trials=0,
    )
