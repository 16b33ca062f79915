"""Command-line interface.

Three subcommands:

* ``synth``   — write a synthetic dataset to CSV;
* ``run``     — run a benchmark over CSV or synthetic data and export curves;
* ``compare`` — rank exported curves at a chosen label budget.

Exit codes: 0 on success, 2 on configuration/usage errors, 3 on runtime
failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from ._seeds import derive_seed
from .bench import (
    ConfigError,
    ExperimentConfig,
    compare,
    export,
    load_curve,
    run_experiment,
)
from .dataset import Dataset, generate_gaussian_mixture, generate_three_class_toy, load_csv
from .engine import HEURISTIC_IDS

logger = logging.getLogger(__name__)

_SEED_TAG_DATA = 21

# Five-class preset for `synth --kind mixture`: means on a circle, one shared
# mildly elongated covariance.
_MIXTURE_RADIUS = 3.0
_MIXTURE_COV = ((0.7, 0.15), (0.15, 0.7))


def _mixture_specs(n_per_class: int):
    specs = []
    for cls in range(5):
        angle = 2.0 * np.pi * cls / 5
        mean = (_MIXTURE_RADIUS * np.cos(angle), _MIXTURE_RADIUS * np.sin(angle))
        specs.append((mean, _MIXTURE_COV, n_per_class))
    return specs


def _generate(kind: str, n_per_class: int, seed: int) -> Dataset:
    if kind == "toy3":
        return generate_three_class_toy(n_per_class, seed)
    if kind == "mixture":
        return generate_gaussian_mixture(_mixture_specs(n_per_class), seed)
    raise ConfigError(f"unknown synthetic kind {kind!r}; expected toy3 or mixture")


def _write_csv(dataset: Dataset, path: Path):
    header = [f"f{i}" for i in range(dataset.n_features)] + ["label"]
    lines = [",".join(header)]
    for row, label in zip(dataset.features, dataset.labels):
        lines.append(",".join(repr(float(v)) for v in row) + f",{int(label)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _parse_synth_spec(spec: str) -> tuple[str, int]:
    """Parse 'toy3' / 'mixture' with an optional ':n=<count>' suffix."""
    kind, _, rest = spec.partition(":")
    n_per_class = 150
    if rest:
        key, _, value = rest.partition("=")
        if key != "n" or not value.isdigit() or int(value) < 1:
            raise ConfigError(f"bad synthetic spec {spec!r}; expected e.g. 'toy3:n=150'")
        n_per_class = int(value)
    if kind not in ("toy3", "mixture"):
        raise ConfigError(f"unknown synthetic kind {kind!r}; expected toy3 or mixture")
    return kind, n_per_class


def _parse_q(raw: str):
    if raw in ("n+5", "n+20"):
        return raw
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"q must be an integer, 'n+5' or 'n+20', got {raw!r}") from None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="activepool",
        description="Pool-based active-learning benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="write a synthetic dataset to CSV")
    p_synth.add_argument("--kind", choices=("toy3", "mixture"), required=True)
    p_synth.add_argument("--n", type=int, default=150, help="samples per class")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True, help="output CSV path")

    p_run = sub.add_parser("run", help="run a benchmark and export learning curves")
    source = p_run.add_mutually_exclusive_group(required=True)
    source.add_argument("--data", help="input CSV path")
    source.add_argument("--synth", help="synthetic spec, e.g. toy3 or mixture:n=120")
    p_run.add_argument("--label-col", default="label", help="label column name (CSV input)")
    p_run.add_argument("--classifier", choices=("svm", "lda"), default="svm")
    p_run.add_argument(
        "--heuristics",
        default="ms,random",
        help=f"comma-separated ids from: {', '.join(HEURISTIC_IDS)}",
    )
    p_run.add_argument("--q", default="n+5", help="batch size: integer, n+5 or n+20")
    p_run.add_argument("--trials", type=int, default=10)
    p_run.add_argument("--iters", type=int, default=None, help="max selection iterations")
    p_run.add_argument("--budget", type=int, default=None, help="label budget stop")
    p_run.add_argument("--seed", type=int, default=0, help="master seed")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--pool", type=int, default=300, help="candidate pool size")
    p_run.add_argument("--per-class-initial", type=int, default=5)
    p_run.add_argument("--no-standardize", action="store_true")
    p_run.add_argument("--kernel", choices=("rbf", "linear"), default="rbf")
    p_run.add_argument("--svm-c", type=float, default=None)
    p_run.add_argument("--svm-gamma", type=float, default=None)
    p_run.add_argument("--shrinkage", type=float, default=0.1, help="lda covariance shrinkage")
    p_run.add_argument("--subset-size", type=int, default=None, help="diversity pre-filter size")
    p_run.add_argument("--lambda", dest="lam", type=float, default=None, help="mclu-abd trade-off")
    p_run.add_argument("--committee-size", type=int, default=None)
    p_run.add_argument("--bag-fraction", type=float, default=None)
    p_run.add_argument("--views", type=int, default=None, help="amd view count")
    p_run.add_argument("--allow-svm-klmax", action="store_true")
    p_run.add_argument("--eval-every", type=int, default=1)

    p_cmp = sub.add_parser("compare", help="rank exported curves at one budget")
    p_cmp.add_argument("--dir", required=True, help="directory holding curve_*.csv files")
    p_cmp.add_argument("--budget", type=int, required=True, help="labels_used point to compare at")
    return parser


def _cmd_synth(args) -> int:
    dataset = _generate(args.kind, args.n, args.seed)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    _write_csv(dataset, out)
    print(f"wrote {dataset.n_samples} samples, {dataset.n_classes} classes to {out}")
    return 0


def _heuristic_params(args, heuristics) -> dict:
    params = {}

    def put(hid, key, value):
        if value is not None and hid in heuristics:
            params.setdefault(hid, {})[key] = value

    for hid in ("mao", "mclu-abd", "csv", "mclu-ecbd", "hmcs-i"):
        put(hid, "subset_size", args.subset_size)
    put("mclu-abd", "lambda", args.lam)
    put("neqb", "k_members", args.committee_size)
    put("neqb", "bag_fraction", args.bag_fraction)
    put("amd", "n_views", args.views)
    if args.allow_svm_klmax and "kl-max" in heuristics:
        params.setdefault("kl-max", {})["allow_svm"] = True
    return params


def _cmd_run(args) -> int:
    if args.data is not None:
        dataset = load_csv(args.data, args.label_col)
    else:
        kind, n_per_class = _parse_synth_spec(args.synth)
        dataset = _generate(kind, n_per_class, derive_seed(args.seed, _SEED_TAG_DATA))
    heuristics = tuple(h.strip() for h in args.heuristics.split(",") if h.strip())
    config = ExperimentConfig(
        heuristics=heuristics,
        heuristic_params=_heuristic_params(args, heuristics),
        classifier=args.classifier,
        q=_parse_q(args.q),
        trials=args.trials,
        max_iterations=args.iters,
        label_budget=args.budget,
        per_class_initial=args.per_class_initial,
        pool_size=args.pool,
        standardize=not args.no_standardize,
        svm_c=args.svm_c,
        svm_gamma=args.svm_gamma,
        kernel_kind=args.kernel,
        lda_shrinkage=args.shrinkage,
        eval_every=args.eval_every,
        master_seed=args.seed,
    )
    config.validate()
    result = run_experiment(dataset, config)
    written = export(result, args.out)
    for failure in result.failures:
        print(f"trial failed: {failure}", file=sys.stderr)
    print(f"standard reference accuracy: {result.standard_mean:.4f}")
    for hid in sorted(result.curves):
        curve = result.curves[hid]
        print(
            f"{hid}: final {curve.mean_accuracy[-1]:.4f} "
            f"(+/- {curve.std_accuracy[-1]:.4f}) at {int(curve.labels_used[-1])} labels "
            f"over {curve.n_trials} trials"
        )
    print(f"wrote {len(written)} files to {args.out}")
    return 0


def _cmd_compare(args) -> int:
    directory = Path(args.dir)
    if not directory.is_dir():
        raise ConfigError(f"{directory} is not a directory")
    paths = sorted(directory.glob("curve_*.csv"))
    if not paths:
        raise ConfigError(f"no curve_*.csv files in {directory}")
    curves = {}
    for path in paths:
        curve = load_curve(path)
        curves[curve.heuristic_id] = curve
    try:
        rows = compare(curves, args.budget)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(f"{'heuristic':<12} {'mean_acc':>9} {'std_acc':>9} {'vs_random':>10}")
    for row in rows:
        print(
            f"{row.heuristic_id:<12} {row.mean_accuracy:>9.4f} "
            f"{row.std_accuracy:>9.4f} {row.diff_vs_random:>+10.4f}"
        )
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "synth":
            return _cmd_synth(args)
        if args.command == "run":
            return _cmd_run(args)
        return _cmd_compare(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
