"""Command-line entry point: train, evaluate, sweep k, train h-HFAE, summarize."""

from __future__ import annotations

import math
import sys
from argparse import ArgumentParser, Namespace
from logging import DEBUG, INFO, WARNING, basicConfig, getLogger
from pathlib import Path
from typing import (
    TYPE_CHECKING,
    Callable,
    Sequence,
)

import yaml

from fractal_ae._datasets import (
    NORMALIZATIONS,
    PROFILES,
    Dataset,
    SplitSpec,
    load_dataset,
    prepare_splits,
    profile_k,
    split,
    split_holdout,
)
from fractal_ae._evalkit import (
    MetricsRow,
    append_metrics,
    classify_selection,
    fit_linear_decoder,
    read_metrics,
    recon_error,
    subnet_recon_error,
    summarize,
    write_summary,
)
from fractal_ae._hfae import DEFAULT_LAMBDA0, HierarchicalSelection, HierarchyParams
from fractal_ae._metadata import run_metadata, write_metadata
from fractal_ae._models import (
    DEFAULT_BATCH,
    L1_MODES,
    RECON_NORMS,
    Hyperparams,
    Method,
)
from fractal_ae._selector import FeatureSelector
from fractal_ae._types import (
    ContractViolationError,
    FractalAEBaseException,
    NumericalError,
)

if TYPE_CHECKING:
    from fractal_ae._models import SelectionResult

LOGGER = getLogger(__name__)


def _add_data_args(parser: ArgumentParser) -> None:
    group = parser.add_argument_group("data")
    group.add_argument("--dataset", help="CSV file or IDX image file")
    group.add_argument("--format", choices=("csv", "idx"), default="csv")
    group.add_argument("--labels", help="IDX label file paired with --dataset")
    group.add_argument("--name", help="dataset name in metrics (default: file stem)")
    group.add_argument("--has-header", action="store_true")
    group.add_argument(
        "--label-column",
        help="CSV label column, as a 0-based index or a header name",
    )
    group.add_argument(
        "--normalization",
        choices=NORMALIZATIONS,
        help="train-fitted scaling (default: minmax for csv, none for idx)",
    )
    group.add_argument("--split-seed", type=int, default=0)
    group.add_argument(
        "--mnist-protocol",
        action="store_true",
        help="draw train+val from --dataset and test from --test-dataset",
    )
    group.add_argument("--test-dataset", help="separate test file")
    group.add_argument("--test-labels", help="IDX label file for --test-dataset")
    group.add_argument("--n-trainval", type=int, default=6000)
    group.add_argument("--n-test", type=int, default=4000)


def _add_model_args(parser: ArgumentParser, *, method: bool = True) -> None:
    group = parser.add_argument_group("model")
    if method:
        group.add_argument(
            "--method", choices=[m.value for m in Method], default=Method.FAE.value
        )
    group.add_argument("--k", type=int, help="number of selected features")
    group.add_argument("--profile", choices=("opt1", "opt2"))
    group.add_argument("--family", choices=sorted(PROFILES))
    group.add_argument("--latent-dim", type=int, help="default: k")
    group.add_argument("--lambda1", type=float, default=2.0)
    group.add_argument("--lambda2", type=float, default=0.1)
    group.add_argument("--epochs", type=int, default=1000)
    group.add_argument("--lr", type=float, default=0.001)
    group.add_argument(
        "--batch",
        type=_batch_size,
        default=DEFAULT_BATCH,
        help=f"mini-batch size or 'full' (default: {DEFAULT_BATCH})",
    )
    group.add_argument("--seed", type=int, default=0)
    group.add_argument("--repeats", type=int, default=1)
    group.add_argument("--l1-mode", choices=L1_MODES, default="mean")
    group.add_argument("--recon-norm", choices=RECON_NORMS, default="mean")
    group.add_argument("--log-every", type=int, default=100)
    group.add_argument(
        "--final-weights",
        action="store_true",
        help="keep last-epoch parameters instead of the best validation epoch",
    )
    group.add_argument("--h", type=int, default=3, help="hfae group count")
    group.add_argument("--lambda0", type=float, default=DEFAULT_LAMBDA0)
    group.add_argument(
        "--hierarchy-lambdas",
        help="comma-separated group weights (default: 1.5,2,3 for h=3)",
    )


def _add_eval_args(parser: ArgumentParser) -> None:
    group = parser.add_argument_group("evaluation")
    group.add_argument("--trees", type=int, default=100)
    group.add_argument("--n-jobs", type=int, default=1)


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="fractal-ae",
        description="Linear fractal autoencoders for unsupervised feature selection.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("--verbose", "-v", action="store_true")
    verbosity.add_argument("--quiet", "-q", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="train and write checkpoints")
    _add_data_args(train)
    _add_model_args(train)
    train.add_argument("--out", type=Path, default=Path("runs"))

    evaluate = sub.add_parser("eval", help="score a checkpoint on a dataset")
    evaluate.add_argument("--checkpoint", type=Path, required=True)
    _add_data_args(evaluate)
    _add_eval_args(evaluate)
    evaluate.add_argument("--metrics", type=Path, default=Path("metrics.csv"))

    sweep = sub.add_parser("sweep-k", help="train and evaluate for several k")
    sweep.add_argument("--config", type=Path, help="YAML file of flag values")
    _add_data_args(sweep)
    _add_model_args(sweep)
    _add_eval_args(sweep)
    sweep.add_argument("--ks", type=int, nargs="+", help="values of k to sweep")
    sweep.add_argument("--out", type=Path, default=Path("runs"))
    sweep.add_argument("--metrics", type=Path, help="default: OUT/sweep.csv")

    hfae = sub.add_parser("hfae", help="train h-HFAE and score every group")
    _add_data_args(hfae)
    _add_model_args(hfae, method=False)
    _add_eval_args(hfae)
    hfae.add_argument("--out", type=Path, default=Path("runs"))
    hfae.add_argument("--metrics", type=Path, help="default: OUT/metrics.csv")

    summ = sub.add_parser("summarize", help="mean and standard error across seeds")
    summ.add_argument("--metrics", type=Path, required=True)
    summ.add_argument("--out", type=Path, default=Path("summary.csv"))
    return parser


def _batch_size(raw: str) -> int | None:
    return None if raw == "full" else int(raw)


def _label_column(raw: str | None) -> int | str | None:
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        return raw


def load_splits(args: Namespace) -> tuple[Dataset, Dataset, Dataset]:
    """Load, split and scale the dataset named by the data flags."""

    if args.dataset is None:
        msg = f"{args.command} needs --dataset"
        raise ContractViolationError(msg)
    label_column = _label_column(args.label_column)
    data = load_dataset(
        args.dataset,
        args.format,
        labels=args.labels,
        has_header=args.has_header,
        label_column=label_column,
    )
    if args.mnist_protocol:
        if args.test_dataset is None:
            msg = "--mnist-protocol needs --test-dataset"
            raise ContractViolationError(msg)
        test_file = load_dataset(
            args.test_dataset,
            args.format,
            labels=args.test_labels,
            has_header=args.has_header,
            label_column=label_column,
        )
        parts = split_holdout(
            data,
            test_file,
            n_trainval=args.n_trainval,
            n_test=args.n_test,
            seed=args.split_seed,
        )
    else:
        parts = split(data, SplitSpec(seed=args.split_seed))

    normalization = args.normalization
    if normalization is None:
        normalization = "none" if args.format == "idx" else "minmax"
    train, val, test = prepare_splits(parts[0], parts[1:], normalization)
    LOGGER.info(
        "loaded %s: m=%d, %d/%d/%d train/val/test rows, %s scaling",
        args.dataset,
        train.m,
        train.n,
        val.n,
        test.n,
        normalization,
    )
    return train, val, test


def _resolve_k(args: Namespace) -> int:
    if args.k is not None:
        return int(args.k)
    if args.profile is not None and args.family is not None:
        return profile_k(args.family, args.profile)
    msg = "give --k, or --profile together with --family"
    raise ContractViolationError(msg)


def _hyperparams(args: Namespace, k: int, seed: int) -> Hyperparams:
    return Hyperparams(
        k=k,
        d=args.latent_dim,
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        lr=args.lr,
        epochs=args.epochs,
        batch=args.batch,
        seed=seed,
        l1_mode=args.l1_mode,
        recon_norm=args.recon_norm,
        log_every=args.log_every,
        use_best=not args.final_weights,
    )


def _hierarchy(args: Namespace, k: int) -> HierarchyParams:
    if args.hierarchy_lambdas is None:
        return HierarchyParams(args.h, k, args.lambda0)
    lambdas = tuple(float(v) for v in args.hierarchy_lambdas.split(","))
    return HierarchyParams(args.h, k, args.lambda0, lambdas)


def _dataset_name(args: Namespace) -> str:
    return str(args.name or Path(args.dataset).name.split(".")[0])


def train_run(
    args: Namespace,
    method: Method,
    k: int,
    seed: int,
    splits: tuple[Dataset, Dataset, Dataset],
) -> tuple[FeatureSelector, Path]:
    """Train one model and write its artifacts under OUT/<method>-k<k>-seed<seed>."""

    train, val, test = splits
    hp = _hyperparams(args, k, seed)
    hierarchy = _hierarchy(args, k) if method is Method.HFAE else None
    selector = FeatureSelector(hp, method, hierarchy).fit(train.x, val.x)
    assert selector.report is not None

    run_dir = Path(args.out) / f"{method.value}-k{k}-seed{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    selector.save(run_dir / "checkpoint.npz")
    selector.report.to_csv(run_dir / "loss.csv")
    groups = (
        selector.groups()
        if hierarchy is not None
        else HierarchicalSelection([selector.select()])
    )
    groups.to_csv(run_dir / "selection.csv")
    write_metadata(
        run_dir / "metadata.json",
        run_metadata(
            argv=args.argv,
            command=args.command,
            method=method.value,
            hyperparams=hp.to_dict(),
            hierarchy=None if hierarchy is None else hierarchy.to_dict(),
            rng=selector.report.rng,
            split_seed=args.split_seed,
            training=selector.report.summary(),
            data={
                "train": train.provenance,
                "val": val.provenance,
                "test": test.provenance,
            },
        ),
    )
    LOGGER.info("wrote %s", run_dir)
    return selector, run_dir


def _selections(selector: FeatureSelector) -> list[tuple[str, SelectionResult]]:
    if selector.hierarchy is None:
        return [("all", selector.select())]
    groups = selector.groups()
    return [
        *((str(i + 1), g) for i, g in enumerate(groups.groups)),
        ("all", groups.union()),
    ]


def evaluate_run(
    args: Namespace,
    selector: FeatureSelector,
    splits: tuple[Dataset, Dataset, Dataset],
    seed: int,
) -> list[MetricsRow]:
    """Linear reconstruction and extra-trees accuracy of every selected group.

    Raises:
        NumericalError: a metric is not finite.
    """

    train, _, test = splits
    if train.m != selector.encoder_decoder.n_features:
        msg = (
            f"checkpoint has {selector.encoder_decoder.n_features} features, "
            f"dataset has {train.m}"
        )
        raise ContractViolationError(msg)
    rows = []
    for group, sel in _selections(selector):
        decoder = fit_linear_decoder(train.x, sel)
        recon = recon_error(test.x, sel, decoder)
        subnet = subnet_recon_error(
            test.x, selector.weights, selector.encoder_decoder, sel
        )
        acc = None
        if train.labels is not None and test.labels is not None:
            acc = classify_selection(
                train.x,
                train.labels,
                test.x,
                test.labels,
                sel,
                n_trees=args.trees,
                seed=seed,
                n_jobs=args.n_jobs,
            )
        if not all(math.isfinite(v) for v in (recon, subnet, acc or 0.0)):
            msg = f"non-finite metrics for group {group}: {recon}, {subnet}, {acc}"
            raise NumericalError(msg)
        row = MetricsRow(
            _dataset_name(args),
            selector.method.value,
            sel.k,
            selector.hp.seed,
            recon,
            acc,
            group,
            subnet,
        )
        LOGGER.info("%s", row)
        rows.append(row)
    return rows


def cmd_train(args: Namespace) -> None:
    splits = load_splits(args)
    k = _resolve_k(args)
    for r in range(args.repeats):
        train_run(args, Method(args.method), k, args.seed + r, splits)


def cmd_eval(args: Namespace) -> None:
    selector = FeatureSelector.load(args.checkpoint)
    splits = load_splits(args)
    append_metrics(args.metrics, evaluate_run(args, selector, splits, selector.hp.seed))


def cmd_sweep_k(args: Namespace) -> None:
    if not args.ks:
        msg = "sweep-k needs --ks or a 'ks' entry in --config"
        raise ContractViolationError(msg)
    splits = load_splits(args)
    metrics = args.metrics or Path(args.out) / "sweep.csv"
    Path(metrics).parent.mkdir(parents=True, exist_ok=True)
    for r in range(args.repeats):
        seed = args.seed + r
        for k in args.ks:
            selector, _ = train_run(args, Method(args.method), k, seed, splits)
            append_metrics(metrics, evaluate_run(args, selector, splits, seed))


def cmd_hfae(args: Namespace) -> None:
    splits = load_splits(args)
    k = _resolve_k(args)
    metrics = args.metrics or Path(args.out) / "metrics.csv"
    Path(metrics).parent.mkdir(parents=True, exist_ok=True)
    for r in range(args.repeats):
        seed = args.seed + r
        selector, _ = train_run(args, Method.HFAE, k, seed, splits)
        append_metrics(metrics, evaluate_run(args, selector, splits, seed))


def cmd_summarize(args: Namespace) -> None:
    summaries = summarize(read_metrics(args.metrics))
    write_summary(args.out, summaries)
    LOGGER.info("summarized %d groups into %s", len(summaries), args.out)


COMMANDS: dict[str, Callable[[Namespace], None]] = {
    "train": cmd_train,
    "eval": cmd_eval,
    "sweep-k": cmd_sweep_k,
    "hfae": cmd_hfae,
    "summarize": cmd_summarize,
}


def config_flags(path: Path) -> list[str]:
    """Turn a YAML mapping of flag names to values into command-line flags.

    `true` becomes a bare switch and `false` or null omits the flag; lists expand
    to several values.
    """

    with open(path, encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict):
        msg = f"{path}: config must be a mapping of flag names to values"
        raise ContractViolationError(msg)
    flags: list[str] = []
    for key, value in raw.items():
        flag = "--" + str(key).replace("_", "-")
        if value is None or value is False:
            continue
        if value is True:
            flags.append(flag)
        elif isinstance(value, list):
            flags.extend([flag, *(str(v) for v in value)])
        else:
            flags.extend([flag, str(value)])
    return flags


def parse_args(argv: Sequence[str] | None = None) -> Namespace:
    """Parse `argv`; for sweep-k, --config values apply unless given as flags."""

    parser = build_parser()
    tokens = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(tokens)
    if getattr(args, "config", None) is not None:
        # Flags given later on the command line override the config ones:
        at = tokens.index(args.command) + 1
        tokens = [*tokens[:at], *config_flags(args.config), *tokens[at:]]
        args = parser.parse_args(tokens)
    args.argv = tokens
    return args


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except (FractalAEBaseException, OSError) as e:
        basicConfig()
        LOGGER.error("%s", e)
        return 1

    level = DEBUG if args.verbose else WARNING if args.quiet else INFO
    basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except (FractalAEBaseException, OSError) as e:
        LOGGER.error("%s failed: %s", args.command, e)
        return 1
    return 0
