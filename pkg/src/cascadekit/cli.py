"""Command-line surface tying the modules into reproducible runs.

Subcommands: run, sweep, pareto, cost-report, comm-sim, errors, fetch,
synth, validate. Flags may also be supplied through an INI-style config
file (``--config``); explicit flags win. Every output is byte-stable
across repeated runs and thread counts.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 remote error.
Failures print a single machine-readable line to stderr:
``error: <kind>: <message>``.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import sys
from pathlib import Path
from typing import Sequence

from . import analysis, costmodel, dataset, engine
from .exceptions import RemoteError, ValidationError


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad usage through the exit-code contract."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ValidationError(message)


def _fail(kind: str, exc: BaseException) -> None:
    message = " ".join(str(exc).split())
    print(f"error: {kind}: {message}", file=sys.stderr)


def _parse_tiers(text: str) -> list[tuple[str, ...]]:
    tiers = []
    for part in text.split("|"):
        models = tuple(m.strip() for m in part.split(",") if m.strip())
        if not models:
            raise ValidationError(f"empty tier in --tiers {text!r}")
        tiers.append(models)
    return tiers


def _parse_thetas(text: str, num_tiers: int) -> list[float]:
    try:
        values = [float(v) for v in text.split("|")]
    except ValueError:
        raise ValidationError(f"bad --theta {text!r}") from None
    if len(values) == 1:
        values = values * num_tiers
    if len(values) != num_tiers:
        raise ValidationError(
            f"--theta needs 1 or {num_tiers} values, got {len(values)}"
        )
    return values


def _parse_floats(text: str, flag: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"bad {flag} {text!r}") from None


def _parse_ints(text: str, flag: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"bad {flag} {text!r}") from None


# config-file key behind each flag, as section.option
_CONFIG_KEYS = {
    "predictions": "paths.predictions",
    "profiles": "paths.profiles",
    "prices": "paths.prices",
    "label_map": "paths.label_map",
    "tiers": "cascade.tiers",
    "theta": "cascade.theta",
    "mode": "cascade.mode",
    "attribution": "cascade.attribution",
    "delays": "delays.canonical",
    "out": "run.out",
    "seed": "run.seed",
    "threads": "run.threads",
}

_INT_KEYS = {"seed", "threads"}


def _apply_config(args: argparse.Namespace) -> None:
    """Fill unset flags from the config file, if one was given."""
    config_path = getattr(args, "config", None)
    if config_path is None:
        return
    if not Path(config_path).is_file():
        raise ValidationError(f"config file {config_path!r} does not exist")
    parser = configparser.ConfigParser()
    try:
        parser.read(config_path, encoding="utf-8")
    except configparser.Error as exc:
        raise ValidationError(f"bad config file {config_path!r}: {exc}") from None
    for attr, key in _CONFIG_KEYS.items():
        if getattr(args, attr, None) is not None:
            continue
        if not hasattr(args, attr):
            continue
        section, option = key.split(".", 1)
        if parser.has_option(section, option):
            value = parser.get(section, option)
            setattr(args, attr, int(value) if attr in _INT_KEYS else value)


def _require(args: argparse.Namespace, *attrs: str) -> None:
    for attr in attrs:
        if getattr(args, attr, None) is None:
            raise ValidationError(f"--{attr.replace('_', '-')} is required")


def _check_file(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{flag} file {path!r} does not exist")
    return p


def _load_table(args: argparse.Namespace) -> dataset.PredictionTable:
    _require(args, "predictions")
    path = _check_file(args.predictions, "--predictions")
    label_map = None
    if getattr(args, "label_map", None):
        label_map = dataset.load_label_map(_check_file(args.label_map, "--label-map"))
    return dataset.load_predictions(
        path, label_space_size=getattr(args, "label_space", None), label_map=label_map
    )


def _load_prices(args: argparse.Namespace) -> dataset.GpuPriceList:
    if getattr(args, "prices", None):
        return dataset.load_prices(_check_file(args.prices, "--prices"))
    return dataset.load_prices(dataset.default_prices_path())


def _load_profiles(args: argparse.Namespace, prices: dataset.GpuPriceList) -> list[dataset.ModelProfile]:
    _require(args, "profiles")
    return dataset.load_profiles(_check_file(args.profiles, "--profiles"), prices)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(getattr(args, "out", None) or "outputs")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _resolve_fixture(name_or_path: str) -> Path:
    if Path(name_or_path).is_file():
        return Path(name_or_path)
    return dataset.builtin_fixture_path(name_or_path)


def _attribution(args: argparse.Namespace) -> str:
    value = getattr(args, "attribution", None) or "exit"
    mapping = {"exit": "exit_tier", "exit_tier": "exit_tier", "cumulative": "cumulative"}
    if value not in mapping:
        raise ValidationError(f"--attribution must be exit or cumulative, got {value!r}")
    return mapping[value]


def _cost_json(cost: costmodel.TierCost) -> dict[str, float]:
    return {
        "flops": cost.flops,
        "latency_ms": cost.latency_ms,
        "gpu_dollars_per_hour": cost.dollars_per_hour,
    }


def _write_json(payload: dict, path: Path) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _best_single(
    table: dataset.PredictionTable,
    model_ids: Sequence[str],
    profile_map: dict[str, dataset.ModelProfile],
    prices: dataset.GpuPriceList,
) -> tuple[str, float, costmodel.TierCost]:
    """Most accurate individual model; ties break to the smaller id."""
    best = min(model_ids, key=lambda mid: (-table.accuracy(mid), mid))
    profile = profile_map[best]
    cost = costmodel.TierCost(
        profile.flops_per_example, profile.latency_ms, prices.price(profile.gpu_tier)
    )
    return best, table.accuracy(best), cost


def cmd_run(args: argparse.Namespace) -> int:
    _require(args, "tiers", "theta")
    table = _load_table(args)
    prices = _load_prices(args)
    profiles = _load_profiles(args, prices)
    profile_map = {p.model_id: p for p in profiles}

    tier_models = _parse_tiers(args.tiers)
    thetas = _parse_thetas(args.theta, len(tier_models))
    execution_mode = getattr(args, "mode", None) or "parallel"
    spec = engine.CascadeSpec(
        tiers=tuple(engine.TierSpec(models, theta) for models, theta in zip(tier_models, thetas)),
        execution_mode=execution_mode,
        attribution_mode=_attribution(args),
    )
    spec.validate_against(table)
    for tier in spec.tiers:
        for mid in tier.model_ids:
            if mid not in profile_map:
                raise ValidationError(f"no profile for model {mid!r}")

    traces, fractions = engine.run_cascade(table, spec, threads=args.threads or 1)
    tier_costs = [
        costmodel.tier_cost([profile_map[mid] for mid in tier.model_ids], prices, execution_mode)
        for tier in spec.tiers
    ]
    gamma = costmodel.check_cost_ordering(tier_costs)

    cascade_models = sorted({mid for tier in spec.tiers for mid in tier.model_ids})
    best_id, best_acc, best_cost = _best_single(table, cascade_models, profile_map, prices)
    accuracy = sum(t.correct for t in traces) / len(traces)
    report = costmodel.aggregate(
        fractions,
        tier_costs,
        spec.attribution_mode,
        accuracy=accuracy,
        best_single=best_cost,
        best_single_accuracy=best_acc,
    )
    reductions = analysis.reduction_summary(report)

    out = _out_dir(args)
    engine.write_traces(traces, out / "traces.csv")
    costmodel.write_report_csv(report, out / "report.csv")
    _write_json(
        {
            "accuracy": accuracy,
            "exit_fractions": list(fractions),
            "coe": _cost_json(report.coe_row),
            "best_single": {"model_id": best_id, "accuracy": best_acc, **_cost_json(best_cost)},
            "reductions": {
                "flops": reductions.flops,
                "latency_ms": reductions.latency_ms,
                "dollars": reductions.dollars,
            },
            "max_adjacent_cost_ratio": gamma,
            "cascade": {
                "tiers": args.tiers,
                "theta": args.theta,
                "execution_mode": execution_mode,
                "attribution_mode": spec.attribution_mode,
                "seed": getattr(args, "seed", None),
            },
        },
        out / "summary.json",
    )
    print(f"accuracy={accuracy:.4f} gpu_dollars={report.coe_row.dollars_per_hour:.2f}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    _require(args, "pool", "sizes", "thetas")
    table = _load_table(args)
    prices = _load_prices(args)
    profiles = _load_profiles(args, prices)
    pool = tuple(_parse_tiers(args.pool))
    spec = analysis.SweepSpec(
        ensemble_sizes=tuple(_parse_ints(args.sizes, "--sizes")),
        thresholds=tuple(_parse_floats(args.thetas, "--thetas")),
        tier_pool=pool,
        baseline_thetas=(
            analysis.WOC_DEFAULT_GRID
            if args.woc_thetas == "default"
            else tuple(_parse_floats(args.woc_thetas, "--woc-thetas"))
            if args.woc_thetas
            else None
        ),
    )
    points = analysis.sweep(
        table,
        spec,
        profiles,
        prices,
        execution_mode=getattr(args, "mode", None) or "parallel",
        attribution_mode=_attribution(args),
        threads=args.threads or 1,
    )
    out = _out_dir(args)
    analysis.write_sweep_csv(points, out / "sweep.csv")
    print(f"points={len(points)}")
    return 0


def cmd_pareto(args: argparse.Namespace) -> int:
    _require(args, "points")
    path = _check_file(args.points, "--points")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValidationError(f"{path}: empty points file")
        rows = list(reader)
    for column in (args.cost_column, args.accuracy_column):
        if column not in header:
            raise ValidationError(f"{path}: no column {column!r}")
    cost_idx = header.index(args.cost_column)
    acc_idx = header.index(args.accuracy_column)
    points = []
    for row_no, row in enumerate(rows, start=2):
        try:
            points.append((float(row[cost_idx]), float(row[acc_idx]), row))
        except (ValueError, IndexError):
            raise ValidationError(f"{path}: row {row_no}: bad point") from None
    if not points:
        raise ValidationError(f"{path}: no data rows")
    frontier = costmodel.pareto_frontier(points)
    out = _out_dir(args)
    with open(out / "pareto.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(row for _, _, row in frontier)
    print(f"frontier={len(frontier)} of {len(points)}")
    return 0


def cmd_cost_report(args: argparse.Namespace) -> int:
    _require(args, "fixture")
    metrics = costmodel.load_tier_metrics(_resolve_fixture(args.fixture))
    report = costmodel.aggregate(
        metrics.exit_fractions,
        metrics.tier_costs,
        _attribution(args),
        best_single=metrics.best_single,
    )
    reductions = analysis.reduction_summary(report)
    out = _out_dir(args)
    costmodel.write_report_csv(report, out / "report.csv")
    print(
        f"gpu_dollars={report.coe_row.dollars_per_hour:.2f} "
        f"latency_ms={report.coe_row.latency_ms:.2f} "
        f"flops={report.coe_row.flops:.3g} "
        f"dollar_reduction={reductions.dollars:.2f}x "
        f"latency_reduction={reductions.latency_ms:.2f}x "
        f"flops_reduction={reductions.flops:.2f}x"
    )
    return 0


def cmd_comm_sim(args: argparse.Namespace) -> int:
    _require(args, "fixture")
    metrics = costmodel.load_tier_metrics(_resolve_fixture(args.fixture))
    canonical = (
        _parse_floats(args.delays, "--delays")
        if getattr(args, "delays", None)
        else list(costmodel.DEFAULT_DELAYS_MS)
    )
    profile = costmodel.make_delay_profile(len(metrics.exit_fractions), canonical)
    latencies = [c.latency_ms for c in metrics.tier_costs]
    coe_ms, best_ms, ratio = costmodel.comm_latency(metrics.exit_fractions, latencies, profile)
    out = _out_dir(args)
    costmodel.write_comm_csv(coe_ms, best_ms, ratio, out / "comm.csv")
    print(f"reduction_ratio={ratio:.2f}x (coe={coe_ms:.2f} ms, best_single={best_ms:.2f} ms)")
    return 0


def cmd_errors(args: argparse.Namespace) -> int:
    _require(args, "tiers", "theta")
    table = _load_table(args)
    tier_models = _parse_tiers(args.tiers)
    big_model = getattr(args, "big_model", None) or tier_models[-1][-1]
    if big_model not in table.predictions:
        raise ValidationError(f"unknown big model {big_model!r}")
    theta_texts = args.theta if isinstance(args.theta, list) else [args.theta]
    rows: list[analysis.WrongAgreementRow] = []
    for theta_text in theta_texts:
        thetas = _parse_thetas(theta_text, len(tier_models))
        spec = engine.CascadeSpec(
            tiers=tuple(
                engine.TierSpec(models, theta) for models, theta in zip(tier_models, thetas)
            )
        )
        spec.validate_against(table)
        traces, _ = engine.run_cascade(table, spec, threads=args.threads or 1)
        sizes = {len(models) for models in tier_models[:-1]} or {len(tier_models[-1])}
        if len(sizes) == 1:
            label = f"{sizes.pop()} models, threshold={theta_text}"
        else:
            label = f"tiers={args.tiers}, threshold={theta_text}"
        rows.extend(
            analysis.wrong_agreements(traces, table, big_model, spec.num_tiers, label)
        )
    out = _out_dir(args)
    analysis.write_wrong_agreements_csv(rows, out / "wrong_agreements.csv")
    print(f"configs={len(rows)}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    _require(args, "num_examples", "accuracies", "out_file")
    spec = dataset.SyntheticSpec(
        num_examples=args.num_examples,
        label_space_size=args.label_space or 2,
        model_accuracies=tuple(_parse_floats(args.accuracies, "--accuracies")),
        correlation=args.correlation,
        seed=args.seed or 0,
    )
    table = dataset.generate_synthetic(spec)
    out_path = Path(args.out_file)
    if out_path.parent and not out_path.parent.exists():
        out_path.parent.mkdir(parents=True, exist_ok=True)
    dataset.write_predictions(table, out_path)
    print(f"examples={table.num_examples} models={len(table.model_ids)}")
    return 0


def _load_label_column(path: Path) -> tuple[tuple[str, ...], tuple[int, ...]]:
    """example_id and true_label columns of any predictions-shaped CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or header[:2] != ["example_id", "true_label"]:
            raise ValidationError(f"{path}: header must start with example_id,true_label")
        ids: list[str] = []
        labels: list[int] = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) < 2:
                raise ValidationError(f"{path}: row {row_no}: expected at least 2 fields")
            ids.append(row[0])
            try:
                labels.append(int(row[1]))
            except ValueError:
                raise ValidationError(
                    f"{path}: row {row_no}: bad true_label {row[1]!r}"
                ) from None
    if not ids:
        raise ValidationError(f"{path}: no examples")
    return tuple(ids), tuple(labels)


def cmd_fetch(args: argparse.Namespace) -> int:
    from .remote import RemoteProviderEndpoint, fetch_remote_predictions

    _require(args, "remote", "models", "labels_from", "label_space")
    example_ids, true_labels = _load_label_column(
        _check_file(args.labels_from, "--labels-from")
    )
    model_ids = tuple(m.strip() for m in args.models.split(",") if m.strip())
    if not model_ids:
        raise ValidationError(f"no model ids in --models {args.models!r}")
    endpoint = RemoteProviderEndpoint(args.remote, args.timeout_ms)
    fragment = fetch_remote_predictions(
        endpoint,
        model_ids,
        example_ids,
        label_space_size=args.label_space,
        batch_size=args.batch_size,
        threads=args.threads or 1,
    )
    table = fragment.to_table(true_labels, args.label_space)
    out = _out_dir(args)
    dataset.write_predictions(table, out / "predictions.csv")
    print(f"fetched models={len(model_ids)} examples={len(example_ids)}")
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    table = _load_table(args)
    parts = [f"examples={table.num_examples}", f"models={len(table.model_ids)}"]
    if getattr(args, "profiles", None):
        prices = _load_prices(args)
        profiles = _load_profiles(args, prices)
        missing = [p.model_id for p in profiles if p.model_id not in table.predictions]
        parts.append(f"profiles={len(profiles)}")
        if missing:
            parts.append(f"profiles_without_predictions={','.join(sorted(missing))}")
    print("ok: " + " ".join(parts))
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="cascadekit", description=__doc__)
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI config file; flags override its values")
    common.add_argument("--out", help="output directory (default: outputs)")
    common.add_argument("--threads", type=int, help="worker thread bound (default: 1)")

    table_flags = _Parser(add_help=False)
    table_flags.add_argument("--predictions", help="predictions CSV")
    table_flags.add_argument("--label-map", dest="label_map", help="label_index,label_name CSV")
    table_flags.add_argument(
        "--label-space", dest="label_space", type=int, help="declared label count L"
    )

    cost_flags = _Parser(add_help=False)
    cost_flags.add_argument("--profiles", help="model_id,flops_per_example,latency_ms,gpu_tier CSV")
    cost_flags.add_argument("--prices", help="gpu_tier,dollars_per_hour CSV (default: shipped)")
    cost_flags.add_argument("--mode", choices=("parallel", "sequential"), help="execution mode")
    cost_flags.add_argument("--attribution", choices=("exit", "cumulative"), help="cost attribution")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", parents=[common, table_flags, cost_flags], help="execute a cascade")
    p.add_argument("--tiers", help='tiers as "m1,m2|m3,m4|m5"')
    p.add_argument("--theta", help='voting threshold(s), e.g. "0.66" or "0.66|1.0"')
    p.add_argument("--seed", type=int, help="recorded in the summary for provenance")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser(
        "sweep", parents=[common, table_flags, cost_flags], help="sweep sizes and thresholds"
    )
    p.add_argument("--pool", help='model groups by performance tier, "a,b,c|d,e|f"')
    p.add_argument("--sizes", help='ensemble sizes, e.g. "2,3"')
    p.add_argument("--thetas", help='voting thresholds, e.g. "0.66,1.0"')
    p.add_argument(
        "--woc-thetas",
        dest="woc_thetas",
        help='confidence baseline grid, e.g. "0.5,0.9" or "default"',
    )
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("pareto", parents=[common], help="non-dominated subset of a points CSV")
    p.add_argument("--points", help="points CSV")
    p.add_argument("--cost-column", dest="cost_column", default="cost")
    p.add_argument("--accuracy-column", dest="accuracy_column", default="accuracy")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser(
        "cost-report", parents=[common], help="tier-metrics fixture to cost report"
    )
    p.add_argument("--fixture", help="tier metrics CSV path or builtin fixture name")
    p.add_argument("--attribution", choices=("exit", "cumulative"))
    p.set_defaults(func=cmd_cost_report)

    p = sub.add_parser(
        "comm-sim", parents=[common], help="edge-to-cloud latency simulation"
    )
    p.add_argument("--fixture", help="tier metrics CSV path or builtin fixture name")
    p.add_argument("--delays", help='canonical delay list in ms, e.g. "0.001,10,100,1000"')
    p.set_defaults(func=cmd_comm_sim)

    p = sub.add_parser(
        "errors", parents=[common, table_flags], help="wrong-agreement analysis"
    )
    p.add_argument("--tiers", help='tiers as "m1,m2|m3,m4|m5"')
    p.add_argument("--theta", action="append", help="threshold config; repeatable")
    p.add_argument("--big-model", dest="big_model", help="reference big model id")
    p.set_defaults(func=cmd_errors)

    p = sub.add_parser(
        "fetch", parents=[common], help="pull predictions from a remote provider"
    )
    p.add_argument("--remote", help="provider base URL, e.g. http://host:port")
    p.add_argument("--models", help='model ids to fetch, e.g. "m1,m2"')
    p.add_argument(
        "--labels-from",
        dest="labels_from",
        help="CSV supplying example_id,true_label (a predictions CSV works)",
    )
    p.add_argument("--label-space", dest="label_space", type=int, help="declared label count L")
    p.add_argument("--batch-size", dest="batch_size", type=int, default=64)
    p.add_argument("--timeout-ms", dest="timeout_ms", type=int, default=10_000)
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic table")
    p.add_argument("--num-examples", dest="num_examples", type=int)
    p.add_argument("--label-space", dest="label_space", type=int)
    p.add_argument("--accuracies", help='per-model accuracies, e.g. "0.7,0.8,0.95"')
    p.add_argument("--correlation", type=float, default=0.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--out-file", dest="out_file", help="destination predictions CSV")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser(
        "validate", parents=[common, table_flags, cost_flags], help="validate input files"
    )
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config(args)
        if getattr(args, "threads", None) is None:
            args.threads = 1
        return args.func(args)
    except ValidationError as exc:
        _fail("validation", exc)
        return 1
    except OSError as exc:
        _fail("io", exc)
        return 2
    except RemoteError as exc:
        _fail("remote", exc)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
