"""``loadcast`` command line.

Exit codes: 0 success, 1 operational error, 2 usage error. Results go to
files or stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import DEFAULT_SEED, __version__
from . import experiments as exp
from . import ingest
from . import series as ser
from .network import NetworkShape, load_model, save_model
from .plotdata import emit_plot_data
from .simulate import (corr_r, mse, read_prediction, simulate_closed_loop_dataset,
                       simulate_open_loop, write_prediction)
from .synth import PROFILES, SynthProfile, synth_series, synthetic_calendar
from .training import TrainConfig, train_with_restarts, write_attempt_log

log = logging.getLogger("loadcast")

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_seed(p):
    p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help=f"random seed (default {DEFAULT_SEED})")


def _add_layout(p):
    p.add_argument("--format", choices=("binary", "text"), default="binary")
    p.add_argument("--timestamp-offset", type=int, default=0,
                   help="byte offset of the timestamp inside a 20-byte record")
    p.add_argument("--little-endian", action="store_true",
                   help="timestamp is stored little-endian")


def _layout(args) -> ingest.RecordLayout:
    return ingest.RecordLayout(timestamp_offset=args.timestamp_offset,
                               byteorder="little" if args.little_endian else "big")


def _add_model_args(p):
    p.add_argument("--hidden", type=int, nargs="+", default=[10], help="hidden layer sizes")
    p.add_argument("--delays", default="1:2", help="y delays, e.g. 1:2 or 2:3 or 1,3")
    p.add_argument("--exogenous", choices=("MATCHES", "ISMATCH"), help="exogenous column")
    p.add_argument("--x-delays", help="exogenous delays (default: same as --delays)")
    p.add_argument("--split", default="70/15/15", help="train/val/test percentages")
    p.add_argument("--max-points", type=int, help="use only the first N points")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="loadcast", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"loadcast {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("ingest", help="count requests per second for every trace file in a directory")
    p.add_argument("--in", dest="input_dir", required=True)
    p.add_argument("--out", dest="output_dir", required=True)
    p.add_argument("--jobs", type=int, default=1)
    _add_layout(p)

    p = sub.add_parser("count", help="number of requests in trace files")
    p.add_argument("paths", nargs="+")
    _add_layout(p)

    p = sub.add_parser("aggregate-days", help="sum per-file counts into a day-requests TSV")
    p.add_argument("--counts", required=True,
                   help="directory of wc_day<D>_<P>.count.txt files")
    p.add_argument("--calendar", help="DAY/MATCHES TSV (default: no matches)")
    p.add_argument("--total-days", type=int, default=92)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a network on a day- or epoch-requests TSV")
    p.add_argument("--data", required=True)
    _add_model_args(p)
    p.add_argument("--algorithm", choices=("lm", "incremental"), default="lm")
    p.add_argument("--attempts", type=int, default=5)
    p.add_argument("--max-epochs", type=int, default=TrainConfig.max_epochs)
    p.add_argument("--loop", choices=("open", "closed"), default="open",
                   help="loop mode stored in the model (training is always open loop)")
    p.add_argument("--out", required=True, help="model JSON path")
    _add_seed(p)

    p = sub.add_parser("simulate", help="run a trained network over a series")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--max-points", type=int)
    p.add_argument("--split", help="label rows by train/val/test blocks (default: model's split)")
    p.add_argument("--loop", choices=("open", "closed"), help="override the model's loop mode")
    p.add_argument("--out", required=True, help="prediction TSV")

    p = sub.add_parser("experiment", help="run one case or the builtin suite")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--suite", choices=("builtin",))
    g.add_argument("--case")
    p.add_argument("--catalog", help="case catalog JSON (default: builtin)")
    p.add_argument("--data-dir", help="directory holding day-requests.tsv and *.count.txt "
                                      "(default $LOADCAST_DATA_DIR)")
    p.add_argument("--synthetic", action="store_true",
                   help="use generated data instead of --data-dir")
    p.add_argument("--out", default="results.csv")
    p.add_argument("--models-dir", help="where to write <case>.json models (default: next to --out)")
    p.add_argument("--plots-dir", help="also write plot data for every case")
    p.add_argument("--export-catalog", help="write the catalog JSON here and exit")
    p.add_argument("--jobs", type=int, default=1)
    _add_seed(p)

    p = sub.add_parser("synth", help="generate a synthetic workload series")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--profile", choices=PROFILES)
    g.add_argument("--catalog-dir", help="write all profiles under their catalog names")
    p.add_argument("--length", type=int)
    p.add_argument("--out", help="output TSV (with --profile)")
    p.add_argument("--calendar-out", help="also write the match calendar TSV")
    _add_seed(p)

    p = sub.add_parser("plot-data", help="prediction TSV + gnuplot script for a response plot")
    p.add_argument("--prediction", required=True)
    p.add_argument("--out", required=True, help="output prefix (writes PREFIX.tsv and PREFIX.gp)")
    p.add_argument("--title", default="")
    return parser


# --- commands ---------------------------------------------------------------------


def cmd_ingest(args) -> int:
    if not Path(args.input_dir).is_dir():
        raise ingest.IngestError(f"input directory not found: {args.input_dir}")
    entries = ingest.run_pipeline(args.input_dir, args.output_dir, args.format, _layout(args), args.jobs)
    manifest = Path(args.output_dir) / "manifest.tsv"
    ingest.write_manifest(entries, manifest)
    for e in entries:
        if e.ok:
            print(f"{e.input}\t{e.output}\t{e.records}")
        else:
            print(f"error: {e.input}: {e.error}", file=sys.stderr)
    return EXIT_OK if all(e.ok for e in entries) else EXIT_ERROR


def cmd_count(args) -> int:
    for p in args.paths:
        print(f"{p}\t{ingest.count_requests(p, args.format, _layout(args))}")
    return EXIT_OK


def cmd_aggregate(args) -> int:
    if not Path(args.counts).is_dir():
        raise ingest.IngestError(f"counts directory not found: {args.counts}")
    calendar = ingest.read_calendar(args.calendar) if args.calendar else ingest.MatchCalendar()
    days = ingest.aggregate_days(ingest.counts_from_directory(args.counts), calendar, args.total_days)
    ingest.write_day_requests(days, args.out)
    return EXIT_OK


def _load_data(path, max_points=None) -> ser.TimeSeries:
    ts = ser.load_series(path)
    return ts.head(max_points) if max_points else ts


def cmd_train(args) -> int:
    data = _load_data(args.data, args.max_points)
    keep = {args.exogenous: data.exogenous[args.exogenous]} if args.exogenous else {}
    if args.exogenous and args.exogenous not in data.exogenous:
        raise ser.SeriesError(f"{args.data} has no {args.exogenous} column")
    scaled, params = ser.normalize_columns(data.with_values(data.values, keep))
    x_delays = (args.x_delays or args.delays) if args.exogenous else None
    ds = ser.delay_embed(scaled, args.delays, args.exogenous, x_delays)
    split = ser.SplitSpec.parse(args.split)
    splits = ser.split_blocks(len(ds), split)
    config = TrainConfig(algorithm=args.algorithm, max_epochs=args.max_epochs)
    net, report, attempts = train_with_restarts(
        NetworkShape(ds.width, tuple(args.hidden)), ds, splits, config, args.attempts, args.seed,
        y_delays=ds.y_delays, x_delays=ds.x_delays, loop_mode=args.loop,
    )
    net.norm_params = params
    net.provenance = {"seed": report.seed, "base_seed": args.seed, "data": Path(args.data).name,
                      "split": list(split.as_tuple()), "exogenous_column": args.exogenous}
    save_model(net, args.out, {"train_report": report.to_dict(),
                               "attempt_log": [vars(a) for a in attempts]})
    write_attempt_log(attempts, Path(args.out).with_suffix(".attempts.csv"))
    pred = simulate_open_loop(net, ds, splits)
    print(f"complete_mse\t{mse(pred.targets, pred.outputs)!r}")
    print(f"r\t{corr_r(pred.targets, pred.outputs)!r}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    net = load_model(args.model)
    prov = net.provenance
    data = _load_data(args.data, args.max_points)
    exo_col = prov.get("exogenous_column")
    if net.x_delays and not exo_col:
        raise ValueError(f"{args.model}: model has exogenous delays but names no exogenous column")
    keep = {}
    if exo_col:
        if exo_col not in data.exogenous:
            raise ser.SeriesError(f"{args.data} has no {exo_col} column")
        keep = {exo_col: data.exogenous[exo_col]}
    scaled, _ = ser.normalize_columns(data.with_values(data.values, keep))
    ds = ser.delay_embed(scaled, net.y_delays, exo_col, net.x_delays if exo_col else None)
    split_text = args.split
    if split_text:
        splits = ser.split_blocks(len(ds), ser.SplitSpec.parse(split_text))
    elif "split" in prov:
        splits = ser.split_blocks(len(ds), ser.SplitSpec(*prov["split"]))
    else:
        splits = None
    loop = args.loop or net.loop_mode
    if loop == "closed":
        exo = scaled.exogenous[exo_col] if exo_col else None
        pred = simulate_closed_loop_dataset(net, scaled.values, ds, exo, splits)
    else:
        pred = simulate_open_loop(net, ds, splits)
    write_prediction(pred, args.out)
    print(f"rows\t{len(pred)}")
    print(f"mse\t{mse(pred.targets, pred.outputs)!r}")
    try:
        print(f"r\t{corr_r(pred.targets, pred.outputs)!r}")
    except ValueError as exc:
        print(f"r undefined: {exc}", file=sys.stderr)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cases = exp.load_catalog(args.catalog) if args.catalog else exp.builtin_cases()
    if args.export_catalog:
        Path(args.export_catalog).write_text(exp.dump_catalog(cases))
        return EXIT_OK
    if args.case:
        chosen = exp.case_by_id(cases, args.case)
        selected = [chosen]
        if chosen.source_model:
            selected.insert(0, exp.case_by_id(cases, chosen.source_model))
    else:
        selected = cases
    if args.synthetic:
        catalog = exp.synthetic_catalog(args.seed)
    else:
        data_dir = exp.data_dir_from_env(args.data_dir)
        if not data_dir:
            raise UsageError("experiment: give --data-dir, set LOADCAST_DATA_DIR, or use --synthetic")
        if not Path(data_dir).is_dir():
            raise exp.ExperimentError(f"data directory not found: {data_dir}")
        catalog = exp.load_data_catalog(data_dir, [c.data_ref for c in selected])
    rows = exp.run_suite(selected, catalog, args.seed, args.jobs)
    out = Path(args.out)
    models_dir = Path(args.models_dir) if args.models_dir else out.parent / (out.stem + "-models")
    exp.write_suite_outputs(rows, out, models_dir)
    for row in rows:
        if row.skipped:
            print(f"skipped {row.config.id}: {row.skipped}", file=sys.stderr)
        elif args.plots_dir:
            emit_plot_data(row.result.prediction, Path(args.plots_dir) / row.config.id,
                           f"{row.config.id}: {row.config.description}")
    sys.stdout.write(exp.results_csv(rows))
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.catalog_dir:
        for p in exp.write_synthetic_catalog(args.catalog_dir, args.seed):
            print(p)
        if args.calendar_out:
            ingest.write_calendar(synthetic_calendar(), args.calendar_out)
        return EXIT_OK
    if not args.out:
        raise UsageError("synth: --out is required with --profile")
    ts = synth_series(SynthProfile(args.profile, args.length, args.seed))
    ser.write_series(ts, args.out)
    if args.calendar_out:
        ingest.write_calendar(synthetic_calendar(), args.calendar_out)
    return EXIT_OK


def cmd_plot(args) -> int:
    pred = read_prediction(args.prediction)
    tsv, gp = emit_plot_data(pred, args.out, args.title)
    print(tsv)
    print(gp)
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "count": cmd_count,
    "aggregate-days": cmd_aggregate,
    "train": cmd_train,
    "simulate": cmd_simulate,
    "experiment": cmd_experiment,
    "synth": cmd_synth,
    "plot-data": cmd_plot,
}


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            raise UsageError("loadcast: error: a command is required")
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:        # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError, RuntimeError, KeyError) as exc:
        print(f"loadcast {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
