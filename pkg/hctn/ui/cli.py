"""
cli.py
------
Command-line interface: argument parsing, logging setup and one handler per
subcommand. Handlers only wire library calls together; every number they
print comes straight from the library.

Exit status: 0 success, 1 usage or configuration, 2 data, 3 numeric.
"""
import argparse
import logging
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from threadpoolctl import threadpool_limits

from ..anomaly import outlier_frame, remove_outliers
from ..ds.data_science import DataSets, dense_prediction_frame, matrix_from_frame, metrics_frame
from ..ds.metrics import evaluate
from ..exceptions import ConfigurationError, DataParseError, EmptyDataError, HCTNError, QoSDataError, UsageError
from ..model.cqpm import PredictionResult
from ..model.gmm import greysheep_report
from ..model.hypergraph import dump_snapshot
from ..multi_run import build_loop_values, parse_list_input, run_sweep
from ..parameters import DEFAULT_PARAMS, Parameters, load_config_file, validate_params
from ..qos_data import SplitSpec, dataset_statistics, load_wsdream, make_split, save_wsdream
from ..training_engine import ModelState, TrainingEngine, evaluate_test, predict
from ..utils import generate_synthetic_tensor, synthetic_key_frame
from .downloads import write_csv, write_results
from .stats import (calculate_value_stats, generate_sweep_text, render_dataset_stats,
                    render_training_summary, statistics_frame)

logger = logging.getLogger(__name__)

THREADS_ENV = 'HCTN_THREADS'
PARAM_ALIASES = {
    'outlier_lambda': ['--lambda'],
    'train_fraction': ['--psi'],
}


class CLIArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that raises UsageError (with help text) instead of exiting."""

    def error(self, message):
        raise UsageError(f"{message}\n\n{self.format_help()}")


# ==========================================================================
# PARSER
# ==========================================================================

def _common_parser():
    common = CLIArgumentParser(add_help=False)
    common.add_argument('--config', help="key=value parameter file (explicit flags win)")
    common.add_argument('--verbose', '-v', action='store_true', help="debug logging")
    group = common.add_argument_group('model and run parameters')
    for key, default in DEFAULT_PARAMS.items():
        flags = [f"--{key.replace('_', '-')}"] + PARAM_ALIASES.get(key, [])
        if key != key.replace('_', '-'):
            flags.append(f"--{key}")
        group.add_argument(*flags, dest=key, default=argparse.SUPPRESS, metavar=type(default).__name__.upper(),
                           help=f"default {default}")
    return common


def _dims_args(parser):
    parser.add_argument('--dims', nargs=3, type=int, metavar=('N', 'M', 'T'),
                        help="declared users, services, time steps")
    parser.add_argument('--users', type=int)
    parser.add_argument('--services', type=int)
    parser.add_argument('--timesteps', type=int)


def _data_args(parser):
    parser.add_argument('data', nargs='?', help="WSDREAM-style 'user service time value' file")
    parser.add_argument('--data', dest='data_path', metavar='PATH', help="same as the positional DATA")
    _dims_args(parser)


def build_parser() -> argparse.ArgumentParser:
    """Construct the argument parser for the CLI."""
    parser = CLIArgumentParser(prog='hctn', description="Temporal QoS prediction with HCTN")
    subparsers = parser.add_subparsers(dest='command', metavar='command')
    common = _common_parser()

    p = subparsers.add_parser('ingest', parents=[common], help="load a record file and report statistics")
    _data_args(p)
    p.add_argument('--out', help="write the accepted records (canonical order)")
    p.set_defaults(handler=_handle_ingest)

    p = subparsers.add_parser('split', parents=[common], help="write train / validation / test record files")
    _data_args(p)
    p.add_argument('--out-dir', required=True)
    p.set_defaults(handler=_handle_split)

    p = subparsers.add_parser('train', parents=[common], help="train a model and save a checkpoint")
    _data_args(p)
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--epoch-log', help="epoch log CSV (default: stdout)")
    p.add_argument('--timings', action='store_true', help="fill the epoch log seconds column")
    p.add_argument('--results', help="all result frames: .xlsx, .zip or a directory")
    p.add_argument('--dump-graphs', help="write per-step hypergraphs to this directory")
    p.set_defaults(handler=_handle_train)

    p = subparsers.add_parser('predict', parents=[common], help="dense predictions from a checkpoint")
    _data_args(p)
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--at', type=int, help="predict step AT from the tau steps before it")
    p.add_argument('--out', help="predictions CSV (default: stdout)")
    p.set_defaults(handler=_handle_predict)

    p = subparsers.add_parser('evaluate', parents=[common], help="MAE / RMSE on the test records")
    _data_args(p)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument('--checkpoint', help="rebuild the split stored with this checkpoint and predict")
    source.add_argument('--predictions', help="CSV with user, service, predicted columns")
    p.set_defaults(handler=_handle_evaluate)

    p = subparsers.add_parser('greysheep', parents=[common], help="GDI scores and greysheep labels")
    _data_args(p)
    p.add_argument('--thresholds', help="per-step threshold CSV")
    p.add_argument('--results', help="greysheep, thresholds and params frames: .xlsx, .zip or a directory")
    p.set_defaults(handler=_handle_greysheep)

    p = subparsers.add_parser('outliers', parents=[common], help="isolation-forest scores and lambda% removal")
    _data_args(p)
    p.add_argument('--out', help="write the remaining records")
    p.set_defaults(handler=_handle_outliers)

    p = subparsers.add_parser('sweep', parents=[common], help="train and test over values of one parameter")
    _data_args(p)
    p.add_argument('--param', required=True)
    values = p.add_mutually_exclusive_group(required=True)
    values.add_argument('--values', help="comma-separated values")
    values.add_argument('--range', nargs=2, type=int, metavar=('MIN', 'MAX'))
    p.add_argument('--range-mode', choices=['all', 'interval', 'count'], default='all')
    p.add_argument('--range-param', type=int, default=1)
    p.add_argument('--repeats', type=int, default=1, help="runs per value, seeds seed..seed+K-1")
    p.add_argument('--runs', help="per-run CSV")
    p.add_argument('--xlsx', help="Excel workbook with summary, runs and params sheets")
    p.add_argument('--report', help="plain-text sweep report")
    p.set_defaults(handler=_handle_sweep)

    p = subparsers.add_parser('synth', parents=[common], help="generate a synthetic QoS tensor")
    _dims_args(p)
    p.add_argument('--rank', type=int, default=2)
    p.add_argument('--density', type=float, default=0.3)
    p.add_argument('--noise', type=float, default=0.0)
    p.add_argument('--greysheep-fraction', type=float, default=0.0)
    p.add_argument('--outlier-fraction', type=float, default=0.0)
    p.add_argument('--outlier-scale', type=float, default=20.0)
    p.add_argument('--out', required=True)
    p.add_argument('--key', help="per-record ground truth CSV")
    p.set_defaults(handler=_handle_synth)

    return parser


# ==========================================================================
# HELPERS
# ==========================================================================

def resolve_dims(args):
    """(n, m, T) from --dims or from all of --users, --services, --timesteps."""
    if args.dims:
        return tuple(args.dims)
    trio = (args.users, args.services, args.timesteps)
    if any(v is None for v in trio):
        raise UsageError("give --dims N M T or all of --users, --services, --timesteps")
    return trio


def resolve_params(args) -> Parameters:
    """Defaults < config file < explicit flags."""
    params = Parameters()
    if getattr(args, 'config', None):
        params.set_all(load_config_file(args.config))
    params.set_all(explicit_params(args))
    if hasattr(args, 'timesteps'):
        n, m, t = resolve_dims(args)
        params.set_all({'n_users': n, 'n_services': m, 'n_timesteps': t})
    return params


def explicit_params(args) -> dict:
    return {key: getattr(args, key) for key in DEFAULT_PARAMS if hasattr(args, key)}


def configure_logging(verbose=False):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(levelname)s %(name)s: %(message)s',
        stream=sys.stderr,
        force=True,
    )


def _load(args):
    path = args.data_path or args.data
    if not path:
        raise UsageError("no data file given (positional DATA or --data PATH)")
    return load_wsdream(path, resolve_dims(args))


def _window_for(params, n_timesteps):
    spec = SplitSpec.from_params(params)
    t_end = spec.resolve_target(n_timesteps)
    if t_end - params['tau'] < 0:
        raise ConfigurationError(f"window tau={params['tau']} does not fit before step {t_end}")
    return list(range(t_end - params['tau'], t_end))


# ==========================================================================
# HANDLERS
# ==========================================================================

def _handle_ingest(args, params):
    tensor = _load(args)
    stats = dataset_statistics(tensor)
    logger.info("dataset statistics\n%s", render_dataset_stats(stats))
    if args.out:
        save_wsdream(tensor, args.out)
    write_csv(statistics_frame(stats))


def _handle_split(args, params):
    tensor = _load(args)
    logger.info("seed=%d", params['seed'])
    split = make_split(tensor, SplitSpec.from_params(params))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name in ('train', 'validation', 'test'):
        save_wsdream(getattr(split, name), out_dir / f"{name}.txt")
    write_csv(pd.DataFrame([{
        'seed': split.seed,
        'target_time': split.target_time,
        'tau': split.tau,
        'history': len(split.history()),
        'train': len(split.observed_at_target()),
        'validation': len(split.validation),
        'test': len(split.test),
    }]))


def _log_epoch(epoch, train_loss, val_mae):
    logger.info("epoch %4d  train_loss %.6f  val_mae %.6f", epoch, train_loss, val_mae)


def _handle_train(args, params):
    validate_params(params)
    tensor = _load(args)
    logger.info("seed=%d", params['seed'])
    split = make_split(tensor, SplitSpec.from_params(params))
    engine = TrainingEngine(params, split, record_timings=args.timings)
    if args.dump_graphs:
        for snapshot in engine.inputs.snapshots:
            dump_snapshot(snapshot, args.dump_graphs)
    result = engine.run(progress_callback=_log_epoch)
    state, post_train = result['state'], result['post_train']
    state.save(args.checkpoint)

    prediction = predict(state, split.train)
    metrics, outliers = evaluate_test(prediction, split, params)
    logger.info("%s", render_training_summary(post_train, metrics))

    if args.results:
        datasets = DataSets(params['seed'])
        datasets.build_train_frames(post_train, metrics)
        datasets.build_test_frames(prediction, split.test, outlier_frame(outliers))
        write_results(datasets.frames(), args.results)
    write_csv(post_train.epoch_log, args.epoch_log)


def _handle_predict(args, params):
    state = ModelState.load(args.checkpoint)
    tensor = _load(args)
    window = None
    if args.at is not None:
        tau = state.params['tau']
        if not tau <= args.at < tensor.n_timesteps:
            raise ConfigurationError(f"--at {args.at} needs tau={tau} earlier steps inside [0, {tensor.n_timesteps})")
        window = list(range(args.at - tau, args.at))
    started = time.perf_counter()
    prediction = predict(state, tensor, window)
    logger.info("predicted %d x %d for step %d in %.3fs", *prediction.shape, prediction.target_time,
                time.perf_counter() - started)
    frame = dense_prediction_frame(prediction)
    logger.debug("prediction stats: %s", calculate_value_stats(frame['predicted'], 'predicted'))
    write_csv(frame, args.out)


def _handle_evaluate(args, params):
    tensor = _load(args)
    if args.checkpoint:
        state = ModelState.load(args.checkpoint)
        params = state.params.copy()
        params.set_all(explicit_params(args))
        logger.info("seed=%d", params['seed'])
        split = make_split(tensor, SplitSpec.from_params(params))
        prediction = predict(state, split.train)
        metrics, _ = evaluate_test(prediction, split, params)
    else:
        frame = pd.read_csv(args.predictions)
        missing = {'user', 'service', 'predicted'} - set(frame.columns)
        if missing:
            raise DataParseError(1, f"predictions file lacks columns {sorted(missing)}")
        spec = SplitSpec.from_params(params)
        t_end = spec.resolve_target(tensor.n_timesteps)
        records = tensor.subset(tensor.times == t_end)
        if params['outlier_lambda'] > 0:
            records, _ = remove_outliers(records, params['outlier_lambda'], seed=params['seed'],
                                         n_trees=params['n_trees'], subsample=params['subsample'])
        prediction = PredictionResult(matrix_from_frame(frame, tensor.n_users, tensor.n_services), t_end)
        if len(records) and np.isnan(prediction.lookup_many(records.users, records.services)).any():
            raise EmptyDataError("predictions file misses pairs present in the evaluation records")
        metrics = evaluate(prediction, records)
    logger.info("MAE %.6f  RMSE %.6f  (%d records)", metrics.mae, metrics.rmse, metrics.count)
    write_csv(metrics_frame(metrics, params['seed']))


def _handle_greysheep(args, params):
    tensor = _load(args)
    window = _window_for(params, tensor.n_timesteps)
    report = greysheep_report(tensor, window, params['c1'], params['c2'])
    users, services = report.labeled_counts()
    logger.info("greysheep over steps %s: %d user labels, %d service labels", window, users, services)
    if args.thresholds:
        write_csv(report.thresholds, args.thresholds)
    if args.results:
        datasets = DataSets(params['seed'])
        datasets.build_greysheep_frames(report, params)
        write_results(datasets.frames(), args.results)
    write_csv(report.to_frame())


def _handle_outliers(args, params):
    tensor = _load(args)
    logger.info("seed=%d", params['seed'])
    kept, frame = remove_outliers(tensor, params['outlier_lambda'], seed=params['seed'],
                                  n_trees=params['n_trees'], subsample=params['subsample'])
    if args.out:
        save_wsdream(kept, args.out)
    write_csv(outlier_frame(frame))


def _handle_sweep(args, params):
    tensor = _load(args)
    if args.values is not None:
        values = parse_list_input(args.values, args.param)
    else:
        values = build_loop_values(False, [], args.range[0], args.range[1], args.range_mode, args.range_param)
    logger.info("seed=%d: sweeping %s over %s, %d repeat(s)", params['seed'], args.param, values, args.repeats)

    def progress(done, total):
        logger.info("sweep run %d / %d", done, total)

    runs, summary = run_sweep(tensor, params, args.param, values, args.repeats, progress)
    if args.runs:
        write_csv(runs, args.runs)
    if args.xlsx:
        write_results({'summary': summary, 'runs': runs, 'params': params.get_params_df()}, args.xlsx)
    if args.report:
        Path(args.report).write_text(generate_sweep_text(summary, args.param, values, params.to_dict()) + "\n",
                                     encoding='utf-8')
    write_csv(summary)


def _handle_synth(args, params):
    n, m, t = resolve_dims(args)
    logger.info("seed=%d", params['seed'])
    tensor, info = generate_synthetic_tensor(
        n, m, t, rank=args.rank, density=args.density, noise=args.noise,
        greysheep_fraction=args.greysheep_fraction, outlier_fraction=args.outlier_fraction,
        outlier_scale=args.outlier_scale, seed=params['seed'],
    )
    save_wsdream(tensor, args.out)
    if args.key:
        write_csv(synthetic_key_frame(tensor, info), args.key)
    stats = dataset_statistics(tensor)
    frame = statistics_frame(stats)
    frame.insert(0, 'seed', params['seed'])
    write_csv(frame)


# ==========================================================================
# ENTRY POINT
# ==========================================================================

def _thread_limit():
    raw = os.environ.get(THREADS_ENV)
    if not raw:
        return None
    try:
        limit = int(raw)
    except ValueError:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from None
    if limit < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return limit


def main(argv: Optional[Sequence[str]] = None) -> int:
    """CLI entry point; returns the exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"hctn: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else 0

    if getattr(args, 'handler', None) is None:
        parser.print_help(sys.stderr)
        return UsageError.exit_code

    configure_logging(args.verbose)
    try:
        params = resolve_params(args)
        limit = _thread_limit()
        if limit is None:
            args.handler(args, params)
        else:
            with threadpool_limits(limits=limit):
                args.handler(args, params)
    except HCTNError as exc:
        logger.error("%s", exc)
        return exc.exit_code
    except OSError as exc:
        logger.error("%s", exc)
        return QoSDataError.exit_code
    return 0
