"""
multi_run.py
------------
Parameter sweeps: one hyperparameter varied over a list of values, each
value trained and tested `repeats` times with seeds seed..seed+repeats-1.

Varies one parameter at a time; every other parameter stays at the
configured value.
"""
import logging

import numpy as np
import pandas as pd

from .ds.metrics import summarize_runs
from .exceptions import ConfigurationError, HCTNError
from .parameters import DEFAULT_PARAMS, coerce_value, validate_params
from .qos_data import SplitSpec, make_split
from .training_engine import TrainingEngine, evaluate_test, predict

logger = logging.getLogger(__name__)

RUN_COLUMNS = ['param', 'value', 'seed', 'status', 'error', 'mae', 'rmse', 'count',
               'epochs', 'best_epoch', 'best_val_mae']


def run_single_training(tensor, params):
    """
    Split, train, predict and test one configuration.

    Args:
        tensor: SparseQoSTensor with all records
        params: Parameters object with all settings

    Returns:
        dict: test metrics and training summary for the run
    """
    split = make_split(tensor, SplitSpec.from_params(params))
    result = TrainingEngine(params, split).run()
    state, post_train = result['state'], result['post_train']
    prediction = predict(state, split.train)
    metrics, _ = evaluate_test(prediction, split, params)
    return {
        'mae': metrics.mae,
        'rmse': metrics.rmse,
        'count': metrics.count,
        'epochs': post_train.stats['epochs'],
        'best_epoch': post_train.best_epoch,
        'best_val_mae': post_train.stats.get('best_val_mae', np.nan),
    }


def build_loop_values(use_list, value_list, range_min, range_max, range_mode, range_param):
    """
    Build list of values based on configuration.

    range_mode: 'all' every integer, 'interval' every `range_param`-th
    (max always included), 'count' `range_param` evenly spaced values.
    """
    if use_list:
        return value_list

    if range_mode == 'all':
        return list(range(range_min, range_max + 1))

    elif range_mode == 'interval':
        values = list(range(range_min, range_max + 1, range_param))
        if values[-1] != range_max:
            values.append(range_max)
        return values

    elif range_mode == 'count':
        if range_param <= 1:
            return [range_max]
        return [int(round(v)) for v in np.linspace(range_min, range_max, range_param)]

    return list(range(range_min, range_max + 1))


def parse_list_input(text, param=None):
    """
    Parse a comma-separated string into a list of values.

    With `param`, each item is coerced to that parameter's type; otherwise
    items are integers and a bad item yields an empty list.
    """
    items = [x.strip() for x in text.split(',') if x.strip()]
    if param is not None:
        return [coerce_value(param, x) for x in items]
    try:
        return [int(x) for x in items]
    except ValueError:
        return []


class SweepRunner:
    """
    Runs every (value, repeat) pair of a one-parameter sweep.

    A value that fails parameter validation or raises a configuration error
    during its run becomes a 'config_error' row instead of aborting the sweep.
    """

    def __init__(self, tensor, params, param, values, repeats=1):
        if param not in DEFAULT_PARAMS:
            raise ConfigurationError(f"unknown sweep parameter '{param}'")
        if repeats < 1:
            raise ConfigurationError(f"repeats must be >= 1, got {repeats}")
        if not values:
            raise ConfigurationError("sweep needs at least one value")
        self.tensor = tensor
        self.params = params
        self.param = param
        self.values = [coerce_value(param, v) for v in values]
        self.repeats = repeats

    def run_value(self, value, repeat):
        params = self.params.copy()
        params.set(self.param, value)
        params.set('seed', self.params['seed'] + repeat)
        row = {'param': self.param, 'value': value, 'seed': params['seed'],
               'status': 'ok', 'error': ''}
        try:
            validate_params(params)
            row.update(run_single_training(self.tensor, params))
        except ConfigurationError as err:
            logger.warning("%s=%s seed=%d: %s", self.param, value, params['seed'], err)
            row.update(status='config_error', error=str(err))
        except HCTNError as err:
            logger.warning("%s=%s seed=%d failed: %s", self.param, value, params['seed'], err)
            row.update(status=type(err).__name__, error=str(err))
        return row

    def run(self, progress_callback=None):
        """
        Returns
        -------
        (pd.DataFrame, pd.DataFrame)
            Per-run rows (RUN_COLUMNS) and one summary row per value.
        """
        rows = []
        total = len(self.values) * self.repeats
        for i, value in enumerate(self.values):
            for repeat in range(self.repeats):
                rows.append(self.run_value(value, repeat))
                if progress_callback is not None:
                    progress_callback(i * self.repeats + repeat + 1, total)
        runs = pd.DataFrame(rows, columns=RUN_COLUMNS)
        return runs, summarize_sweep(runs, self.param, self.values, self.params['seed'])


def summarize_sweep(runs, param, values, seed):
    """
    One row per swept value: status, mean/std MAE, mean RMSE and the
    90/95/99% intervals over successful repeats.
    """
    summary = []
    for value in values:
        group = runs[runs['value'] == value]
        ok = group[group['status'] == 'ok']
        row = {'param': param, 'value': value, 'seed': seed}
        if ok.empty:
            row['status'] = group['status'].iloc[0] if len(group) else 'config_error'
            row['error'] = group['error'].iloc[0] if len(group) else ''
        else:
            row['status'] = 'ok'
            row['error'] = ''
        row.update(summarize_runs(ok['mae'].to_numpy(dtype=np.float64)))
        row['rmse_mean'] = float(ok['rmse'].mean()) if len(ok) else np.nan
        summary.append(row)
    return pd.DataFrame(summary)


def run_sweep(tensor, params, param, values, repeats=1, progress_callback=None):
    return SweepRunner(tensor, params, param, values, repeats).run(progress_callback)
