"""
metrics.py
----------
Prediction error metrics and run-to-run confidence intervals.
"""
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigurationError, EmptyDataError

# Normal-approximation z values
Z_SCORES = {0.90: 1.645, 0.95: 1.960, 0.99: 2.576}


@dataclass
class Metrics:
    """
    mae, rmse : float
    count : int
        Number of evaluated records.
    runs : list of float
        Per-run MAEs when aggregated over repeats.
    """
    mae: float
    rmse: float
    count: int
    runs: list = field(default_factory=list)

    def to_dict(self):
        return {'mae': self.mae, 'rmse': self.rmse, 'count': self.count}


def _matrix(prediction):
    return prediction.matrix if hasattr(prediction, 'matrix') else np.asarray(prediction)


def evaluate(prediction, records):
    """
    MAE and RMSE of a dense prediction over a record set.

    Parameters
    ----------
    prediction : PredictionResult or (n, m) array
    records : SparseQoSTensor
        The evaluation set (only its records are scored).

    Raises
    ------
    EmptyDataError
        No records to evaluate.
    """
    if len(records) == 0:
        raise EmptyDataError("cannot evaluate on an empty record set")
    predicted = _matrix(prediction)[records.users, records.services]
    return metrics_from_residuals(records.values - predicted)


def metrics_from_residuals(residuals):
    residuals = np.asarray(residuals, dtype=np.float64)
    if residuals.size == 0:
        raise EmptyDataError("cannot evaluate on an empty record set")
    mae = float(np.mean(np.abs(residuals)))
    rmse = float(np.sqrt(np.mean(residuals * residuals)))
    # rmse >= mae always; guard against rounding below it
    rmse = max(rmse, mae)
    return Metrics(mae=mae, rmse=rmse, count=int(residuals.size))


def confidence_interval(values, level=0.95):
    """
    mean +/- z(level) * std / sqrt(k), sample std over k >= 2 runs.

    Returns
    -------
    (float, float)
    """
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise ConfigurationError(f"a confidence interval needs at least 2 runs, got {values.size}")
    if level not in Z_SCORES:
        raise ConfigurationError(f"confidence level must be one of {sorted(Z_SCORES)}, got {level}")
    mean = values.mean()
    half = Z_SCORES[level] * values.std(ddof=1) / np.sqrt(values.size)
    return float(mean - half), float(mean + half)


def summarize_runs(maes):
    """Mean, sample std and the three intervals for a list of run MAEs."""
    maes = np.asarray(maes, dtype=np.float64)
    row = {
        'runs': int(maes.size),
        'mae_mean': float(maes.mean()) if maes.size else float('nan'),
        'mae_std': float(maes.std(ddof=1)) if maes.size > 1 else float('nan'),
    }
    for level in sorted(Z_SCORES):
        pct = int(round(level * 100))
        if maes.size >= 2:
            low, high = confidence_interval(maes, level)
        else:
            low = high = float('nan')
        row[f'ci{pct}_low'] = low
        row[f'ci{pct}_high'] = high
    return row
