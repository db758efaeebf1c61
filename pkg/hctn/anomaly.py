"""
anomaly.py
----------
Isolation-forest outlier scoring and lambda-percent removal of QoS records.

Each record's feature is its scalar QoS value; forests are fitted per time
step and the highest-scoring records across all steps are removed.
"""
import logging

import numpy as np
import pandas as pd
from scipy.special import digamma
from sklearn.ensemble import IsolationForest

from .exceptions import ConfigurationError, EmptyDataError

logger = logging.getLogger(__name__)

NEUTRAL_SCORE = 0.5


def harmonic_number(k):
    """H(k) = sum_{i=1..k} 1/i, exact through the digamma identity."""
    return float(digamma(k + 1) + np.euler_gamma)


def average_path_length(n):
    """
    c(n) = 2 H(n - 1) - 2 (n - 1) / n, the mean unsuccessful-search path
    length that normalizes isolation depths; c(1) = 0.
    """
    if n <= 1:
        return 0.0
    return 2.0 * harmonic_number(n - 1) - 2.0 * (n - 1) / n


class QoSIsolationForest:
    """
    Thin wrapper over sklearn's IsolationForest for 1-D QoS values.

    Scores are s(x) = 2^(-E[h(x)] / c(subsample)) in (0, 1); higher means
    more anomalous.

    Parameters
    ----------
    n_trees : int
    subsample : int
        Capped at the number of records.
    seed : int
    """

    def __init__(self, n_trees=100, subsample=256, seed=42):
        if n_trees < 1 or subsample < 2:
            raise ConfigurationError(f"need n_trees >= 1 and subsample >= 2, got {n_trees}, {subsample}")
        self.n_trees = n_trees
        self.subsample = subsample
        self.seed = seed
        self.model_ = None

    def fit_score(self, values):
        """
        Fit on `values` and score them.

        Raises
        ------
        EmptyDataError
            Fewer than 2 records.
        """
        values = np.asarray(values, dtype=np.float64).reshape(-1, 1)
        if values.shape[0] < 2:
            raise EmptyDataError(f"isolation forest needs at least 2 records, got {values.shape[0]}")
        self.model_ = IsolationForest(
            n_estimators=self.n_trees,
            max_samples=min(self.subsample, values.shape[0]),
            random_state=self.seed,
        )
        self.model_.fit(values)
        return -self.model_.score_samples(values)


def fit_score(values, n_trees=100, subsample=256, seed=42):
    return QoSIsolationForest(n_trees, subsample, seed).fit_score(values)


def score_records(tensor, n_trees=100, subsample=256, seed=42):
    """
    Per-step scores aligned with the tensor's records. Steps with a single
    record get the neutral score 0.5.
    """
    scores = np.full(len(tensor), NEUTRAL_SCORE)
    forest = QoSIsolationForest(n_trees, subsample, seed)
    for t in np.unique(tensor.times):
        span = tensor.time_range(int(t))
        if span.stop - span.start >= 2:
            scores[span] = forest.fit_score(tensor.values[span])
    return scores


def removal_count(count, outlier_lambda):
    return int(np.floor(outlier_lambda / 100.0 * count))


def remove_outliers(tensor, outlier_lambda, seed=42, n_trees=100, subsample=256):
    """
    Drop the top floor(lambda% * count) scored records.

    Returns
    -------
    (SparseQoSTensor, pd.DataFrame)
        The filtered tensor and a frame of every record with columns
        user, service, time, value, score, removed.
    """
    if not 0.0 <= outlier_lambda <= 50.0:
        raise ConfigurationError(f"outlier lambda must be in [0, 50], got {outlier_lambda}")
    frame = tensor.to_frame()
    k = removal_count(len(tensor), outlier_lambda)
    if k == 0 or len(tensor) < 2:
        frame['score'] = np.nan if len(tensor) < 2 else score_records(tensor, n_trees, subsample, seed)
        frame['removed'] = False
        return tensor, frame

    scores = score_records(tensor, n_trees, subsample, seed)
    order = np.argsort(-scores, kind='stable')
    removed = np.zeros(len(tensor), dtype=bool)
    removed[order[:k]] = True
    frame['score'] = scores
    frame['removed'] = removed
    logger.info("removed %d of %d records as outliers (lambda=%.1f%%)", k, len(tensor), outlier_lambda)
    return tensor.subset(~removed), frame


def outlier_frame(frame):
    """Order the `outliers` CSV columns."""
    return pd.DataFrame({
        'user': frame['user'], 'service': frame['service'], 'time': frame['time'],
        'value': frame['value'], 'score': frame['score'], 'removed': frame['removed'].astype(int),
    })
