import numpy as np
import pandas as pd

from ..qos_data import RECORD_COLUMNS


class DataSets:
    """
    Container for the result frames of one command, ready for export.
    Populated after training / evaluation finishes; every frame is written
    by ui.downloads as one CSV (or one Excel sheet).
    """

    def __init__(self, seed):
        self.seed = seed
        self.epoch_log = None
        self.metrics = None
        self.predictions = None
        self.outliers = None
        self.greysheep = None
        self.thresholds = None
        self.params = None

    def build_train_frames(self, post_train, metrics=None):
        """Epoch log, run parameters and (when tested) the metrics row."""
        self.epoch_log = post_train.epoch_log
        self.params = post_train.params.get_params_df()
        if metrics is not None:
            self.metrics = metrics_frame(metrics, self.seed, best_epoch=post_train.best_epoch)

    def build_test_frames(self, prediction, test, outliers=None):
        self.predictions = prediction_frame(prediction, test)
        self.outliers = outliers

    def build_greysheep_frames(self, report, params=None):
        """Per-entity GDI labels, per-step thresholds and (optionally) the run parameters."""
        self.greysheep = report.to_frame()
        self.thresholds = report.thresholds
        if params is not None:
            self.params = params.get_params_df()

    def frames(self):
        """Non-empty frames by export name."""
        named = {
            'epoch_log': self.epoch_log,
            'metrics': self.metrics,
            'predictions': self.predictions,
            'outliers': self.outliers,
            'greysheep': self.greysheep,
            'thresholds': self.thresholds,
            'params': self.params,
        }
        return {name: df for name, df in named.items() if df is not None}


def metrics_frame(metrics, seed, **extra):
    row = {'seed': seed}
    row.update(metrics.to_dict())
    row.update(extra)
    return pd.DataFrame([row])


def prediction_frame(prediction, records):
    """Per-record truth, prediction and absolute error over `records`."""
    df = records.to_frame()[RECORD_COLUMNS]
    matrix = prediction.matrix if hasattr(prediction, 'matrix') else np.asarray(prediction)
    df['predicted'] = matrix[df['user'].to_numpy(), df['service'].to_numpy()]
    df['abs_error'] = (df['value'] - df['predicted']).abs()
    return df


def dense_prediction_frame(prediction):
    """Every (user, service) pair of a dense prediction, row-major."""
    n, m = prediction.shape
    users, services = np.meshgrid(np.arange(n), np.arange(m), indexing='ij')
    return pd.DataFrame({
        'user': users.ravel(),
        'service': services.ravel(),
        'time': prediction.target_time,
        'predicted': prediction.matrix.ravel(),
    })


def matrix_from_frame(df, n_users, n_services):
    """Dense (n, m) matrix from a user/service/predicted frame; missing pairs are NaN."""
    matrix = np.full((n_users, n_services), np.nan)
    matrix[df['user'].to_numpy(dtype=np.int64), df['service'].to_numpy(dtype=np.int64)] = (
        df['predicted'].to_numpy(dtype=np.float64)
    )
    return matrix
