"""
PostTrain class - holds everything computed after a training run.

Created at the end of TrainingEngine.run() so reporting never reads
parameters that changed after the run.
"""
import numpy as np
import pandas as pd

EPOCH_LOG_COLUMNS = ['epoch', 'train_loss', 'val_mae', 'val_rmse', 'seconds']


class PostTrain:
    """
    Holds post-training results.

    Parameters
    ----------
    epoch_rows : list of dict
        One row per epoch with the EPOCH_LOG_COLUMNS keys.
    best_epoch : int or None
        Epoch whose weights were restored (None when the last epoch is kept).
    stop_reason : str
        'patience', 'max_epochs'.
    params : Parameters
        The parameters used for this run.
    """

    def __init__(self, epoch_rows, best_epoch, stop_reason, params):
        self.epoch_log = pd.DataFrame(epoch_rows, columns=EPOCH_LOG_COLUMNS)
        self.best_epoch = best_epoch
        self.stop_reason = stop_reason
        self.params = params
        self.seed = params['seed']
        self.stats = self.calculate_stats()

    def calculate_stats(self):
        log = self.epoch_log
        if log.empty:
            return {'epochs': 0}
        val = log['val_mae'].dropna()
        return {
            'epochs': int(len(log)),
            'best_epoch': self.best_epoch,
            'stop_reason': self.stop_reason,
            'first_train_loss': float(log['train_loss'].iloc[0]),
            'last_train_loss': float(log['train_loss'].iloc[-1]),
            'best_val_mae': float(val.min()) if len(val) else np.nan,
        }
