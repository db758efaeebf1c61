"""
Training Engine for HCTN
Handles model state, the full-batch training loop, prediction and
test-set evaluation.
"""
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .anomaly import remove_outliers
from .ds.metrics import evaluate
from .engine import tensor as T
from .engine.checkpoint import load_checkpoint, save_checkpoint
from .engine.optim import AdamWState, adamw_step
from .exceptions import DimensionMismatchError, EmptyDataError, NumericError, QoSDataError
from .model.cqpm import PredictionResult, cauchy_loss, mse_loss
from .model.hctn import HCTNModel, build_model_inputs
from .parameters import Parameters, validate_params
from .post_train import PostTrain
from .session_manager import RunStateManager

logger = logging.getLogger(__name__)

META_PREFIX = 'meta.'


def params_sidecar(path):
    """`<checkpoint>.params.csv` beside a checkpoint."""
    path = Path(path)
    return path.with_name(path.name + '.params.csv')


@dataclass
class ModelState:
    """
    Everything a prediction or a resumed run needs.

    params : Parameters
    model : HCTNModel
    optimizer : AdamWState
    epoch : int
        Epochs completed.
    dims : tuple
        (n, m, T) of the data the model was trained on.
    target_time : int
    window : tuple
    """
    params: Parameters
    model: HCTNModel
    optimizer: AdamWState = field(default_factory=AdamWState)
    epoch: int = 0
    dims: tuple = ()
    target_time: int = -1
    window: tuple = ()

    @property
    def seed(self):
        return self.params['seed']

    @property
    def gamma(self):
        return self.params['gamma']

    def save(self, path):
        """Write the checkpoint container and its params CSV."""
        arrays = dict(self.model.state_arrays())
        arrays.update(self.optimizer.named_buffers())
        arrays[META_PREFIX + 'epoch'] = np.array([self.epoch], dtype=np.float64)
        arrays[META_PREFIX + 'adamw_step'] = np.array([self.optimizer.step], dtype=np.float64)
        arrays[META_PREFIX + 'dims'] = np.array(self.dims, dtype=np.float64)
        arrays[META_PREFIX + 'target_time'] = np.array([self.target_time], dtype=np.float64)
        arrays[META_PREFIX + 'window'] = np.array(self.window, dtype=np.float64)
        save_checkpoint(path, arrays)
        self.params.get_params_df().to_csv(params_sidecar(path), index=False)
        logger.info("saved checkpoint %s (epoch %d, %d tensors)", path, self.epoch, len(arrays))

    @classmethod
    def load(cls, path):
        sidecar = params_sidecar(path)
        if not sidecar.exists():
            raise QoSDataError(f"missing parameter table {sidecar}")
        params = Parameters.from_df(pd.read_csv(sidecar, dtype=str, keep_default_na=False))
        arrays = load_checkpoint(path)
        dims = tuple(int(d) for d in arrays[META_PREFIX + 'dims'])
        model = HCTNModel(params, dims[0], dims[1])
        model.load_state_arrays(arrays)
        optimizer = AdamWState()
        optimizer.step = int(arrays[META_PREFIX + 'adamw_step'][0])
        for name in model.parameters():
            key = f"adamw.exp_avg.{name}"
            if key in arrays:
                optimizer.exp_avg[name] = arrays[key].copy()
                optimizer.exp_avg_sq[name] = arrays[f"adamw.exp_avg_sq.{name}"].copy()
        return cls(
            params=params,
            model=model,
            optimizer=optimizer,
            epoch=int(arrays[META_PREFIX + 'epoch'][0]),
            dims=dims,
            target_time=int(arrays[META_PREFIX + 'target_time'][0]),
            window=tuple(int(t) for t in arrays[META_PREFIX + 'window']),
        )


class TrainingEngine:
    """
    Full-batch trainer: one forward over every entity and window step per
    epoch, the configured loss on the train-observed records at the target
    step, backward, one AdamW step, then validation MAE in eval mode.

    The best-validation weights are restored at the end; training stops
    after `patience` epochs without improvement.
    """

    def __init__(self, params, split, record_timings=False):
        """
        Args:
            params: Parameters object with all hyperparameters
            split: QoSSplit from make_split
            record_timings: fill the epoch log `seconds` column
        """
        validate_params(params)
        self.params = params
        self.split = split
        self.record_timings = record_timings
        self.best = RunStateManager()
        self.progress_callback = None

        train = split.train
        if params['remove_train_outliers'] and params['outlier_lambda'] > 0:
            train, _ = remove_outliers(train, params['outlier_lambda'], seed=params['seed'],
                                       n_trees=params['n_trees'], subsample=params['subsample'])
        self.train_tensor = train
        target = split.target_time
        span = train.time_range(target)
        self.supervision = (train.users[span], train.services[span], train.values[span])
        if self.supervision[0].size == 0:
            raise EmptyDataError(f"no training records at target step {target}")

        self.inputs = build_model_inputs(train, split.window, params)
        model = HCTNModel(params, train.n_users, train.n_services, latent=self.inputs.latent)
        self.state = ModelState(params=params, model=model, dims=train.dims,
                                target_time=target, window=tuple(split.window))
        self.dropout_rng = np.random.default_rng(params['seed'])

    # ==========================================================================
    # OBJECTIVE
    # ==========================================================================

    def loss(self, prediction):
        users, services, truth = self.supervision
        if self.params['loss'] == 'mse':
            return mse_loss(prediction, users, services, truth)
        return cauchy_loss(prediction, users, services, truth, self.params['gamma'])

    def train_step(self, epoch):
        """One forward/backward/update. Returns the training loss."""
        p = self.params
        model = self.state.model
        try:
            model.zero_grad()
            prediction = model.forward(self.inputs, train=True, rng=self.dropout_rng)
            loss = self.loss(prediction)
            loss.backward()
            adamw_step(model.parameters(), self.state.optimizer, p['lr'], p['beta1'], p['beta2'],
                       p['eps'], p['weight_decay'])
        except NumericError as err:
            raise NumericError(f"epoch {epoch}: {err}") from err
        return float(loss.data)

    def validate(self):
        """(val_mae, val_rmse) in eval mode; NaN when there is no validation set."""
        if len(self.split.validation) == 0:
            return np.nan, np.nan
        metrics = evaluate(predict_matrix(self.state.model, self.inputs), self.split.validation)
        return metrics.mae, metrics.rmse

    # ==========================================================================
    # MAIN LOOP
    # ==========================================================================

    def run(self, progress_callback=None):
        """
        Train until max_epochs or patience runs out.

        Args:
            progress_callback: optional callable(epoch, train_loss, val_mae)

        Returns:
            dict with 'success', 'state' (ModelState) and 'post_train' (PostTrain)
        """
        self.progress_callback = progress_callback
        p = self.params
        rows = []
        stale = 0
        stop_reason = 'max_epochs'
        logger.info("training seed=%d: %d supervised records, window %s",
                    p['seed'], self.supervision[0].size, list(self.state.window))

        for epoch in range(1, p['max_epochs'] + 1):
            started = time.perf_counter()
            train_loss = self.train_step(epoch)
            val_mae, val_rmse = self.validate()
            self.state.epoch = epoch
            elapsed = time.perf_counter() - started
            rows.append({
                'epoch': epoch,
                'train_loss': train_loss,
                'val_mae': val_mae,
                'val_rmse': val_rmse,
                'seconds': elapsed if self.record_timings else np.nan,
            })
            if self.progress_callback is not None:
                self.progress_callback(epoch, train_loss, val_mae)

            monitored = val_mae if np.isfinite(val_mae) else train_loss
            if self.best.is_improvement(monitored):
                self.best.store(epoch, monitored, self.state.model.copy_state())
                stale = 0
            else:
                stale += 1
                if stale >= p['patience']:
                    stop_reason = 'patience'
                    logger.info("early stop at epoch %d (best epoch %d)", epoch, self.best.best_epoch())
                    break

        restored = self.best.restore(self.state.model)
        if not restored['success']:
            logger.warning("keeping last-epoch weights: %s", restored['error'])
        post_train = PostTrain(rows, self.best.best_epoch(), stop_reason, p)
        return {'success': True, 'state': self.state, 'post_train': post_train}


# ==========================================================================
# PUBLIC OPERATIONS
# ==========================================================================

def train(tensor, split, params, progress_callback=None, record_timings=False):
    """
    Returns
    -------
    (ModelState, pd.DataFrame)
        Trained state (best-validation weights) and the epoch log.
    """
    if split.train.dims != tensor.dims:
        raise DimensionMismatchError(f"split dims {split.train.dims} differ from data dims {tensor.dims}")
    result = TrainingEngine(params, split, record_timings=record_timings).run(progress_callback)
    return result['state'], result['post_train'].epoch_log


def predict_matrix(model, inputs):
    with T.no_grad():
        return model.forward(inputs, train=False).numpy()


def predict(state, tensor, window=None):
    """
    Eval-mode forward over the given history window (default: the window
    the model was trained on).

    Raises
    ------
    DimensionMismatchError
        Data (n, m) or window length differ from the checkpoint.
    """
    if tuple(tensor.dims[:2]) != tuple(state.dims[:2]):
        raise DimensionMismatchError(
            f"checkpoint was trained on {state.dims[0]} x {state.dims[1]}, data is {tensor.dims[0]} x {tensor.dims[1]}"
        )
    window = tuple(state.window if window is None else window)
    inputs = build_model_inputs(tensor, window, state.params)
    matrix = predict_matrix(state.model, inputs)
    target = window[-1] + 1 if window else state.target_time
    return PredictionResult(matrix, target_time=target)


def evaluate_test(prediction, split, params):
    """
    Test metrics after removing lambda% outliers from the test records.

    Returns
    -------
    (Metrics, pd.DataFrame)
        Metrics and the per-record outlier frame.
    """
    test, frame = remove_outliers(split.test, params['outlier_lambda'], seed=params['seed'],
                                  n_trees=params['n_trees'], subsample=params['subsample'])
    return evaluate(prediction, test), frame
