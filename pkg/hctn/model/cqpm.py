"""
cqpm.py
-------
Prediction head and training objectives.

    (Z_3 + X_3) -> BN -> mean over tau -> relu dense f2 -> f2 -> dense f2 -> f4
    rows [0, n) are user factors U, rows [n, N) service factors S
    Q_hat = U S^T
"""
from dataclasses import dataclass

import numpy as np

from ..engine import tensor as T
from ..exceptions import ConfigurationError, EmptyDataError, ShapeError
from .layers import BatchNorm, Dense, Module


class CQPMParams(Module):
    @classmethod
    def create(cls, rng, f2, f4, prefix='cqpm'):
        return cls({
            'bn': BatchNorm.create(f"{prefix}.bn", f2),
            'hidden': Dense.create(rng, f"{prefix}.hidden", f2, f2),
            'project': Dense.create(rng, f"{prefix}.project", f2, f4),
        })


@dataclass
class PredictionResult:
    """
    Dense predictions for the target step.

    matrix : (n, m) Q_hat
    """
    matrix: np.ndarray
    target_time: int = -1

    def lookup(self, user, service):
        return float(self.matrix[user, service])

    def lookup_many(self, users, services):
        return self.matrix[np.asarray(users), np.asarray(services)]

    @property
    def shape(self):
        return self.matrix.shape


def cqpm_factors(z3, x3, params, n_users, train, momentum=0.9):
    """
    Returns
    -------
    (Tensor, Tensor)
        User factors (n, f4) and service factors (m, f4).
    """
    z3, x3 = T.as_tensor(z3), T.as_tensor(x3)
    if z3.shape != x3.shape:
        raise ShapeError("cqpm", z3.shape, x3.shape)
    pooled = T.mean(params['bn'](T.add(z3, x3), train, momentum), axis=0)  # (N, f2)
    factors = params['project'](T.relu(params['hidden'](pooled)))
    return T.take(factors, slice(0, n_users)), T.take(factors, slice(n_users, None))


def predict_from_factors(user_factors, service_factors):
    """Q_hat = U S^T as a Tensor."""
    return T.matmul(user_factors, T.swap_last(service_factors))


def cqpm_forward(z3, x3, params, n_users, train=False, momentum=0.9):
    """Dense prediction matrix as a Tensor (keeps the graph for training)."""
    users, services = cqpm_factors(z3, x3, params, n_users, train, momentum)
    return predict_from_factors(users, services)


def _gather(prediction, users, services):
    users = np.asarray(users, dtype=np.int64)
    services = np.asarray(services, dtype=np.int64)
    if users.size == 0:
        raise EmptyDataError("loss needs at least one observed record")
    return T.take(prediction, (users, services))


def cauchy_loss(prediction, users, services, truth, gamma=1.0):
    """
    mean(log(1 + ((q - q_hat) / gamma)^2)) over the observed records.

    Parameters
    ----------
    prediction : (n, m) Tensor
    users, services : int arrays of the supervised records
    truth : float array
    """
    if gamma <= 0:
        raise ConfigurationError(f"Cauchy scale gamma must be > 0, got {gamma}")
    predicted = _gather(prediction, users, services)
    residual = T.hadamard(T.sub(np.asarray(truth, dtype=np.float64), predicted), 1.0 / gamma)
    return T.mean(T.log(T.add(T.square(residual), 1.0)))


def mse_loss(prediction, users, services, truth):
    """mean((q - q_hat)^2) over the observed records."""
    predicted = _gather(prediction, users, services)
    return T.mean(T.square(T.sub(np.asarray(truth, dtype=np.float64), predicted)))


def cauchy_value(residuals, gamma=1.0):
    """Pointwise Cauchy penalty on plain arrays."""
    if gamma <= 0:
        raise ConfigurationError(f"Cauchy scale gamma must be > 0, got {gamma}")
    r = np.asarray(residuals, dtype=np.float64) / gamma
    return np.log1p(r * r)
