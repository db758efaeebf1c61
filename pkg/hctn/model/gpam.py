"""
gpam.py
-------
Per-time-step masked non-negative matrix factorization producing the
initial user and service features.

Multiplicative updates restricted to the observed mask M:

    U <- U * ((M*Q) S) / ((M*(U S^T)) S + eps)
    S <- S * ((M*Q)^T U) / ((M*(U S^T))^T U + eps)

Unobserved cells never enter the objective. A user or service with no
observations in the slice keeps its positive seeded initialization, so
cold-start rows stay dense.
"""
import logging
from dataclasses import dataclass

import numpy as np

from ..exceptions import ConfigurationError, EmptyDataError

logger = logging.getLogger(__name__)

EPS_DIV = 1e-12
INIT_LOW, INIT_HIGH = 0.1, 1.1


def masked_objective(values, mask, user_factors, service_factors):
    """Sum of squared errors over observed cells only."""
    residual = mask * (values - user_factors @ service_factors.T)
    return float(np.sum(residual * residual))


def masked_nmf(values, mask, rank, iters=100, seed=42, tol=1e-6, eps_div=EPS_DIV, history=None):
    """
    Factorize one observed slice.

    Parameters
    ----------
    values : np.ndarray
        (n, m) non-negative, 0 where unobserved.
    mask : np.ndarray
        (n, m) binary observation mask.
    rank : int
        f1.
    iters : int
        Maximum multiplicative update rounds.
    tol : float
        Stop when the relative objective improvement drops below `tol`
        (0 disables early stopping).
    history : list, optional
        Receives the objective after initialization and after every round.

    Returns
    -------
    (np.ndarray, np.ndarray)
        User factors (n, rank) and service factors (m, rank), non-negative.

    Raises
    ------
    EmptyDataError
        No observed entry.
    ConfigurationError
        rank < 1 or rank > min(n, m).
    """
    n, m = values.shape
    if rank < 1 or rank > min(n, m):
        raise ConfigurationError(f"rank f1={rank} must be in [1, min(n, m)={min(n, m)}]")
    if not np.any(mask):
        raise EmptyDataError("cannot factorize an empty slice")

    user_factors, service_factors = _init_factors(n, m, rank, seed)
    observed = mask * values
    objective = masked_objective(values, mask, user_factors, service_factors)
    if history is not None:
        history.append(objective)

    # rows and columns without observations are left at their initialization
    idle_users = ~mask.any(axis=1)
    idle_services = ~mask.any(axis=0)
    for _ in range(iters):
        approx = mask * (user_factors @ service_factors.T)
        ratio = (observed @ service_factors) / (approx @ service_factors + eps_div)
        ratio[idle_users] = 1.0
        user_factors *= ratio
        approx = mask * (user_factors @ service_factors.T)
        ratio = (observed.T @ user_factors) / (approx.T @ user_factors + eps_div)
        ratio[idle_services] = 1.0
        service_factors *= ratio

        previous, objective = objective, masked_objective(values, mask, user_factors, service_factors)
        if history is not None:
            history.append(objective)
        if tol > 0 and (previous - objective) <= tol * max(previous, EPS_DIV):
            break
    return user_factors, service_factors


def _init_factors(n, m, rank, seed):
    rng = np.random.default_rng(seed)
    return (rng.uniform(INIT_LOW, INIT_HIGH, size=(n, rank)),
            rng.uniform(INIT_LOW, INIT_HIGH, size=(m, rank)))


@dataclass
class LatentFeatures:
    """
    Stacked per-step factors, time-major.

    user_features : (tau, n, f1)
    service_features : (tau, m, f1)
    """
    user_features: np.ndarray
    service_features: np.ndarray
    window: tuple

    @property
    def combined(self):
        """X_0: users over services per step, (tau, n + m, f1)."""
        return np.concatenate([self.user_features, self.service_features], axis=1)

    @property
    def tau(self):
        return self.user_features.shape[0]

    @property
    def rank(self):
        return self.user_features.shape[2]


def build_initial_embeddings(tensor, window, rank, iters=100, seed=42, tol=1e-6):
    """
    One masked factorization per history step.

    Every step starts from the same seeded initialization. A step with no
    observations keeps that initialization (a warning is logged), so a
    window with empty slices still yields dense, positive features.

    Raises
    ------
    ConfigurationError
        Window outside the tensor, or a bad rank (message names the step).
    """
    n, m, T = tensor.dims
    window = tuple(int(t) for t in window)
    if not window or min(window) < 0 or max(window) >= T:
        raise ConfigurationError(f"window {window} outside [0, {T})")
    user_steps, service_steps = [], []
    for t in window:
        values, mask = tensor.slice_matrix(t)
        try:
            user_factors, service_factors = masked_nmf(values, mask, rank, iters=iters, seed=seed, tol=tol)
        except EmptyDataError:
            logger.warning("time step %d has no observations; keeping the seeded initialization", t)
            user_factors, service_factors = _init_factors(n, m, rank, seed)
        except ConfigurationError as err:
            raise ConfigurationError(f"time step {t}: {err}") from None
        user_steps.append(user_factors)
        service_steps.append(service_factors)
        logger.debug("factorized step %d (%d observed)", t, int(mask.sum()))
    return LatentFeatures(np.stack(user_steps), np.stack(service_steps), window)


def nmf_baseline(train_tensor, target_time, rank, iters=100, seed=42, tol=1e-6):
    """
    Plain masked-NMF predictor: factorize the training records at the
    target step and return the dense (n, m) reconstruction.
    """
    values, mask = train_tensor.slice_matrix(target_time)
    user_factors, service_factors = masked_nmf(values, mask, rank, iters=iters, seed=seed, tol=tol)
    return user_factors @ service_factors.T
