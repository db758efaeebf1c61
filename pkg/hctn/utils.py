import logging

import numpy as np

from .exceptions import ConfigurationError
from .qos_data import SparseQoSTensor

logger = logging.getLogger(__name__)


def generate_synthetic_tensor(n_users, n_services, n_timesteps, rank=2, density=0.3,
                              noise=0.0, greysheep_fraction=0.0, outlier_fraction=0.0,
                              outlier_scale=20.0, seed=42):
    """
    Low-rank non-negative QoS tensor with smooth temporal drift.

    Parameters
    ----------
    n_users, n_services, n_timesteps : int
        Tensor dims (n, m, T).
    rank : int
        Number of latent components.
    density : float
        Probability that an entry is observed.
    noise : float
        Std of multiplicative log-normal noise (0 = exact low rank).
    greysheep_fraction : float
        Fraction of users whose profiles are a permuted, rescaled copy of
        the low-rank profile.
    outlier_fraction, outlier_scale : float
        Fraction of observed records multiplied by `outlier_scale`.
    seed : int

    Returns
    -------
    tensor : SparseQoSTensor
        Observed (possibly corrupted) records.
    info : dict
        'clean': the same records before outliers were planted
        'outliers': bool array aligned with the tensor's records
        'greysheep_users': sorted user ids with permuted-scale profiles
    """
    if not 0.0 < density <= 1.0:
        raise ConfigurationError(f"density must be in (0, 1], got {density}")
    if rank < 1:
        raise ConfigurationError(f"rank must be >= 1, got {rank}")
    rng = np.random.default_rng(seed)

    users = rng.uniform(0.2, 1.2, size=(n_users, rank))
    services = rng.uniform(0.2, 1.2, size=(n_services, rank))
    phases = rng.uniform(0.0, 2 * np.pi, size=rank)
    steps = np.arange(n_timesteps)[:, None]
    drift = 1.0 + 0.2 * np.sin(2 * np.pi * steps / max(n_timesteps, 1) + phases)  # (T, rank)

    # (T, n, m)
    dense = np.einsum('ik,jk,tk->tij', users, services, drift)
    if noise > 0:
        dense = dense * rng.lognormal(0.0, noise, size=dense.shape)

    n_grey = int(round(greysheep_fraction * n_users))
    greysheep = np.sort(rng.choice(n_users, size=n_grey, replace=False)) if n_grey else np.array([], dtype=int)
    for user in greysheep:
        perm = rng.permutation(n_services)
        scale = rng.uniform(2.0, 4.0)
        dense[:, user, :] = dense[:, user, perm] * scale

    observed = rng.random(dense.shape) < density
    times, rows, cols = np.nonzero(observed)
    clean_values = dense[times, rows, cols]
    clean = SparseQoSTensor((n_users, n_services, n_timesteps), rows, cols, times, clean_values)

    tensor, outliers = plant_outliers(clean, outlier_fraction, outlier_scale, seed=seed + 1)
    logger.info("synthetic tensor %s: %d records, %d greysheep users, %d planted outliers",
                clean.dims, len(clean), n_grey, int(outliers.sum()))
    return tensor, {'clean': clean, 'outliers': outliers, 'greysheep_users': greysheep}


def plant_outliers(tensor, fraction, scale, seed, where=None):
    """
    Multiply a seeded random `fraction` of records by `scale`.

    Parameters
    ----------
    where : array-like of bool, optional
        Restrict candidates to these records (e.g. training records only).

    Returns
    -------
    (SparseQoSTensor, np.ndarray)
        Corrupted tensor and the bool outlier mask over its records.
    """
    candidates = np.arange(len(tensor)) if where is None else np.flatnonzero(where)
    k = int(round(fraction * candidates.size))
    mask = np.zeros(len(tensor), dtype=bool)
    if k == 0:
        return tensor, mask
    rng = np.random.default_rng(seed)
    mask[rng.choice(candidates, size=k, replace=False)] = True
    values = np.where(mask, tensor.values * scale, tensor.values)
    corrupted = SparseQoSTensor(tensor.dims, tensor.users, tensor.services, tensor.times, values)
    return corrupted, mask


def synthetic_key_frame(tensor, info):
    """Per-record ground truth for a synthetic tensor (written by `synth --key`)."""
    df = tensor.to_frame()
    df['clean_value'] = info['clean'].values
    df['outlier'] = info['outliers']
    df['greysheep_user'] = np.isin(df['user'], info['greysheep_users'])
    return df
