"""
gmm.py
------
Greysheep module: discrepancy index, labeling, local profile statistics and
masked feature injection.

A greysheep user (service) is one whose observed values deviate from what
its own mean plus each counterpart's typical value would predict, weighted
by how consistent that counterpart is across the population.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from ..engine import tensor as T
from ..exceptions import ShapeError
from .layers import Dense, Module

logger = logging.getLogger(__name__)

STAT_NAMES = (
    'min', 'max', 'mean', 'median', 'std', 'skewness', 'kurtosis', 'iqr',
    'mean_abs_dev', 'median_abs_dev', 'rms', 'abs_energy', 'entropy', 'ptp',
)
N_STATS = len(STAT_NAMES)
ENTROPY_BINS = 10


# ==========================================================================
# DISCREPANCY INDEX
# ==========================================================================

def _profile_moments(values, mask, axis):
    """count, plain mean, trimmed mean and population std along `axis`."""
    count = mask.sum(axis=axis)
    total = (values * mask).sum(axis=axis)
    safe = np.maximum(count, 1)
    mean = np.where(count > 0, total / safe, 0.0)
    high = np.where(mask > 0, values, -np.inf).max(axis=axis)
    low = np.where(mask > 0, values, np.inf).min(axis=axis)
    trimmed = np.where(
        count > 2,
        (total - np.where(count > 2, high, 0.0) - np.where(count > 2, low, 0.0)) / np.maximum(count - 2, 1),
        mean,
    )
    centred = (values - np.expand_dims(mean, axis)) * mask
    std = np.sqrt((centred * centred).sum(axis=axis) / safe)
    return count, mean, trimmed, std


def _consistency(std, active):
    """1 - min-max scaled std over active entities; 1 when the range is zero."""
    out = np.zeros_like(std)
    if not np.any(active):
        return out
    lo, hi = std[active].min(), std[active].max()
    if hi - lo == 0:
        out[active] = 1.0
    else:
        out[active] = 1.0 - (std[active] - lo) / (hi - lo)
    return out


def gdi_from_matrix(values, mask):
    """
    Discrepancy index of every user and service of one dense slice.

    Returns
    -------
    (np.ndarray, np.ndarray)
        (n,) user GDI and (m,) service GDI; 0 for empty profiles.
    """
    u_count, u_mean, u_trimmed, u_std = _profile_moments(values, mask, axis=1)
    s_count, s_mean, s_trimmed, s_std = _profile_moments(values, mask, axis=0)
    u_weight = _consistency(u_std, u_count > 0)
    s_weight = _consistency(s_std, s_count > 0)

    user_dev = np.abs(values - u_mean[:, None] - s_trimmed[None, :]) * s_weight[None, :] * mask
    service_dev = np.abs(values - s_mean[None, :] - u_trimmed[:, None]) * u_weight[:, None] * mask
    gdi_users = np.where(u_count > 0, user_dev.sum(axis=1) / np.maximum(u_count, 1), 0.0)
    gdi_services = np.where(s_count > 0, service_dev.sum(axis=0) / np.maximum(s_count, 1), 0.0)
    return gdi_users, gdi_services


def gdi(tensor, t):
    """GDI columns for time step `t` of a SparseQoSTensor."""
    values, mask = tensor.slice_matrix(t)
    return gdi_from_matrix(values, mask)


# ==========================================================================
# LABELING
# ==========================================================================

def _threshold(scores, active, c):
    if not np.any(active):
        return 0.0, 0.0, np.zeros_like(scores, dtype=bool)
    population = scores[active]
    mu, sigma = float(population.mean()), float(population.std())
    return mu, sigma, active & (scores > mu + c * sigma)


@dataclass
class GreysheepReport:
    """
    gdi_users : (tau, n)
    gdi_services : (tau, m)
    indicator : (tau, N) 1.0 for greysheep, users first
    thresholds : DataFrame with time_step, mu_user, sigma_user, mu_service, sigma_service
    """
    gdi_users: np.ndarray
    gdi_services: np.ndarray
    indicator: np.ndarray
    thresholds: pd.DataFrame
    window: tuple
    c1: float
    c2: float

    @property
    def n_users(self):
        return self.gdi_users.shape[1]

    def labeled_counts(self):
        n = self.n_users
        return int(self.indicator[:, :n].sum()), int(self.indicator[:, n:].sum())

    def to_frame(self):
        """Rows of entity_kind, entity_id, time_step, gdi, labeled."""
        n = self.n_users
        frames = []
        for kind, scores, labels in (
            ('user', self.gdi_users, self.indicator[:, :n]),
            ('service', self.gdi_services, self.indicator[:, n:]),
        ):
            steps, ids = np.meshgrid(np.asarray(self.window), np.arange(scores.shape[1]), indexing='ij')
            frames.append(pd.DataFrame({
                'entity_kind': kind,
                'entity_id': ids.ravel(),
                'time_step': steps.ravel(),
                'gdi': scores.ravel(),
                'labeled': labels.ravel().astype(int),
            }))
        return pd.concat(frames, ignore_index=True)


def label_greysheep(gdi_users, gdi_services, active_users, active_services, c1=1.0, c2=1.0):
    """
    Strict threshold test per step: GDI > mean + c * std of the active
    population (population std).

    Parameters
    ----------
    gdi_users, active_users : (tau, n)
    gdi_services, active_services : (tau, m)

    Returns
    -------
    (np.ndarray, list of dict)
        Indicator (tau, N) and the per-step thresholds.
    """
    tau = gdi_users.shape[0]
    rows, thresholds = [], []
    for k in range(tau):
        mu_u, sd_u, grey_u = _threshold(gdi_users[k], active_users[k], c1)
        mu_s, sd_s, grey_s = _threshold(gdi_services[k], active_services[k], c2)
        rows.append(np.concatenate([grey_u, grey_s]).astype(np.float64))
        thresholds.append({'mu_user': mu_u, 'sigma_user': sd_u, 'mu_service': mu_s, 'sigma_service': sd_s})
    return np.stack(rows), thresholds


def greysheep_report(tensor, window, c1=1.0, c2=1.0):
    """GDI, activity and labels over a window of steps."""
    gu, gs, au, as_ = [], [], [], []
    for t in window:
        values, mask = tensor.slice_matrix(t)
        users, services = gdi_from_matrix(values, mask)
        gu.append(users)
        gs.append(services)
        au.append(mask.any(axis=1))
        as_.append(mask.any(axis=0))
    gdi_users, gdi_services = np.stack(gu), np.stack(gs)
    indicator, thresholds = label_greysheep(gdi_users, gdi_services, np.stack(au), np.stack(as_), c1, c2)
    table = pd.DataFrame(thresholds)
    table.insert(0, 'time_step', list(window))
    report = GreysheepReport(gdi_users, gdi_services, indicator, table, tuple(window), c1, c2)
    n_u, n_s = report.labeled_counts()
    logger.info("greysheep c1=%.2f c2=%.2f: %d user and %d service labels over %d steps",
                c1, c2, n_u, n_s, len(window))
    return report


# ==========================================================================
# LOCAL STATISTICS
# ==========================================================================

def local_stats(profile):
    """
    The 14 profile statistics, in STAT_NAMES order. Empty profile -> zeros.

    Population std; Fisher skewness and excess kurtosis (0 for a constant
    profile); linear-interpolated IQR; median absolute deviation unscaled;
    entropy of a 10-bin histogram over the profile's own range (natural log,
    0 for a constant profile).
    """
    x = np.asarray(profile, dtype=np.float64).ravel()
    if x.size == 0:
        return np.zeros(N_STATS)
    mean = x.mean()
    spread = np.ptp(x)
    if spread > 0:
        # scipy returns NaN for profiles constant up to rounding
        skewness = float(np.nan_to_num(stats.skew(x, bias=True)))
        kurt = float(np.nan_to_num(stats.kurtosis(x, fisher=True, bias=True)))
        counts, _ = np.histogram(x, bins=ENTROPY_BINS)
        entropy = float(stats.entropy(counts))
    else:
        skewness = kurt = entropy = 0.0
    return np.array([
        x.min(),
        x.max(),
        mean,
        np.median(x),
        x.std(),
        skewness,
        kurt,
        stats.iqr(x),
        np.mean(np.abs(x - mean)),
        stats.median_abs_deviation(x, scale=1.0),
        np.sqrt(np.mean(x * x)),
        np.sum(x * x),
        entropy,
        spread,
    ])


def local_features(tensor, window):
    """
    X_2: statistics of every user row and service column per step.

    Returns
    -------
    np.ndarray
        (tau, N, 14), users first; all-zero rows for empty profiles.
    """
    n, m, _ = tensor.dims
    out = np.zeros((len(window), n + m, N_STATS))
    for k, t in enumerate(window):
        span = tensor.time_range(t)
        users = tensor.users[span]
        services = tensor.services[span]
        values = tensor.values[span]
        for i in np.unique(users):
            out[k, i] = local_stats(values[users == i])
        for j in np.unique(services):
            out[k, n + j] = local_stats(values[services == j])
    return out


def scale_local_features(features):
    """Divide each statistic by its max |value| over the window (0 stays 0)."""
    scale = np.abs(features).max(axis=(0, 1))
    scale[scale == 0] = 1.0
    return features / scale


# ==========================================================================
# INJECTION
# ==========================================================================

def inject(indicator, features):
    """Keep the rows of `features` where `indicator` is 1 (Z = (G e) * Y)."""
    features = T.as_tensor(features)
    indicator = np.asarray(indicator, dtype=np.float64)
    if indicator.shape != features.shape[:-1]:
        raise ShapeError("inject", indicator.shape, features.shape)
    return T.hadamard(features, indicator[..., None])


def combine(indicator, injected, collaborative):
    """Z_3 = inject(G, Y_3) + inject(1 - G, Y_1)."""
    indicator = np.asarray(indicator, dtype=np.float64)
    greysheep = inject(indicator, injected)
    regular = inject(1.0 - indicator, collaborative)
    return greysheep, regular, T.add(greysheep, regular)


class GMMParams(Module):
    @classmethod
    def create(cls, rng, f2, prefix='gmm'):
        return cls({'dense': Dense.create(rng, f"{prefix}.dense", f2 + N_STATS, f2)})


@dataclass
class InjectedFeatures:
    concatenated: T.Tensor  # Y_2
    injected: T.Tensor      # Y_3
    greysheep: T.Tensor     # Z_1
    regular: T.Tensor       # Z_2
    combined: T.Tensor      # Z_3


def gmm_forward(collaborative, local, indicator, params):
    """
    Parameters
    ----------
    collaborative : (tau, N, f2) Tensor, Y_1
    local : (tau, N, 14) array, scaled X_2
    indicator : (tau, N) array, G
    params : GMMParams
    """
    concatenated = T.concat([collaborative, local], axis=-1)
    injected = params['dense'](concatenated)
    greysheep, regular, combined = combine(indicator, injected, collaborative)
    return InjectedFeatures(concatenated, injected, greysheep, regular, combined)
