"""
qos_data.py
-----------
WSDREAM-style QoS records, the sparse (user, service, time) tensor, and the
train / validation / test splits used by every other stage.

Records are kept column-wise in numpy arrays; a tensor is never mutated
after construction, so derived tensors (splits, cold-start copies) are new
objects built by `SparseQoSTensor.subset`.
"""
import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from .exceptions import BoundsError, ConfigurationError, DataParseError, EmptyDataError

logger = logging.getLogger(__name__)

RECORD_COLUMNS = ['user', 'service', 'time', 'value']


@dataclass(frozen=True)
class QoSRecord:
    user_id: int
    service_id: int
    time_step: int
    value: float


class SparseQoSTensor:
    """
    Observed entries of the n x m x T QoS tensor.

    Parameters
    ----------
    dims : tuple
        (n, m, T)
    users, services, times : array-like of int
    values : array-like of float
        Strictly positive; at most one record per (user, service, time).
    rejected_lines : list of int, optional
        1-based input line numbers skipped because value <= 0.
    """

    def __init__(self, dims, users, services, times, values, rejected_lines=None):
        self.dims = tuple(int(d) for d in dims)
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ConfigurationError(f"dims must be three positive integers, got {dims}")
        users = np.asarray(users, dtype=np.int64)
        services = np.asarray(services, dtype=np.int64)
        times = np.asarray(times, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        _check_bounds(self.dims, users, services, times)
        if values.size and values.min() <= 0:
            raise BoundsError("QoS values must be > 0; zeros denote unobserved entries")

        # canonical (time, user, service) order keeps every derived output reproducible
        order = np.lexsort((services, users, times))
        self.users = users[order]
        self.services = services[order]
        self.times = times[order]
        self.values = values[order]
        for arr in (self.users, self.services, self.times, self.values):
            arr.setflags(write=False)

        n, m, _ = self.dims
        keys = (self.times * n + self.users) * m + self.services
        if keys.size and np.any(np.diff(keys) == 0):
            raise BoundsError("duplicate (user, service, time) record")
        self.rejected_lines = list(rejected_lines or [])
        self.cold_users = np.array([], dtype=np.int64)
        self.cold_services = np.array([], dtype=np.int64)
        self._time_bounds = np.searchsorted(self.times, np.arange(self.dims[2] + 1))

    # ------------------------------------------------------------------
    @property
    def n_users(self):
        return self.dims[0]

    @property
    def n_services(self):
        return self.dims[1]

    @property
    def n_timesteps(self):
        return self.dims[2]

    def __len__(self):
        return int(self.values.size)

    @property
    def density(self):
        n, m, T = self.dims
        return len(self) / float(n * m * T)

    def records(self):
        """All records as QoSRecord objects (canonical order)."""
        return [
            QoSRecord(int(u), int(s), int(t), float(v))
            for u, s, t, v in zip(self.users, self.services, self.times, self.values)
        ]

    def record_keys(self):
        """Set of (user, service, time) triples."""
        return set(zip(self.users.tolist(), self.services.tolist(), self.times.tolist()))

    def to_frame(self):
        return pd.DataFrame({
            'user': self.users, 'service': self.services,
            'time': self.times, 'value': self.values,
        })

    # ------------------------------------------------------------------
    # per-time index
    # ------------------------------------------------------------------
    def _check_time(self, t):
        if not 0 <= t < self.dims[2]:
            raise BoundsError(f"time step {t} outside [0, {self.dims[2]})")

    def time_range(self, t):
        """Slice of the canonical arrays holding time step `t`."""
        self._check_time(t)
        return slice(int(self._time_bounds[t]), int(self._time_bounds[t + 1]))

    def count_at(self, t):
        span = self.time_range(t)
        return span.stop - span.start

    def slice_matrix(self, t):
        """
        Dense view of one time step.

        Returns
        -------
        values : np.ndarray
            (n, m) observed values, 0 where unobserved.
        mask : np.ndarray
            (n, m) 1.0 where observed.
        """
        span = self.time_range(t)
        n, m, _ = self.dims
        values = np.zeros((n, m))
        mask = np.zeros((n, m))
        values[self.users[span], self.services[span]] = self.values[span]
        mask[self.users[span], self.services[span]] = 1.0
        return values, mask

    def services_of(self, user, t):
        """Service ids observed for `user` at `t` (ascending)."""
        span = self.time_range(t)
        return self.services[span][self.users[span] == user]

    def users_of(self, service, t):
        """User ids observed for `service` at `t` (ascending)."""
        span = self.time_range(t)
        return self.users[span][self.services[span] == service]

    def user_profile(self, user, t):
        span = self.time_range(t)
        return self.values[span][self.users[span] == user]

    def service_profile(self, service, t):
        span = self.time_range(t)
        return self.values[span][self.services[span] == service]

    # ------------------------------------------------------------------
    def subset(self, keep):
        """New tensor with the records selected by boolean mask `keep`."""
        keep = np.asarray(keep, dtype=bool)
        return SparseQoSTensor(
            self.dims, self.users[keep], self.services[keep], self.times[keep], self.values[keep],
        )

    def __repr__(self):
        return f"SparseQoSTensor(dims={self.dims}, records={len(self)}, density={self.density:.4%})"


def _check_bounds(dims, users, services, times):
    n, m, T = dims
    for name, arr, limit in (('user', users, n), ('service', services, m), ('time', times, T)):
        if arr.size and (arr.min() < 0 or arr.max() >= limit):
            bad = int(arr[(arr < 0) | (arr >= limit)][0])
            raise BoundsError(f"{name} index {bad} outside [0, {limit})")


def from_frame(df, dims, rejected_lines=None):
    """Build a tensor from a DataFrame with user/service/time/value columns."""
    return SparseQoSTensor(
        dims, df['user'].to_numpy(), df['service'].to_numpy(), df['time'].to_numpy(),
        df['value'].to_numpy(), rejected_lines=rejected_lines,
    )


# ==========================================================================
# LOADING
# ==========================================================================

def load_wsdream(path, dims):
    """
    Load a whitespace-separated "user service time value" file.

    The file is parsed in one vectorized pass; only when that pass fails is
    it rescanned line by line to name the first offending line.

    Parameters
    ----------
    path : str or Path
    dims : tuple
        Declared (n, m, T).

    Returns
    -------
    SparseQoSTensor
        Duplicates keep the last occurrence; lines with value <= 0 are
        skipped and listed in `rejected_lines`.

    Raises
    ------
    DataParseError
        Malformed line (non-ASCII byte, wrong field count, non-numeric or
        non-integer field).
    BoundsError
        Index outside the declared dims.
    """
    try:
        parsed = pd.read_csv(
            path, sep=r'\s+', header=None, dtype=np.float64, skip_blank_lines=False,
            encoding='ascii', encoding_errors='strict', engine='c',
        )
    except pd.errors.EmptyDataError:
        parsed = pd.DataFrame(columns=range(4), dtype=np.float64)
    except ValueError:
        # ParserError and UnicodeDecodeError are ValueErrors too
        _raise_first_bad_line(path)
        raise

    parsed.index = parsed.index + 1  # 1-based line numbers
    parsed = parsed[parsed.notna().any(axis=1)]  # blank lines
    if parsed.shape[1] != 4 or not np.isfinite(parsed.to_numpy()).all():
        _raise_first_bad_line(path)
    parsed.columns = RECORD_COLUMNS
    if (parsed[['user', 'service', 'time']] % 1 != 0).any(axis=None):
        _raise_first_bad_line(path)
    if parsed.empty:
        logger.warning("%s: no records", path)
        return SparseQoSTensor(dims, [], [], [], [])
    parsed = parsed.astype({'user': np.int64, 'service': np.int64, 'time': np.int64})

    n, m, T = dims
    for name, limit in (('user', n), ('service', m), ('time', T)):
        col = parsed[name]
        out = (col < 0) | (col >= limit)
        if out.any():
            line = int(out[out].index[0])
            raise BoundsError(f"line {line}: {name} index {int(col[line])} outside [0, {limit})")

    rejected = parsed['value'] <= 0
    rejected_lines = [int(i) for i in rejected[rejected].index]
    if rejected_lines:
        shown = ', '.join(str(i) for i in rejected_lines[:10])
        more = '' if len(rejected_lines) <= 10 else f" (+{len(rejected_lines) - 10} more)"
        logger.warning("%s: skipped %d records with value <= 0 at lines %s%s",
                       path, len(rejected_lines), shown, more)
    parsed = parsed[~rejected]
    parsed = parsed.drop_duplicates(subset=['user', 'service', 'time'], keep='last')

    tensor = from_frame(parsed, dims, rejected_lines=rejected_lines)
    logger.info("loaded %s: %d records, density %.4f%%", path, len(tensor), 100 * tensor.density)
    return tensor


def _raise_first_bad_line(path):
    """Rescan `path` and raise DataParseError for its first malformed line."""
    with open(path, 'rb') as handle:
        for line_number, raw in enumerate(handle, start=1):
            try:
                text = raw.decode('ascii')
            except UnicodeDecodeError as exc:
                raise DataParseError(line_number, f"non-ASCII byte 0x{raw[exc.start]:02x} at column {exc.start + 1}") from None
            fields = text.split()
            if not fields:
                continue
            if len(fields) != 4:
                raise DataParseError(line_number, f"expected 4 fields, got {len(fields)}")
            try:
                numbers = [float(x) for x in fields]
            except ValueError:
                raise DataParseError(line_number, f"non-numeric field in {text.strip()!r}") from None
            if not all(math.isfinite(x) for x in numbers):
                raise DataParseError(line_number, f"non-finite field in {text.strip()!r}")
            if any(x % 1 != 0 for x in numbers[:3]):
                raise DataParseError(line_number, "indices must be integers")
    raise DataParseError(0, "file could not be parsed")


def save_wsdream(tensor, path):
    """Write records in the WSDREAM text layout (canonical order)."""
    df = tensor.to_frame()
    df.to_csv(path, sep=' ', header=False, index=False, float_format='%.6f')


def dataset_statistics(tensor):
    """Users, services, time steps, records, density, value range, rejected count."""
    n, m, T = tensor.dims
    has = len(tensor) > 0
    return {
        'users': n,
        'services': m,
        'time_steps': T,
        'records': len(tensor),
        'density': tensor.density,
        'min_value': float(tensor.values.min()) if has else float('nan'),
        'max_value': float(tensor.values.max()) if has else float('nan'),
        'rejected': len(tensor.rejected_lines),
    }


# ==========================================================================
# SPLITS
# ==========================================================================

@dataclass(frozen=True)
class SplitSpec:
    """
    How the records at `target_time` are divided.

    target_time of -1 means the last time step.
    """
    train_fraction: float = 0.10
    validation_fraction: float = 0.20
    target_time: int = -1
    tau: int = 8
    seed: int = 42
    cold_start_mode: Optional[str] = None
    cold_start_xi: float = 0.0

    @classmethod
    def from_params(cls, params):
        mode = params['cold_start_mode']
        return cls(
            train_fraction=params['train_fraction'],
            validation_fraction=params['validation_fraction'],
            target_time=params['target_time'],
            tau=params['tau'],
            seed=params['seed'],
            cold_start_mode=None if mode == 'none' else mode,
            cold_start_xi=params['cold_start_xi'],
        )

    def resolve_target(self, n_timesteps):
        t = self.target_time if self.target_time >= 0 else n_timesteps + self.target_time
        if not 0 <= t < n_timesteps:
            raise ConfigurationError(f"target time {self.target_time} outside [0, {n_timesteps})")
        return t


@dataclass
class QoSSplit:
    """
    train : history window [t_end - tau, t_end) plus train-observed records at t_end
    validation, test : records at t_end only
    """
    train: SparseQoSTensor
    validation: SparseQoSTensor
    test: SparseQoSTensor
    target_time: int
    tau: int
    seed: int

    @property
    def window(self):
        return list(range(self.target_time - self.tau, self.target_time))

    def observed_at_target(self):
        """Train records at t_end (the supervision set)."""
        span = self.train.time_range(self.target_time)
        return self.train.subset(_span_mask(len(self.train), span))

    def history(self):
        """Train records inside the history window only."""
        return self.train.subset(self.train.times < self.target_time)


def _span_mask(size, span):
    keep = np.zeros(size, dtype=bool)
    keep[span] = True
    return keep


def calculate_split_allocation(count, train_fraction, validation_fraction):
    """
    Record counts at the target step.

    Returns
    -------
    dict
        n_observed, n_train, n_validation, n_test
    """
    n_observed = int(round(train_fraction * count))
    n_validation = int(round(validation_fraction * n_observed))
    return {
        'n_observed': n_observed,
        'n_train': n_observed - n_validation,
        'n_validation': n_validation,
        'n_test': count - n_observed,
    }


def make_split(tensor, spec):
    """
    Partition the records at the target step and keep the history window.

    A uniform seeded sample of `train_fraction` of the target-step records is
    train-observed; `validation_fraction` of those move to validation; the
    rest of the target step is the test set.

    Raises
    ------
    ConfigurationError
        Bad window, zero training records, or an empty test set.
    EmptyDataError
        No records at the target step.
    """
    t_end = spec.resolve_target(tensor.n_timesteps)
    if spec.tau < 1 or t_end - spec.tau < 0:
        raise ConfigurationError(f"window tau={spec.tau} does not fit before target step {t_end}")
    span = tensor.time_range(t_end)
    count = span.stop - span.start
    if count == 0:
        raise EmptyDataError(f"no records at target step {t_end}")

    alloc = calculate_split_allocation(count, spec.train_fraction, spec.validation_fraction)
    if alloc['n_train'] < 1:
        raise ConfigurationError(
            f"train_fraction={spec.train_fraction} leaves no training records at step {t_end} ({count} records)"
        )
    if alloc['n_test'] < 1:
        raise ConfigurationError(f"train_fraction={spec.train_fraction} leaves an empty test set")

    rng = np.random.default_rng(spec.seed)
    order = rng.permutation(count) + span.start
    observed = np.sort(order[:alloc['n_observed']])
    validation_idx = np.sort(order[:alloc['n_validation']])
    train_idx = np.sort(order[alloc['n_validation']:alloc['n_observed']])
    test_idx = np.sort(order[alloc['n_observed']:])

    in_window = (tensor.times >= t_end - spec.tau) & (tensor.times < t_end)
    train_keep = in_window.copy()
    train_keep[train_idx] = True

    split = QoSSplit(
        train=tensor.subset(train_keep),
        validation=tensor.subset(_index_mask(len(tensor), validation_idx)),
        test=tensor.subset(_index_mask(len(tensor), test_idx)),
        target_time=t_end,
        tau=spec.tau,
        seed=spec.seed,
    )
    logger.info(
        "split at t=%d (seed %d): %d observed -> %d train, %d validation; %d test",
        t_end, spec.seed, len(observed), alloc['n_train'], alloc['n_validation'], alloc['n_test'],
    )
    if spec.cold_start_mode:
        split.train = simulate_cold_start(
            split.train, spec.cold_start_mode, spec.cold_start_xi, spec.seed,
        )
    return split


def _index_mask(size, idx):
    keep = np.zeros(size, dtype=bool)
    keep[idx] = True
    return keep


def cold_start_counts(n, m, mode, xi):
    """Users and services emptied for a cold-start mode and percent."""
    n_users = math.ceil(xi * n / 100.0) if mode in ('CU', 'CB') else 0
    n_services = math.ceil(xi * m / 100.0) if mode in ('CS', 'CB') else 0
    return n_users, n_services


def simulate_cold_start(tensor, mode, xi, seed):
    """
    Delete every record of a seeded subset of users and/or services.

    Parameters
    ----------
    tensor : SparseQoSTensor
        Training tensor (test records live elsewhere and are untouched).
    mode : str
        'CU' users, 'CS' services, 'CB' both.
    xi : float
        Percent in [0, 50].
    """
    if mode not in ('CU', 'CS', 'CB'):
        raise ConfigurationError(f"cold-start mode must be CU, CS or CB, got {mode!r}")
    if not 0.0 <= xi <= 50.0:
        raise ConfigurationError(f"cold-start percent must be in [0, 50], got {xi}")
    n, m, _ = tensor.dims
    n_users, n_services = cold_start_counts(n, m, mode, xi)
    if n_users == 0 and n_services == 0:
        return tensor

    rng = np.random.default_rng(seed)
    removed_users = np.sort(rng.choice(n, size=n_users, replace=False)) if n_users else np.array([], dtype=int)
    removed_services = np.sort(rng.choice(m, size=n_services, replace=False)) if n_services else np.array([], dtype=int)
    drop = np.isin(tensor.users, removed_users) | np.isin(tensor.services, removed_services)
    logger.info("cold start %s xi=%.1f%%: emptied %d users, %d services (%d records)",
                mode, xi, n_users, n_services, int(drop.sum()))
    out = tensor.subset(~drop)
    out.cold_users = removed_users
    out.cold_services = removed_services
    return out
