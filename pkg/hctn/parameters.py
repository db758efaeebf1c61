"""
Parameters class for centralized hyperparameter management.

This module provides a single source of truth for every HCTN hyperparameter,
so a training run, a sweep and a checkpoint all read the same values.
"""

import pandas as pd
from typing import Optional

from .exceptions import ConfigurationError

# Parameter metadata: (description, code_name)
# Keep Order: matches the checkpoint params table order
PARAM_METADATA = [
    # Data & split
    ("Users (n)", "n_users"),
    ("Services (m)", "n_services"),
    ("Time Steps (T)", "n_timesteps"),
    ("Prediction Time Step", "target_time"),
    ("Time Window (tau)", "tau"),
    ("Train Fraction (psi)", "train_fraction"),
    ("Validation Fraction", "validation_fraction"),
    ("Cold-start Mode", "cold_start_mode"),
    ("Cold-start Percent (xi)", "cold_start_xi"),
    ("Random Seed", "seed"),
    # GPAM
    ("Latent Rank (f1)", "f1"),
    ("NMF Iterations", "nmf_iters"),
    ("NMF Tolerance", "nmf_tol"),
    ("Freeze GPAM Features", "freeze_gpam"),
    # HCFM
    ("Collaborative Width (f2)", "f2"),
    ("HCN Layers (l)", "layers"),
    ("Graph Units", "graph_units"),
    ("Sparse Graphs", "sparse_graphs"),
    # GMM
    ("User Greysheep Constant (c1)", "c1"),
    ("Service Greysheep Constant (c2)", "c2"),
    # TGEM
    ("Attention Heads (h_n)", "heads"),
    ("Head Width (d_head)", "d_head"),
    ("T-block Kernel (k_t)", "kernel_size"),
    ("Dropout Rate", "dropout"),
    # CQPM
    ("Prediction Width (f4)", "f4"),
    # Ablations
    ("Use HCFM", "use_hcfm"),
    ("Use GMM", "use_gmm"),
    ("Use TGEM", "use_tgem"),
    ("Use T-block", "use_t_block"),
    ("Use F-block", "use_f_block"),
    # Training
    ("Loss", "loss"),
    ("Cauchy Scale (gamma)", "gamma"),
    ("Learning Rate", "lr"),
    ("Adam Beta1", "beta1"),
    ("Adam Beta2", "beta2"),
    ("Adam Epsilon", "eps"),
    ("Weight Decay", "weight_decay"),
    ("BN Momentum", "bn_momentum"),
    ("Max Epochs", "max_epochs"),
    ("Patience", "patience"),
    # Outliers
    ("Outlier Removal Percent (lambda)", "outlier_lambda"),
    ("Remove Train Outliers", "remove_train_outliers"),
    ("Isolation Trees", "n_trees"),
    ("Isolation Subsample", "subsample"),
]

DEFAULT_PARAMS = {
    'n_users': 0,
    'n_services': 0,
    'n_timesteps': 0,
    'target_time': -1,  # -1 means the last time step
    'tau': 8,
    'train_fraction': 0.10,
    'validation_fraction': 0.20,
    'cold_start_mode': 'none',
    'cold_start_xi': 0.0,
    'seed': 42,
    'f1': 16,
    'nmf_iters': 100,
    'nmf_tol': 1e-6,
    'freeze_gpam': True,
    'f2': 128,
    'layers': 2,
    'graph_units': 'all',
    'sparse_graphs': False,
    'c1': 1.0,
    'c2': 1.0,
    'heads': 4,
    'd_head': 8,
    'kernel_size': 3,
    'dropout': 0.1,
    'f4': 32,
    'use_hcfm': True,
    'use_gmm': True,
    'use_tgem': True,
    'use_t_block': True,
    'use_f_block': True,
    'loss': 'cauchy',
    'gamma': 1.0,
    'lr': 1e-3,
    'beta1': 0.9,
    'beta2': 0.999,
    'eps': 1e-8,
    'weight_decay': 1e-4,
    'bn_momentum': 0.9,
    'max_epochs': 200,
    'patience': 10,
    'outlier_lambda': 0.0,
    'remove_train_outliers': False,
    'n_trees': 100,
    'subsample': 256,
}

COLD_START_MODES = ('none', 'CU', 'CS', 'CB')
GRAPH_UNITS = ('all', 'first_order', 'second_order')
LOSSES = ('cauchy', 'mse')


class Parameters:
    """
    Centralized container for all HCTN hyperparameters.

    Usage:
        params = Parameters()                 # defaults
        params.set_all(load_config_file(p))   # config file
        params.set_all(cli_overrides)         # explicit flags win

        params['tau']           # Dictionary-style
        params.get('tau', 8)    # Method with optional default
    """

    def __init__(self, values: Optional[dict] = None):
        """Initialize with the defaults, then apply `values` on top."""
        self._params = dict(DEFAULT_PARAMS)
        if values:
            self.set_all(values)

    def set(self, key: str, value) -> None:
        """
        Set a single parameter, coercing it to the default's type.

        Args:
            key: Parameter name
            value: Parameter value (strings are coerced)
        """
        self._params[key] = coerce_value(key, value)

    def set_all(self, params_dict: dict) -> None:
        """
        Set all parameters from a dictionary at once.

        Args:
            params_dict: Dictionary of parameter names and values
        """
        for key, value in params_dict.items():
            self.set(key, value)

    def get(self, key: str, default=None):
        """Get a parameter value with optional default."""
        return self._params.get(key, default)

    def __getitem__(self, key: str):
        return self._params[key]

    def keys(self):
        """Return all parameter code names."""
        return self._params.keys()

    def to_dict(self) -> dict:
        """Export parameters as a dictionary copy."""
        return self._params.copy()

    def copy(self) -> "Parameters":
        return Parameters(self.to_dict())

    def get_params_df(self) -> pd.DataFrame:
        """
        Generate the params DataFrame for export beside a checkpoint.

        Returns
        -------
        pd.DataFrame
            Columns: description, code_name, value
        """
        rows = []
        for description, code_name in PARAM_METADATA:
            if code_name in self._params:
                rows.append((description, code_name, self._params[code_name]))
        return pd.DataFrame(rows, columns=['description', 'code_name', 'value'])

    @classmethod
    def from_df(cls, df: pd.DataFrame) -> "Parameters":
        """Rebuild Parameters from a `get_params_df` table."""
        values = {row.code_name: row.value for row in df.itertuples(index=False)}
        return cls(values)

    def __repr__(self) -> str:
        return f"Parameters({len(self._params)} params)"


def coerce_value(key: str, value):
    """
    Coerce `value` to the type of DEFAULT_PARAMS[key].

    Raises
    ------
    ConfigurationError
        Unknown key or a value that does not parse as the expected type.
    """
    if key not in DEFAULT_PARAMS:
        raise ConfigurationError(f"unknown parameter '{key}'")
    default = DEFAULT_PARAMS[key]
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                lowered = value.strip().lower()
                if lowered in ('1', 'true', 'yes', 'on'):
                    return True
                if lowered in ('0', 'false', 'no', 'off'):
                    return False
                raise ValueError(value)
            return bool(value)
        if isinstance(default, int):
            as_float = float(value)
            if not as_float.is_integer():
                raise ValueError(value)
            return int(as_float)
        if isinstance(default, float):
            return float(value)
        return str(value).strip()
    except (TypeError, ValueError):
        raise ConfigurationError(
            f"parameter '{key}' expects {type(default).__name__}, got {value!r}"
        ) from None


def load_config_file(path) -> dict:
    """
    Read a flat key=value config file.

    Blank lines and `#` comments are ignored; values are coerced to the
    type of their default.
    """
    values = {}
    with open(path, encoding='utf-8') as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.split('#', 1)[0].strip()
            if not line:
                continue
            if '=' not in line:
                raise ConfigurationError(f"{path}:{line_number}: expected key=value, got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split('=', 1))
            values[key] = coerce_value(key, value)
    return values


def validate_params(params) -> None:
    """
    Check cross-parameter constraints before any model is built.

    Raises
    ------
    ConfigurationError
        On the first violated constraint.
    """
    tau = params['tau']
    f2 = params['f2']
    if tau < 1:
        raise ConfigurationError(f"tau must be >= 1, got {tau}")
    if params['use_tgem'] and tau % 4 != 0:
        raise ConfigurationError(f"tau must be divisible by 4 when TGEM is enabled, got {tau}")
    if f2 % 4 != 0:
        raise ConfigurationError(f"f2 must be divisible by 4, got {f2}")
    if params['use_tgem'] and params['heads'] * params['d_head'] != f2 // 4:
        raise ConfigurationError(
            f"heads * d_head must equal f2/4: {params['heads']} * {params['d_head']} != {f2 // 4}"
        )
    if params['layers'] < 1:
        raise ConfigurationError(f"layers must be >= 1, got {params['layers']}")
    if params['f1'] < 1 or params['f4'] < 1:
        raise ConfigurationError("f1 and f4 must be >= 1")
    if params['kernel_size'] < 1 or params['kernel_size'] % 2 == 0:
        raise ConfigurationError(f"kernel_size must be odd and positive, got {params['kernel_size']}")
    if params['gamma'] <= 0:
        raise ConfigurationError(f"gamma must be > 0, got {params['gamma']}")
    if not (0.0 <= params['outlier_lambda'] <= 50.0):
        raise ConfigurationError(f"outlier_lambda must be in [0, 50], got {params['outlier_lambda']}")
    if not (0.0 < params['train_fraction'] <= 1.0):
        raise ConfigurationError(f"train_fraction must be in (0, 1], got {params['train_fraction']}")
    if not (0.0 <= params['validation_fraction'] < 1.0):
        raise ConfigurationError("validation_fraction must be in [0, 1)")
    if not (0.0 <= params['dropout'] < 1.0):
        raise ConfigurationError(f"dropout must be in [0, 1), got {params['dropout']}")
    if params['cold_start_mode'] not in COLD_START_MODES:
        raise ConfigurationError(f"cold_start_mode must be one of {COLD_START_MODES}")
    if params['graph_units'] not in GRAPH_UNITS:
        raise ConfigurationError(f"graph_units must be one of {GRAPH_UNITS}")
    if params['loss'] not in LOSSES:
        raise ConfigurationError(f"loss must be one of {LOSSES}")
