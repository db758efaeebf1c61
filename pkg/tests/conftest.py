import numpy as np
import pytest

from hctn.parameters import Parameters
from hctn.qos_data import SparseQoSTensor, SplitSpec, make_split
from hctn.utils import generate_synthetic_tensor

# Smallest configuration that exercises every block: N = 8, tau = 4,
# f2 = 8 so f2/4 = 2 = heads * d_head.
TINY_PARAMS = {
    'tau': 4,
    'f1': 4,
    'f2': 8,
    'f4': 4,
    'layers': 1,
    'heads': 2,
    'd_head': 1,
    'dropout': 0.0,
    'nmf_iters': 30,
    'train_fraction': 0.6,
    'validation_fraction': 0.2,
    'max_epochs': 5,
    'patience': 5,
    'seed': 7,
}

SMALL_PARAMS = dict(TINY_PARAMS, f1=2, max_epochs=5, train_fraction=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_params():
    return Parameters(dict(TINY_PARAMS))


@pytest.fixture
def small_params():
    return Parameters(dict(SMALL_PARAMS))


@pytest.fixture
def tiny_tensor():
    """4 users x 4 services x 6 steps, dense enough for rank-4 slices."""
    tensor, _ = generate_synthetic_tensor(4, 4, 6, rank=2, density=0.8, seed=3)
    return tensor


@pytest.fixture
def tiny_split(tiny_tensor, tiny_params):
    return make_split(tiny_tensor, SplitSpec.from_params(tiny_params))


@pytest.fixture
def small_tensor():
    """The 12 x 10 x 8 rank-2 fixture at 30% density."""
    tensor, _ = generate_synthetic_tensor(12, 10, 8, rank=2, density=0.3, seed=11)
    return tensor


@pytest.fixture
def small_split(small_tensor, small_params):
    return make_split(small_tensor, SplitSpec.from_params(small_params))


def tensor_from_matrix(matrix, t=0, n_timesteps=1):
    """Sparse tensor holding the positive entries of one dense slice."""
    matrix = np.asarray(matrix, dtype=np.float64)
    rows, cols = np.nonzero(matrix > 0)
    n, m = matrix.shape
    times = np.full(rows.size, t)
    return SparseQoSTensor((n, m, n_timesteps), rows, cols, times, matrix[rows, cols])


def write_lines(path, lines):
    path.write_text("".join(f"{line}\n" for line in lines), encoding='utf-8')
    return path
