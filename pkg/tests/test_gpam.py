import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hctn.exceptions import ConfigurationError, EmptyDataError
from hctn.model.gpam import build_initial_embeddings, masked_nmf, masked_objective, nmf_baseline
from hctn.qos_data import SparseQoSTensor

from conftest import tensor_from_matrix


def test_exact_rank_one_matrix_is_recovered():
    values = np.array([[1.0, 2.0], [2.0, 4.0]])
    mask = np.ones_like(values)
    u, s = masked_nmf(values, mask, rank=1, iters=2000, tol=0.0)
    assert masked_objective(values, mask, u, s) < 1e-6


def test_constant_matrix():
    values = np.full((3, 4), 2.5)
    mask = np.ones_like(values)
    u, s = masked_nmf(values, mask, rank=1, iters=2000, tol=0.0)
    np.testing.assert_allclose(u @ s.T, values, atol=1e-6)


@pytest.mark.parametrize('seed', range(20))
def test_objective_never_increases(seed):
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.1, 3.0, size=(10, 8))
    mask = (rng.random((10, 8)) < 0.5).astype(float)
    history = []
    masked_nmf(values * mask, mask, rank=3, iters=100, tol=0.0, history=history)
    assert len(history) == 101
    assert np.all(np.diff(history) <= 1e-10)


def test_unobserved_cells_do_not_matter(rng):
    values = rng.uniform(0.1, 3.0, size=(5, 6))
    mask = (rng.random((5, 6)) < 0.6).astype(float)
    mask[0, 0] = 1.0
    noisy = values + (1 - mask) * 100.0
    a = masked_nmf(values * mask, mask, rank=2, seed=3)
    b = masked_nmf(noisy, mask, rank=2, seed=3)
    np.testing.assert_allclose(a[0], b[0])
    np.testing.assert_allclose(a[1], b[1])


def test_factors_are_non_negative(rng):
    values = rng.uniform(0.1, 3.0, size=(6, 6))
    mask = (rng.random((6, 6)) < 0.5).astype(float)
    mask[2] = 0.0
    u, s = masked_nmf(values * mask, mask, rank=2)
    assert np.all(u >= 0) and np.all(s >= 0)
    # a user with no observations keeps its positive initialization
    assert np.all(np.isfinite(u[2])) and np.all(u[2] > 0)


def test_rank_and_empty_errors():
    values = np.ones((2, 3))
    with pytest.raises(ConfigurationError):
        masked_nmf(values, np.ones_like(values), rank=3)
    with pytest.raises(EmptyDataError):
        masked_nmf(values, np.zeros_like(values), rank=1)


def test_identical_slices_give_identical_factors():
    matrix = np.array([[1.0, 2.0, 0.0], [0.5, 0.0, 3.0], [2.0, 1.0, 1.0]])
    first = tensor_from_matrix(matrix, t=0, n_timesteps=2)
    second = tensor_from_matrix(matrix, t=1, n_timesteps=2)
    tensor = SparseQoSTensor((3, 3, 2),
                             np.concatenate([first.users, second.users]),
                             np.concatenate([first.services, second.services]),
                             np.concatenate([first.times, second.times]),
                             np.concatenate([first.values, second.values]))
    latent = build_initial_embeddings(tensor, [0, 1], rank=2, iters=50, seed=5)
    np.testing.assert_array_equal(latent.user_features[0], latent.user_features[1])
    np.testing.assert_array_equal(latent.service_features[0], latent.service_features[1])


def test_shapes_and_combined_layout(small_tensor):
    latent = build_initial_embeddings(small_tensor, range(2, 6), rank=2, iters=20)
    assert latent.user_features.shape == (4, 12, 2)
    assert latent.service_features.shape == (4, 10, 2)
    assert latent.combined.shape == (4, 22, 2)
    np.testing.assert_array_equal(latent.combined[:, :12], latent.user_features)
    assert latent.tau == 4 and latent.rank == 2


def test_empty_step_keeps_initialization(caplog):
    tensor = SparseQoSTensor((3, 3, 3), [0, 1], [1, 2], [0, 2], [1.0, 2.0])
    with caplog.at_level(logging.WARNING):
        latent = build_initial_embeddings(tensor, [0, 1], rank=1, iters=10)
    assert "time step 1 has no observations" in caplog.text
    assert np.all(latent.user_features[1] > 0)


def test_window_outside_tensor(small_tensor):
    with pytest.raises(ConfigurationError):
        build_initial_embeddings(small_tensor, [7, 8], rank=2)


def test_rank_error_names_time_step(small_tensor):
    with pytest.raises(ConfigurationError, match="time step 0"):
        build_initial_embeddings(small_tensor, [0], rank=11)


def test_nmf_baseline_fills_every_cell(small_tensor):
    matrix = nmf_baseline(small_tensor, 7, rank=2, iters=30)
    assert matrix.shape == (12, 10)
    assert np.all(np.isfinite(matrix)) and np.all(matrix >= 0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), scale=st.floats(0.05, 20.0))
def test_objective_ignores_factor_rescaling(seed, scale):
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.1, 3.0, size=(6, 5))
    mask = (rng.random((6, 5)) < 0.5).astype(float)
    u = rng.uniform(0.0, 2.0, size=(6, 3))
    s = rng.uniform(0.0, 2.0, size=(5, 3))
    base = masked_objective(values * mask, mask, u, s)
    rescaled = masked_objective(values * mask, mask, u * scale, s / scale)
    assert rescaled == pytest.approx(base, rel=1e-9, abs=1e-9)
