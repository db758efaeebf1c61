import numpy as np
import pytest

from hctn.model.hypergraph import (
    build_snapshot, build_snapshots, dump_snapshot, normalize_fig, normalize_second_order,
)

from conftest import tensor_from_matrix


@pytest.fixture
def three_invocations():
    # (u0, s0), (u0, s1), (u1, s0)
    return tensor_from_matrix([[1.0, 2.0], [3.0, 0.0]])


def test_second_order_graphs_from_invocations(three_invocations):
    snap = build_snapshot(three_invocations, 0)
    np.testing.assert_array_equal(snap.user_adjacency, [[0, 1], [1, 0]])
    np.testing.assert_array_equal(snap.service_adjacency, [[0, 1], [1, 0]])
    np.testing.assert_array_equal(snap.incidence, [[1, 1], [1, 0]])


def test_values_do_not_weight_edges():
    a = build_snapshot(tensor_from_matrix([[1.0, 2.0], [3.0, 0.0]]), 0)
    b = build_snapshot(tensor_from_matrix([[9.0, 0.1], [0.5, 0.0]]), 0)
    np.testing.assert_array_equal(a.adjacency, b.adjacency)
    np.testing.assert_array_equal(a.norm_user, b.norm_user)


def test_single_invocation_has_no_second_order_edges():
    snap = build_snapshot(tensor_from_matrix([[1.0, 0.0], [0.0, 0.0]]), 0)
    assert not snap.user_adjacency.any()
    assert not snap.service_adjacency.any()


def test_empty_slice():
    tensor = tensor_from_matrix([[1.0, 0.0], [0.0, 0.0]], t=0, n_timesteps=2)
    snap = build_snapshot(tensor, 1)
    assert not snap.adjacency.any() and not snap.incidence.any()
    np.testing.assert_array_equal(snap.norm_adjacency, np.eye(4))


def test_first_order_normalization(three_invocations):
    snap = build_snapshot(three_invocations, 0)
    # nodes: u0, u1, s0, s1; degrees with self-loops 3, 2, 3, 2
    assert snap.norm_adjacency[0, 2] == pytest.approx(1 / 3)
    assert snap.norm_adjacency[0, 3] == pytest.approx(1 / np.sqrt(6))
    np.testing.assert_allclose(snap.norm_adjacency, snap.norm_adjacency.T)


def test_isolated_node_and_single_edge():
    np.testing.assert_allclose(normalize_fig(np.zeros((1, 1))), [[1.0]])
    np.testing.assert_allclose(normalize_fig(np.array([[0.0, 1.0], [1.0, 0.0]])), [[0.5, 0.5], [0.5, 0.5]])


def test_second_order_normalization_examples():
    h = np.array([[1.0, 1.0], [1.0, 0.0]])
    edge = np.array([[0.0, 1.0], [1.0, 0.0]])
    norm_user, _ = normalize_second_order(h, edge, edge)
    np.testing.assert_allclose(norm_user, [[2.0, 1.0], [1.0, 1.0]])

    single = np.array([[1.0]])
    norm_user, norm_service = normalize_second_order(single, np.zeros((1, 1)), np.zeros((1, 1)))
    np.testing.assert_allclose(norm_user, [[1.0]])
    np.testing.assert_allclose(norm_service, [[1.0]])


def _pairs_oracle(h):
    """Users sharing a service, enumerated pair by pair."""
    n, m = h.shape
    out = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            if a != b and any(h[a, j] and h[b, j] for j in range(m)):
                out[a, b] = 1.0
    return out


@pytest.mark.parametrize('seed', range(20))
def test_second_order_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(0.1, 2.0, size=(5, 4)) * (rng.random((5, 4)) < 0.4)
    snap = build_snapshot(tensor_from_matrix(matrix), 0)
    h = (matrix > 0).astype(float)
    np.testing.assert_array_equal(snap.user_adjacency, _pairs_oracle(h))
    np.testing.assert_array_equal(snap.service_adjacency, _pairs_oracle(h.T))
    np.testing.assert_allclose(snap.norm_user, snap.norm_user.T)
    np.testing.assert_allclose(snap.norm_service, snap.norm_service.T)


def _fig_oracle(h):
    """(A + I) entries divided by sqrt(d_i d_j), one entry at a time."""
    n, m = h.shape
    size = n + m
    a = np.eye(size)
    for u in range(n):
        for s in range(m):
            if h[u, s]:
                a[u, n + s] = a[n + s, u] = 1.0
    degree = [sum(a[i]) for i in range(size)]
    out = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            out[i, j] = a[i, j] / np.sqrt(degree[i] * degree[j])
    return out


def _second_order_oracle(h, adjacency, other_adjacency):
    """sum_k h[a,k] h[b,k] / d_k over shared edges, scaled by 1/sqrt(d_a d_b)."""
    rows, cols = h.shape
    degree = [max(sum(adjacency[a]), 1.0) for a in range(rows)]
    edge_degree = [max(sum(other_adjacency[k]), 1.0) for k in range(cols)]
    out = np.zeros((rows, rows))
    for a in range(rows):
        for b in range(rows):
            total = sum(h[a, k] * h[b, k] / edge_degree[k] for k in range(cols))
            out[a, b] = total / np.sqrt(degree[a] * degree[b])
    return out


@pytest.mark.parametrize('seed', range(20))
def test_normalized_graphs_match_elementwise_formulas(seed):
    rng = np.random.default_rng(100 + seed)
    n, m = int(rng.integers(2, 7)), int(rng.integers(2, 7))
    matrix = rng.uniform(0.1, 2.0, size=(n, m)) * (rng.random((n, m)) < 0.5)
    snap = build_snapshot(tensor_from_matrix(matrix), 0)
    h = (matrix > 0).astype(float)
    user_adj, service_adj = _pairs_oracle(h), _pairs_oracle(h.T)
    np.testing.assert_allclose(snap.norm_adjacency, _fig_oracle(h), rtol=0, atol=1e-12)
    np.testing.assert_allclose(snap.norm_user, _second_order_oracle(h, user_adj, service_adj), rtol=0, atol=1e-12)
    np.testing.assert_allclose(snap.norm_service, _second_order_oracle(h.T, service_adj, user_adj),
                               rtol=0, atol=1e-12)
    for name in ('norm_adjacency', 'norm_user', 'norm_service'):
        matrix_out = getattr(snap, name)
        np.testing.assert_allclose(matrix_out, matrix_out.T, rtol=0, atol=1e-12, err_msg=name)


def test_sparse_graphs_match_dense(small_tensor):
    dense = build_snapshot(small_tensor, 3)
    sparse = build_snapshot(small_tensor, 3, sparse=True)
    assert sparse.is_sparse and not dense.is_sparse
    for name in ('incidence', 'adjacency', 'user_adjacency', 'service_adjacency',
                 'norm_adjacency', 'norm_user', 'norm_service'):
        np.testing.assert_allclose(getattr(sparse, name).toarray(), getattr(dense, name), err_msg=name)


def test_snapshots_follow_window(small_tensor):
    snaps = build_snapshots(small_tensor, [1, 2, 3])
    assert [s.t for s in snaps] == [1, 2, 3]
    assert snaps[0].n_users == 12 and snaps[0].n_services == 10


def test_dump_snapshot_writes_coordinate_lists(tmp_path, three_invocations):
    dump_snapshot(build_snapshot(three_invocations, 0), tmp_path)
    assert (tmp_path / 'H_t0.txt').read_text().split('\n')[:3] == ['0 0', '0 1', '1 0']
    assert (tmp_path / 'A_u_t0.txt').read_text().strip().split('\n') == ['0 1', '1 0']
