"""
hypergraph.py
-------------
Per-step QoS invocation hypergraph and the three graphs it decomposes into:

- first-order user-service graph (bipartite adjacency A over N = n + m nodes)
- second-order user graph A_u: users sharing at least one service
- second-order service graph A_s: services sharing at least one user

plus their normalized propagation matrices. Only observation presence
matters; QoS magnitudes never weight an edge.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
import scipy.sparse as sp

logger = logging.getLogger(__name__)

Matrix = Union[np.ndarray, sp.csr_matrix]


@dataclass(frozen=True)
class HypergraphSnapshot:
    """
    Graphs for one time step. Dense arrays, or CSR matrices when built with
    `sparse=True`.

    incidence : (n, m) H
    adjacency : (N, N) A
    user_adjacency : (n, n) A_u
    service_adjacency : (m, m) A_s
    norm_adjacency : (N, N) normalized A with self-loops
    norm_user : (n, n) normalized second-order user matrix
    norm_service : (m, m) normalized second-order service matrix
    """
    t: int
    incidence: Matrix
    adjacency: Matrix
    user_adjacency: Matrix
    service_adjacency: Matrix
    norm_adjacency: Matrix
    norm_user: Matrix
    norm_service: Matrix

    @property
    def n_users(self):
        return self.incidence.shape[0]

    @property
    def n_services(self):
        return self.incidence.shape[1]

    @property
    def is_sparse(self):
        return sp.issparse(self.incidence)


def _sign_offdiag(product, sparse):
    """Binary pattern of `product` with the diagonal removed."""
    if sparse:
        out = (product > 0).astype(np.float64).tolil()
        out.setdiag(0)
        out = out.tocsr()
        out.eliminate_zeros()
        return out
    out = (product > 0).astype(np.float64)
    np.fill_diagonal(out, 0.0)
    return out


def _degrees(matrix):
    return np.asarray(matrix.sum(axis=1)).ravel()


def _diag(values, sparse):
    return sp.diags(values, format='csr') if sparse else np.diag(values)


def normalize_fig(adjacency):
    """
    Symmetric normalization with self-loops: D^-1/2 (A + I) D^-1/2, where D
    holds the degrees of A + I (always >= 1).
    """
    sparse = sp.issparse(adjacency)
    size = adjacency.shape[0]
    with_loops = adjacency + (sp.identity(size, format='csr') if sparse else np.eye(size))
    inv_sqrt = 1.0 / np.sqrt(_degrees(with_loops))
    if sparse:
        scale = sp.diags(inv_sqrt, format='csr')
        return (scale @ with_loops @ scale).tocsr()
    return inv_sqrt[:, None] * with_loops * inv_sqrt[None, :]


def normalize_second_order(incidence, user_adjacency, service_adjacency):
    """
    Normalized second-order matrices from the incidence matrix:

        A_u_hat = D_u^-1/2 H D_s^-1 H^T D_u^-1/2
        A_s_hat = D_s^-1/2 H^T D_u^-1 H D_s^-1/2

    D_u and D_s are the degrees of A_u and A_s; zero degrees are clamped to 1.
    """
    sparse = sp.issparse(incidence)
    deg_u = np.maximum(_degrees(user_adjacency), 1.0)
    deg_s = np.maximum(_degrees(service_adjacency), 1.0)
    h = incidence
    ht = incidence.T
    if sparse:
        du_isqrt = sp.diags(1.0 / np.sqrt(deg_u), format='csr')
        ds_isqrt = sp.diags(1.0 / np.sqrt(deg_s), format='csr')
        norm_user = du_isqrt @ h @ sp.diags(1.0 / deg_s, format='csr') @ ht @ du_isqrt
        norm_service = ds_isqrt @ ht @ sp.diags(1.0 / deg_u, format='csr') @ h @ ds_isqrt
        return norm_user.tocsr(), norm_service.tocsr()
    du_isqrt = 1.0 / np.sqrt(deg_u)
    ds_isqrt = 1.0 / np.sqrt(deg_s)
    norm_user = du_isqrt[:, None] * ((h / deg_s[None, :]) @ ht) * du_isqrt[None, :]
    norm_service = ds_isqrt[:, None] * ((ht / deg_u[None, :]) @ h) * ds_isqrt[None, :]
    return norm_user, norm_service


def build_snapshot(tensor, t, sparse=False):
    """
    Build every graph for time step `t`. An empty slice gives all-zero
    graphs (the normalized first-order matrix is then the identity).
    """
    n, m, _ = tensor.dims
    span = tensor.time_range(t)
    rows = tensor.users[span]
    cols = tensor.services[span]
    ones = np.ones(rows.size)

    if sparse:
        incidence = sp.csr_matrix((ones, (rows, cols)), shape=(n, m))
        adjacency = sp.bmat([[None, incidence], [incidence.T, None]], format='csr')
    else:
        incidence = np.zeros((n, m))
        incidence[rows, cols] = 1.0
        adjacency = np.zeros((n + m, n + m))
        adjacency[:n, n:] = incidence
        adjacency[n:, :n] = incidence.T

    user_adjacency = _sign_offdiag(incidence @ incidence.T, sparse)
    service_adjacency = _sign_offdiag(incidence.T @ incidence, sparse)
    norm_user, norm_service = normalize_second_order(incidence, user_adjacency, service_adjacency)
    return HypergraphSnapshot(
        t=int(t),
        incidence=incidence,
        adjacency=adjacency,
        user_adjacency=user_adjacency,
        service_adjacency=service_adjacency,
        norm_adjacency=normalize_fig(adjacency),
        norm_user=norm_user,
        norm_service=norm_service,
    )


def build_snapshots(tensor, window, sparse=False):
    return [build_snapshot(tensor, t, sparse=sparse) for t in window]


def _coordinates(matrix):
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    return pd.DataFrame({'row': coo.row[order], 'col': coo.col[order]})


def dump_snapshot(snapshot, directory):
    """
    Write A, H, A_u and A_s as 'row col' coordinate lists, one file each,
    named <graph>_t<step>.txt.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    graphs = {
        'A': snapshot.adjacency,
        'H': snapshot.incidence,
        'A_u': snapshot.user_adjacency,
        'A_s': snapshot.service_adjacency,
    }
    for name, matrix in graphs.items():
        path = directory / f"{name}_t{snapshot.t}.txt"
        _coordinates(matrix).to_csv(path, sep=' ', header=False, index=False)
    logger.debug("dumped graphs for step %d to %s", snapshot.t, directory)
