"""
hcfm.py
-------
Hypergraph collaborative feature module.

Per time step, an HCN runs `layers` rounds of three graph convolution
units in parallel branches:

    FCU  on the normalized first-order matrix (all N nodes)
    SUCU on the normalized second-order user matrix
    SSCU on the normalized second-order service matrix

Each branch is reduced by the layer-decay aggregate, the user and service
branches are stacked row-wise, and the two N-row results are fused by soft
attention. Step outputs are stacked over time and the GPAM features are
added back through a learned resize map.
"""
import logging
from dataclasses import dataclass

from ..engine import tensor as T
from ..exceptions import ConfigurationError, ShapeError
from .layers import Dense, Module, SoftAttention, glorot, parameter

logger = logging.getLogger(__name__)


def graph_conv(adjacency, x, weight):
    """relu(A @ X @ W) for a constant (dense or sparse) propagation matrix."""
    if adjacency.shape[0] != adjacency.shape[1]:
        raise ShapeError("graph_conv", adjacency.shape, T.as_tensor(x).shape)
    return T.relu(T.matmul(T.graph_matmul(adjacency, x), weight))


def layer_aggregate(layer_outputs):
    """
    X_0 + sum_i X_i / (i + 1): deeper layers get progressively smaller weight.
    """
    if len(layer_outputs) == 0:
        raise ConfigurationError("layer_aggregate needs at least one feature matrix")
    total = T.as_tensor(layer_outputs[0])
    for i, x in enumerate(layer_outputs[1:], start=1):
        total = T.add(total, T.hadamard(x, 1.0 / (i + 1)))
    return total


def layer_weights(layers):
    """The aggregate weights (1, 1/2, ..., 1/(layers+1))."""
    return [1.0 / (i + 1) for i in range(layers + 1)]


class HCNParams(Module):
    """
    Input maps f1 -> f2, per-layer convolution weights for each unit, and
    the fusion scorer. Shared by every time step.
    """

    @classmethod
    def create(cls, rng, f1, f2, layers, prefix='hcfm'):
        if layers < 1:
            raise ConfigurationError(f"HCN needs at least one layer, got {layers}")
        parts = {
            'input_all': Dense.create(rng, f"{prefix}.input_all", f1, f2),
            'input_user': Dense.create(rng, f"{prefix}.input_user", f1, f2),
            'input_service': Dense.create(rng, f"{prefix}.input_service", f1, f2),
            'fusion': SoftAttention.create(rng, f"{prefix}.fusion", f2),
        }
        for unit in ('fcu', 'sucu', 'sscu'):
            for i in range(1, layers + 1):
                parts[f"{unit}.{i}"] = Dense(parameter(glorot(rng, f2, f2), f"{prefix}.{unit}.{i}.weight"))
        params = cls(parts)
        params.layers = layers
        params.f2 = f2
        return params

    def unit_weights(self, unit):
        return [self.parts[f"{unit}.{i}"].weight for i in range(1, self.layers + 1)]


def _branch(adjacency, x, weights):
    outputs = [x]
    for weight in weights:
        outputs.append(graph_conv(adjacency, outputs[-1], weight))
    return layer_aggregate(outputs)


def hcn_forward(snapshot, x_all, x_user, x_service, params, graph_units='all'):
    """
    One time step.

    Parameters
    ----------
    snapshot : HypergraphSnapshot
    x_all : (N, f1) Tensor
    x_user : (n, f1) Tensor
    x_service : (m, f1) Tensor
    params : HCNParams
    graph_units : str
        'all', 'first_order' (FCU only) or 'second_order' (SUCU + SSCU only).

    Returns
    -------
    Tensor
        (N, f2)
    """
    n, m = snapshot.n_users, snapshot.n_services
    if T.as_tensor(x_all).shape[0] != n + m or T.as_tensor(x_user).shape[0] != n \
            or T.as_tensor(x_service).shape[0] != m:
        raise ShapeError("hcn_forward", T.as_tensor(x_all).shape, (n + m, n, m))

    sources = []
    if graph_units in ('all', 'first_order'):
        hetero = _branch(snapshot.norm_adjacency, params['input_all'](x_all), params.unit_weights('fcu'))
        sources.append(hetero)
    if graph_units in ('all', 'second_order'):
        users = _branch(snapshot.norm_user, params['input_user'](x_user), params.unit_weights('sucu'))
        services = _branch(snapshot.norm_service, params['input_service'](x_service), params.unit_weights('sscu'))
        sources.append(T.concat([users, services], axis=0))
    return params['fusion'](sources)


@dataclass
class CollaborativeFeatures:
    """
    hcn_outputs : (tau, N, f2) X_1, stacked per-step HCN outputs
    features : (tau, N, f2) Y_1 = X_1 + resize(X_0)
    """
    hcn_outputs: T.Tensor
    features: T.Tensor


def hcfm_forward(snapshots, x_user, x_service, params, resize, graph_units='all'):
    """
    Run the HCN on every step of the window and add the resized GPAM skip.

    Parameters
    ----------
    snapshots : list of HypergraphSnapshot
        One per window step, aligned with the feature time axis.
    x_user : (tau, n, f1) Tensor
    x_service : (tau, m, f1) Tensor
    params : HCNParams
    resize : Dense
        f1 -> f2, shared across steps.
    """
    x_user, x_service = T.as_tensor(x_user), T.as_tensor(x_service)
    tau = x_user.shape[0]
    if len(snapshots) != tau or x_service.shape[0] != tau:
        raise ConfigurationError(
            f"HCFM window mismatch: {len(snapshots)} snapshots, {tau} user steps, {x_service.shape[0]} service steps"
        )
    x_all = T.concat([x_user, x_service], axis=1)
    steps = []
    for t, snapshot in enumerate(snapshots):
        steps.append(hcn_forward(
            snapshot, T.take(x_all, t), T.take(x_user, t), T.take(x_service, t), params, graph_units,
        ))
    hcn_outputs = T.stack(steps, axis=0)
    return CollaborativeFeatures(hcn_outputs, T.add(hcn_outputs, resize(x_all)))
