"""
hctn.py
-------
The assembled network: GPAM features -> HCFM -> GMM -> TGEM -> CQPM.

`build_model_inputs` precomputes everything that does not depend on
learnable weights (factorizations, graphs, statistics, greysheep labels);
`HCTNModel.forward` rebuilds the differentiable graph from those inputs.
"""
import logging
from dataclasses import dataclass

import numpy as np

from ..engine import tensor as T
from ..engine.checkpoint import assign_arrays
from ..exceptions import DimensionMismatchError
from .cqpm import CQPMParams, cqpm_forward
from .gmm import GMMParams, gmm_forward, greysheep_report, local_features, scale_local_features
from .gpam import build_initial_embeddings
from .hcfm import HCNParams, hcfm_forward
from .hypergraph import build_snapshots
from .layers import Dense, parameter
from .tgem import TgemParams, tgem_forward

logger = logging.getLogger(__name__)


@dataclass
class ModelInputs:
    """Weight-independent inputs for one window."""
    latent: object        # LatentFeatures
    snapshots: list       # HypergraphSnapshot per step
    local: np.ndarray     # scaled X_2, (tau, N, 14)
    report: object        # GreysheepReport
    window: tuple
    n_users: int
    n_services: int


def build_model_inputs(tensor, window, params):
    """
    Parameters
    ----------
    tensor : SparseQoSTensor
        Training tensor (the history window must be inside it).
    window : sequence of int
        History steps, oldest first.
    params : Parameters
    """
    window = tuple(window)
    n, m, _ = tensor.dims
    latent = build_initial_embeddings(tensor, window, params['f1'], iters=params['nmf_iters'],
                                      seed=params['seed'], tol=params['nmf_tol'])
    snapshots = build_snapshots(tensor, window, sparse=params['sparse_graphs']) if params['use_hcfm'] else []
    if params['use_gmm']:
        local = scale_local_features(local_features(tensor, window))
        report = greysheep_report(tensor, window, params['c1'], params['c2'])
    else:
        local, report = None, None
    logger.debug("model inputs built for window %s", window)
    return ModelInputs(latent, snapshots, local, report, window, n, m)


class HCTNModel:
    """
    Learnable weights of every enabled block.

    Disabled blocks (use_hcfm, use_gmm, use_tgem = False) own no weights:
    HCFM off gives Y_1 = resize(X_0); GMM off gives Z_3 = Y_1; TGEM off
    gives X_3 = 0.
    """

    def __init__(self, params, n_users, n_services, seed=None, latent=None):
        self.params = params
        self.n_users = n_users
        self.n_services = n_services
        rng = np.random.default_rng(params['seed'] if seed is None else seed)
        f1, f2 = params['f1'], params['f2']
        self.modules = {}
        if params['use_hcfm']:
            self.modules['hcfm'] = HCNParams.create(rng, f1, f2, params['layers'])
        self.modules['resize'] = Dense.create(rng, 'hcfm.resize', f1, f2)
        if params['use_gmm']:
            self.modules['gmm'] = GMMParams.create(rng, f2)
        if params['use_tgem']:
            self.modules['tgem'] = TgemParams.create(rng, f2, params['tau'], params['heads'],
                                                     params['d_head'], params['kernel_size'])
        self.modules['cqpm'] = CQPMParams.create(rng, f2, params['f4'])

        self.gpam = {}
        if not params['freeze_gpam']:
            tau = params['tau']
            users = latent.user_features if latent is not None else np.zeros((tau, n_users, f1))
            services = latent.service_features if latent is not None else np.zeros((tau, n_services, f1))
            self.gpam = {
                'gpam.user_features': parameter(np.array(users, copy=True), 'gpam.user_features'),
                'gpam.service_features': parameter(np.array(services, copy=True), 'gpam.service_features'),
            }

    # ------------------------------------------------------------------
    def parameters(self):
        """Every learnable tensor by unique name (stable order)."""
        out = dict(self.gpam)
        for module in self.modules.values():
            out.update(module.parameters())
        return out

    def buffers(self):
        out = {}
        for module in self.modules.values():
            out.update(module.buffers())
        return out

    def zero_grad(self):
        for p in self.parameters().values():
            p.zero_grad()

    # ------------------------------------------------------------------
    def check_inputs(self, inputs):
        if (inputs.n_users, inputs.n_services) != (self.n_users, self.n_services):
            raise DimensionMismatchError(
                f"model expects {self.n_users} users x {self.n_services} services, "
                f"data has {inputs.n_users} x {inputs.n_services}"
            )
        if len(inputs.window) != self.params['tau']:
            raise DimensionMismatchError(
                f"model expects a window of {self.params['tau']} steps, got {len(inputs.window)}"
            )

    def features(self, inputs):
        if self.gpam:
            return self.gpam['gpam.user_features'], self.gpam['gpam.service_features']
        return T.as_tensor(inputs.latent.user_features), T.as_tensor(inputs.latent.service_features)

    def forward(self, inputs, train=False, rng=None, trace=None):
        """
        Dense (n, m) prediction Tensor for the target step.

        Parameters
        ----------
        train : bool
            Batch statistics and dropout on; otherwise running statistics.
        rng : np.random.Generator, optional
            Dropout randomness (required when training with dropout > 0).
        trace : dict, optional
            Receives the intermediate tensors by name (Y_1, Z_3, X_3).
        """
        self.check_inputs(inputs)
        p = self.params
        momentum = p['bn_momentum']
        x_user, x_service = self.features(inputs)

        if p['use_hcfm']:
            collaborative = hcfm_forward(inputs.snapshots, x_user, x_service, self.modules['hcfm'],
                                         self.modules['resize'], p['graph_units']).features
        else:
            collaborative = self.modules['resize'](T.concat([x_user, x_service], axis=1))

        if p['use_gmm']:
            z3 = gmm_forward(collaborative, inputs.local, inputs.report.indicator, self.modules['gmm']).combined
        else:
            z3 = collaborative

        if p['use_tgem']:
            x3 = tgem_forward(z3, self.modules['tgem'], p['dropout'], rng, train, momentum,
                              use_t_block=p['use_t_block'], use_f_block=p['use_f_block']).fused
        else:
            x3 = T.as_tensor(np.zeros(z3.shape))

        prediction = cqpm_forward(z3, x3, self.modules['cqpm'], self.n_users, train, momentum)
        if trace is not None:
            trace.update({'Y_1': collaborative, 'Z_3': z3, 'X_3': x3, 'prediction': prediction})
        return prediction

    # ------------------------------------------------------------------
    def state_arrays(self):
        """Parameters, then buffers prefixed 'buffer.'; the checkpoint layout."""
        arrays = {name: p.data for name, p in self.parameters().items()}
        arrays.update({f"buffer.{name}": value for name, value in self.buffers().items()})
        return arrays

    def load_state_arrays(self, arrays):
        assign_arrays(self.parameters(), arrays)
        assign_arrays(self.buffers(), arrays, prefix='buffer.')

    def copy_state(self):
        return {name: np.array(value, copy=True) for name, value in self.state_arrays().items()}
