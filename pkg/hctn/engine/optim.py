"""
AdamW with decoupled weight decay.

    m_t = b1 * m_{t-1} + (1 - b1) * g_t
    v_t = b2 * v_{t-1} + (1 - b2) * g_t^2
    m_hat = m_t / (1 - b1^t),  v_hat = v_t / (1 - b2^t)
    theta_t = theta_{t-1} - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta_{t-1})

The decay term never enters the moments.
"""
import logging

import numpy as np

from ..exceptions import ConfigurationError, NumericError

logger = logging.getLogger(__name__)


class AdamWState:
    """First/second moments per parameter name plus the shared step count."""

    def __init__(self):
        self.exp_avg = {}
        self.exp_avg_sq = {}
        self.step = 0

    def moments_for(self, name, shape):
        if name not in self.exp_avg:
            self.exp_avg[name] = np.zeros(shape)
            self.exp_avg_sq[name] = np.zeros(shape)
        return self.exp_avg[name], self.exp_avg_sq[name]

    def named_buffers(self):
        """Moments keyed for the checkpoint container."""
        out = {}
        for name in self.exp_avg:
            out[f"adamw.exp_avg.{name}"] = self.exp_avg[name]
            out[f"adamw.exp_avg_sq.{name}"] = self.exp_avg_sq[name]
        return out


def adamw_step(params, state, lr, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0, grads=None):
    """
    Apply one AdamW update in place.

    Parameters
    ----------
    params : dict[str, Tensor]
        Learnable tensors keyed by unique name.
    state : AdamWState
        Moments; zero-initialized on first use of a name.
    grads : dict[str, np.ndarray], optional
        Gradients by name; defaults to each tensor's `.grad` (None = zero).

    Raises
    ------
    NumericError
        A gradient or updated parameter is not finite (names the parameter).
    """
    if lr < 0 or not (0.0 <= beta1 < 1.0) or not (0.0 <= beta2 < 1.0) or eps < 0 or weight_decay < 0:
        raise ConfigurationError(
            f"invalid AdamW settings lr={lr} beta1={beta1} beta2={beta2} eps={eps} weight_decay={weight_decay}"
        )
    state.step += 1
    t = state.step
    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t

    for name, param in params.items():
        if grads is not None:
            g = grads.get(name)
        else:
            g = param.grad
        if g is None:
            g = np.zeros_like(param.data)
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter '{name}'")

        m, v = state.moments_for(name, param.shape)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g

        m_hat = m / bias1
        v_hat = v / bias2
        if weight_decay:
            param.data -= lr * weight_decay * param.data
        param.data -= lr * m_hat / (np.sqrt(v_hat) + eps)

        if not np.all(np.isfinite(param.data)):
            raise NumericError(f"non-finite value in parameter '{name}' after AdamW step {t}")

    return params
