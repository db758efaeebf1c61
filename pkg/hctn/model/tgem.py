"""
tgem.py
-------
Temporal granularity extraction.

Internal layout is time-major (tau, N, f2). Three paths:

E-block
    BN -> + positional encoding -> dense f2 -> f2/4 -> BN (Z_5)
    -> per-entity multi-head attention over the tau steps (weights shared
       by all entities) -> dense f2/4 -> f2 -> + BN output -> BN (Z_8)
T-block
    time steps act as channels: conv tau -> tau/4 -> dropout -> conv
    tau/4 -> tau, kernel sliding along the feature axis, + Z_8 (Z_T)
F-block
    relu dense f2 -> f2/4 -> dropout -> linear dense f2/4 -> f2, + Z_8 (Z_F)

Z_T and Z_F are fused by soft attention into X_3.
"""
import logging
from dataclasses import dataclass

import numpy as np

from ..engine import tensor as T
from ..exceptions import ConfigurationError, ShapeError
from .layers import BatchNorm, Dense, Module, SoftAttention, glorot, parameter

logger = logging.getLogger(__name__)


def positional_encoding(tau, width):
    """
    Sinusoidal encoding, (tau, width):
    PE[pos, 2i] = sin(pos / 10000^(2i/width)), PE[pos, 2i+1] = cos(same).
    """
    if width % 2 != 0:
        raise ConfigurationError(f"positional encoding width must be even, got {width}")
    positions = np.arange(tau)[:, None]
    rates = 1.0 / np.power(10000.0, np.arange(0, width, 2) / width)
    angles = positions * rates[None, :]
    out = np.zeros((tau, width))
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


def scaled_dot_attention(queries, keys, values, d_k, return_weights=False):
    """softmax(Q K^T / sqrt(d_k)) V with the softmax taken row-wise."""
    queries, keys, values = T.as_tensor(queries), T.as_tensor(keys), T.as_tensor(values)
    if queries.shape[-1] != d_k or keys.shape[-1] != d_k or keys.shape[-2] != values.shape[-2]:
        raise ShapeError("scaled_dot_attention", queries.shape, keys.shape, values.shape)
    scores = T.hadamard(T.matmul(queries, T.swap_last(keys)), 1.0 / np.sqrt(d_k))
    weights = T.softmax(scores, axis=-1)
    out = T.matmul(weights, values)
    return (out, weights) if return_weights else out


@dataclass
class AttentionHead:
    query: T.Tensor
    key: T.Tensor
    value: T.Tensor


def mha(features, heads, output, d_head, return_weights=False):
    """
    Multi-head attention with shared projections.

    Parameters
    ----------
    features : (..., tau, width) Tensor
    heads : list of AttentionHead
        Each projection is (width, d_head).
    output : (len(heads) * d_head, width) Tensor
    """
    features = T.as_tensor(features)
    width = features.shape[-1]
    if len(heads) * d_head != width:
        raise ConfigurationError(f"heads * d_head must equal {width}: {len(heads)} * {d_head}")
    outputs, weights = [], []
    for head in heads:
        out, attn = scaled_dot_attention(
            T.matmul(features, head.query), T.matmul(features, head.key), T.matmul(features, head.value),
            d_head, return_weights=True,
        )
        outputs.append(out)
        weights.append(attn)
    merged = outputs[0] if len(outputs) == 1 else T.concat(outputs, axis=-1)
    result = T.matmul(merged, output)
    return (result, weights) if return_weights else result


class TgemParams(Module):
    """Weights of all three blocks plus the fusion scorer."""

    @classmethod
    def create(cls, rng, f2, tau, heads, d_head, kernel_size=3, prefix='tgem'):
        if tau % 4 != 0:
            raise ConfigurationError(f"tau must be divisible by 4, got {tau}")
        if f2 % 4 != 0 or heads * d_head != f2 // 4:
            raise ConfigurationError(
                f"heads * d_head must equal f2/4: {heads} * {d_head} vs {f2 // 4}"
            )
        reduced = f2 // 4
        parts = {
            'bn_input': BatchNorm.create(f"{prefix}.bn_input", f2),
            'reduce': Dense.create(rng, f"{prefix}.reduce", f2, reduced),
            'bn_reduced': BatchNorm.create(f"{prefix}.bn_reduced", reduced),
            'mha_output': Dense(parameter(glorot(rng, heads * d_head, reduced), f"{prefix}.mha.output")),
            'restore': Dense.create(rng, f"{prefix}.restore", reduced, f2),
            'bn_output': BatchNorm.create(f"{prefix}.bn_output", f2),
            't_conv1': _Conv.create(rng, f"{prefix}.t_conv1", kernel_size, tau, tau // 4),
            't_conv2': _Conv.create(rng, f"{prefix}.t_conv2", kernel_size, tau // 4, tau),
            'f_dense1': Dense.create(rng, f"{prefix}.f_dense1", f2, reduced),
            'f_dense2': Dense.create(rng, f"{prefix}.f_dense2", reduced, f2),
            'fusion': SoftAttention.create(rng, f"{prefix}.fusion", f2),
        }
        for j in range(heads):
            for role in ('query', 'key', 'value'):
                parts[f"head{j}.{role}"] = Dense(
                    parameter(glorot(rng, reduced, d_head), f"{prefix}.mha.head{j}.{role}")
                )
        params = cls(parts)
        params.heads = heads
        params.d_head = d_head
        params.tau = tau
        params.f2 = f2
        return params

    def attention_heads(self):
        return [
            AttentionHead(self.parts[f"head{j}.query"].weight,
                          self.parts[f"head{j}.key"].weight,
                          self.parts[f"head{j}.value"].weight)
            for j in range(self.heads)
        ]


@dataclass
class _Conv:
    weight: T.Tensor  # (kernel, in, out)
    bias: T.Tensor

    @classmethod
    def create(cls, rng, name, kernel, fan_in, fan_out):
        w = glorot(rng, kernel * fan_in, kernel * fan_out, shape=(kernel, fan_in, fan_out))
        return cls(parameter(w, f"{name}.weight"), parameter(np.zeros(fan_out), f"{name}.bias"))

    def __call__(self, x):
        return T.conv1d(x, self.weight, self.bias)

    def parameters(self):
        return {self.weight.name: self.weight, self.bias.name: self.bias}

    def buffers(self):
        return {}


@dataclass
class TemporalFeatures:
    encoded: T.Tensor   # Z_8
    temporal: T.Tensor  # Z_T
    feature: T.Tensor   # Z_F
    fused: T.Tensor     # X_3
    attention: list


def e_block(z3, params, train, momentum=0.9, use_positional=True):
    """Z_3 (tau, N, f2) -> (Z_8, per-head attention weights)."""
    z3 = T.as_tensor(z3)
    tau, _, f2 = z3.shape
    normed = params['bn_input'](z3, train, momentum)
    encoded = T.add(normed, positional_encoding(tau, f2)[:, None, :]) if use_positional else normed
    z5 = params['bn_reduced'](params['reduce'](encoded), train, momentum)
    per_entity = T.transpose(z5, (1, 0, 2))  # (N, tau, f2/4)
    attended, weights = mha(per_entity, params.attention_heads(), params['mha_output'].weight,
                            params.d_head, return_weights=True)
    z6 = T.transpose(attended, (1, 0, 2))
    z7 = T.add(params['restore'](z6), normed)
    return params['bn_output'](z7, train, momentum), weights


def t_block(z8, params, rate, rng, train):
    """Convolutions over the time-as-channel layout, plus the Z_8 residual."""
    z8 = T.as_tensor(z8)
    channels_last = T.transpose(z8, (1, 2, 0))  # (N, f2, tau)
    hidden = params['t_conv1'](channels_last)
    hidden = T.dropout(hidden, rate, rng, train)
    restored = params['t_conv2'](hidden)
    return T.add(T.transpose(restored, (2, 0, 1)), z8)


def f_block(z8, params, rate, rng, train):
    """relu dense down to f2/4, linear dense back to f2, plus the Z_8 residual."""
    z8 = T.as_tensor(z8)
    hidden = T.relu(params['f_dense1'](z8))
    hidden = T.dropout(hidden, rate, rng, train)
    return T.add(params['f_dense2'](hidden), z8)


def fuse(z_t, z_f, params):
    return params['fusion']([z_t, z_f])


def tgem_forward(z3, params, rate, rng, train, momentum=0.9, use_t_block=True, use_f_block=True):
    """
    Full module. A disabled T- or F-block contributes Z_8 to the fusion.

    Returns
    -------
    TemporalFeatures
        `fused` (X_3) has the shape of Z_3.
    """
    z3 = T.as_tensor(z3)
    if z3.shape[0] != params.tau or z3.shape[2] != params.f2:
        raise ShapeError("tgem", z3.shape, (params.tau, z3.shape[1], params.f2))
    z8, attention = e_block(z3, params, train, momentum)
    z_t = t_block(z8, params, rate, rng, train) if use_t_block else z8
    z_f = f_block(z8, params, rate, rng, train) if use_f_block else z8
    return TemporalFeatures(z8, z_t, z_f, fuse(z_t, z_f, params), attention)
