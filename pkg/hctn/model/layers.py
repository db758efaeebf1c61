"""
Parameter holders shared by every block.

Each holder owns named Tensors (learnable, `requires_grad=True`) and, for
batch norm, running-statistics buffers. Names are fully qualified when the
holder is created, e.g. ``hcfm.fcu.1.weight``, and are the checkpoint keys.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..engine import tensor as T
from ..engine.tensor import Tensor


def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def parameter(value, name):
    return Tensor(value, requires_grad=True, name=name, op='parameter')


@dataclass
class Dense:
    """x @ W (+ b) over the last axis."""
    weight: Tensor
    bias: Optional[Tensor] = None

    @classmethod
    def create(cls, rng, name, fan_in, fan_out, bias=True):
        return cls(
            parameter(glorot(rng, fan_in, fan_out), f"{name}.weight"),
            parameter(np.zeros(fan_out), f"{name}.bias") if bias else None,
        )

    def __call__(self, x):
        return T.dense(x, self.weight, self.bias)

    def parameters(self):
        params = [self.weight] if self.bias is None else [self.weight, self.bias]
        return {p.name: p for p in params}

    def buffers(self):
        return {}


@dataclass
class BatchNorm:
    """Per-feature batch norm with EMA running statistics."""
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    name: str = ''

    @classmethod
    def create(cls, name, features):
        return cls(
            parameter(np.ones(features), f"{name}.gamma"),
            parameter(np.zeros(features), f"{name}.beta"),
            np.zeros(features),
            np.ones(features),
            name,
        )

    def __call__(self, x, train, momentum=0.9):
        return T.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                            train=train, momentum=momentum)

    def parameters(self):
        return {self.gamma.name: self.gamma, self.beta.name: self.beta}

    def buffers(self):
        return {f"{self.name}.running_mean": self.running_mean,
                f"{self.name}.running_var": self.running_var}


@dataclass
class SoftAttention:
    """
    Convex combination of same-shaped sources.

    score_k = source_k @ w + b_k per row, weights = softmax over k.
    """
    weight: Tensor
    bias: Tensor

    @classmethod
    def create(cls, rng, name, features, sources=2):
        return cls(
            parameter(glorot(rng, features, 1), f"{name}.weight"),
            parameter(np.zeros(sources), f"{name}.bias"),
        )

    def __call__(self, sources):
        out, _ = soft_attention(sources, self.weight, self.bias)
        return out

    def parameters(self):
        return {self.weight.name: self.weight, self.bias.name: self.bias}

    def buffers(self):
        return {}


def soft_attention(sources, weight, bias):
    """
    Returns
    -------
    (Tensor, Tensor)
        Fused features and the per-row source weights (..., rows, k).
    """
    if len(sources) == 1:
        only = T.as_tensor(sources[0])
        return only, T.as_tensor(np.ones(only.shape[:-1] + (1,)))
    scores = T.add(T.concat([T.matmul(s, weight) for s in sources], axis=-1), bias)
    weights = T.softmax(scores, axis=-1)
    fused = None
    for k, source in enumerate(sources):
        term = T.hadamard(source, T.take(weights, (Ellipsis, slice(k, k + 1))))
        fused = term if fused is None else T.add(fused, term)
    return fused, weights


@dataclass
class Module:
    """Named collection of holders; merges their parameters and buffers."""
    parts: dict = field(default_factory=dict)

    def parameters(self):
        out = {}
        for part in self.parts.values():
            out.update(part.parameters())
        return out

    def buffers(self):
        out = {}
        for part in self.parts.values():
            out.update(part.buffers())
        return out

    def __getitem__(self, key):
        return self.parts[key]
