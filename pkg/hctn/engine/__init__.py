"""Autodiff engine, optimizer and checkpoint container."""
from .tensor import Tensor, no_grad
from .optim import AdamWState, adamw_step
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = ['Tensor', 'no_grad', 'AdamWState', 'adamw_step', 'load_checkpoint', 'save_checkpoint']
