"""Central finite-difference checks for the autodiff engine."""
import numpy as np


def numerical_gradient(loss_fn, tensor, h=1e-5):
    """
    Central differences of a scalar `loss_fn()` w.r.t. every entry of `tensor`.

    `loss_fn` must rebuild the forward pass from the current `tensor.data`
    and return a float.
    """
    grad = np.zeros_like(tensor.data)
    flat = tensor.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        plus = loss_fn()
        flat[i] = original - h
        minus = loss_fn()
        flat[i] = original
        out[i] = (plus - minus) / (2.0 * h)
    return grad


def relative_error(analytic, numeric, floor=1e-8):
    """Max element-wise |a - n| / max(|a|, |n|, floor)."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale)) if analytic.size else 0.0


def check_gradients(build_loss, params, h=1e-5, atol=1e-7):
    """
    Compare analytic and numeric gradients for each named parameter.

    Parameters
    ----------
    build_loss : callable
        Returns a scalar Tensor built from the current parameter values.
    params : dict[str, Tensor]

    Returns
    -------
    dict[str, float]
        Relative error per parameter, ignoring entries where both gradients
        are below `atol` in magnitude.
    """
    for p in params.values():
        p.zero_grad()
    loss = build_loss()
    loss.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}

    errors = {}
    for name, p in params.items():
        numeric = numerical_gradient(lambda: float(build_loss().data), p, h=h)
        a = analytic[name]
        significant = (np.abs(a) > atol) | (np.abs(numeric) > atol)
        errors[name] = relative_error(a[significant], numeric[significant])
    return errors
