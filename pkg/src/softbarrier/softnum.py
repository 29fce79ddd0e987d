"""Soft minimum and soft maximum.

The soft minimum of z_1..z_N with sharpness rho > 0 is

    softmin(z, rho) = -(1/rho) * log(sum_i exp(-rho * z_i))

and the soft maximum is

    softmax(z, rho) = (1/rho) * log(sum_i exp(rho * z_i)) - log(N)/rho.

Both are computed with the max-shifted log-sum-exp so that large |rho * z_i|
cannot overflow. For any z: min(z) - log(N)/rho <= softmin(z, rho) <= min(z)
and max(z) - log(N)/rho <= softmax(z, rho) <= max(z), with the strict sides
holding in exact arithmetic whenever N >= 2.

All functions accept a 1-D array (one tuple) or a 2-D array (a batch of
tuples, reduced along the last axis).
"""

import numpy as np

__all__ = ["softmin", "softmax", "softmin_weights", "softmax_weights"]


def _check_rho(rho):
    if not rho > 0.0:
        raise ValueError(f"rho must be positive, got {rho}")


def softmin(z, rho):
    """Soft minimum of the values in ``z`` along the last axis."""
    _check_rho(rho)
    z = np.asarray(z, dtype=float)
    m = z.min(axis=-1)
    s = np.exp(-rho * (z - m[..., None])).sum(axis=-1)
    out = m - np.log(s) / rho
    return float(out) if out.ndim == 0 else out


def softmax(z, rho):
    """Soft maximum of the values in ``z`` along the last axis."""
    _check_rho(rho)
    z = np.asarray(z, dtype=float)
    m = z.max(axis=-1)
    s = np.exp(rho * (z - m[..., None])).sum(axis=-1)
    out = m + (np.log(s) - np.log(z.shape[-1])) / rho
    return float(out) if out.ndim == 0 else out


def softmin_weights(z, rho):
    """Convex weights w_i = exp(-rho*z_i) / sum_j exp(-rho*z_j).

    The weights are the gradient of softmin(z, rho) with respect to z; they
    are nonnegative and sum to one, concentrating on the argmin as rho grows.
    """
    _check_rho(rho)
    z = np.asarray(z, dtype=float)
    e = np.exp(-rho * (z - z.min(axis=-1)[..., None]))
    return e / e.sum(axis=-1)[..., None]


def softmax_weights(z, rho):
    """Convex weights w_i = exp(rho*z_i) / sum_j exp(rho*z_j)."""
    _check_rho(rho)
    z = np.asarray(z, dtype=float)
    e = np.exp(rho * (z - z.max(axis=-1)[..., None]))
    return e / e.sum(axis=-1)[..., None]
