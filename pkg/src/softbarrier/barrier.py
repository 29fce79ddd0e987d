"""Hard and soft barrier functions over backup-flow predictions.

For one backup, the N+2 barrier arguments at a state x are the safety values
along the predicted flow plus the terminal backup-set value,

    z = [h_s(phi(x, 0)), ..., h_s(phi(x, N ts)), h_b(phi(x, N ts))].

The hard barrier is min(z); its zero-superlevel set is forward invariant under
the sampling assumptions but the function is nonsmooth, so the control barrier
is the soft minimum h = softmin(z, rho1). With several backups, each backup
gets its own soft barrier h_j and the composite is the soft maximum over j.

Gradients combine the chain rule with the soft-min/soft-max weight vectors:
d h / dx = sum_i w_i * grad h_arg(phi_i) Q_i, where Q_i is the flow
sensitivity. The weights are convex, so the gradient is a convex combination
of the per-argument rows.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .flow import flow_samples, integrate_flow
from .softnum import softmax, softmax_weights, softmin, softmin_weights

__all__ = [
    "BarrierEval",
    "barrier_args",
    "hard_barrier_single",
    "soft_barrier_single",
    "barrier_gradient_single",
    "soft_barrier_multi",
    "barrier_gradient_multi",
    "lie_derivatives",
    "evaluate",
    "barrier_args_grid",
    "soft_barrier_grid",
    "fine_hstar_grid",
]


@dataclass
class BarrierEval:
    """Everything the filter needs about the barrier at one state."""

    h_soft: float
    h_bar_star: float
    per_backup_h_bar: np.ndarray
    per_backup_h_soft: np.ndarray
    grad_h: np.ndarray
    lf_h: float
    lg_h: np.ndarray


def barrier_args(flow_result, safety, policy):
    """Barrier argument vector z (length N+2) for one integrated flow."""
    phi = flow_result.phi
    z = np.empty(phi.shape[0] + 1)
    for i in range(phi.shape[0]):
        z[i] = safety.h_s(phi[i])
    z[-1] = policy.h_b(phi[-1])
    return z


def hard_barrier_single(flow_result, safety, policy):
    """min over the barrier arguments; >= 0 defines the verified safe set."""
    return float(np.min(barrier_args(flow_result, safety, policy)))


def soft_barrier_single(flow_result, safety, policy, rho1):
    return softmin(barrier_args(flow_result, safety, policy), rho1)


def _gradient_rows(flow_result, safety, policy):
    phi, Q = flow_result.phi, flow_result.Q
    rows = np.empty((phi.shape[0] + 1, phi.shape[1]))
    for i in range(phi.shape[0]):
        rows[i] = safety.h_s_gradient(phi[i]) @ Q[i]
    rows[-1] = policy.h_b_gradient(phi[-1]) @ Q[-1]
    return rows


def barrier_gradient_single(flow_result, safety, policy, rho1):
    """Soft-min weighted combination of the argument gradients."""
    z = barrier_args(flow_result, safety, policy)
    return softmin_weights(z, rho1) @ _gradient_rows(flow_result, safety, policy)


def soft_barrier_multi(flow_results, safety, policies, rho1, rho2):
    """Soft maximum over the per-backup soft barriers.

    Returns (h, per_backup_h_soft, per_backup_h_bar). With a single backup the
    soft maximum collapses and h equals the backup's soft barrier exactly.
    """
    h_js = np.empty(len(policies))
    hbar_js = np.empty(len(policies))
    for j, (fr, pol) in enumerate(zip(flow_results, policies)):
        z = barrier_args(fr, safety, pol)
        h_js[j] = softmin(z, rho1)
        hbar_js[j] = float(np.min(z))
    if len(policies) == 1:
        return float(h_js[0]), h_js, hbar_js
    return softmax(h_js, rho2), h_js, hbar_js


def barrier_gradient_multi(flow_results, safety, policies, rho1, rho2):
    h_js = np.empty(len(policies))
    grads = np.empty((len(policies), flow_results[0].phi.shape[1]))
    for j, (fr, pol) in enumerate(zip(flow_results, policies)):
        z = barrier_args(fr, safety, pol)
        h_js[j] = softmin(z, rho1)
        grads[j] = softmin_weights(z, rho1) @ _gradient_rows(fr, safety, pol)
    if len(policies) == 1:
        return grads[0]
    return softmax_weights(h_js, rho2) @ grads


def lie_derivatives(x, grad_h, model):
    """(L_f h, L_g h) at x for a gradient row vector grad_h."""
    x = np.asarray(x, dtype=float).ravel()
    return float(grad_h @ model.f(x)), grad_h @ model.g(x)


def evaluate(scenario, x, grid, rho1, rho2=None, indices=None):
    """Full barrier evaluation at x: values, gradient and Lie derivatives.

    ``indices`` selects which backups participate (default: all). For a single
    participating backup the result is numerically identical to the
    single-backup pipeline; otherwise rho2 is required.
    """
    x = np.asarray(x, dtype=float).ravel()
    if indices is None:
        indices = range(scenario.nu)
    indices = list(indices)
    nu = len(indices)
    if nu > 1 and rho2 is None:
        raise ValueError("rho2 is required with more than one backup")

    h_js = np.empty(nu)
    hbar_js = np.empty(nu)
    grads = np.empty((nu, scenario.model.n))
    for k, j in enumerate(indices):
        fr = integrate_flow(scenario, x, grid, backup=j)
        pol = scenario.backups[j]
        z = barrier_args(fr, scenario.safety, pol)
        hbar_js[k] = float(np.min(z))
        h_js[k] = softmin(z, rho1)
        grads[k] = softmin_weights(z, rho1) @ _gradient_rows(fr, scenario.safety, pol)

    if nu == 1:
        h = float(h_js[0])
        grad = grads[0]
    else:
        h = softmax(h_js, rho2)
        grad = softmax_weights(h_js, rho2) @ grads
    lf_h, lg_h = lie_derivatives(x, grad, scenario.model)
    return BarrierEval(
        h_soft=h,
        h_bar_star=float(np.max(hbar_js)),
        per_backup_h_bar=hbar_js,
        per_backup_h_soft=h_js,
        grad_h=grad,
        lf_h=lf_h,
        lg_h=lg_h,
    )


# ---------------------------------------------------------------------------
# Batched grid sweeps (set membership studies)
# ---------------------------------------------------------------------------


def barrier_args_grid(scenario, X, grid, backup=0):
    """Barrier argument matrix, one row per state in X. Shape (B, N+2)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    pol = scenario.backups[backup]
    if pol.field_kind >= 0 and scenario.safety.hs_kind >= 0 and pol.hb_kind >= 0:
        return kernels.barrier_args_batch(
            pol.field_kind,
            pol.field_params,
            scenario.safety.hs_kind,
            scenario.safety.hs_params,
            pol.hb_kind,
            pol.hb_params,
            X,
            grid.n_samples,
            grid.ts,
            grid.substeps,
        )
    Z = np.empty((X.shape[0], grid.n_samples + 2))
    for b in range(X.shape[0]):
        states = flow_samples(scenario, X[b], grid, backup=backup)
        for i in range(states.shape[0]):
            Z[b, i] = scenario.safety.h_s(states[i])
        Z[b, -1] = pol.h_b(states[-1])
    return Z


def soft_barrier_grid(scenario, X, grid, rho1, rho2=None):
    """(h_bar_star, h_soft) arrays over a batch of states, all backups.

    h_bar_star is the max over backups of the per-backup hard barrier; h_soft
    is the soft barrier (soft maximum across backups when there are several).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if scenario.nu > 1 and rho2 is None:
        raise ValueError("rho2 is required with more than one backup")
    hbar = np.full((scenario.nu, X.shape[0]), -np.inf)
    hsoft = np.empty((scenario.nu, X.shape[0]))
    for j in range(scenario.nu):
        Z = barrier_args_grid(scenario, X, grid, backup=j)
        hbar[j] = Z.min(axis=1)
        hsoft[j] = softmin(Z, rho1)
    if scenario.nu == 1:
        return hbar[0], hsoft[0]
    return hbar.max(axis=0), softmax(hsoft.T, rho2)


def fine_hstar_grid(scenario, X, grid, refine=10, backup=0):
    """Dense-grid hard barrier: h_s scored on a refine-times finer time grid.

    Approximates the continuous-time minimum of h_s along the backup flow
    (plus the terminal h_b), used to check the sampled sets against the true
    ones.
    """
    import math as _math

    X = np.atleast_2d(np.asarray(X, dtype=float))
    pol = scenario.backups[backup]
    per_record = max(1, _math.ceil(grid.substeps / refine))
    dt = grid.ts / (refine * per_record)
    n_steps = grid.n_samples * refine * per_record
    if pol.field_kind >= 0 and scenario.safety.hs_kind >= 0 and pol.hb_kind >= 0:
        return kernels.fine_hstar_batch(
            pol.field_kind,
            pol.field_params,
            scenario.safety.hs_kind,
            scenario.safety.hs_params,
            pol.hb_kind,
            pol.hb_params,
            X,
            n_steps,
            dt,
        )
    out = np.empty(X.shape[0])
    for b in range(X.shape[0]):
        states = flow_samples(scenario, X[b], grid, backup=backup, refine=refine)
        vals = [scenario.safety.h_s(s) for s in states]
        out[b] = min(min(vals), pol.h_b(states[-1]))
    return out
