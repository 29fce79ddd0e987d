"""Backup-flow integration and state sensitivities.

The filter predicts where the backup policy would take the system by
integrating the closed-loop field f + g u_b over a finite horizon with
fixed-step RK4, sampling the horizon grid t_i = i * ts for i = 0..N. The
sensitivity matrix Q(t) = d phi(x, t) / dx is integrated jointly through the
variational equation Q' = J(phi) Q, Q(0) = I.

Shipped scenarios run through the compiled kernels; anything else falls back
to a generic integrator over the scenario callables (with a finite-difference
field Jacobian when the policy does not provide one).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

__all__ = ["HorizonGrid", "FlowResult", "NonFiniteStateError", "integrate_flow", "flow_samples"]

_FD_DELTA = 1e-6


class NonFiniteStateError(RuntimeError):
    """The integrated state left the representable range."""


@dataclass(frozen=True)
class HorizonGrid:
    """Horizon sampling grid: N intervals of length ts, RK4 substeps each."""

    n_samples: int
    ts: float
    substeps: int = 5

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if not self.ts > 0.0:
            raise ValueError("ts must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be at least 1")

    @property
    def horizon(self):
        return self.n_samples * self.ts

    @property
    def times(self):
        return np.arange(self.n_samples + 1) * self.ts


@dataclass
class FlowResult:
    """Backup flow samples phi[i] = phi(x, i ts) and sensitivities Q[i]."""

    phi: np.ndarray
    Q: np.ndarray
    grid: HorizonGrid
    backup_index: int = 0

    @property
    def terminal_state(self):
        return self.phi[-1]


def _fd_jacobian(ftilde, x, delta=_FD_DELTA):
    n = x.shape[0]
    J = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = delta
        J[:, k] = (ftilde(x + e) - ftilde(x - e)) / (2.0 * delta)
    return J


def _integrate_generic(scenario, x, grid, backup):
    ftilde = scenario.backup_field(backup)
    jac = scenario.backups[backup].field_jacobian
    if jac is None:
        jac = lambda s: _fd_jacobian(ftilde, s)
    n = x.shape[0]
    dt = grid.ts / grid.substeps
    phi = np.empty((grid.n_samples + 1, n))
    Q = np.empty((grid.n_samples + 1, n, n))
    phi[0] = x
    Q[0] = np.eye(n)
    xc = x.copy()
    Qc = np.eye(n)
    for i in range(grid.n_samples):
        for _ in range(grid.substeps):
            k1 = ftilde(xc)
            K1 = jac(xc) @ Qc
            x2 = xc + 0.5 * dt * k1
            k2 = ftilde(x2)
            K2 = jac(x2) @ (Qc + 0.5 * dt * K1)
            x3 = xc + 0.5 * dt * k2
            k3 = ftilde(x3)
            K3 = jac(x3) @ (Qc + 0.5 * dt * K2)
            x4 = xc + dt * k3
            k4 = ftilde(x4)
            K4 = jac(x4) @ (Qc + dt * K3)
            xc = xc + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            Qc = Qc + (dt / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        phi[i + 1] = xc
        Q[i + 1] = Qc
    return phi, Q


def integrate_flow(scenario, x, grid, backup=0):
    """Flow and sensitivity of backup ``backup`` from state ``x`` over ``grid``.

    Returns a FlowResult with phi[0] = x and Q[0] = I exactly.

    Raises:
        NonFiniteStateError: the flow left the representable float range.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != scenario.model.n:
        raise ValueError(f"state must have length {scenario.model.n}")
    policy = scenario.backups[backup]
    if policy.field_kind >= 0:
        phi, Q = kernels.flow_and_sensitivity(
            policy.field_kind,
            policy.field_params,
            x,
            grid.n_samples,
            grid.ts,
            grid.substeps,
        )
    else:
        phi, Q = _integrate_generic(scenario, x, grid, backup)
    if not (np.isfinite(phi).all() and np.isfinite(Q).all()):
        bad = np.flatnonzero(
            ~(np.isfinite(phi).all(axis=1) & np.isfinite(Q).all(axis=(1, 2)))
        )[0]
        last = phi[bad - 1].tolist() if bad > 0 else x.tolist()
        raise NonFiniteStateError(
            f"backup flow from {x.tolist()} left the finite range at "
            f"t = {bad * grid.ts:.6g}; last finite sample {last}"
        )
    return FlowResult(phi=phi, Q=Q, grid=grid, backup_index=backup)


def flow_samples(scenario, x, grid, backup=0, refine=1):
    """Backup-flow states on a grid refined ``refine``-fold (no sensitivities).

    The step size never exceeds the grid's own RK4 step, so a refined record
    grid is at least as accurate as the standard one. Returns an array of
    shape (N * refine + 1, n) whose row k is the state at time k * ts / refine.
    """
    x = np.asarray(x, dtype=float).ravel()
    if refine < 1:
        raise ValueError("refine must be at least 1")
    per_record = max(1, math.ceil(grid.substeps / refine))
    dt = grid.ts / (refine * per_record)
    n_steps = grid.n_samples * refine * per_record
    policy = scenario.backups[backup]
    if policy.field_kind >= 0:
        states = kernels.flow_states(policy.field_kind, policy.field_params, x, n_steps, dt)
    else:
        ftilde = scenario.backup_field(backup)
        states = np.empty((n_steps + 1, x.shape[0]))
        states[0] = x
        xc = x.copy()
        for k in range(n_steps):
            k1 = ftilde(xc)
            k2 = ftilde(xc + 0.5 * dt * k1)
            k3 = ftilde(xc + 0.5 * dt * k2)
            k4 = ftilde(xc + dt * k3)
            xc = xc + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            states[k + 1] = xc
    states = states[::per_record]
    if not np.isfinite(states).all():
        raise NonFiniteStateError(
            f"backup flow from {x.tolist()} produced non-finite values"
        )
    return states
