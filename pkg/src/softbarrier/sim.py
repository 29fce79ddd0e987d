"""Closed-loop simulation under zero-order-hold control.

The plant is integrated with fixed-step RK4 between control updates; the
control is recomputed every delta_t from one of four laws: the single-backup
filter, the multi-backup filter, a bare backup law, or the unfiltered desired
law. Traces carry the per-step diagnostics so the safety record (h_s along the
run, branch occupancy, switching events) can be audited afterwards.
"""

import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .barrier import barrier_args_grid, soft_barrier_grid
from .filter import FilterConfig, control_multi, control_single

__all__ = [
    "SimConfig",
    "SimTrace",
    "simulate",
    "metrics",
    "estimate_constants",
    "eps_floor",
    "resolve_eps",
    "sample_states",
    "check_soft_under_hard",
]

_LAWS = ("single", "multi", "backup_only", "desired_only")


@dataclass(frozen=True)
class SimConfig:
    x0: np.ndarray
    duration: float
    delta_t: float
    law: str = "single"
    plant_substeps: int = 5
    backup_index: int = 0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float).ravel())
        if self.law not in _LAWS:
            raise ValueError(f"law must be one of {_LAWS}, got {self.law!r}")
        if self.delta_t <= 0.0 or self.duration < self.delta_t:
            raise ValueError("need delta_t > 0 and duration >= delta_t")
        if self.plant_substeps < 1:
            raise ValueError("plant_substeps must be at least 1")

    @property
    def n_steps(self):
        return int(round(self.duration / self.delta_t))


@dataclass
class SimTrace:
    t: np.ndarray                 # (K+1,)
    x: np.ndarray                 # (K+1, n)
    u: np.ndarray                 # (K, m)
    diagnostics: list             # K StepDiagnostics (empty for open-loop laws)
    events: List[dict] = field(default_factory=list)
    aborted: bool = False

    @property
    def n_steps(self):
        return self.u.shape[0]


def _rk4_step(fun, x, u, dt):
    k1 = fun(x, u)
    k2 = fun(x + 0.5 * dt * k1, u)
    k3 = fun(x + 0.5 * dt * k2, u)
    k4 = fun(x + dt * k3, u)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _plant_step(scenario, x, u, dt, substeps):
    f, g = scenario.model.f, scenario.model.g

    def fun(state, control):
        return f(state) + g(state) @ control

    h = dt / substeps
    for _ in range(substeps):
        x = _rk4_step(fun, x, u, h)
    return x


def simulate(scenario, sim_cfg, filter_cfg: Optional[FilterConfig] = None):
    """Run the closed loop and return a SimTrace.

    filter_cfg is required for the filtered laws and ignored otherwise. A
    non-finite state aborts the run; the partial trace is returned with
    aborted=True rather than raising, so callers can still inspect it.
    """
    if sim_cfg.law in ("single", "multi") and filter_cfg is None:
        raise ValueError(f"filter_cfg is required for law {sim_cfg.law!r}")
    n_steps = sim_cfg.n_steps
    n, m = scenario.model.n, scenario.model.m
    ts = np.empty(n_steps + 1)
    xs = np.empty((n_steps + 1, n))
    us = np.empty((n_steps, m))
    diags = []
    events = []
    ts[0] = 0.0
    xs[0] = sim_cfg.x0
    state = None
    x = sim_cfg.x0.copy()
    k = 0
    aborted = False
    for k in range(n_steps):
        t = k * sim_cfg.delta_t
        if sim_cfg.law == "single":
            u, diag = control_single(
                scenario, x, filter_cfg, backup=sim_cfg.backup_index
            )
            diags.append(diag)
        elif sim_cfg.law == "multi":
            u, diag, state = control_multi(scenario, x, filter_cfg, state)
            diags.append(diag)
            if diag.switched:
                events.append({"t": t, "kind": "switch", "q": diag.q})
        elif sim_cfg.law == "backup_only":
            u = scenario.backups[sim_cfg.backup_index].u_b(x)
        else:
            u = scenario.desired(x)
        u = np.asarray(u, dtype=float).ravel()
        x = _plant_step(scenario, x, u, sim_cfg.delta_t, sim_cfg.plant_substeps)
        us[k] = u
        ts[k + 1] = t + sim_cfg.delta_t
        xs[k + 1] = x
        if not np.all(np.isfinite(x)):
            aborted = True
            k += 1
            break
    else:
        k = n_steps
    return SimTrace(
        t=ts[: k + 1],
        x=xs[: k + 1],
        u=us[:k],
        diagnostics=diags[:k],
        events=events,
        aborted=aborted,
    )


def metrics(trace, scenario):
    """Summary numbers for a finished run.

    Always reports the pointwise safety record min h_s over the visited
    states. Filtered runs add the barrier/margin minima, branch occupancy
    fractions and switch count; scenarios with a goal in their metadata add
    the terminal distance to it.
    """
    hs_vals = np.array([scenario.safety.h_s(x) for x in trace.x])
    out = {
        "steps": trace.n_steps,
        "aborted": trace.aborted,
        "min_hs": float(hs_vals.min()),
        "argmin_hs_t": float(trace.t[int(np.argmin(hs_vals))]),
        "terminal_state": [float(v) for v in trace.x[-1]],
    }
    if trace.diagnostics:
        td = trace.t[: len(trace.diagnostics)]
        branches = [d.branch for d in trace.diagnostics]
        for key, vals in (
            ("h", [d.h for d in trace.diagnostics]),
            ("hbar", [d.h_bar for d in trace.diagnostics]),
            ("beta", [d.beta for d in trace.diagnostics]),
            ("gamma", [d.gamma for d in trace.diagnostics]),
        ):
            vals = np.asarray(vals)
            out[f"min_{key}"] = float(vals.min())
            out[f"argmin_{key}_t"] = float(td[int(np.argmin(vals))])
        out.update(
            branch_fractions={
                name: branches.count(name) / len(branches)
                for name in sorted(set(branches))
            },
            n_switches=sum(1 for e in trace.events if e["kind"] == "switch"),
        )
    goal = scenario.meta.get("goal")
    poi = scenario.meta.get("poi")
    if goal is not None:
        point = poi(trace.x[-1]) if poi is not None else trace.x[-1][: len(goal)]
        out["goal_distance"] = float(
            np.linalg.norm(np.asarray(point) - np.asarray(goal))
        )
    return out


def sample_states(scenario, n_samples, seed):
    """Uniform samples from the scenario's sample box, shape (n_samples, n)."""
    rng = np.random.default_rng(seed)
    box = scenario.sample_box
    return rng.uniform(box[:, 0], box[:, 1], size=(n_samples, box.shape[0]))


def estimate_constants(scenario, grid, n_samples=2000, seed=0, margin=0.10):
    """Sampled bounds used to size the barrier tightening.

    l_s bounds the safety-function gradient norm over the sample box; l_phi
    bounds the backup vector field norm over the backup flows launched from
    samples whose hard barrier is nonnegative (the states the filter can
    actually commit to). Both are inflated by the given margin; the raw
    sampled maxima are reported alongside.
    """
    if n_samples < 1000:
        raise ValueError("need at least 1000 samples for a usable bound")
    X = sample_states(scenario, n_samples, seed)
    l_s_raw = max(
        float(np.linalg.norm(scenario.safety.h_s_gradient(x))) for x in X
    )
    l_phi_raw = 0.0
    any_inside = False
    for j in range(scenario.nu):
        Z = barrier_args_grid(scenario, X, grid, backup=j)
        keep = Z.min(axis=1) >= 0.0
        any_inside = any_inside or bool(keep.any())
        fb = scenario.backup_field(j)
        for x in X[keep]:
            speed = float(np.linalg.norm(fb(x)))
            if speed > l_phi_raw:
                l_phi_raw = speed
    if not any_inside:
        raise RuntimeError(
            "no sampled state has a nonnegative hard barrier; the sample box "
            "does not cover the operating region"
        )
    return {
        "l_s": (1.0 + margin) * l_s_raw,
        "l_phi": (1.0 + margin) * l_phi_raw,
        "l_s_sample": l_s_raw,
        "l_phi_sample": l_phi_raw,
    }


def eps_floor(ts, l_s, l_phi):
    """Smallest tightening that covers the inter-sample excursion, ts/2 * l_s * l_phi."""
    return 0.5 * ts * l_s * l_phi


def resolve_eps(scenario, cfg, n_samples=2000, seed=0):
    """Return cfg with eps materialized.

    In manual mode the config is returned unchanged. In lipschitz mode eps is
    set to the floor ts/2 * l_s * l_phi, estimating whichever of the two
    constants was not supplied.
    """
    if cfg.eps_floor_mode == "manual":
        return cfg
    l_s, l_phi = cfg.l_s, cfg.l_phi
    if l_s is None or l_phi is None:
        est = estimate_constants(scenario, cfg.grid, n_samples, seed)
        l_s = est["l_s"] if l_s is None else l_s
        l_phi = est["l_phi"] if l_phi is None else l_phi
    out = cfg.with_eps(eps_floor(cfg.grid.ts, l_s, l_phi))
    X = sample_states(scenario, min(n_samples, 500), seed)
    _, h = soft_barrier_grid(scenario, X, out.grid, out.rho1, out.rho2)
    sup_h = float(h.max())
    if out.eps >= sup_h:
        warnings.warn(
            f"eps floor {out.eps:.4g} is at or above the sampled sup of h "
            f"({sup_h:.4g}); the blend region is empty and the filter will "
            "return the backup control everywhere",
            RuntimeWarning,
            stacklevel=2,
        )
    return out


def check_soft_under_hard(scenario, grid, rho1, rho2=None, n_samples=1000, seed=0):
    """Sampled verification that the soft barrier lower-bounds the hard one.

    Returns (fraction_satisfied, worst_gap) where gap = hbar - h; the bound
    holds when every gap is nonnegative.
    """
    X = sample_states(scenario, n_samples, seed)
    hbar, h = soft_barrier_grid(scenario, X, grid, rho1, rho2)
    gap = hbar - h
    return float(np.mean(gap >= 0.0)), float(gap.min())
