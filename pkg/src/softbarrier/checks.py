"""Sampled invariant suites behind the `check` CLI subcommand.

Each suite draws random states (or random problem instances) for a scenario,
verifies a family of inequalities the library is supposed to guarantee, and
returns a JSON-able report with pass/fail per check and the worst witness
seen. These are the always-on counterparts of the unit tests: cheap enough to
run against a freshly defined scenario, no fixtures required.
"""

import numpy as np

from . import optim
from .barrier import evaluate, soft_barrier_grid
from .filter import (
    augmented_backup,
    control_multi,
    control_single,
    default_config,
)
from .sim import sample_states
from .softnum import softmax, softmin

__all__ = ["SUITES", "run_suite"]

_FD_DELTA = 1e-5


def _check(name, passed, worst, detail=""):
    return {"name": name, "passed": bool(passed), "worst": float(worst),
            "detail": detail}


def _suite_softnum(scenario, samples, seed):
    rng = np.random.default_rng(seed)
    worst_low = np.inf   # min slack of the log(N)/rho side
    worst_high = np.inf  # min slack of the sharp side
    for _ in range(samples):
        n = int(rng.integers(2, 9))
        z = rng.uniform(-5.0, 5.0, size=n)
        rho = float(rng.uniform(1.0, 200.0))
        pad = np.log(n) / rho
        sm = softmin(z, rho)
        sx = softmax(z, rho)
        worst_low = min(worst_low, sm - (z.min() - pad), sx - (z.max() - pad))
        worst_high = min(worst_high, z.min() - sm, z.max() - sx)
    checks = [
        _check("softmin/softmax within log(n)/rho of the exact value",
               worst_low >= 0.0, worst_low),
        _check("softmin below min, softmax below max",
               worst_high >= 0.0, worst_high),
    ]
    return checks


def _fd_gradient(fun, x, delta=_FD_DELTA):
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = delta
        g[i] = (fun(x + e) - fun(x - e)) / (2.0 * delta)
    return g


def _suite_gradients(scenario, samples, seed):
    cfg = default_config(scenario)
    X = sample_states(scenario, min(samples, 25), seed)
    worst_hs = 0.0
    worst_h = 0.0
    for x in X:
        g = np.asarray(scenario.safety.h_s_gradient(x))
        g_fd = _fd_gradient(scenario.safety.h_s, x)
        worst_hs = max(
            worst_hs,
            np.linalg.norm(g_fd - g) / max(np.linalg.norm(g), 1e-9),
        )

        def h_of(state):
            return evaluate(
                scenario, state, cfg.grid, cfg.rho1, cfg.rho2
            ).h_soft

        ev = evaluate(scenario, x, cfg.grid, cfg.rho1, cfg.rho2)
        g_fd = _fd_gradient(h_of, x)
        worst_h = max(
            worst_h,
            np.linalg.norm(g_fd - ev.grad_h)
            / max(np.linalg.norm(ev.grad_h), 1e-9),
        )
    return [
        _check("h_s gradient matches finite differences (rel < 1e-3)",
               worst_hs < 1e-3, worst_hs),
        _check("barrier gradient matches finite differences (rel < 1e-3)",
               worst_h < 1e-3, worst_h),
    ]


def _suite_sets(scenario, samples, seed):
    cfg = default_config(scenario)
    X = sample_states(scenario, samples, seed)
    hbar, h = soft_barrier_grid(scenario, X, cfg.grid, cfg.rho1, cfg.rho2)
    hs0 = np.array([scenario.safety.h_s(x) for x in X])
    soft_in_hard = int(np.sum((h >= 0.0) & (hbar < 0.0)))
    hard_in_safe = int(np.sum((hbar >= 0.0) & (hs0 < 0.0)))
    gap = hbar - h
    return [
        _check("no sample with h >= 0 but hard barrier < 0",
               soft_in_hard == 0, soft_in_hard),
        _check("no sample with hard barrier >= 0 but h_s < 0",
               hard_in_safe == 0, hard_in_safe),
        _check("soft barrier never exceeds the hard barrier",
               gap.min() >= 0.0, gap.min()),
    ]


def _suite_optim(scenario, samples, seed):
    rng = np.random.default_rng(seed)
    polytope = scenario.control_set
    V = polytope.vertices
    lo, hi = V.min(axis=0), V.max(axis=0)
    span = hi - lo
    worst_feas = 0.0
    worst_stat = 0.0
    worst_opt = -np.inf
    worst_fixed = 0.0
    infeasible_missed = 0
    for _ in range(samples):
        u_des = rng.uniform(lo - span, hi + span)
        a = rng.standard_normal(polytope.m)
        if np.linalg.norm(a) < 1e-9:
            continue
        m_hi = float(max(V @ a))
        m_lo = float(min(V @ a))
        slack = float(rng.uniform(-0.5, 1.0)) * max(m_hi - m_lo, 1.0)
        offset = -m_hi + slack
        if slack < -optim.FEAS_TOL:
            try:
                optim.qp_min_intervention(u_des, polytope, a, offset)
                infeasible_missed += 1
            except optim.InfeasibleError:
                pass
            continue
        u, info = optim.qp_min_intervention(u_des, polytope, a, offset)
        worst_feas = max(worst_feas, info["max_violation"],
                         -(a @ u + offset))
        worst_stat = max(worst_stat, info["stationarity"])
        # objective no worse than random feasible points
        obj = float(np.sum((u - u_des) ** 2))
        w = rng.dirichlet(np.ones(V.shape[0]), size=50)
        for cand in w @ V:
            if a @ cand + offset >= 0.0:
                worst_opt = max(worst_opt,
                                obj - float(np.sum((cand - u_des) ** 2)))
        # feasible u_des must be returned unchanged
        if (np.all(polytope.A @ u_des <= polytope.b)
                and a @ u_des + offset >= 0.0):
            worst_fixed = max(worst_fixed,
                              float(np.linalg.norm(u - u_des)))
    return [
        _check("QP solutions feasible (tol 1e-9)",
               worst_feas <= 1e-9, worst_feas),
        _check("QP stationarity residual (tol 1e-8)",
               worst_stat <= 1e-8, worst_stat),
        _check("QP no worse than sampled feasible points (tol 1e-9)",
               worst_opt <= 1e-9, worst_opt if np.isfinite(worst_opt) else 0.0),
        _check("feasible desired control returned unchanged (tol 1e-7)",
               worst_fixed <= 1e-7, worst_fixed),
        _check("infeasible instances rejected", infeasible_missed == 0,
               infeasible_missed),
    ]


def _suite_control(scenario, samples, seed):
    cfg = default_config(scenario)
    X = sample_states(scenario, min(samples, 300), seed)
    A_u, b_u = scenario.control_set.A, scenario.control_set.b
    worst_adm = -np.inf
    worst_seg = -np.inf
    gating_violations = 0
    state = None
    for x in X:
        before = optim.qp_call_count()
        if scenario.nu == 1:
            u, diag = control_single(scenario, x, cfg)
        else:
            u, diag, state = control_multi(scenario, x, cfg, state)
        called = optim.qp_call_count() - before
        if diag.gamma < 0.0 and called > 0:
            gating_violations += 1
        worst_adm = max(worst_adm, float(max(A_u @ u - b_u)))
        if diag.branch == "blend":
            if scenario.nu == 1:
                fallback = scenario.backups[0].u_b(x)
            else:
                fallback = augmented_backup(
                    scenario, x, diag.per_backup_h_bar, cfg.eps
                )
            worst_seg = max(
                worst_seg,
                float(np.linalg.norm(u - fallback)
                      - np.linalg.norm(diag.u_star - fallback)),
            )
    return [
        _check("filtered controls admissible (tol 1e-9)",
               worst_adm <= 1e-9, worst_adm),
        _check("QP never invoked when gamma < 0", gating_violations == 0,
               gating_violations),
        _check("blend lies on the fallback-to-QP segment",
               worst_seg <= 1e-9, worst_seg if np.isfinite(worst_seg) else 0.0),
    ]


SUITES = {
    "softnum": _suite_softnum,
    "gradients": _suite_gradients,
    "sets": _suite_sets,
    "optim": _suite_optim,
    "control": _suite_control,
}


def run_suite(scenario, suite, samples=2000, seed=0):
    """Run one named suite and return its report dict."""
    if suite not in SUITES:
        raise KeyError(f"unknown suite {suite!r}; choose from {sorted(SUITES)}")
    checks = SUITES[suite](scenario, samples, seed)
    return {
        "scenario": scenario.name,
        "suite": suite,
        "samples": samples,
        "seed": seed,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
    }
