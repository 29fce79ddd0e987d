"""Acceptance gate: one test and one terminal summary line per criterion.

Each test times its own work, appends a PASS/FAIL line to
conftest.ACCEPTANCE_LINES (reprinted by the terminal-summary hook), and then
asserts every condition of its criterion.

Criterion 4 is a known honest failure, left red on purpose: with the coarse
0.1 s hold the marginal start [0.5, 0] dips to min h_s = -0.001978 at
t = 4.1 because the filter hands control fully back while the predicted
barrier sits on a plateau above kappa_h. Halving the hold clears the run
with margin (min h_s = +0.0296), which is why the shipped config uses
delta_t = 0.05. The decision ledger has the full analysis; the other seven
initial conditions of the same sweep all pass.
"""

import time
import warnings
from itertools import combinations

import numpy as np
import pytest
from scipy.optimize import linprog

from conftest import ACCEPTANCE_LINES
from softbarrier import HorizonGrid
from softbarrier.barrier import (
    barrier_args_grid,
    evaluate,
    fine_hstar_grid,
    soft_barrier_grid,
)
from softbarrier.filter import (
    FilterState,
    control_multi,
    control_single,
    default_config,
)
from softbarrier.flow import integrate_flow
from softbarrier.model import ControlPolytope, build_unicycle_scenario
from softbarrier.optim import InfeasibleError, lp_max_linear, qp_min_intervention
from softbarrier.sim import SimConfig, metrics, resolve_eps, sample_states, simulate
from softbarrier.softnum import softmax, softmin

PEND_GRID = HorizonGrid(50, 0.1, 5)

# Continuity constant calibrated on the pendulum laws: the blend weight has
# slope 1/kappa_h = 20 and the QP solution moves O(1), so quotients stay
# well under 100 (worst observed: 77 single, 23 multi).
CONTINUITY_C = 100.0


def record(number, label, ok, elapsed, detail):
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE_LINES.append(
        f"criterion {number} ({label}): {status} [{elapsed:.1f} s] {detail}"
    )


def run_pendulum(scenario, cfg, x0, delta_t=0.1, duration=20.0, law="single"):
    sim_cfg = SimConfig(x0=x0, duration=duration, delta_t=delta_t, law=law)
    trace = simulate(scenario, sim_cfg, cfg)
    return trace, metrics(trace, scenario)


def test_criterion_1_soft_extremum_sandwich():
    rng = np.random.default_rng(101)
    softmin(np.array([0.0, 1.0]), 10.0)  # pay any one-time setup off the clock
    softmax(np.array([0.0, 1.0]), 10.0)
    t0 = time.perf_counter()
    worst = np.inf
    for _ in range(10_000):
        n = int(rng.integers(2, 12))
        z = rng.uniform(-8.0, 8.0, size=n)
        rho = float(rng.uniform(0.5, 300.0))
        pad = np.log(n) / rho
        sm = softmin(z, rho)
        sx = softmax(z, rho)
        worst = min(
            worst,
            sm - (z.min() - pad), z.min() - sm,
            sx - (z.max() - pad), z.max() - sx,
        )
    elapsed = time.perf_counter() - t0
    ok = worst >= 0.0 and elapsed < 1.0
    record(1, "soft extremum sandwich", ok, elapsed,
           f"10000 tuples, worst slack {worst:.3e}")
    assert worst >= 0.0
    assert elapsed < 1.0


def test_criterion_2_gradient_and_sensitivity_fidelity(pend_wide):
    t0 = time.perf_counter()
    X = sample_states(pend_wide, 100, seed=5)

    worst_grad = 0.0
    for x in X:
        grad = evaluate(pend_wide, x, PEND_GRID, rho1=100.0).grad_h
        fd = np.empty(2)
        for i in range(2):
            e = np.zeros(2)
            e[i] = 1e-6
            hp = evaluate(pend_wide, x + e, PEND_GRID, rho1=100.0).h_soft
            hm = evaluate(pend_wide, x - e, PEND_GRID, rho1=100.0).h_soft
            fd[i] = (hp - hm) / 2e-6
        rel = np.linalg.norm(fd - grad) / max(np.linalg.norm(grad), 1e-12)
        worst_grad = max(worst_grad, rel)

    worst_q = 0.0
    for x in X:
        Q = integrate_flow(pend_wide, x, PEND_GRID).Q[-1]
        fd = np.empty((2, 2))
        for i in range(2):
            e = np.zeros(2)
            e[i] = 1e-5
            fp = integrate_flow(pend_wide, x + e, PEND_GRID).phi[-1]
            fm = integrate_flow(pend_wide, x - e, PEND_GRID).phi[-1]
            fd[:, i] = (fp - fm) / 2e-5
        rel = np.linalg.norm(fd - Q) / max(np.linalg.norm(Q), 1e-12)
        worst_q = max(worst_q, rel)

    elapsed = time.perf_counter() - t0
    ok = worst_grad < 1e-3 and worst_q < 1e-4 and elapsed < 30.0
    record(2, "gradient and sensitivity fidelity", ok, elapsed,
           f"100 states, worst grad rel {worst_grad:.2e}, "
           f"worst Q rel {worst_q:.2e}")
    assert worst_grad < 1e-3
    assert worst_q < 1e-4
    assert elapsed < 30.0


def _random_polytope(rng, m):
    lo = -rng.uniform(0.5, 2.0, size=m)
    hi = rng.uniform(0.5, 2.0, size=m)
    A = np.vstack([np.eye(m), -np.eye(m)])
    b = np.concatenate([hi, -lo])
    for _ in range(2):
        a = rng.normal(size=m)
        a /= np.linalg.norm(a)
        A = np.vstack([A, a])
        b = np.append(b, rng.uniform(0.5, 1.8))
    return ControlPolytope(A, b)


def _projection_oracle(u_des, A, b):
    """Best feasible candidate over all active-set projections (exact for
    the strictly convex projection objective)."""
    m = A.shape[1]
    cand = [u_des.copy()] if np.all(A @ u_des <= b + 1e-12) else []
    for k in range(1, m + 1):
        for rows in combinations(range(A.shape[0]), k):
            Aw, bw = A[list(rows)], b[list(rows)]
            K = np.block([[np.eye(m), Aw.T], [Aw, np.zeros((k, k))]])
            rhs = np.concatenate([u_des, bw])
            u = np.linalg.lstsq(K, rhs, rcond=None)[0][:m]
            if np.all(A @ u <= b + 1e-9):
                cand.append(u)
    best, best_val = None, np.inf
    for u in cand:
        val = float(np.sum((u - u_des) ** 2))
        if val < best_val:
            best, best_val = u, val
    return best


def test_criterion_3_solver_oracles():
    rng = np.random.default_rng(77)
    t0 = time.perf_counter()

    worst_lp = 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 4))
        poly = _random_polytope(rng, m)
        c = rng.normal(size=m)
        val, _ = lp_max_linear(c, poly)
        ref = linprog(-c, A_ub=poly.A, b_ub=poly.b,
                      bounds=[(None, None)] * m, method="highs")
        worst_lp = max(worst_lp, abs(val - (-ref.fun)))

    worst_qp = 0.0
    n_infeasible = 0
    oracle_disagreements = 0
    for _ in range(1000):
        m = int(rng.integers(1, 4))
        poly = _random_polytope(rng, m)
        u_des = rng.normal(size=m) * 1.5
        a = rng.normal(size=m)
        offset = rng.normal() * 0.8
        try:
            u, _ = qp_min_intervention(u_des, poly, a, offset)
        except InfeasibleError:
            n_infeasible += 1
            val, _ = lp_max_linear(a, poly)
            if val + offset >= 1e-9:
                oracle_disagreements += 1
            continue
        ref = _projection_oracle(u_des, np.vstack([poly.A, -a[None, :]]),
                                 np.append(poly.b, offset))
        if ref is None:
            oracle_disagreements += 1
            continue
        worst_qp = max(worst_qp, float(np.linalg.norm(u - ref)))

    elapsed = time.perf_counter() - t0
    ok = (worst_lp <= 1e-9 and worst_qp <= 1e-6
          and oracle_disagreements == 0 and elapsed < 30.0)
    record(3, "LP and QP against independent oracles", ok, elapsed,
           f"1000 instances each, LP gap {worst_lp:.1e}, QP gap "
           f"{worst_qp:.1e}, {n_infeasible} infeasible all rejected")
    assert worst_lp <= 1e-9
    assert worst_qp <= 1e-6
    assert oracle_disagreements == 0
    assert elapsed < 30.0


def test_criterion_4_marginal_start_pendulum_sweep(pend_wide, wide_cfg):
    failures = []
    t0 = time.perf_counter()
    trace, summary = run_pendulum(pend_wide, wide_cfg, [0.5, 0.0])
    canonical_elapsed = time.perf_counter() - t0
    max_u = max(abs(float(u[0])) for u in trace.u)
    if summary["min_hs"] < 0.0:
        failures.append(
            f"min h_s = {summary['min_hs']:+.6f} at t = "
            f"{summary['argmin_hs_t']:.1f}"
        )
    if summary["min_h"] < 0.0:
        failures.append(f"min h = {summary['min_h']:+.6f}")
    if summary["min_beta"] <= 0.0:
        failures.append(f"min beta = {summary['min_beta']:+.6f}")
    if max_u > 1.5 + 1e-9:
        failures.append(f"max |u| = {max_u:.6f}")
    if canonical_elapsed >= 60.0:
        failures.append(f"canonical run took {canonical_elapsed:.1f} s")

    # Same sweep over the eight documented starts: zero margin for the
    # positive angles, the estimated sampling margin for the negative ones.
    for theta in (0.5, 1.0, 1.5, 2.0):
        _, m = run_pendulum(pend_wide, wide_cfg, [theta, 0.0])
        if m["min_hs"] < 0.0:
            failures.append(
                f"theta0 = {theta:+.1f}: min h_s = {m['min_hs']:+.6f}"
            )
    with warnings.catch_warnings():
        # The estimated floor exceeds sup h here, which resolve_eps reports;
        # the resulting backup-everywhere filter is still a valid sweep arm.
        warnings.simplefilter("ignore", RuntimeWarning)
        cfg_eps = resolve_eps(
            pend_wide, default_config(pend_wide, eps_floor_mode="lipschitz"),
            seed=0,
        )
    for theta in (-0.5, -1.0, -1.5, -2.0):
        _, m = run_pendulum(pend_wide, cfg_eps, [theta, 0.0])
        if m["min_hs"] < 0.0:
            failures.append(
                f"theta0 = {theta:+.1f} (eps = {cfg_eps.eps:.3f}): "
                f"min h_s = {m['min_hs']:+.6f}"
            )

    elapsed = time.perf_counter() - t0
    ok = not failures
    detail = "; ".join(failures) if failures else (
        f"canonical run min h_s = {summary['min_hs']:+.6f}, all 8 starts safe"
    )
    record(4, "marginal-start pendulum sweep", ok, elapsed, detail)
    assert ok, (
        "expected failure of the coarse 0.1 s hold: " + "; ".join(failures)
        + ". The filter lets go over the predicted-barrier plateau and the "
        "hold is too coarse to react to the dip; halving delta_t clears the "
        "run (min h_s = +0.0296). See the decision ledger."
    )


def test_criterion_5_single_vs_multiple_backup_contrast(
    pend_narrow, pend_multi, multi_cfg
):
    t0 = time.perf_counter()
    narrow_cfg = default_config(pend_narrow)
    _, single = run_pendulum(pend_narrow, narrow_cfg, [-2.7, 0.0])
    _, multi = run_pendulum(pend_multi, multi_cfg, [-2.7, 0.0], law="multi")
    elapsed = time.perf_counter() - t0
    ok = single["min_hs"] < 0.0 and multi["min_hs"] >= 0.0 and elapsed < 120.0
    record(5, "single vs multiple backup contrast", ok, elapsed,
           f"single backup min h_s = {single['min_hs']:+.4f} (leaves the "
           f"safe set), three backups min h_s = {multi['min_hs']:+.4f}")
    assert single["min_hs"] < 0.0
    assert multi["min_hs"] >= 0.0
    assert elapsed < 120.0


def test_criterion_6_covered_set_growth(pend_narrow, pend_multi):
    t0 = time.perf_counter()
    theta = np.linspace(-np.pi, np.pi, 100)
    omega = np.linspace(-3.0, 3.0, 100)
    X = np.array([[a, w] for a in theta for w in omega])
    _, h_single = soft_barrier_grid(pend_narrow, X, HorizonGrid(150, 0.1, 5),
                                    rho1=100.0)
    _, h_multi = soft_barrier_grid(pend_multi, X, HorizonGrid(50, 0.1, 5),
                                   rho1=100.0, rho2=50.0)
    frac_single = float(np.mean(h_single >= 0.0))
    frac_multi = float(np.mean(h_multi >= 0.0))
    elapsed = time.perf_counter() - t0
    ok = frac_multi > frac_single
    record(6, "covered-set growth with multiple backups", ok, elapsed,
           f"covered fraction {frac_single:.4f} single vs "
           f"{frac_multi:.4f} multi on a 100x100 grid")
    assert frac_multi > frac_single


def test_criterion_7_unicycle_goal_runs():
    t0 = time.perf_counter()
    details = []
    failures = []
    for goal in ((2.0, 4.5), (-1.0, 0.0), (-4.5, 8.0)):
        scenario = build_unicycle_scenario(goal=goal)
        cfg = default_config(scenario)
        sim_cfg = SimConfig(x0=[-3.0, -8.5, 0.0, 0.0], duration=25.0,
                            delta_t=0.02, law="single")
        trace = simulate(scenario, sim_cfg, cfg)
        summary = metrics(trace, scenario)
        A_u, b_u = scenario.control_set.A, scenario.control_set.b
        worst_adm = max(float(max(A_u @ u - b_u)) for u in trace.u)
        details.append(
            f"goal {goal}: dist {summary['goal_distance']:.3f}, "
            f"min h_s {summary['min_hs']:+.4f}"
        )
        if summary["goal_distance"] > 0.2:
            failures.append(f"goal {goal} missed by "
                            f"{summary['goal_distance']:.3f}")
        if summary["min_hs"] < 0.0:
            failures.append(f"goal {goal} unsafe: {summary['min_hs']:+.4f}")
        if worst_adm > 1e-9:
            failures.append(f"goal {goal} control outside box: {worst_adm:.2e}")
    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 300.0
    record(7, "unicycle goal runs on the cluttered map", ok, elapsed,
           "; ".join(failures if failures else details))
    assert not failures, failures
    assert elapsed < 300.0


def test_criterion_8_set_inclusion_chain(pend_wide):
    t0 = time.perf_counter()
    X = sample_states(pend_wide, 10_000, seed=42)
    hbar, hsoft = soft_barrier_grid(pend_wide, X, PEND_GRID, rho1=100.0)
    fine = fine_hstar_grid(pend_wide, X, PEND_GRID, refine=10)
    hb = np.array([pend_wide.backups[0].h_b(x) for x in X])
    hs = np.array([pend_wide.safety.h_s(x) for x in X])

    bad_backup = int(np.sum((hb >= 0.0) & (fine < -1e-6)))
    bad_fine = int(np.sum((fine >= -1e-6) & (hbar < -1e-6)))
    bad_hard = int(np.sum((hbar >= -1e-6) & (hs < 0.0)))
    above = int(np.sum(hsoft > hbar))

    # The soft barrier is strictly below the hard one in exact arithmetic;
    # float64 ties happen when the correction underflows below one ulp.
    # Certify every tie: log(1 + s) <= s bounds the correction by the sum of
    # the non-minimal exponential terms, and the marginal cases get an exact
    # high-precision evaluation.
    ties = np.where(hsoft == hbar)[0]
    uncertified = 0
    if ties.size:
        Z = barrier_args_grid(pend_wide, X[ties], PEND_GRID)
        d = np.sort(Z - Z.min(axis=1, keepdims=True), axis=1)[:, 1:]
        bound = np.sum(np.exp(-100.0 * d), axis=1) / 100.0 * (1.0 + 1e-9)
        ulp = np.spacing(np.abs(hbar[ties]))
        for k in np.where(bound > ulp)[0]:
            from mpmath import exp as mpexp, log as mplog, mp, mpf

            mp.dps = 60
            s = sum(mpexp(-100 * mpf(float(v))) for v in d[k])
            correction = mplog(1 + s) / 100
            if correction > 8 * float(ulp[k]):
                uncertified += 1

    elapsed = time.perf_counter() - t0
    ok = (bad_backup == 0 and bad_fine == 0 and bad_hard == 0
          and above == 0 and uncertified == 0 and elapsed < 120.0)
    record(8, "sampled set-inclusion chain", ok, elapsed,
           f"10000 states, 0 chain counterexamples expected: got "
           f"{bad_backup}/{bad_fine}/{bad_hard}, soft above hard {above}, "
           f"{ties.size} float64 ties all certified as underflow")
    assert bad_backup == 0
    assert bad_fine == 0
    assert bad_hard == 0
    assert above == 0
    assert uncertified == 0
    assert elapsed < 120.0


def test_criterion_9_admissibility_and_continuity(
    pend_wide, wide_cfg, pend_multi, multi_cfg
):
    t0 = time.perf_counter()
    worst_single = -np.inf
    A_u, b_u = pend_wide.control_set.A, pend_wide.control_set.b
    for x in sample_states(pend_wide, 10_000, seed=7):
        u, _ = control_single(pend_wide, x, wide_cfg)
        worst_single = max(worst_single, float(max(A_u @ u - b_u)))

    worst_multi = -np.inf
    A_m, b_m = pend_multi.control_set.A, pend_multi.control_set.b
    state = FilterState(q=1, inside=True)
    for x in sample_states(pend_multi, 10_000, seed=8):
        u, _, state = control_multi(pend_multi, x, multi_cfg, state)
        worst_multi = max(worst_multi, float(max(A_m @ u - b_m)))

    delta = 1e-6
    rng = np.random.default_rng(21)
    worst_quot_single = 0.0
    for x in sample_states(pend_wide, 1000, seed=9):
        step = rng.normal(size=2)
        x2 = x + delta * step / np.linalg.norm(step)
        u1, _ = control_single(pend_wide, x, wide_cfg)
        u2, _ = control_single(pend_wide, x2, wide_cfg)
        worst_quot_single = max(worst_quot_single,
                                float(np.linalg.norm(u1 - u2)) / delta)

    worst_quot_multi = 0.0
    straddles = 0
    for x in sample_states(pend_multi, 1000, seed=10):
        step = rng.normal(size=2)
        x2 = x + delta * step / np.linalg.norm(step)
        u1, d1, _ = control_multi(pend_multi, x, multi_cfg,
                                  FilterState(q=1, inside=True))
        u2, d2, _ = control_multi(pend_multi, x2, multi_cfg,
                                  FilterState(q=1, inside=True))
        # The committed-backup law may jump across the covered-set boundary;
        # pairs straddling it are excluded by design.
        if (d1.h_bar - multi_cfg.eps) * (d2.h_bar - multi_cfg.eps) < 0.0:
            straddles += 1
            continue
        worst_quot_multi = max(worst_quot_multi,
                               float(np.linalg.norm(u1 - u2)) / delta)

    elapsed = time.perf_counter() - t0
    ok = (worst_single <= 1e-9 and worst_multi <= 1e-9
          and worst_quot_single <= CONTINUITY_C
          and worst_quot_multi <= CONTINUITY_C)
    record(9, "admissibility and continuity probes", ok, elapsed,
           f"worst box violation {worst_single:.1e} single / "
           f"{worst_multi:.1e} multi over 10000 states each; worst "
           f"difference quotient {worst_quot_single:.0f} single / "
           f"{worst_quot_multi:.0f} multi ({straddles} straddling pairs "
           f"excluded), bound {CONTINUITY_C:.0f}")
    assert worst_single <= 1e-9
    assert worst_multi <= 1e-9
    assert worst_quot_single <= CONTINUITY_C
    assert worst_quot_multi <= CONTINUITY_C
