"""Polytope linear program and minimum-intervention quadratic program.

The admissible control sets here are small (m <= 3 inputs, a handful of
constraint rows), so the LP max_{u in SU} c.u is solved exactly by scoring the
cached vertex set, and the QP by a dense primal active-set method. Both are
deterministic and dependency free; every QP solution is verified against its
KKT conditions before it is returned.
"""

import itertools

import numpy as np

FEAS_TOL = 1e-9
STAT_TOL = 1e-8
_MULT_TOL = 1e-9
_MAX_ITER = 200

_qp_calls = 0


class InfeasibleError(RuntimeError):
    """The constraint set of an LP/QP is empty."""


def qp_call_count():
    """Number of qp_min_intervention invocations since the last reset."""
    return _qp_calls


def reset_qp_call_count():
    global _qp_calls
    _qp_calls = 0


def _dedupe_sorted(points, tol):
    order = np.lexsort(points.T[::-1])
    points = points[order]
    keep = [points[0]]
    for row in points[1:]:
        if np.max(np.abs(row - keep[-1])) > tol:
            keep.append(row)
    return np.array(keep)


def _raw_vertices(A, b, tol):
    r, m = A.shape
    verts = []
    for idx in itertools.combinations(range(r), m):
        sub = A[list(idx)]
        try:
            v = np.linalg.solve(sub, b[list(idx)])
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(v)):
            continue
        if np.all(A @ v <= b + tol):
            verts.append(v)
    return verts


def enumerate_vertices(A, b, tol=FEAS_TOL):
    """All vertices of {u : A u <= b} by exhaustive basis enumeration.

    Every size-m subset of rows is solved and kept if feasible; duplicates are
    collapsed and the result is sorted lexicographically, so the vertex order
    is deterministic. Raises InfeasibleError when no vertex exists and
    ValueError when the polytope is unbounded (nonzero recession direction).

    Args:
        A: (r, m) constraint matrix.
        b: (r,) right-hand side.

    Returns:
        (n_vertices, m) array.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    r, m = A.shape
    if b.shape[0] != r:
        raise ValueError("A and b row counts differ")
    if r < m:
        raise ValueError("fewer constraints than dimensions, polytope unbounded")
    verts = _raw_vertices(A, b, tol)
    if not verts:
        raise InfeasibleError("polytope has no vertices (empty or degenerate)")
    _assert_bounded(A, tol)
    return _dedupe_sorted(np.array(verts), 10 * tol)


def _assert_bounded(A, tol):
    # The recession cone {d : A d <= 0} intersected with the unit box is a
    # bounded polytope containing the origin; it has a vertex away from zero
    # exactly when the cone has a ray.
    m = A.shape[1]
    box = np.vstack([A, np.eye(m), -np.eye(m)])
    rhs = np.concatenate([np.zeros(A.shape[0]), np.ones(2 * m)])
    for v in _raw_vertices(box, rhs, tol):
        if np.linalg.norm(v) > 1e-6:
            raise ValueError("polytope is unbounded (recession direction found)")


def lp_max_linear(c, polytope):
    """Maximize c . u over the polytope's cached vertices.

    Returns (value, argmax vertex). Ties go to the lowest vertex index, which
    together with the deterministic vertex ordering makes the argmax unique.
    """
    c = np.asarray(c, dtype=float).ravel()
    scores = polytope.vertices @ c
    k = int(np.argmax(scores))
    return float(scores[k]), polytope.vertices[k].copy()


def beta_margin(h, lf_h, lg_h, polytope, alpha, eps):
    """Feasibility margin L_f h + alpha (h - eps) + max_{u in SU} L_g h . u."""
    return float(lf_h) + alpha * (float(h) - eps) + lp_max_linear(lg_h, polytope)[0]


def _eqp_solve(u_des, G, g, work):
    """Projection of u_des onto the affine set {G_W u = g_W}."""
    if not work:
        return u_des.copy(), np.zeros(0)
    GW = G[work]
    gw = g[work]
    M = GW @ GW.T
    rhs = GW @ u_des - gw
    try:
        lam = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError:
        lam = np.linalg.lstsq(M, rhs, rcond=None)[0]
    return u_des - GW.T @ lam, lam


def qp_min_intervention(u_des, polytope, normal, offset):
    """argmin ||u - u_des||^2 over SU intersected with {normal.u + offset >= 0}.

    Args:
        u_des: (m,) desired control.
        polytope: admissible set with .A, .b, .vertices.
        normal: (m,) row L_g h of the barrier constraint.
        offset: scalar L_f h + alpha (h - eps).

    Returns:
        (u, info) where info records the active set, multipliers, iteration
        count and the verified KKT residuals.

    Raises:
        InfeasibleError: the barrier constraint cannot be met anywhere in SU.
    """
    global _qp_calls
    _qp_calls += 1

    u_des = np.asarray(u_des, dtype=float).ravel()
    normal = np.asarray(normal, dtype=float).ravel()
    best_val, u0 = lp_max_linear(normal, polytope)
    if best_val + offset < -FEAS_TOL:
        raise InfeasibleError(
            f"barrier constraint infeasible over SU (margin {best_val + offset:.3e})"
        )

    G = np.vstack([polytope.A, -normal])
    g = np.concatenate([polytope.b, [float(offset)]])

    u = u0
    work = []
    for it in range(_MAX_ITER):
        u_eq, lam = _eqp_solve(u_des, G, g, work)
        p = u_eq - u
        if np.linalg.norm(p) <= 1e-12:
            if lam.size == 0 or lam.min() >= -_MULT_TOL:
                break
            work.pop(int(np.argmin(lam)))
            continue
        step = 1.0
        blocker = -1
        for i in range(G.shape[0]):
            if i in work:
                continue
            gp = G[i] @ p
            if gp > 1e-14:
                a_i = (g[i] - G[i] @ u) / gp
                if a_i < step:
                    step = a_i
                    blocker = i
        u = u + max(step, 0.0) * p
        if blocker >= 0 and step < 1.0:
            work.append(blocker)
    else:
        raise RuntimeError("active-set QP failed to converge")

    max_violation = float(np.max(G @ u - g))
    if max_violation > FEAS_TOL:
        raise RuntimeError(f"QP result violates constraints by {max_violation:.3e}")
    stat = (u - u_des) + (G[work].T @ lam if work else 0.0)
    stat_norm = float(np.linalg.norm(stat))
    if stat_norm > STAT_TOL:
        raise RuntimeError(f"QP stationarity residual {stat_norm:.3e}")
    info = {
        "active": tuple(sorted(work)),
        "multipliers": {int(i): float(l) for i, l in zip(work, lam)},
        "iterations": it + 1,
        "max_violation": max_violation,
        "stationarity": stat_norm,
    }
    return u, info
