"""Hot numerical kernels.

Everything here is decorated with :func:`softbarrier._accel.njit` and written
so the identical source also runs as plain numpy when acceleration is off
(``SOFTBARRIER_NO_NUMBA=1`` or numba missing).

Shipped scenarios register their closed-loop backup vector fields, safety
functions and backup-set functions as integer kinds plus a flat float64
parameter vector, which lets one compiled integrator serve every scenario.
Scenarios built from arbitrary Python callables skip these kernels and use the
generic integrator in :mod:`softbarrier.flow`.

Parameter vector layouts
------------------------
FIELD_PENDULUM:  [k1, k2, cx1, cx2, ff, ubar, a0, c1, c2, c3, c4]
    theta'' = sin(theta) + csat(k . (x - c) + ff); a0 = ubar*(1-lam).
FIELD_UNICYCLE:  [ubar1, mu]
    [v cos th, v sin th, ubar1*tanh(mu*v), 0].
HS_SCALED_BOX:   [c, p, s1..sn]
    c - ||diag(s) x||_p.
HS_UNICYCLE:     [d, rho, n_obs,
                  wall: ax, ay, av, bv, c, p,
                  obstacle*: ax, ay, av, bx, by, bv, c, p]
    soft-min_rho of the wall term c - ||(ax rx, ay ry, av (v-bv))||_p and
    n_obs terms ||(ax (rx-bx), ay (ry-by), av (v-bv))||_p - c, where
    r = position + d*(cos th, sin th).
HB_QUADRATIC:    [level, c1..cn, M row-major (n*n, symmetric)]
    level - (x-c)^T M (x-c).
HB_UNICYCLE:     [coef, <HS_UNICYCLE params>]
    hs(x) - coef * v^2.
"""

import numpy as np

from ._accel import njit

FIELD_PENDULUM = 0
FIELD_UNICYCLE = 1

HS_SCALED_BOX = 0
HS_UNICYCLE = 1

HB_QUADRATIC = 0
HB_UNICYCLE = 1

_WALL_LEN = 6
_OBS_LEN = 8


@njit
def csat_scalar(a, ubar, a0, c1, c2, c3, c4):
    """Continuously differentiable saturation (scalar)."""
    if a > ubar:
        return ubar
    if a < -ubar:
        return -ubar
    if a >= a0:
        return c1 * np.sin(c2 * a + c3) + c4
    if a <= -a0:
        return c1 * np.sin(c2 * a - c3) - c4
    return a


@njit
def csat_deriv_scalar(a, ubar, a0, c1, c2, c3, c4):
    if a > ubar or a < -ubar:
        return 0.0
    if a >= a0:
        return c1 * c2 * np.cos(c2 * a + c3)
    if a <= -a0:
        return c1 * c2 * np.cos(c2 * a - c3)
    return 1.0


@njit
def pnorm(z, p):
    """||z||_p in the overflow-safe scaled form max|z| * (sum (|z|/max)^p)^(1/p)."""
    m = 0.0
    for i in range(z.shape[0]):
        a = abs(z[i])
        if a > m:
            m = a
    if m == 0.0:
        return 0.0
    s = 0.0
    for i in range(z.shape[0]):
        s += (abs(z[i]) / m) ** p
    return m * s ** (1.0 / p)


@njit
def pnorm_grad(z, p):
    """Gradient of ||z||_p. Zero vector at z = 0 (subgradient choice)."""
    n = z.shape[0]
    g = np.zeros(n)
    m = 0.0
    for i in range(n):
        a = abs(z[i])
        if a > m:
            m = a
    if m == 0.0:
        return g
    s = 0.0
    for i in range(n):
        s += (abs(z[i]) / m) ** p
    denom = s ** ((p - 1.0) / p)
    for i in range(n):
        t = abs(z[i]) / m
        gi = t ** (p - 1.0) / denom
        g[i] = gi if z[i] >= 0.0 else -gi
    return g


@njit
def field(kind, x, p):
    """Closed-loop backup vector field f(x) + g(x) u_b(x)."""
    if kind == FIELD_PENDULUM:
        a = p[0] * (x[0] - p[2]) + p[1] * (x[1] - p[3]) + p[4]
        u = csat_scalar(a, p[5], p[6], p[7], p[8], p[9], p[10])
        out = np.empty(2)
        out[0] = x[1]
        out[1] = np.sin(x[0]) + u
        return out
    # FIELD_UNICYCLE
    out = np.empty(4)
    out[0] = x[2] * np.cos(x[3])
    out[1] = x[2] * np.sin(x[3])
    out[2] = p[0] * np.tanh(p[1] * x[2])
    out[3] = 0.0
    return out


@njit
def field_jac(kind, x, p):
    """Jacobian of :func:`field` with respect to the state."""
    if kind == FIELD_PENDULUM:
        a = p[0] * (x[0] - p[2]) + p[1] * (x[1] - p[3]) + p[4]
        du = csat_deriv_scalar(a, p[5], p[6], p[7], p[8], p[9], p[10])
        J = np.empty((2, 2))
        J[0, 0] = 0.0
        J[0, 1] = 1.0
        J[1, 0] = np.cos(x[0]) + du * p[0]
        J[1, 1] = du * p[1]
        return J
    th = np.tanh(p[1] * x[2])
    J = np.zeros((4, 4))
    J[0, 2] = np.cos(x[3])
    J[0, 3] = -x[2] * np.sin(x[3])
    J[1, 2] = np.sin(x[3])
    J[1, 3] = x[2] * np.cos(x[3])
    J[2, 2] = p[0] * p[1] * (1.0 - th * th)
    return J


@njit
def _softmin_scalar(q, rho):
    m = q[0]
    for i in range(1, q.shape[0]):
        if q[i] < m:
            m = q[i]
    s = 0.0
    for i in range(q.shape[0]):
        s += np.exp(-rho * (q[i] - m))
    return m - np.log(s) / rho


@njit
def _unicycle_shape_terms(x, p):
    """Wall and obstacle p-norm terms for the unicycle safe set."""
    d = p[0]
    n_obs = int(p[2])
    rx = x[0] + d * np.cos(x[3])
    ry = x[1] + d * np.sin(x[3])
    v = x[2]
    q = np.empty(1 + n_obs)
    z = np.empty(3)
    z[0] = p[3] * rx
    z[1] = p[4] * ry
    z[2] = p[5] * (v - p[6])
    q[0] = p[7] - pnorm(z, p[8])
    for k in range(n_obs):
        o = 3 + _WALL_LEN + _OBS_LEN * k
        z[0] = p[o] * (rx - p[o + 3])
        z[1] = p[o + 1] * (ry - p[o + 4])
        z[2] = p[o + 2] * (v - p[o + 5])
        q[1 + k] = pnorm(z, p[o + 7]) - p[o + 6]
    return q


@njit
def hs(kind, x, p):
    """Safety function h_s."""
    if kind == HS_SCALED_BOX:
        n = x.shape[0]
        z = np.empty(n)
        for i in range(n):
            z[i] = p[2 + i] * x[i]
        return p[0] - pnorm(z, p[1])
    q = _unicycle_shape_terms(x, p)
    return _softmin_scalar(q, p[1])


@njit
def hs_grad(kind, x, p):
    """Gradient of h_s with respect to the state."""
    n = x.shape[0]
    if kind == HS_SCALED_BOX:
        z = np.empty(n)
        for i in range(n):
            z[i] = p[2 + i] * x[i]
        gz = pnorm_grad(z, p[1])
        g = np.empty(n)
        for i in range(n):
            g[i] = -gz[i] * p[2 + i]
        return g
    d = p[0]
    rho = p[1]
    n_obs = int(p[2])
    rx = x[0] + d * np.cos(x[3])
    ry = x[1] + d * np.sin(x[3])
    v = x[2]
    # state Jacobians of (rx, ry, v)
    drx = np.zeros(4)
    drx[0] = 1.0
    drx[3] = -d * np.sin(x[3])
    dry = np.zeros(4)
    dry[1] = 1.0
    dry[3] = d * np.cos(x[3])
    q = _unicycle_shape_terms(x, p)
    # soft-min weights over the shape terms
    m = q[0]
    for i in range(1, q.shape[0]):
        if q[i] < m:
            m = q[i]
    w = np.empty(q.shape[0])
    tot = 0.0
    for i in range(q.shape[0]):
        w[i] = np.exp(-rho * (q[i] - m))
        tot += w[i]
    g = np.zeros(4)
    z = np.empty(3)
    z[0] = p[3] * rx
    z[1] = p[4] * ry
    z[2] = p[5] * (v - p[6])
    gz = pnorm_grad(z, p[8])
    c0 = -(w[0] / tot)
    for i in range(4):
        g[i] += c0 * (gz[0] * p[3] * drx[i] + gz[1] * p[4] * dry[i])
    g[2] += c0 * gz[2] * p[5]
    for k in range(n_obs):
        o = 3 + _WALL_LEN + _OBS_LEN * k
        z[0] = p[o] * (rx - p[o + 3])
        z[1] = p[o + 1] * (ry - p[o + 4])
        z[2] = p[o + 2] * (v - p[o + 5])
        gz = pnorm_grad(z, p[o + 7])
        ck = w[1 + k] / tot
        for i in range(4):
            g[i] += ck * (gz[0] * p[o] * drx[i] + gz[1] * p[o + 1] * dry[i])
        g[2] += ck * gz[2] * p[o + 2]
    return g


@njit
def hb(kind, x, p):
    """Backup-set function h_b."""
    if kind == HB_QUADRATIC:
        n = x.shape[0]
        acc = 0.0
        for i in range(n):
            di = x[i] - p[1 + i]
            for j in range(n):
                acc += di * p[1 + n + i * n + j] * (x[j] - p[1 + j])
        return p[0] - acc
    return hs(HS_UNICYCLE, x, p[1:]) - p[0] * x[2] * x[2]


@njit
def hb_grad(kind, x, p):
    if kind == HB_QUADRATIC:
        n = x.shape[0]
        g = np.zeros(n)
        for i in range(n):
            for j in range(n):
                g[i] -= 2.0 * p[1 + n + i * n + j] * (x[j] - p[1 + j])
        return g
    g = hs_grad(HS_UNICYCLE, x, p[1:])
    g[2] -= 2.0 * p[0] * x[2]
    return g


@njit
def flow_states(kind, p, x0, n_steps, dt):
    """Fixed-step RK4 of the closed-loop field, recording every step.

    Returns an array of shape (n_steps+1, n) whose first row is x0 exactly.
    """
    n = x0.shape[0]
    out = np.empty((n_steps + 1, n))
    out[0] = x0
    x = x0.copy()
    for k in range(n_steps):
        k1 = field(kind, x, p)
        k2 = field(kind, x + 0.5 * dt * k1, p)
        k3 = field(kind, x + 0.5 * dt * k2, p)
        k4 = field(kind, x + dt * k3, p)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[k + 1] = x
    return out


@njit
def flow_and_sensitivity(kind, p, x0, n_samples, ts, substeps):
    """Joint RK4 of the flow and the variational equation on the horizon grid.

    The augmented system is (x', Q') = (field(x), field_jac(x) Q) with
    Q(0) = I, stepped substeps times per grid interval ts. Returns
    phi (n_samples+1, n) and Q (n_samples+1, n, n); row 0 is exact.
    """
    n = x0.shape[0]
    dt = ts / substeps
    phi = np.empty((n_samples + 1, n))
    Q = np.empty((n_samples + 1, n, n))
    phi[0] = x0
    Q[0] = np.eye(n)
    x = x0.copy()
    Qc = np.eye(n)
    for i in range(n_samples):
        for _ in range(substeps):
            k1 = field(kind, x, p)
            K1 = field_jac(kind, x, p) @ Qc
            x2 = x + 0.5 * dt * k1
            k2 = field(kind, x2, p)
            K2 = field_jac(kind, x2, p) @ (Qc + 0.5 * dt * K1)
            x3 = x + 0.5 * dt * k2
            k3 = field(kind, x3, p)
            K3 = field_jac(kind, x3, p) @ (Qc + 0.5 * dt * K2)
            x4 = x + dt * k3
            k4 = field(kind, x4, p)
            K4 = field_jac(kind, x4, p) @ (Qc + dt * K3)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            Qc = Qc + (dt / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        phi[i + 1] = x
        Q[i + 1] = Qc
    return phi, Q


@njit
def barrier_args_batch(kind, p, hs_kind, hsp, hb_kind, hbp, X, n_samples, ts, substeps):
    """Barrier argument matrix for a batch of states.

    Row b holds [h_s(phi(x_b, 0)), ..., h_s(phi(x_b, N ts)), h_b(phi(x_b, N ts))],
    the N+2 values whose minimum is the hard barrier and whose soft minimum is
    the soft barrier.
    """
    B = X.shape[0]
    dt = ts / substeps
    Z = np.empty((B, n_samples + 2))
    for b in range(B):
        x = X[b].copy()
        Z[b, 0] = hs(hs_kind, x, hsp)
        for i in range(n_samples):
            for _ in range(substeps):
                k1 = field(kind, x, p)
                k2 = field(kind, x + 0.5 * dt * k1, p)
                k3 = field(kind, x + 0.5 * dt * k2, p)
                k4 = field(kind, x + dt * k3, p)
                x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            Z[b, i + 1] = hs(hs_kind, x, hsp)
        Z[b, n_samples + 1] = hb(hb_kind, x, hbp)
    return Z


@njit
def fine_hstar_batch(kind, p, hs_kind, hsp, hb_kind, hbp, X, n_steps, dt):
    """Dense-grid approximation of the continuous-time hard barrier.

    Integrates n_steps RK4 steps of size dt per state, scores h_s after every
    step (plus the initial state) and h_b at the endpoint, and returns the
    minimum. With dt a fraction of the horizon grid spacing this refines the
    sample grid by the corresponding factor.
    """
    B = X.shape[0]
    out = np.empty(B)
    for b in range(B):
        x = X[b].copy()
        best = hs(hs_kind, x, hsp)
        for _ in range(n_steps):
            k1 = field(kind, x, p)
            k2 = field(kind, x + 0.5 * dt * k1, p)
            k3 = field(kind, x + 0.5 * dt * k2, p)
            k4 = field(kind, x + dt * k3, p)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            v = hs(hs_kind, x, hsp)
            if v < best:
                best = v
        vb = hb(hb_kind, x, hbp)
        if vb < best:
            best = vb
        out[b] = best
    return out
