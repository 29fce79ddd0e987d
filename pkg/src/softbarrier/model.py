"""System models, admissible-control polytopes and scenario construction.

A Scenario bundles the control-affine plant x' = f(x) + g(x) u, the polytope
of admissible controls, the safety function h_s, one or more backup policies
(each a control law u_b with a terminal-set function h_b), and a desired
control law. Shipped scenarios also register kernel ids/parameters so the
compiled integrators in :mod:`softbarrier.kernels` can be used; scenarios
built from arbitrary callables work through the generic integrator instead.
"""

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from . import kernels, optim

__all__ = [
    "SystemModel",
    "ControlPolytope",
    "SafetySpec",
    "BackupPolicy",
    "Scenario",
    "csat",
    "csat_derivative",
    "csat_constants",
    "build_pendulum_scenario",
    "build_unicycle_scenario",
    "default_unicycle_map",
]

# Root of t*sin(t) + cos(t) = 1 on (0, pi), the phase span of the sine blend
# between its C1 joint with the passthrough branch and its peak. Polished by a
# couple of Newton steps in csat_constants so the constants are exact to
# machine precision for any (ubar, lam).
_CSAT_PHASE = 2.331122370414423


def csat_constants(ubar, lam):
    """Sine-blend constants (c1, c2, c3, c4) making csat C1 for given ubar, lam.

    The joint conditions (value and slope continuity at a0 = ubar*(1-lam) and
    at ubar) reduce to t*sin(t) + cos(t) = 1 for the phase t = c2*ubar*lam;
    the remaining constants follow in closed form.
    """
    if not 0.0 < lam < 1.0:
        raise ValueError("lam must lie in (0, 1)")
    if not ubar > 0.0:
        raise ValueError("ubar must be positive")
    t = _CSAT_PHASE
    for _ in range(3):
        t -= (t * math.sin(t) + math.cos(t) - 1.0) / (t * math.cos(t))
    span = ubar * lam
    c2 = t / span
    c1 = span / (1.0 - math.cos(t))
    c4 = ubar - c1
    c3 = 0.5 * math.pi - c2 * ubar
    return c1, c2, c3, c4


def csat(a, ubar, lam, c1, c2, c3, c4):
    """Continuously differentiable saturation.

    Passes a through on |a| < ubar*(1-lam), holds +-ubar outside [-ubar, ubar]
    and blends with the sine branches c1*sin(c2*a +- c3) +- c4 in between.
    """
    return float(kernels.csat_scalar(float(a), ubar, ubar * (1.0 - lam), c1, c2, c3, c4))


def csat_derivative(a, ubar, lam, c1, c2, c3, c4):
    return float(
        kernels.csat_deriv_scalar(float(a), ubar, ubar * (1.0 - lam), c1, c2, c3, c4)
    )


@dataclass
class SystemModel:
    """Control-affine plant x' = f(x) + g(x) u."""

    n: int
    m: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("state and input dimensions must be positive")


@dataclass
class ControlPolytope:
    """Admissible control set SU = {u : A u <= b}.

    The vertex set is enumerated once at construction (and checked nonempty
    and bounded), after which every LP over SU is a cached dot product.
    """

    A: np.ndarray
    b: np.ndarray
    vertices: np.ndarray = dc_field(init=False)

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.asarray(self.b, dtype=float).ravel()
        self.vertices = optim.enumerate_vertices(self.A, self.b)

    @property
    def m(self):
        return self.A.shape[1]

    def contains(self, u, tol=optim.FEAS_TOL):
        u = np.asarray(u, dtype=float).ravel()
        return bool(np.all(self.A @ u <= self.b + tol))


@dataclass
class SafetySpec:
    """Safety function h_s and its gradient; the safe set is {h_s >= 0}."""

    h_s: Callable[[np.ndarray], float]
    h_s_gradient: Callable[[np.ndarray], np.ndarray]
    hs_kind: int = -1
    hs_params: Optional[np.ndarray] = None


@dataclass
class BackupPolicy:
    """Backup control law with its terminal-set function h_b."""

    label: str
    u_b: Callable[[np.ndarray], np.ndarray]
    h_b: Callable[[np.ndarray], float]
    h_b_gradient: Callable[[np.ndarray], np.ndarray]
    field_jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    field_kind: int = -1
    field_params: Optional[np.ndarray] = None
    hb_kind: int = -1
    hb_params: Optional[np.ndarray] = None

    @property
    def has_kernel(self):
        return self.field_kind >= 0 and self.hb_kind >= 0


@dataclass
class Scenario:
    name: str
    model: SystemModel
    control_set: ControlPolytope
    safety: SafetySpec
    backups: tuple
    desired: Callable[[np.ndarray], np.ndarray]
    sample_box: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.backups = tuple(self.backups)
        if not self.backups:
            raise ValueError("a scenario needs at least one backup policy")
        self.sample_box = np.asarray(self.sample_box, dtype=float).reshape(self.model.n, 2)

    @property
    def nu(self):
        return len(self.backups)

    def backup_field(self, j=0):
        """Closed-loop vector field under backup j, as a plain callable."""
        f, g = self.model.f, self.model.g
        u_b = self.backups[j].u_b

        def ftilde(x):
            return f(x) + g(x) @ u_b(x)

        return ftilde

    def has_kernel(self, j=0):
        return (
            self.safety.hs_kind >= 0
            and self.backups[j].has_kernel
        )


# ---------------------------------------------------------------------------
# Pendulum (inverted pendulum, theta measured from the upright equilibrium)
# ---------------------------------------------------------------------------

_PEND_K = (-3.0, -3.0)
_PEND_UBAR = 1.5
_PEND_LAM = 0.2
_PEND_M1 = np.array([[1.25, 0.25], [0.25, 0.25]])
_PEND_LEVEL1 = 0.07
# Printed as [[1.17, 0.17], [0.12, 0.22]]; the quadratic form only sees the
# symmetric part.
_PEND_M2 = np.array([[1.17, 0.145], [0.145, 0.22]])
_PEND_LEVEL2 = 0.025


def _pendulum_field_params(center, ubar, lam):
    c1, c2, c3, c4 = csat_constants(ubar, lam)
    ff = -math.sin(center[0])
    return np.array(
        [
            _PEND_K[0],
            _PEND_K[1],
            center[0],
            center[1],
            ff,
            ubar,
            ubar * (1.0 - lam),
            c1,
            c2,
            c3,
            c4,
        ]
    )


def _quad_hb_params(level, center, M):
    return np.concatenate([[level], np.asarray(center, dtype=float), np.asarray(M, dtype=float).ravel()])


def _pendulum_backup(label, center, level, M):
    """Backup csat(K (x - center) - sin(center_theta)) targeting the ellipse
    {(x-center)^T M (x-center) <= level}.

    The feedforward term compensates gravity so that `center` is the
    closed-loop equilibrium; it vanishes for the origin backup.
    """
    fp = _pendulum_field_params(center, _PEND_UBAR, _PEND_LAM)
    hbp = _quad_hb_params(level, center, M)
    k1, k2, cx1, cx2, ff, ubar, a0, c1, c2, c3, c4 = fp

    def u_b(x):
        a = k1 * (x[0] - cx1) + k2 * (x[1] - cx2) + ff
        return np.array([kernels.csat_scalar(a, ubar, a0, c1, c2, c3, c4)])

    def h_b(x):
        return float(kernels.hb(kernels.HB_QUADRATIC, np.asarray(x, dtype=float), hbp))

    def h_b_gradient(x):
        return kernels.hb_grad(kernels.HB_QUADRATIC, np.asarray(x, dtype=float), hbp)

    def field_jacobian(x):
        return kernels.field_jac(kernels.FIELD_PENDULUM, np.asarray(x, dtype=float), fp)

    return BackupPolicy(
        label=label,
        u_b=u_b,
        h_b=h_b,
        h_b_gradient=h_b_gradient,
        field_jacobian=field_jacobian,
        field_kind=kernels.FIELD_PENDULUM,
        field_params=fp,
        hb_kind=kernels.HB_QUADRATIC,
        hb_params=hbp,
    )


def build_pendulum_scenario(variant="wide"):
    """Inverted pendulum scenario.

    Variants:
        "wide":   h_s = pi - ||x||_100, one backup at the origin, N = 50.
        "narrow": h_s = 1 - ||diag(1/pi, 1) x||_100, same single backup,
                  N = 150 (the longest useful horizon for this set).
        "multi":  narrow safe set with three backups whose equilibria sit at
                  0 and +-pi/2, N = 50 per backup.
    """
    if variant not in ("wide", "narrow", "multi"):
        raise ValueError(f"unknown pendulum variant {variant!r}")

    def f(x):
        return np.array([x[1], math.sin(x[0])])

    g_mat = np.array([[0.0], [1.0]])

    def g(x):
        return g_mat

    model = SystemModel(n=2, m=1, f=f, g=g)
    control_set = ControlPolytope(A=[[1.0], [-1.0]], b=[_PEND_UBAR, _PEND_UBAR])

    if variant == "wide":
        hs_params = np.array([math.pi, 100.0, 1.0, 1.0])
    else:
        hs_params = np.array([1.0, 100.0, 1.0 / math.pi, 1.0])

    def h_s(x):
        return float(kernels.hs(kernels.HS_SCALED_BOX, np.asarray(x, dtype=float), hs_params))

    def h_s_gradient(x):
        return kernels.hs_grad(kernels.HS_SCALED_BOX, np.asarray(x, dtype=float), hs_params)

    safety = SafetySpec(
        h_s=h_s,
        h_s_gradient=h_s_gradient,
        hs_kind=kernels.HS_SCALED_BOX,
        hs_params=hs_params,
    )

    origin = _pendulum_backup("origin", (0.0, 0.0), _PEND_LEVEL1, _PEND_M1)
    if variant == "multi":
        backups = (
            origin,
            _pendulum_backup("right", (0.5 * math.pi, 0.0), _PEND_LEVEL2, _PEND_M2),
            _pendulum_backup("left", (-0.5 * math.pi, 0.0), _PEND_LEVEL2, _PEND_M2),
        )
    else:
        backups = (origin,)

    def desired(x):
        return np.zeros(1)

    n_samples = 150 if variant == "narrow" else 50
    meta = {
        "filter": {
            "rho1": 100.0,
            "rho2": 50.0 if variant == "multi" else None,
            "alpha": 1.0,
            "eps": 0.0,
            "kappa_h": 0.05,
            "kappa_beta": 0.05,
            "n_samples": n_samples,
            "ts": 0.1,
        },
        "sim": {"delta_t": 0.1, "duration": 20.0, "x0": [0.5, 0.0]},
    }
    return Scenario(
        name=f"pendulum-{variant}",
        model=model,
        control_set=control_set,
        safety=safety,
        backups=backups,
        desired=desired,
        sample_box=np.array([[-math.pi, math.pi], [-3.0, 3.0]]),
        meta=meta,
    )


# ---------------------------------------------------------------------------
# Unicycle (planar robot with speed and heading, point of interest offset d)
# ---------------------------------------------------------------------------

_UNI_UBAR = (4.0, 1.0)
_UNI_MU_BRAKE = -15.0
_UNI_D = 1.0
_UNI_MU12 = (0.8, 0.8)


def default_unicycle_map():
    """Arena reconstruction: rounded-box wall and six rounded-box obstacles.

    Shapes are p-norm sublevel sets in (r_x, r_y, v) where r is the point of
    interest. The wall keeps r in a +-6.2 x +-9.6 box and v in [-1, 9]; the
    obstacle speed half-extent is large so obstacles are effectively position
    shapes while keeping every coefficient positive.
    """
    return {
        "d": _UNI_D,
        "rho": 20.0,
        "p": 20.0,
        "wall": {"half_extents": (6.2, 9.6), "v_center": 4.0, "v_half": 5.0},
        "obstacles": [
            {"center": (3.2, -5.5), "half_extents": (1.2, 1.2)},
            {"center": (-4.6, -4.0), "half_extents": (0.9, 1.1)},
            {"center": (3.0, 0.8), "half_extents": (1.2, 1.0)},
            {"center": (-2.0, 3.2), "half_extents": (1.0, 1.0)},
            {"center": (0.6, 7.8), "half_extents": (1.1, 0.9)},
            {"center": (4.3, 6.0), "half_extents": (1.0, 1.0)},
        ],
        "obstacle_v_half": 25.0,
    }


def _unicycle_hs_params(map_config):
    d = float(map_config["d"])
    rho = float(map_config["rho"])
    p = float(map_config["p"])
    wall = map_config["wall"]
    obstacles = map_config["obstacles"]
    vc = float(wall["v_center"])
    params = [d, rho, float(len(obstacles))]
    wx, wy = wall["half_extents"]
    params += [1.0 / wx, 1.0 / wy, 1.0 / float(wall["v_half"]), vc, 1.0, p]
    for ob in obstacles:
        ox, oy = ob["half_extents"]
        bx, by = ob["center"]
        ov = float(ob.get("v_half", map_config["obstacle_v_half"]))
        op = float(ob.get("p", p))
        params += [1.0 / ox, 1.0 / oy, 1.0 / ov, bx, by, vc, 1.0, op]
    return np.array(params)


def build_unicycle_scenario(goal=(2.0, 4.5), map_config=None):
    """Planar unicycle scenario steering a point of interest to ``goal``.

    State x = (q_x, q_y, v, theta); inputs are acceleration and turn rate,
    |u1| <= 4, |u2| <= 1. The single backup brakes hard (u1 = 4 tanh(-15 v),
    u2 = 0) and its terminal set is {h_s(x) - 25 v^2 >= 0}.
    """
    map_config = map_config if map_config is not None else default_unicycle_map()
    hs_params = _unicycle_hs_params(map_config)
    d = float(map_config["d"])
    ubar1, ubar2 = _UNI_UBAR
    mu1, mu2 = _UNI_MU12
    r_d = np.asarray(goal, dtype=float).ravel()
    if r_d.shape != (2,):
        raise ValueError("goal must be a 2-vector")

    def f(x):
        return np.array([x[2] * math.cos(x[3]), x[2] * math.sin(x[3]), 0.0, 0.0])

    g_mat = np.array([[0.0, 0.0], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])

    def g(x):
        return g_mat

    model = SystemModel(n=4, m=2, f=f, g=g)
    control_set = ControlPolytope(
        A=[[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]],
        b=[ubar1, ubar1, ubar2, ubar2],
    )

    def h_s(x):
        return float(kernels.hs(kernels.HS_UNICYCLE, np.asarray(x, dtype=float), hs_params))

    def h_s_gradient(x):
        return kernels.hs_grad(kernels.HS_UNICYCLE, np.asarray(x, dtype=float), hs_params)

    safety = SafetySpec(
        h_s=h_s,
        h_s_gradient=h_s_gradient,
        hs_kind=kernels.HS_UNICYCLE,
        hs_params=hs_params,
    )

    field_params = np.array([ubar1, _UNI_MU_BRAKE])
    hb_params = np.concatenate([[100.0 / ubar1], hs_params])

    def u_b(x):
        return np.array([ubar1 * math.tanh(_UNI_MU_BRAKE * x[2]), 0.0])

    def h_b(x):
        return float(kernels.hb(kernels.HB_UNICYCLE, np.asarray(x, dtype=float), hb_params))

    def h_b_gradient(x):
        return kernels.hb_grad(kernels.HB_UNICYCLE, np.asarray(x, dtype=float), hb_params)

    def field_jacobian(x):
        return kernels.field_jac(kernels.FIELD_UNICYCLE, np.asarray(x, dtype=float), field_params)

    backup = BackupPolicy(
        label="brake",
        u_b=u_b,
        h_b=h_b,
        h_b_gradient=h_b_gradient,
        field_jacobian=field_jacobian,
        field_kind=kernels.FIELD_UNICYCLE,
        field_params=field_params,
        hb_kind=kernels.HB_UNICYCLE,
        hb_params=hb_params,
    )

    def poi(x):
        return np.array([x[0] + d * math.cos(x[3]), x[1] + d * math.sin(x[3])])

    def desired(x):
        ct, st = math.cos(x[3]), math.sin(x[3])
        ex = ct * (poi(x)[0] - r_d[0]) + st * (poi(x)[1] - r_d[1])
        ey = -st * (poi(x)[0] - r_d[0]) + ct * (poi(x)[1] - r_d[1])
        v_des = -(mu1 + mu2) * x[2] - (1.0 + mu1 * mu2) * ex + (mu1 * mu1 / d) * ey * ey
        w_des = -(mu1 / d) * ey
        return np.array([ubar1 * math.tanh(v_des), ubar2 * math.tanh(w_des)])

    wx, wy = map_config["wall"]["half_extents"]
    meta = {
        "filter": {
            "rho1": 50.0,
            "rho2": None,
            "alpha": 1.0,
            "eps": 0.0,
            "kappa_h": 0.012,
            "kappa_beta": 0.05,
            "n_samples": 50,
            "ts": 0.02,
        },
        "sim": {"delta_t": 0.02, "duration": 25.0, "x0": [-3.0, -8.5, 0.0, 0.0]},
        "goal": tuple(float(v) for v in r_d),
        "poi": poi,
        "map": map_config,
    }
    return Scenario(
        name="unicycle",
        model=model,
        control_set=control_set,
        safety=safety,
        backups=(backup,),
        desired=desired,
        sample_box=np.array([[-wx, wx], [-wy, wy], [-1.0, 9.0], [-math.pi, math.pi]]),
        meta=meta,
    )
