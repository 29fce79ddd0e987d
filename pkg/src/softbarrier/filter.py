"""Safety-filtered control laws.

Both laws evaluate the soft barrier h, its feasibility margin

    beta = L_f h + alpha (h - eps) + max_{u in SU} L_g h . u

and the readiness signal gamma = min((h - eps)/kappa_h, beta/kappa_beta).
Where gamma >= 0 the minimum-intervention QP is solved and blended with the
fallback control through sigma(gamma) = clip(gamma, 0, 1); elsewhere the
fallback is used as is, and the QP is never invoked. For a single backup the
fallback is the backup law itself; for several backups it is the
margin-weighted combination of the backup laws, with a dedicated branch that
plays the committed backup q outside the sampled safe set.
"""

import warnings
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import optim
from .barrier import evaluate
from .flow import HorizonGrid

__all__ = [
    "FilterConfig",
    "FilterState",
    "StepDiagnostics",
    "sigma",
    "gamma",
    "index_set",
    "augmented_backup",
    "control_single",
    "control_multi",
    "default_config",
]


@dataclass(frozen=True)
class FilterConfig:
    grid: HorizonGrid
    rho1: float
    alpha: float
    kappa_h: float
    kappa_beta: float
    eps: float = 0.0
    rho2: Optional[float] = None
    sigma_kind: str = "piecewise_linear"
    eps_floor_mode: str = "manual"
    l_s: Optional[float] = None
    l_phi: Optional[float] = None

    def __post_init__(self):
        for name in ("rho1", "alpha", "kappa_h", "kappa_beta"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.eps < 0.0:
            raise ValueError("eps must be nonnegative")
        if self.rho2 is not None and not self.rho2 > 0.0:
            raise ValueError("rho2 must be positive when given")
        if self.sigma_kind != "piecewise_linear":
            raise ValueError(f"unknown sigma_kind {self.sigma_kind!r}")
        if self.eps_floor_mode not in ("manual", "lipschitz"):
            raise ValueError(f"unknown eps_floor_mode {self.eps_floor_mode!r}")

    def with_eps(self, eps):
        return replace(self, eps=float(eps), eps_floor_mode="manual")


@dataclass(frozen=True)
class FilterState:
    """Multi-backup switching state: committed backup index (1-based) and the
    side of the sampled-safe-set boundary seen at the previous step."""

    q: int
    inside: bool


@dataclass
class StepDiagnostics:
    h: float
    h_bar: float
    per_backup_h_bar: np.ndarray
    per_backup_h: np.ndarray
    beta: float
    gamma: float
    sigma: float
    branch: str
    q: int
    switched: bool = False
    u_star: Optional[np.ndarray] = None


def sigma(a):
    """Homotopy weight: 0 below 0, identity on [0, 1], 1 above."""
    return float(min(max(a, 0.0), 1.0))


def gamma(h, beta, eps, kappa_h, kappa_beta):
    """Readiness signal min((h - eps)/kappa_h, beta/kappa_beta)."""
    return float(min((h - eps) / kappa_h, beta / kappa_beta))


def index_set(hbar_js, eps):
    """Indices (0-based) of backups whose hard barrier clears eps."""
    hbar_js = np.asarray(hbar_js, dtype=float)
    return np.flatnonzero(hbar_js >= eps)


def augmented_backup(scenario, x, hbar_js, eps):
    """Margin-weighted combination of the backup laws.

    u_a = sum_j max(0, hbar_j - eps) u_bj / sum_j max(0, hbar_j - eps). When a
    single backup carries all the weight its law is returned exactly (no
    weighted round trip); if no backup clears eps, the best one is used.
    """
    hbar_js = np.asarray(hbar_js, dtype=float)
    w = np.maximum(hbar_js - eps, 0.0)
    nz = np.flatnonzero(w > 0.0)
    if nz.size == 1:
        return scenario.backups[int(nz[0])].u_b(x)
    if nz.size == 0:
        return scenario.backups[int(np.argmax(hbar_js))].u_b(x)
    total = w[nz].sum()
    u = np.zeros(scenario.model.m)
    for j in nz:
        u += (w[j] / total) * scenario.backups[int(j)].u_b(x)
    return u


def _beta_gamma(ev, scenario, cfg):
    b = optim.beta_margin(
        ev.h_soft, ev.lf_h, ev.lg_h, scenario.control_set, cfg.alpha, cfg.eps
    )
    return b, gamma(ev.h_soft, b, cfg.eps, cfg.kappa_h, cfg.kappa_beta)


def _qp_blend(scenario, x, ev, cfg, gam, u_fallback):
    offset = ev.lf_h + cfg.alpha * (ev.h_soft - cfg.eps)
    u_star, _ = optim.qp_min_intervention(
        scenario.desired(x), scenario.control_set, ev.lg_h, offset
    )
    s = sigma(gam)
    return (1.0 - s) * u_fallback + s * u_star, s, u_star


def control_single(scenario, x, cfg, backup=0):
    """Single-backup filtered control (the gamma-gated QP/backup homotopy).

    Returns (u, StepDiagnostics). The QP is solved only where gamma >= 0.
    """
    x = np.asarray(x, dtype=float).ravel()
    ev = evaluate(scenario, x, cfg.grid, cfg.rho1, indices=[backup])
    beta, gam = _beta_gamma(ev, scenario, cfg)
    u_b = scenario.backups[backup].u_b(x)
    if gam < 0.0:
        u, s, u_star, branch = u_b, 0.0, None, "backup"
    else:
        u, s, u_star = _qp_blend(scenario, x, ev, cfg, gam, u_b)
        branch = "blend"
    diag = StepDiagnostics(
        h=ev.h_soft,
        h_bar=ev.h_bar_star,
        per_backup_h_bar=ev.per_backup_h_bar,
        per_backup_h=ev.per_backup_h_soft,
        beta=beta,
        gamma=gam,
        sigma=s,
        branch=branch,
        q=backup + 1,
        u_star=u_star,
    )
    return u, diag


def control_multi(scenario, x, cfg, state=None):
    """Multi-backup filtered control with committed-backup switching.

    The committed index q is reassigned to argmax_j hbar_j (lowest index on
    ties) whenever the sign of h_bar_star - eps differs from the previous
    step, and at the first step; it is held constant otherwise. Outside the
    sampled safe set (h_bar_star <= eps) the committed backup law is played;
    inside, the augmented backup is blended with the QP exactly as in the
    single-backup law.

    Returns (u, StepDiagnostics, FilterState).
    """
    x = np.asarray(x, dtype=float).ravel()
    if cfg.rho2 is None and scenario.nu > 1:
        raise ValueError("rho2 is required for multi-backup control")
    ev = evaluate(scenario, x, cfg.grid, cfg.rho1, cfg.rho2)
    inside = ev.h_bar_star > cfg.eps
    switched = state is None or (inside != state.inside)
    if switched:
        q = int(np.argmax(ev.per_backup_h_bar)) + 1
        if state is None and ev.h_bar_star < 0.0:
            warnings.warn(
                "no backup has a nonnegative predicted barrier at the initial "
                f"state (best h_bar = {ev.h_bar_star:.4g}); safety is not "
                "guaranteed from here",
                RuntimeWarning,
                stacklevel=2,
            )
    else:
        q = state.q
    beta, gam = _beta_gamma(ev, scenario, cfg)
    if not inside:
        u, s, u_star, branch = scenario.backups[q - 1].u_b(x), 0.0, None, "backup"
    else:
        u_a = augmented_backup(scenario, x, ev.per_backup_h_bar, cfg.eps)
        if gam < 0.0:
            u, s, u_star, branch = u_a, 0.0, None, "augmented"
        else:
            u, s, u_star = _qp_blend(scenario, x, ev, cfg, gam, u_a)
            branch = "blend"
    diag = StepDiagnostics(
        h=ev.h_soft,
        h_bar=ev.h_bar_star,
        per_backup_h_bar=ev.per_backup_h_bar,
        per_backup_h=ev.per_backup_h_soft,
        beta=beta,
        gamma=gam,
        sigma=s,
        branch=branch,
        q=q,
        switched=switched,
        u_star=u_star,
    )
    return u, diag, FilterState(q=q, inside=bool(inside))


def default_config(scenario, **overrides):
    """FilterConfig from the scenario's shipped parameter set.

    Keyword overrides replace individual entries; n_samples/ts/substeps feed
    the horizon grid.
    """
    params = dict(scenario.meta.get("filter", {}))
    params.update(overrides)
    grid = HorizonGrid(
        n_samples=int(params.pop("n_samples")),
        ts=float(params.pop("ts")),
        substeps=int(params.pop("substeps", 5)),
    )
    rho2 = params.pop("rho2", None)
    ls = params.pop("l_s", None)
    lphi = params.pop("l_phi", None)
    cfg = FilterConfig(
        grid=grid,
        rho1=float(params.pop("rho1")),
        alpha=float(params.pop("alpha")),
        kappa_h=float(params.pop("kappa_h")),
        kappa_beta=float(params.pop("kappa_beta")),
        eps=float(params.pop("eps", 0.0)),
        rho2=None if rho2 is None else float(rho2),
        sigma_kind=params.pop("sigma_kind", "piecewise_linear"),
        eps_floor_mode=params.pop("eps_floor_mode", "manual"),
        l_s=None if ls is None else float(ls),
        l_phi=None if lphi is None else float(lphi),
    )
    if params:
        raise ValueError(f"unknown filter parameters: {sorted(params)}")
    return cfg
