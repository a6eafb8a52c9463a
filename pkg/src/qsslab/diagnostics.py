"""Validity parameters, error-bound checks and bifurcation-proximity measurements.

The master parameter of the classical ``w`` reduction factors as
``eps = eps1 * eps2 * eps_dd`` with

    eps1   = k1 E_T / (km1 + k2 + k1 E_T)
    eps2   = k2 / (km1 + k2)
    eps_dd = (km1 + k2) / (k1 phi)

Near the transcritical point ``(w_T, E_T/2)`` of the irreversible layer
problem the relevant parameters are ``eps_star = k2/(k1 e0)`` and
``eps_hat = 2 k2/(k1 E_T)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InsufficientPoints, NotInLambdaStar, PhiZero, PreconditionViolated
from .integrator import IntegrationSettings, Trajectory, detect_min_distance, detect_tube_entry, integrate
from .model import InitialConditions, RateConstants, derived, h_minus, in_lambda_star

BOUND_SLACK = 1e-6


@dataclass(frozen=True)
class EpsilonReport:
    eps: float
    eps1: float
    eps2: float
    eps_dd: float
    eps_star: float
    eps_hat: float
    eps_tilde: float
    sigma: float
    theta: float
    eps1_table: float
    eps2_table: float

    def to_dict(self) -> dict:
        return asdict(self)


def _ratio(num: float, den: float) -> float:
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


def epsilons(params: RateConstants, ics: InitialConditions) -> EpsilonReport:
    """All dimensionless validity parameters.

    Raises:
        PhiZero: when ``phi = 0`` (``K_M = 0`` with ``z0 = e0``), where
            ``eps_dd`` is undefined.
    """
    k1, km1, k2 = params.k1, params.km1, params.k2
    d = derived(params, ics)
    ET, e0, z0 = d.ET, ics.e_eff, ics.z_tot
    if d.phi == 0:
        raise PhiZero("phi vanishes; eps_dd is undefined")
    eps1 = k1 * ET / (km1 + k2 + k1 * ET)
    eps2 = _ratio(k2, km1 + k2)
    eps_dd = (km1 + k2) / (k1 * d.phi)
    return EpsilonReport(
        eps=eps1 * eps2 * eps_dd,
        eps1=eps1,
        eps2=eps2,
        eps_dd=eps_dd,
        eps_star=_ratio(k2, k1 * e0),
        eps_hat=2.0 * k2 / (k1 * ET),
        eps_tilde=math.sqrt((km1 + k2) / (k1 * ET)),
        sigma=2.0 * e0 / ET,
        theta=2.0 * z0 / ET,
        eps1_table=_ratio(k1 * ET, km1 + k2),
        eps2_table=_ratio(k2, km1),
    )


# QSS error bound -------------------------------------------------------------------

def qss_error_series(traj: Trajectory, params: RateConstants, ics: InitialConditions, t=None):
    """``(t, E_Z)`` with ``E_Z = c - h-(w; K_M)`` along the trajectory."""
    t = traj.t if t is None else np.asarray(t, dtype=float)
    w, c = traj.var("w", t), traj.var("c", t)
    return t, c - h_minus(w, derived(params, ics).KM, ics)


@dataclass(frozen=True)
class BoundCheck:
    holds: bool
    worst_margin: float   # min over t of (bound - lhs); holds iff >= -slack
    worst_time: float


def _start_point(traj: Trajectory):
    return float(traj.var("w", traj.t0)), float(traj.var("c", traj.t0))


def check_prop1(traj: Trajectory, params: RateConstants, ics: InitialConditions,
                slack: float = BOUND_SLACK, t=None) -> BoundCheck:
    """Check ``E_Z^2(t) <= E_Z^2(0) exp(-k1 phi t) + eps^2 lambdaZ^2`` at every output time.

    Raises:
        NotInLambdaStar: if the trajectory does not start in Lambda*.
    """
    if not in_lambda_star(_start_point(traj), params, ics):
        raise NotInLambdaStar("trajectory must start in Lambda*")
    d = derived(params, ics)
    eps = epsilons(params, ics).eps
    t, ez = qss_error_series(traj, params, ics, t)
    bound = ez[0] ** 2 * np.exp(-params.k1 * d.phi * (t - t[0])) + (eps * d.lambdaZ) ** 2
    margin = bound - ez ** 2
    k = int(np.argmin(margin))
    return BoundCheck(bool(margin[k] >= -slack), float(margin[k]), float(t[k]))


def check_prop3(traj: Trajectory, params: RateConstants, ics: InitialConditions,
                slack: float = BOUND_SLACK, t=None) -> BoundCheck:
    """Check ``Z^2(T) <= Z^2(0) exp((eps_dd - 1) T / eps_dd)`` with ``Z = c - (z0 - w)``, ``T = k2 t``.

    Raises:
        PreconditionViolated: if ``z0 > e0`` or ``km1 != 0``.
    """
    if ics.z_tot > ics.e_eff:
        raise PreconditionViolated("the bound requires z0 <= e0")
    if params.km1 != 0:
        raise PreconditionViolated("the bound is verified only for km1 = 0")
    eps_dd = epsilons(params, ics).eps_dd
    t = traj.t if t is None else np.asarray(t, dtype=float)
    w, c = traj.var("w", t), traj.var("c", t)
    Z2 = (c - (ics.z_tot - w)) ** 2
    T = params.k2 * (t - t[0])
    bound = Z2[0] * np.exp((eps_dd - 1.0) * T / eps_dd)
    margin = bound - Z2
    k = int(np.argmin(margin))
    return BoundCheck(bool(margin[k] >= -slack), float(margin[k]), float(t[k]))


# layer problem ----------------------------------------------------------------------

@dataclass(frozen=True)
class LayerStability:
    w: float
    lambda1: float    # eigenvalue transverse to S1: c = z0 - w
    lambda2: float    # eigenvalue transverse to S2: c = e0 + w
    S1: str
    S2: str


def _stab(lam: float, tol: float) -> str:
    if abs(lam) <= tol:
        return "non-hyperbolic"
    return "attracting" if lam < 0 else "repulsive"


def layer_stability(params: RateConstants, ics: InitialConditions, w: float,
                    tol: float = 1e-12) -> LayerStability:
    """Stability of the two critical branches of the ``km1 = k2 = 0`` layer problem at ``w``."""
    lam = params.k1 * (ics.e_eff - ics.z_tot + 2.0 * w)
    scale = tol * params.k1 * max(ics.ET, 1.0)
    return LayerStability(w, -lam, lam, _stab(-lam, scale), _stab(lam, scale))


@dataclass(frozen=True)
class BifurcationDistance:
    d_B: float
    scaled: float     # 2 d_B / E_T


def bifurcation_distance(params: RateConstants, ics: InitialConditions,
                         reversible: bool = False) -> BifurcationDistance:
    """Distance from the transcritical point to the apex of ``h-``.

    Irreversible: ``sqrt(K^2 + 2 E_T K) - K``; reversible: the same with ``K_M``.
    """
    d = derived(params, ics)
    K = d.KM if reversible else d.K
    # sqrt(K^2 + 2 E_T K) - K = 2 E_T K / (sqrt(K^2 + 2 E_T K) + K)
    root = math.sqrt(K * K + 2.0 * d.ET * K)
    dB = 0.0 if K == 0 else 2.0 * d.ET * K / (root + K)
    return BifurcationDistance(dB, 2.0 * dB / d.ET)


# scaled systems ---------------------------------------------------------------------

def scaled_rhs(eps_hat: float, sigma: float = 1.0, theta: float = 1.0):
    """Slow-time field of ``(w_bar, c_hat)``; ``sigma = theta = 1`` gives the ``z0 = e0`` system."""
    def rhs(_T, y):
        w, c = y
        return np.array((c / theta, ((sigma + theta * w - c) * (theta - c - theta * w) - eps_hat * c) / eps_hat))
    return rhs


def _integrate_scaled(eps_hat, sigma, theta, T_end, rel_tol, abs_tol, y0=(0.0, 0.0)) -> Trajectory:
    settings = IntegrationSettings(t_end=T_end, rel_tol=rel_tol, abs_tol=abs_tol, max_steps=5_000_000)
    return integrate(scaled_rhs(eps_hat, sigma, theta), y0, settings, names=("w", "c"))


def bifurcation_point_scaled(sigma: float = 1.0, theta: float = 1.0):
    return ((theta - sigma) / (2.0 * theta), 1.0)


@dataclass(frozen=True)
class ScalingSweep:
    eps_hat: np.ndarray
    min_distance: np.ndarray
    min_time: np.ndarray
    slope: float
    slope_stderr: float
    intercept: float


def _loglog_fit(x, y):
    X = np.column_stack([np.ones_like(x), np.log(x)])
    Y = np.log(y)
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    n = len(x)
    resid = Y - X @ coef
    if n > 2:
        s2 = float(resid @ resid) / (n - 2)
        cov = s2 * np.linalg.inv(X.T @ X)
        stderr = math.sqrt(max(cov[1, 1], 0.0))
    else:
        stderr = math.nan
    return float(coef[1]), stderr, float(coef[0])


def scaling_sweep(eps_hat_values, sigma: float = 1.0, theta: float = 1.0, T_end: float = 2.0,
                  rel_tol: float = 1e-10, abs_tol: float = 1e-13, start=(0.0, 0.0)) -> ScalingSweep:
    """Minimum scaled distance to the bifurcation point versus ``eps_hat``, with a log-log slope.

    Raises:
        InsufficientPoints: with fewer than three distinct ``eps_hat`` values.
    """
    vals = np.asarray(sorted(set(float(v) for v in eps_hat_values)))
    if vals.size < 3:
        raise InsufficientPoints("the sweep needs at least three distinct eps_hat values")
    if np.any(vals <= 0):
        raise PreconditionViolated("eps_hat values must be positive")
    target = bifurcation_point_scaled(sigma, theta)
    dist, times = [], []
    for e in vals:
        traj = _integrate_scaled(e, sigma, theta, T_end, rel_tol, abs_tol, start)
        tm, dm = detect_min_distance(traj, target)
        dist.append(dm)
        times.append(tm)
    dist = np.asarray(dist)
    slope, stderr, icpt = _loglog_fit(vals, dist)
    return ScalingSweep(vals, dist, np.asarray(times), slope, stderr, icpt)


@dataclass(frozen=True)
class ApproachTime:
    T_entry: float | None
    lower: float
    upper: float

    @property
    def inside(self) -> bool:
        return self.T_entry is not None and self.lower < self.T_entry <= self.upper


def approach_time_bounds(eps_star: float):
    """``(-eps ln eps, -sqrt(eps) ln eps)``."""
    L = math.log(eps_star)
    return -eps_star * L, -math.sqrt(eps_star) * L


def approach_time(eps_star: float, width: float | None = None, T_end: float = 1.0,
                  rel_tol: float = 1e-10, abs_tol: float = 1e-13) -> ApproachTime:
    """Slow time for the ``z0 = e0`` system to enter the ``eps_star`` tube around ``c = 1 - w``."""
    if not 0 < eps_star < 1:
        raise PreconditionViolated("eps_star must lie in (0, 1)")
    lower, upper = approach_time_bounds(eps_star)
    traj = _integrate_scaled(eps_star, 1.0, 1.0, max(T_end, 2 * upper), rel_tol, abs_tol)
    entry = detect_tube_entry(traj, lambda w: 1.0 - w, eps_star if width is None else width)
    return ApproachTime(entry, lower, upper)


# recommendation ---------------------------------------------------------------------

@dataclass
class DiagnosticsReport:
    epsilons: EpsilonReport
    d_B: float
    d_B_scaled: float
    tol: float
    qualifiers: dict
    recommendations: list
    recommendation: str
    derived: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "recommendation": self.recommendation,
            "recommendations": list(self.recommendations),
            "tol": self.tol,
            "qualifiers": dict(self.qualifiers),
            "epsilons": self.epsilons.to_dict(),
            "d_B": self.d_B,
            "d_B_scaled": self.d_B_scaled,
            "derived": dict(self.derived),
        }


def recommend(params: RateConstants, ics: InitialConditions, tol: float = 0.05) -> DiagnosticsReport:
    """Reductions whose Table-1 qualifier is at most ``tol``.

    ``recommendation`` is the admissible reduction with the smallest qualifier,
    or ``"none"``.
    """
    eps = epsilons(params, ics)
    rqssa_ok = ics.z_tot <= ics.e_eff
    qualifiers = {
        "sQSSA": eps.eps1_table,
        "tQSSA": eps.eps2_table,
        "rQSSA": eps.eps_tilde if rqssa_ok else math.inf,
    }
    ok = sorted((v, k) for k, v in qualifiers.items() if v <= tol)
    recs = [k for _, k in ok]
    bd = bifurcation_distance(params, ics, reversible=params.km1 > 0)
    return DiagnosticsReport(
        epsilons=eps,
        d_B=bd.d_B,
        d_B_scaled=bd.scaled,
        tol=tol,
        qualifiers=qualifiers,
        recommendations=recs,
        recommendation=recs[0] if recs else "none",
        derived=asdict(derived(params, ics)),
    )
