"""Quasi-steady-state reductions of the zymogen activation model.

Every reduction is a scalar ODE in either ``z`` or ``w``:

========== ===== ===================================================
kind       var   right-hand side
========== ===== ===================================================
ClassicalZ z     -k2 (E_T - z) z / (K_M + 2z)
ClassicalW w     k2 h-(w; K_M)
StandardZ  z     -(k2/K_M) (E_T - z) z           (closed form known)
PSlowZ     z     -k2 z (E_T-z)(K_S+2z) / (K_S^2 + (E_T+2z) K_S + 2z^2)
TotalW     w     k2 h-(w; K_S)
ReverseW   w     k2 (z0 - w)                     (closed form known)
========== ===== ===================================================

The module also builds the projection onto the critical manifold for the two
parameter limits ``k1 -> 0`` and ``k2 -> 0``, and the quadratic centre
manifold of the extended system for ``E_T -> 0``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import SingularDfN, UnsupportedC0, ZeroKM
from .integrator import IntegrationSettings, integrate
from .model import InitialConditions, RateConstants, derived, h_minus


class Kind(str, enum.Enum):
    ClassicalZ = "ClassicalZ"
    ClassicalW = "ClassicalW"
    StandardZ = "StandardZ"
    PSlowZ = "PSlowZ"
    TotalW = "TotalW"
    ReverseW = "ReverseW"

    @property
    def var(self) -> str:
        return "z" if self.value.endswith("Z") else "w"


# CLI / table aliases
ALIASES = {
    "sqssa": Kind.StandardZ,
    "pqssa": Kind.PSlowZ,
    "tqssa": Kind.TotalW,
    "rqssa": Kind.ReverseW,
    "classicalz": Kind.ClassicalZ,
    "classicalw": Kind.ClassicalW,
}


def parse_kind(name) -> Kind:
    if isinstance(name, Kind):
        return name
    for k in Kind:
        if k.value.lower() == str(name).lower():
            return k
    try:
        return ALIASES[str(name).lower()]
    except KeyError:
        raise ValueError(f"unknown reduced model {name!r}") from None


def _KM(params):
    return (params.km1 + params.k2) / params.k1


# right-hand sides ------------------------------------------------------------

def classical_rhs_z(z, params: RateConstants, ics: InitialConditions):
    z = np.asarray(z, dtype=float)
    return -params.k2 * (ics.ET - z) * z / (_KM(params) + 2.0 * z)


def classical_rhs_w(w, params: RateConstants, ics: InitialConditions):
    return params.k2 * h_minus(w, _KM(params), ics)


def sqssa_rhs_z(z, params: RateConstants, ics: InitialConditions):
    KM = _KM(params)
    if KM <= 0:
        raise ZeroKM("the standard reduction needs K_M > 0")
    z = np.asarray(z, dtype=float)
    return -(params.k2 / KM) * (ics.ET - z) * z


def sqssa_closed_form(t, params: RateConstants, ics: InitialConditions):
    """``(z(t), w(t))`` of the standard reduction started from ``z(0) = z0``."""
    KM = _KM(params)
    if KM <= 0:
        raise ZeroKM("the standard reduction needs K_M > 0")
    t = np.asarray(t, dtype=float)
    ET, z0, e0 = ics.ET, ics.z0, ics.ET - ics.z0
    rate = params.k2 * ET / KM
    # z0*ET / (e0*exp(rate t) + z0), written to stay finite for large t
    with np.errstate(over="ignore"):
        z = z0 * ET * np.exp(-rate * t) / (e0 + z0 * np.exp(-rate * t))
    return z, ics.z0 + ics.w0 - z


def pqssa_rhs_z(z, params: RateConstants, ics: InitialConditions):
    KS = params.km1 / params.k1
    z = np.asarray(z, dtype=float)
    ET = ics.ET
    return -params.k2 * z * (ET - z) * (KS + 2.0 * z) / (KS * KS + (ET + 2.0 * z) * KS + 2.0 * z * z)


def tqssa_rhs_w(w, params: RateConstants, ics: InitialConditions):
    return params.k2 * h_minus(w, params.km1 / params.k1, ics)


def rqssa_rhs_w(w, params: RateConstants, ics: InitialConditions):
    return params.k2 * (ics.z_tot - np.asarray(w, dtype=float))


def rqssa_closed_form(t, params: RateConstants, ics: InitialConditions):
    t = np.asarray(t, dtype=float)
    Z = ics.z_tot
    return Z - (Z - ics.w0) * np.exp(-params.k2 * t)


_RHS = {
    Kind.ClassicalZ: classical_rhs_z,
    Kind.ClassicalW: classical_rhs_w,
    Kind.StandardZ: sqssa_rhs_z,
    Kind.PSlowZ: pqssa_rhs_z,
    Kind.TotalW: tqssa_rhs_w,
    Kind.ReverseW: rqssa_rhs_w,
}


def make_reduced_ic(kind, params: RateConstants, ics: InitialConditions,
                    pslow_ic: str = "apex") -> float:
    """Initial value of the slow variable after the fast transient.

    For the slow-product reduction the transient conserves ``z + c``. With
    ``pslow_ic="apex"`` the slow flow starts at ``z0 - lambdaZ`` with
    ``lambdaZ`` computed at ``k2 = 0``. With ``pslow_ic="layer"`` it starts at
    ``z0 - h-(w0; K_S)``, the end point of the ``k2 = 0`` layer flow from
    ``c = 0``. The two agree when ``z0 <= e0``.
    """
    kind = parse_kind(kind)
    if ics.c0 != 0:
        raise UnsupportedC0("reduced initial conditions assume c0 = 0")
    if kind in (Kind.StandardZ, Kind.ClassicalZ):
        return ics.z0
    if kind is Kind.PSlowZ:
        if pslow_ic == "layer":
            return ics.z0 - h_minus(ics.w0, params.km1 / params.k1, ics)
        if pslow_ic != "apex":
            raise ValueError(f"pslow_ic must be 'apex' or 'layer', got {pslow_ic!r}")
        return ics.z0 - derived(params.replace(k2=0.0), ics).lambdaZ
    return ics.w0


@dataclass(frozen=True)
class ReducedModel:
    kind: Kind
    params: RateConstants
    ics: InitialConditions
    slow_ic: float

    @classmethod
    def build(cls, kind, params: RateConstants, ics: InitialConditions,
              pslow_ic: str = "apex") -> "ReducedModel":
        kind = parse_kind(kind)
        return cls(kind, params, ics, make_reduced_ic(kind, params, ics, pslow_ic))

    @property
    def var(self) -> str:
        return self.kind.var

    def rhs(self, x):
        return _RHS[self.kind](x, self.params, self.ics)

    @property
    def has_closed_form(self) -> bool:
        return self.kind in (Kind.StandardZ, Kind.ReverseW)

    def solve(self, t, rel_tol: float = 1e-10, abs_tol: float = 1e-13, closed_form: bool = True):
        """Slow variable at the (increasing, non-negative) times ``t``."""
        t = np.asarray(t, dtype=float)
        if closed_form and self.kind is Kind.StandardZ:
            return sqssa_closed_form(t, self.params, self.ics)[0]
        if closed_form and self.kind is Kind.ReverseW:
            return rqssa_closed_form(t, self.params, self.ics)
        return self.integrate(float(np.max(t)), rel_tol, abs_tol).var(self.var, t)

    def integrate(self, t_end: float, rel_tol: float = 1e-10, abs_tol: float = 1e-13):
        f = _RHS[self.kind]
        p, i = self.params, self.ics

        def rhs(_t, y):
            return np.array([float(f(y[0], p, i))])
        settings = IntegrationSettings(t_end=max(t_end, 1e-300), rel_tol=rel_tol, abs_tol=abs_tol)
        return integrate(rhs, [self.slow_ic], settings, names=(self.var,))


# Fenichel projection ---------------------------------------------------------

class TFPV(str, enum.Enum):
    Pi1Star = "Pi1Star"   # k1 -> 0, critical manifold c = 0
    Pi2Star = "Pi2Star"   # k2 -> 0, critical manifold c = (E_T - z) z / (K_S + 2z)


@dataclass(frozen=True)
class ProjectionData:
    N: np.ndarray    # (2, 1)
    f: float
    Df: np.ndarray   # (1, 2)
    Pi: np.ndarray   # (2, 2)


def _projector(N, Df):
    DfN = (Df @ N).item()
    scale = float(np.linalg.norm(Df) * np.linalg.norm(N))
    if abs(DfN) < 1e-12 * max(scale, 1e-300):
        raise SingularDfN(f"DfN = {DfN:.3e}: normal hyperbolicity lost")
    return np.eye(2) - N @ Df / DfN


def fenichel_projection(tfpv, params: RateConstants, ics: InitialConditions, point) -> ProjectionData:
    """Projection ``I - N (Df N)^-1 Df`` at ``point = (z, c)``.

    For ``Pi1Star`` the fast part is ``N f`` with ``N = (km1, -(km1+k2))`` and
    ``f = c``. For ``Pi2Star`` it is ``N = (-1, 1)`` and
    ``f = k1 (E_T - z) z - (km1 + 2 k1 z) c``, i.e. ``f = -dz/dt``.
    """
    tfpv = TFPV(tfpv)
    z, c = point
    k1, km1, k2 = params.k1, params.km1, params.k2
    if tfpv is TFPV.Pi1Star:
        N = np.array([[km1], [-(km1 + k2)]])
        f = c
        Df = np.array([[0.0, 1.0]])
    else:
        ET = ics.ET
        N = np.array([[-1.0], [1.0]])
        f = k1 * (ET - z) * z - (km1 + 2 * k1 * z) * c
        Df = np.array([[k1 * (ET - 2 * z) - 2 * k1 * c, -(km1 + 2 * k1 * z)]])
    return ProjectionData(N=N, f=float(f), Df=Df, Pi=_projector(N, Df))


def perturbation(tfpv, params: RateConstants, ics: InitialConditions, point) -> np.ndarray:
    """The slow part ``G(z, c)`` of the vector field in the given limit."""
    tfpv = TFPV(tfpv)
    z, c = point
    k1 = params.k1
    if tfpv is TFPV.Pi1Star:
        bind = k1 * (ics.ET - z) * z
        return np.array([-bind + 2 * k1 * z * c, bind - 2 * k1 * z * c])
    return np.array([0.0, -params.k2 * c])


def projected_slow_field(tfpv, params: RateConstants, ics: InitialConditions, z: float) -> np.ndarray:
    """``Pi G`` evaluated on the critical manifold above ``z``."""
    tfpv = TFPV(tfpv)
    if tfpv is TFPV.Pi1Star:
        c = 0.0
    else:
        KS = params.km1 / params.k1
        c = (ics.ET - z) * z / (KS + 2 * z)
    proj = fenichel_projection(tfpv, params, ics, (z, c))
    return proj.Pi @ perturbation(tfpv, params, ics, (z, c))


# centre manifold --------------------------------------------------------------

@dataclass(frozen=True)
class CenterManifold:
    alpha: float
    beta: float
    gamma: float
    residual_ratio: float   # residual(h) / residual(h/2); about 8 for cubic decay


def invariance_residual(params: RateConstants, coeffs, z, ET):
    """Residual of ``c = a z^2 + b E_T z + g E_T^2`` in the invariance equation.

    The extended system is ``E_T' = 0``, ``z' = km1 c + q``,
    ``c' = -(km1 + k2) c - q`` with ``q = 2 k1 z c - k1 (E_T - z) z``.
    """
    a, b, g = coeffs
    k1, km1, k2 = params.k1, params.km1, params.k2
    c = a * z * z + b * ET * z + g * ET * ET
    q = 2 * k1 * z * c - k1 * (ET - z) * z
    zdot = km1 * c + q
    cdot = -(km1 + k2) * c - q
    return (2 * a * z + b * ET) * zdot - cdot


def center_manifold(params: RateConstants, h: float = 1e-2) -> CenterManifold:
    """Quadratic centre-manifold coefficients ``(-1/K_M, 1/K_M, 0)``.

    The cubic decay of the invariance residual along ``z = E_T = h`` is
    measured and returned as ``residual_ratio``.
    """
    KM = _KM(params)
    if KM <= 0:
        raise ZeroKM("centre manifold reduction needs K_M > 0")
    coeffs = (-1.0 / KM, 1.0 / KM, 0.0)
    # z = E_T = h is degenerate (E_T - z = 0), so probe along z = h, E_T = 2h
    r1 = invariance_residual(params, coeffs, h, 2 * h)
    r2 = invariance_residual(params, coeffs, h / 2, h)
    ratio = abs(r1 / r2) if r2 != 0 else math.inf
    return CenterManifold(*coeffs, residual_ratio=ratio)


def center_manifold_rhs_z(z, params: RateConstants, ics: InitialConditions):
    """Leading-order flow on the centre manifold; same expression as the sQSSA."""
    cm = center_manifold(params)
    z = np.asarray(z, dtype=float)
    ET = ics.ET
    c = cm.alpha * z * z + cm.beta * ET * z + cm.gamma * ET * ET
    # z' = km1 c + 2 k1 z c - k1 (E_T - z) z at quadratic order; with
    # k1 (E_T - z) z = k1 K_M c on the manifold this is -k2 c, free of cancellation
    return -params.k2 * c
