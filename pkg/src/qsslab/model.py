"""Mass-action model of intermolecular autocatalytic zymogen activation.

Mechanism::

    Z + E  <=>(k1, km1)  C  ->(k2)  2E + W

Species are zymogen ``z``, active enzyme ``e``, complex ``c`` and peptide
``w``. Two conservation laws hold along every solution,

    z + e + 2c = E_T          and          z + c + w = z0 + c0 + w0,

so the dynamics are planar and can be written in ``(z, c)`` or ``(w, c)``
coordinates. Concentrations and rate constants are treated as dimensionless.

When ``c0`` or ``w0`` are nonzero, the ``(w, c)`` formulas use the effective
totals ``z_tot = z0 + c0 + w0`` and ``e_eff = e0 + c0 - w0`` in place of
``z0`` and ``e0``; both reduce to the usual experimental values when
``c0 = w0 = 0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    ConfigNotFound,
    DegenerateEigenvalue,
    InvalidParameters,
    NegativeConcentration,
    NegativeDiscriminant,
)
from .integrator import IntegrationSettings, Trajectory, integrate

LAMBDA_STAR_SLACK = 1e-9


@dataclass(frozen=True)
class RateConstants:
    """Rate constants ``k1`` (binding), ``km1`` (unbinding), ``k2`` (catalysis)."""

    k1: float
    km1: float
    k2: float

    def __post_init__(self):
        for name in ("k1", "km1", "k2"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidParameters(f"{name} must be finite, got {v}")
        if not self.k1 > 0:
            raise InvalidParameters(f"k1 must be positive, got {self.k1}")
        if self.km1 < 0 or self.k2 < 0:
            raise InvalidParameters("km1 and k2 must be non-negative")

    def replace(self, **kw) -> "RateConstants":
        return RateConstants(**{**asdict(self), **kw})


@dataclass(frozen=True)
class InitialConditions:
    z0: float
    e0: float
    c0: float = 0.0
    w0: float = 0.0

    def __post_init__(self):
        vals = (self.z0, self.e0, self.c0, self.w0)
        if not all(math.isfinite(v) and v >= 0 for v in vals):
            raise InvalidParameters(f"initial concentrations must be finite and >= 0: {vals}")
        if not self.z0 + self.e0 > 0:
            raise InvalidParameters("z0 + e0 must be positive")

    @property
    def z_tot(self) -> float:
        return self.z0 + self.c0 + self.w0

    @property
    def e_eff(self) -> float:
        return self.e0 + self.c0 - self.w0

    @property
    def ET(self) -> float:
        return self.z0 + self.e0 + 2.0 * self.c0


@dataclass(frozen=True)
class State:
    z: float
    c: float
    e: float
    w: float

    def __iter__(self):
        return iter((self.z, self.c, self.e, self.w))


@dataclass(frozen=True)
class DerivedQuantities:
    ET: float
    KM: float
    KS: float
    K: float
    wT: float
    cT: float
    mu: float
    gamma: float
    phi: float
    lambdaZ: float


def derived(params: RateConstants, ics: InitialConditions) -> DerivedQuantities:
    """Saturation constants, bifurcation point, and the bound ``lambdaZ`` on ``c``.

    ``phi`` is minus the largest value of ``c - h+(w)`` over the invariant
    region: ``gamma`` when ``e0 <= z0`` and ``mu`` otherwise. ``lambdaZ`` is
    the apex ``h-(wT)`` when ``e0 < z0`` and ``h-(0)`` otherwise.
    """
    k1, km1, k2 = params.k1, params.km1, params.k2
    z0, e0 = ics.z_tot, ics.e_eff
    ET = ics.ET
    KM = (km1 + k2) / k1
    KS = km1 / k1
    K = k2 / k1
    mu = math.sqrt(max((KM + ET) ** 2 - 4.0 * e0 * z0, 0.0))
    gamma = math.sqrt(KM * (KM + 2.0 * ET))
    phi = gamma if e0 <= z0 else mu
    # (KM + ET - root)/2 rewritten to avoid cancellation when KM << ET
    if e0 < z0:
        lam = 0.5 * ET * ET / (KM + ET + gamma)
    else:
        lam = 2.0 * e0 * z0 / (KM + ET + mu)
    return DerivedQuantities(ET=ET, KM=KM, KS=KS, K=K, wT=0.5 * (z0 - e0), cT=0.5 * ET,
                             mu=mu, gamma=gamma, phi=phi, lambdaZ=lam)


# vector fields -------------------------------------------------------------------

def rhs_zc(params: RateConstants, ics: InitialConditions, point):
    """``(dz/dt, dc/dt)`` with ``e`` eliminated through ``z + e + 2c = E_T``."""
    z, c = point
    k1, km1, k2 = params.k1, params.km1, params.k2
    ET = ics.ET
    bind = k1 * (ET - z) * z
    return (-bind + (km1 + 2 * k1 * z) * c,
            bind - (km1 + k2 + 2 * k1 * z) * c)


def rhs_wc(params: RateConstants, ics: InitialConditions, point):
    """``(dc/dt, dw/dt)`` at ``point = (w, c)``."""
    w, c = point
    z0, e0 = ics.z_tot, ics.e_eff
    dc = params.k1 * (e0 + w - c) * (z0 - c - w) - (params.km1 + params.k2) * c
    return dc, params.k2 * c


def rhs_full(params: RateConstants, state):
    """Time derivatives of ``(z, c, e, w)`` straight from the mechanism."""
    z, c, e, w = state
    k1, km1, k2 = params.k1, params.km1, params.k2
    bind = k1 * e * z
    return (-bind + km1 * c,
            bind - (km1 + k2) * c,
            -bind + (km1 + 2 * k2) * c,
            k2 * c)


COORDS = ("zc", "wc", "full")


def vector_field(params: RateConstants, ics: InitialConditions, coords: str = "full"):
    """Return ``(rhs(t, y), y0, names)`` for integrating in the chosen coordinates."""
    k1, km1, k2 = params.k1, params.km1, params.k2
    KMk1 = km1 + k2
    if coords == "full":
        def rhs(t, y):
            z, c, e, w = y
            bind = k1 * e * z
            return np.array((-bind + km1 * c, bind - KMk1 * c, -bind + (km1 + 2 * k2) * c, k2 * c))
        y0 = (ics.z0, ics.c0, ics.e0, ics.w0)
        return rhs, np.array(y0, dtype=float), ("z", "c", "e", "w")
    if coords == "zc":
        ET = ics.ET

        def rhs(t, y):
            z, c = y
            bind = k1 * (ET - z) * z
            return np.array((-bind + (km1 + 2 * k1 * z) * c, bind - (KMk1 + 2 * k1 * z) * c))
        return rhs, np.array((ics.z0, ics.c0), dtype=float), ("z", "c")
    if coords == "wc":
        z0, e0 = ics.z_tot, ics.e_eff

        def rhs(t, y):
            w, c = y
            return np.array((k2 * c, k1 * (e0 + w - c) * (z0 - c - w) - KMk1 * c))
        return rhs, np.array((ics.w0, ics.c0), dtype=float), ("w", "c")
    raise ValueError(f"unknown coordinates {coords!r}; expected one of {COORDS}")


def _completion(ics: InitialConditions, coords: str):
    ET, Z = ics.ET, ics.z_tot
    if coords == "zc":
        def derive(y):
            z, c = y[:, 0], y[:, 1]
            return {"e": ET - z - 2 * c, "w": Z - z - c}
        return derive, ("e", "w")
    if coords == "wc":
        def derive(y):
            w, c = y[:, 0], y[:, 1]
            z = Z - c - w
            return {"z": z, "e": ET - z - 2 * c}
        return derive, ("z", "e")
    return None, ()


def simulate(params: RateConstants, ics: InitialConditions, t_end: float,
             coords: str = "full", rel_tol: float = 1e-9, abs_tol: float = 1e-12,
             max_steps: int = 1_000_000, events=()) -> Trajectory:
    """Integrate the mass-action model; the trajectory exposes ``z, c, e, w``.

    Components below ``-(100 abs_tol + 10 rel_tol S)``, with ``S`` the larger
    conserved total, are treated as an integration failure rather than
    clamped. The ``rel_tol`` term covers species recovered from the
    conservation laws, whose error scales with the totals.
    """
    rhs, y0, names = vector_field(params, ics, coords)
    derive, derived_names = _completion(ics, coords)
    settings = IntegrationSettings(t_end=t_end, rel_tol=rel_tol, abs_tol=abs_tol,
                                   max_steps=max_steps, events=tuple(events))
    traj = integrate(rhs, y0, settings, names=names, derive=derive, derived_names=derived_names)
    cols = traj.columns()
    worst = min(float(np.min(cols[n])) for n in ("z", "c", "e", "w"))
    if worst < -(100 * abs_tol + 10 * rel_tol * max(ics.ET, ics.z_tot)):
        raise NegativeConcentration(f"concentration reached {worst:.3e}")
    return traj


# nullclines ------------------------------------------------------------------------

def _nullcline_parts(w, K, ics):
    w = np.asarray(w, dtype=float)
    z0, e0 = ics.z_tot, ics.e_eff
    B = K + ics.ET
    P = (z0 - w) * (e0 + w)
    # B^2 - 4P rewritten with E_T = z0 + e0; a sum of non-negative terms
    d = z0 - e0 - 2.0 * w
    disc = K * (K + 2.0 * ics.ET) + d * d
    if np.any(disc < 0):
        raise NegativeDiscriminant(f"nullcline discriminant negative for K={K} at w={w}")
    return B, P, np.sqrt(disc)


def h_minus(w, K: float, ics: InitialConditions):
    """Lower root of ``dc/dt = 0`` in ``(w, c)``; ``K`` is ``K_M`` (or ``K_S``)."""
    B, P, root = _nullcline_parts(w, K, ics)
    denom = B + root
    # 2P/(B + root) equals (B - root)/2 without cancellation
    out = np.where(denom > 0, 2.0 * P / np.where(denom > 0, denom, 1.0), 0.5 * (B - root))
    return float(out) if np.ndim(out) == 0 else out


def h_plus(w, K: float, ics: InitialConditions):
    B, P, root = _nullcline_parts(w, K, ics)
    out = 0.5 * (B + root)
    return float(out) if np.ndim(out) == 0 else out


def dh_minus_dw(w, K: float, ics: InitialConditions):
    B, P, root = _nullcline_parts(w, K, ics)
    out = (ics.z_tot - ics.e_eff - 2.0 * np.asarray(w, dtype=float)) / root
    return float(out) if np.ndim(out) == 0 else out


def c_nullcline_z(z, params: RateConstants, ics: InitialConditions, K: float = None):
    """``c = (E_T - z) z / (K + 2z)`` with ``K = K_M`` by default."""
    if K is None:
        K = (params.km1 + params.k2) / params.k1
    z = np.asarray(z, dtype=float)
    return (ics.ET - z) * z / (K + 2.0 * z)


# equilibria ------------------------------------------------------------------------

@dataclass(frozen=True)
class Equilibrium:
    point: tuple          # (w, c)
    eigenvalues: tuple
    classification: str   # "attracting", "repelling" or "saddle"


def jacobian_wc(params: RateConstants, ics: InitialConditions, point) -> np.ndarray:
    """Jacobian of ``(dw/dt, dc/dt)`` with respect to ``(w, c)``."""
    w, c = point
    k1 = params.k1
    z0, e0 = ics.z_tot, ics.e_eff
    KM = (params.km1 + params.k2) / k1
    return np.array([
        [0.0, params.k2],
        [k1 * (z0 - e0 - 2 * w), -k1 * (z0 + e0 - 2 * c) - k1 * KM],
    ])


def classify(eigs) -> str:
    eigs = np.asarray(eigs)
    re = np.real(eigs)
    mags = np.abs(eigs)
    for i, lam in enumerate(mags):
        other = max((mags[j] for j in range(len(eigs)) if j != i), default=0.0)
        if lam < 1e-9 * max(1.0, other):
            raise DegenerateEigenvalue(f"eigenvalue {eigs[i]} is zero within tolerance")
    if np.all(re < 0):
        return "attracting"
    if np.all(re > 0):
        return "repelling"
    return "saddle"


def equilibria(params: RateConstants, ics: InitialConditions) -> list:
    """The two intersections ``(z0, 0)`` and ``(-e0, 0)`` of ``h-`` with ``c = 0``."""
    out = []
    for point in ((ics.z_tot, 0.0), (-ics.e_eff, 0.0)):
        eigs = np.linalg.eigvals(jacobian_wc(params, ics, point))
        eigs = tuple(sorted(eigs, key=lambda x: (x.real, x.imag)))
        eigs = tuple(float(x.real) if abs(x.imag) == 0 else complex(x) for x in eigs)
        out.append(Equilibrium(point, eigs, classify(eigs)))
    return out


# invariant region / conservation -------------------------------------------------

def in_lambda_star(point, params: RateConstants, ics: InitialConditions,
                   slack: float = LAMBDA_STAR_SLACK) -> bool:
    """Membership of ``(w, c)`` in the closed positively invariant set Lambda*."""
    w, c = point
    d = derived(params, ics)
    return bool(
        w >= -slack and c >= -slack
        and c <= 0.5 * d.ET + slack
        and c <= ics.e_eff + w + slack
        and c <= ics.z_tot - w + slack
        and c <= d.lambdaZ + slack
    )


def conservation_residuals(state, params: RateConstants, ics: InitialConditions):
    """``(z + e + 2c - E_T, z + c + w - (z0 + c0 + w0))``."""
    z, c, e, w = state
    return z + e + 2 * c - ics.ET, z + c + w - ics.z_tot


# configuration ---------------------------------------------------------------------

_REQUIRED = ("k1", "km1", "k2", "z0", "e0")
_OPTIONAL = ("c0", "w0")


def config_from_dict(doc: dict):
    """Build ``(RateConstants, InitialConditions)`` from a JSON-like mapping."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    missing = [k for k in _REQUIRED if k not in doc]
    if missing:
        raise ConfigError(f"missing keys: {', '.join(missing)}")
    try:
        vals = {k: float(doc[k]) for k in _REQUIRED + _OPTIONAL if k in doc}
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"non-numeric configuration value: {exc}") from None
    try:
        params = RateConstants(vals["k1"], vals["km1"], vals["k2"])
        ics = InitialConditions(vals["z0"], vals["e0"], vals.get("c0", 0.0), vals.get("w0", 0.0))
    except InvalidParameters as exc:
        raise ConfigError(str(exc)) from None
    return params, ics


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigNotFound(f"configuration file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return config_from_dict(doc)


def config_to_dict(params: RateConstants, ics: InitialConditions) -> dict:
    return {**asdict(params), **asdict(ics)}
