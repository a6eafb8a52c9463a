"""Synthetic time courses and rate-constant estimation with reduced models.

Fits minimise the residual sum of squares with a Levenberg-Marquardt
iteration in log-parameter space, so every estimate stays positive.
Only parameter combinations a reduced model can identify may be freed; see
:func:`identifiability_report`.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BoundsViolation,
    ConfigError,
    ConfigNotFound,
    NonConvergence,
    PreconditionViolated,
    SingularNormalEquations,
)
from .model import InitialConditions, RateConstants, h_minus, simulate
from .reductions import (
    Kind,
    make_reduced_ic,
    parse_kind,
    pqssa_rhs_z,
    rqssa_closed_form,
)
from .integrator import IntegrationSettings, integrate

log = logging.getLogger(__name__)

OBSERVABLES = ("z", "w", "c")
DEFAULT_BOUNDS = (1e-12, 1e12)

# identifiable parameters of each reduced model (initial concentrations known)
_IDENTIFIABLE = {
    Kind.StandardZ: ("kappa",),
    Kind.ReverseW: ("k2",),
    Kind.TotalW: ("k2", "KS"),
    Kind.ClassicalW: ("k2", "KM"),
    Kind.PSlowZ: ("k2", "KS"),
    Kind.ClassicalZ: ("k2", "KM"),
}

_DESCRIPTIONS = {
    "kappa": "k2/K_M",
    "k2": "k2",
    "KS": "K_S = km1/k1",
    "KM": "K_M = (km1+k2)/k1",
}


def identifiability_report(kind) -> list:
    """Parameter combinations that ``kind`` can identify from one time course."""
    kind = parse_kind(kind)
    return [{"name": n, "meaning": _DESCRIPTIONS[n]} for n in _IDENTIFIABLE[kind]]


# data ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Dataset:
    observable: str
    t: np.ndarray
    values: np.ndarray
    ics: InitialConditions
    noise_sd: float = 0.0
    seed: int | None = None
    params: RateConstants | None = None   # generating rates, if known

    def __post_init__(self):
        if self.observable not in OBSERVABLES:
            raise PreconditionViolated(f"observable must be one of {OBSERVABLES}")
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise PreconditionViolated("times and values must be equal-length 1-d arrays")
        if np.any(np.diff(t) <= 0):
            raise PreconditionViolated("sample times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise PreconditionViolated("samples must be finite")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)

    def meta(self) -> dict:
        return {
            "observable": self.observable,
            "ics": asdict(self.ics),
            "params": asdict(self.params) if self.params is not None else None,
            "noise_sd": self.noise_sd,
            "seed": self.seed,
        }


def gen_synthetic(params: RateConstants, ics: InitialConditions, observable: str, t_grid,
                  noise_sd: float = 0.0, seed: int | None = 0, rel_tol: float = 1e-10,
                  abs_tol: float = 1e-13) -> Dataset:
    """Sample the full model at ``t_grid`` and add N(0, noise_sd^2) noise."""
    t_grid = np.asarray(t_grid, dtype=float)
    if noise_sd < 0:
        raise PreconditionViolated("noise_sd must be non-negative")
    if t_grid.size == 0 or t_grid[0] < 0 or np.any(np.diff(t_grid) <= 0):
        raise PreconditionViolated("t_grid must be non-negative and strictly increasing")
    if observable not in OBSERVABLES:
        raise PreconditionViolated(f"observable must be one of {OBSERVABLES}")
    traj = simulate(params, ics, max(float(t_grid[-1]), 1e-12), rel_tol=rel_tol, abs_tol=abs_tol)
    values = np.asarray(traj.var(observable, t_grid), dtype=float)
    if noise_sd > 0:
        values = values + np.random.default_rng(seed).normal(0.0, noise_sd, size=values.shape)
    return Dataset(observable, t_grid, values, ics, noise_sd, seed, params)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def dataset_to_csv(ds: Dataset) -> str:
    lines = ["t,value"] + [f"{t!r},{v!r}" for t, v in zip(ds.t.tolist(), ds.values.tolist())]
    return "\n".join(lines) + "\n"


def read_dataset(path) -> Dataset:
    """Read ``t,value`` CSV plus its JSON sidecar."""
    path = Path(path)
    side = sidecar_path(path)
    if not path.is_file() or not side.is_file():
        raise ConfigNotFound(f"dataset or sidecar not found: {path}, {side}")
    try:
        meta = json.loads(side.read_text())
        rows = [ln.split(",") for ln in path.read_text().splitlines()[1:] if ln.strip()]
        t = np.array([float(r[0]) for r in rows])
        v = np.array([float(r[1]) for r in rows])
        ics = InitialConditions(**meta["ics"])
        params = RateConstants(**meta["params"]) if meta.get("params") else None
    except (KeyError, ValueError, TypeError, IndexError, json.JSONDecodeError) as exc:
        raise ConfigError(f"malformed dataset {path}: {exc}") from None
    return Dataset(meta["observable"], t, v, ics, meta.get("noise_sd", 0.0), meta.get("seed"), params)


# reduced-model predictions ------------------------------------------------------

def _scalar_ode(f, x0, t, rel_tol, abs_tol):
    t_end = float(t[-1])
    if t_end <= 0:
        return np.full_like(t, x0)

    def rhs(_t, y):
        return np.array([float(f(y[0]))])
    traj = integrate(rhs, [x0], IntegrationSettings(t_end=t_end, rel_tol=rel_tol, abs_tol=abs_tol))
    return traj(t)[:, 0]


def predict(kind, theta: dict, ics: InitialConditions, t, rel_tol: float = 1e-11,
            abs_tol: float = 1e-14, pslow_ic: str = "layer"):
    """Reduced-model observable at times ``t`` for identifiable parameters ``theta``."""
    kind = parse_kind(kind)
    t = np.asarray(t, dtype=float)
    ET = ics.ET
    if kind is Kind.StandardZ:
        rate = theta["kappa"] * ET
        e0 = ET - ics.z0
        return ics.z0 * ET * np.exp(-rate * t) / (e0 + ics.z0 * np.exp(-rate * t))
    if kind is Kind.ReverseW:
        return rqssa_closed_form(t, RateConstants(1.0, 0.0, theta["k2"]), ics)
    k2 = theta["k2"]
    if kind in (Kind.TotalW, Kind.ClassicalW):
        K = theta["KS"] if kind is Kind.TotalW else theta["KM"]
        return _scalar_ode(lambda w: k2 * h_minus(w, K, ics), ics.w0, t, rel_tol, abs_tol)
    if kind is Kind.PSlowZ:
        # rates with k1 = 1 reproduce K_S = km1 and the given k2
        p = RateConstants(1.0, theta["KS"], k2)
        x0 = make_reduced_ic(kind, p, ics, pslow_ic)
        return _scalar_ode(lambda z: float(pqssa_rhs_z(z, p, ics)), x0, t, rel_tol, abs_tol)
    KM = theta["KM"]

    def f(z):
        return -k2 * (ET - z) * z / (KM + 2.0 * z)
    return _scalar_ode(f, ics.z0, t, rel_tol, abs_tol)


def true_theta(kind, params: RateConstants) -> dict:
    """Identifiable combinations implied by full rate constants."""
    kind = parse_kind(kind)
    KM = (params.km1 + params.k2) / params.k1
    KS = params.km1 / params.k1
    vals = {"kappa": params.k2 / KM if KM > 0 else math.inf, "k2": params.k2, "KS": KS, "KM": KM}
    return {n: vals[n] for n in _IDENTIFIABLE[kind]}


# least squares ------------------------------------------------------------------

@dataclass
class FitResult:
    kind: str
    names: list
    estimates: dict
    rss: float
    iterations: int
    converged: bool
    reason: str
    grad_norm: float
    covariance: np.ndarray
    fixed: dict = field(default_factory=dict)
    n_obs: int = 0

    def stderr(self) -> dict:
        d = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))
        return dict(zip(self.names, d.tolist()))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "estimates": dict(self.estimates),
            "fixed": dict(self.fixed),
            "stderr": self.stderr(),
            "covariance": np.asarray(self.covariance).tolist(),
            "rss": self.rss,
            "n_obs": self.n_obs,
            "iterations": self.iterations,
            "converged": self.converged,
            "reason": self.reason,
            "grad_norm": self.grad_norm,
        }


def _initial_guess(kind: Kind, ds: Dataset) -> dict:
    """Rough starting values read off the data."""
    t, y, ics = ds.t, ds.values, ds.ics
    ET, Z = ics.ET, ics.z_tot
    late = t > 0
    if kind is Kind.StandardZ:
        e0 = ET - ics.z0
        ok = late & (y > 0) & (y < ET) & (e0 > 0)
        if np.count_nonzero(ok) >= 2:
            g = np.log((ET - y[ok]) * ics.z0 / (y[ok] * e0))
            slope = float(np.polyfit(t[ok], g, 1)[0])
            if slope > 0:
                return {"kappa": slope / ET}
        return {"kappa": 1.0 / (ET * max(t[-1], 1e-12))}
    if kind is Kind.ReverseW:
        ok = late & (Z - y > 1e-9 * Z)
        if np.count_nonzero(ok) >= 2:
            slope = float(np.polyfit(t[ok], np.log(Z - y[ok]), 1)[0])
            if slope < 0:
                return {"k2": -slope}
        return {"k2": 1.0 / max(t[-1], 1e-12)}
    # two-parameter models: saturation constant of order E_T, k2 from the steepest slope
    K0 = max(ET, 1e-6)
    slopes = np.abs(np.diff(y) / np.diff(t))
    k = int(np.argmax(slopes)) if slopes.size else 0
    name = "KS" if kind in (Kind.TotalW, Kind.PSlowZ) else "KM"
    probe = predict(kind, {"k2": 1.0, name: K0}, ics, np.array([0.0, 1e-9]))
    unit_rate = abs(probe[1] - probe[0]) / 1e-9
    k2 = slopes[k] / unit_rate if slopes.size and unit_rate > 0 and slopes[k] > 0 else 1.0 / max(t[-1], 1e-12)
    return {"k2": float(k2), name: K0}


def _jacobian(fun, x, r0, step=1e-6):
    J = np.empty((r0.size, x.size))
    for j in range(x.size):
        h = step * max(1.0, abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (fun(xp) - fun(xm)) / (2.0 * h)
    return J


def levenberg_marquardt(fun, x0, lower, upper, max_iter: int = 200, rtol_rss: float = 1e-10,
                        gtol: float = 1e-8, lam0: float = 1e-3):
    """Minimise ``|fun(x)|^2`` inside the box ``[lower, upper]``.

    Damping grows tenfold on a rejected step and shrinks tenfold on an
    accepted one. Convergence: relative RSS change below ``rtol_rss`` or
    gradient norm below ``gtol``.

    Returns:
        ``(x, rss, J, iterations, reason, grad_norm)``.

    Raises:
        SingularNormalEquations: if the Jacobian loses column rank.
        NonConvergence: after ``max_iter`` iterations.
    """
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    r = fun(x)
    rss = float(r @ r)
    lam = lam0
    for it in range(1, max_iter + 1):
        J = _jacobian(fun, x, r)
        g = J.T @ r
        gnorm = float(np.linalg.norm(g))
        if gnorm < gtol:
            return x, rss, J, it, "gradient", gnorm
        A = J.T @ J
        d = np.diag(A).copy()
        if np.any(d <= 0) or np.linalg.matrix_rank(J) < x.size:
            raise SingularNormalEquations("Jacobian is rank deficient; parameters not identifiable from these data")
        while True:
            try:
                step = np.linalg.solve(A + lam * np.diag(d), -g)
            except np.linalg.LinAlgError:
                raise SingularNormalEquations("damped normal equations are singular") from None
            x_new = np.clip(x + step, lower, upper)
            r_new = fun(x_new)
            rss_new = float(r_new @ r_new)
            change = abs(rss - rss_new) / max(rss, 1e-300)
            if np.isfinite(rss_new) and rss_new < rss:
                x, r, rss, lam = x_new, r_new, rss_new, max(lam / 10.0, 1e-15)
                if change < rtol_rss or rss == 0.0:
                    J = _jacobian(fun, x, r)
                    return x, rss, J, it, "rss", float(np.linalg.norm(J.T @ r))
                break
            lam *= 10.0
            if change < rtol_rss or lam > 1e16:
                # no representable improvement left along any damped direction
                return x, rss, J, it, "rss", gnorm
        log.debug("LM iter %d rss=%.6e lambda=%.1e", it, rss, lam)
    raise NonConvergence(f"no convergence after {max_iter} iterations (rss={rss:.3e})")


def fit_reduced(kind, dataset: Dataset, free=None, init: dict | None = None,
                bounds: dict | None = None, fixed: dict | None = None,
                max_iter: int = 200, pslow_ic: str = "layer") -> FitResult:
    """Fit the identifiable parameters of a reduced model to ``dataset``.

    Args:
        kind: reduced model (name or :class:`Kind`).
        dataset: observations; the observable must be the model variable.
        free: names to estimate (default: every identifiable parameter).
        init: starting values (default: read off the data).
        bounds: ``{name: (lo, hi)}`` in natural units (default 1e-12..1e12).
        fixed: values for identifiable parameters that are not freed.

    Raises:
        PreconditionViolated: observable mismatch or a non-identifiable name.
        BoundsViolation: a starting value outside its bounds.
    """
    kind = parse_kind(kind)
    if dataset.observable != kind.var:
        raise PreconditionViolated(
            f"{kind.value} predicts {kind.var!r} but the dataset observes {dataset.observable!r}")
    ident = _IDENTIFIABLE[kind]
    free = list(ident if free is None else free)
    bad = [n for n in free if n not in ident]
    if bad or not free:
        raise PreconditionViolated(f"{kind.value} can identify only {list(ident)}; got {free}")
    fixed = dict(fixed or {})
    missing = [n for n in ident if n not in free and n not in fixed]
    if missing:
        raise PreconditionViolated(f"values required for fixed parameters {missing}")
    guess = _initial_guess(kind, dataset)
    guess.update(init or {})
    bounds = bounds or {}
    lo = np.array([bounds.get(n, DEFAULT_BOUNDS)[0] for n in free], dtype=float)
    hi = np.array([bounds.get(n, DEFAULT_BOUNDS)[1] for n in free], dtype=float)
    if np.any(lo <= 0) or np.any(hi < lo):
        raise BoundsViolation("bounds must satisfy 0 < lo <= hi")
    p0 = np.array([guess[n] for n in free], dtype=float)
    if init:
        for n in free:
            if n in init and not lo[free.index(n)] <= init[n] <= hi[free.index(n)]:
                raise BoundsViolation(f"initial value for {n} outside its bounds")
    p0 = np.clip(p0, lo, hi)

    def residual(x):
        theta = dict(fixed)
        theta.update(zip(free, np.exp(x)))
        return predict(kind, theta, dataset.ics, dataset.t, pslow_ic=pslow_ic) - dataset.values

    x, rss, J, its, reason, gnorm = levenberg_marquardt(
        residual, np.log(p0), np.log(lo), np.log(hi), max_iter=max_iter)
    est = np.exp(x)
    # covariance in natural units: d(model)/dp = d(model)/dlog p / p
    Jn = J / est[None, :]
    dof = max(dataset.t.size - len(free), 1)
    cov = (rss / dof) * np.linalg.pinv(Jn.T @ Jn)
    cov = 0.5 * (cov + cov.T)
    return FitResult(kind.value, free, dict(zip(free, est.tolist())), rss, its, True, reason,
                     gnorm, cov, fixed, dataset.t.size)


@dataclass
class MultiFitResult:
    results: list
    mean: dict
    spread: dict   # sample standard deviation across datasets

    def to_dict(self) -> dict:
        return {"mean": self.mean, "spread": self.spread,
                "fits": [r.to_dict() for r in self.results]}


def fit_multi(kind, datasets, **kw) -> MultiFitResult:
    """Fit each dataset separately and average the estimates."""
    results = [fit_reduced(kind, ds, **kw) for ds in datasets]
    names = results[0].names
    mean, spread = {}, {}
    for n in names:
        v = np.array([r.estimates[n] for r in results])
        mean[n] = float(v.mean())
        spread[n] = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return MultiFitResult(results, mean, spread)


__all__ = [
    "Dataset", "FitResult", "MultiFitResult", "gen_synthetic", "fit_reduced", "fit_multi",
    "identifiability_report", "predict", "true_theta", "levenberg_marquardt", "read_dataset",
    "dataset_to_csv", "sidecar_path",
]
