"""Adaptive Dormand-Prince 5(4) integration with dense output.

The stepper propagates the 5th order solution (local extrapolation), estimates
the local error with the embedded 4th order formula and adapts the step with a
PI controller. Each accepted step stores the coefficients of the 4th order
continuous extension so a :class:`Trajectory` can be evaluated at any time in
its span.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import MaxStepsExceeded, NonFiniteDerivative, StepSizeUnderflow

# Butcher tableau ---------------------------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
    np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]),
]
_A_FULL = np.zeros((7, 7))
for _i, _row in enumerate(_A):
    _A_FULL[_i, :len(_row)] = _row
# b - bhat, including the FSAL stage
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension (Hairer, Norsett & Wanner, dopri5 "contd5")
_D = np.array([
    -12715105075 / 11282082432, 0.0, 87487479700 / 32700410799,
    -10690763975 / 1880347072, 701980252875 / 199316789632,
    -1453857185 / 822651844, 69997945 / 29380423,
])

_SAFETY = 0.9
_FAC_MIN = 0.2   # largest shrink per step is 1/5
_FAC_MAX = 10.0
_BETA = 0.04     # PI controller memory exponent
_ALPHA = 0.2 - 0.75 * _BETA


@dataclass(frozen=True)
class Event:
    """A scalar event ``func(t, y) = 0`` located on the dense output."""

    kind: str
    func: Callable[[float, np.ndarray], float]
    terminal: bool = False
    direction: int = 0


@dataclass(frozen=True)
class IntegrationSettings:
    t_end: float
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_steps: int = 1_000_000
    t_start: float = 0.0
    first_step: Optional[float] = None
    max_step: float = math.inf
    events: tuple = ()

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("rel_tol and abs_tol must be positive")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


def t_infinity(t):
    """Display transform ``1 - 1/ln(t + e)`` mapping [0, inf) onto [0, 1)."""
    return 1.0 - 1.0 / np.log(np.asarray(t, dtype=float) + math.e)


class Trajectory:
    """Accepted mesh, states and dense output of one integration run.

    ``names`` label the integrated components. ``derive`` optionally maps a
    ``(n, d)`` array of integrated states to a dict of extra named columns
    (e.g. species recovered from conservation laws); derived columns are
    available through :meth:`var` like the integrated ones.
    """

    def __init__(self, t, y, coeffs, names, events=(), derive=None, derived_names=()):
        self.t = np.asarray(t, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self._coeffs = coeffs          # (n_steps, 5, d)
        self.names = tuple(names)
        self.events = list(events)
        self._derive = derive
        self.derived_names = tuple(derived_names)
        self.t.setflags(write=False)
        self.y.setflags(write=False)

    def __len__(self):
        return len(self.t)

    @property
    def t0(self) -> float:
        return float(self.t[0])

    @property
    def t_final(self) -> float:
        return float(self.t[-1])

    @property
    def all_names(self) -> tuple:
        return self.names + self.derived_names

    def __call__(self, t):
        """Evaluate the integrated components at ``t`` (scalar or array)."""
        scalar = np.ndim(t) == 0
        tt = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(tt < self.t[0] - 1e-12 * max(1.0, abs(self.t[0]))) or np.any(
            tt > self.t[-1] + 1e-12 * max(1.0, abs(self.t[-1]))
        ):
            raise ValueError("evaluation time outside the trajectory span")
        if len(self.t) == 1:
            out = np.repeat(self.y[:1], len(tt), axis=0)
            return out[0] if scalar else out
        idx = np.clip(np.searchsorted(self.t, tt, side="right") - 1, 0, len(self.t) - 2)
        h = self.t[idx + 1] - self.t[idx]
        theta = ((tt - self.t[idx]) / h)[:, None]
        theta1 = 1.0 - theta
        r = self._coeffs[idx]
        out = r[:, 0] + theta * (r[:, 1] + theta1 * (r[:, 2] + theta * (r[:, 3] + theta1 * r[:, 4])))
        # stored mesh values exactly
        exact = tt == self.t[idx + 1]
        out[exact] = self.y[idx[exact] + 1]
        return out[0] if scalar else out

    def columns(self, t=None) -> dict:
        """All integrated and derived components as a dict of arrays."""
        states = self.y if t is None else np.atleast_2d(self(np.atleast_1d(t)))
        cols = {name: states[:, i] for i, name in enumerate(self.names)}
        if self._derive is not None:
            cols.update(self._derive(states))
        return cols

    def var(self, name: str, t=None):
        """One named component at the mesh times, or at ``t`` via dense output."""
        if name in self.names:
            i = self.names.index(name)
            if t is None:
                return self.y[:, i]
            vals = np.atleast_2d(self(np.atleast_1d(t)))[:, i]
            return float(vals[0]) if np.ndim(t) == 0 else vals
        if name not in self.derived_names:
            raise KeyError(name)
        cols = self.columns(t if t is None else np.atleast_1d(t))
        if t is not None and np.ndim(t) == 0:
            return float(cols[name][0])
        return cols[name]

    def to_csv(self, t=None, header: Sequence[str] = None, t_inf: bool = False) -> str:
        """Render as CSV text: one row per output time, 17 significant digits."""
        cols = self.columns(t)
        times = self.t if t is None else np.atleast_1d(np.asarray(t, dtype=float))
        header = list(header) if header is not None else list(self.all_names)
        fields = ["t"] + header + (["t_inf"] if t_inf else [])
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(fields)
        tinf = t_infinity(times) if t_inf else None
        for k, tk in enumerate(times):
            row = [repr(float(tk))] + [repr(float(cols[h][k])) for h in header]
            if t_inf:
                row.append(repr(float(tinf[k])))
            writer.writerow(row)
        return buf.getvalue()


def _rms_norm(x, scale):
    return math.sqrt(float(np.mean((x / scale) ** 2)))


def _initial_step(rhs, t0, y0, f0, rtol, atol, direction_span):
    # Hairer & Wanner, "hinit"
    scale = atol + rtol * np.abs(y0)
    d0 = _rms_norm(y0, scale)
    d1 = _rms_norm(f0, scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, direction_span)
    y1 = y0 + h0 * f0
    f1 = np.asarray(rhs(t0 + h0, y1), dtype=float)
    d2 = _rms_norm(f1 - f0, scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, direction_span)


def integrate(rhs, y0, settings: IntegrationSettings, names=None, derive=None,
              derived_names=()) -> Trajectory:
    """Integrate ``y' = rhs(t, y)`` from ``settings.t_start`` to ``settings.t_end``.

    Args:
        rhs: vector field ``rhs(t, y) -> array_like``.
        y0: initial state.
        settings: tolerances, horizon, step limits and events.
        names: component labels for the returned trajectory.
        derive, derived_names: optional extra columns, see :class:`Trajectory`.

    Returns:
        Trajectory holding every accepted mesh point with dense output.

    Raises:
        NonFiniteDerivative: the vector field returned inf/nan.
        StepSizeUnderflow: the controller asked for a step below round-off.
        MaxStepsExceeded: ``settings.max_steps`` step attempts used.
    """
    y = np.array(y0, dtype=float).ravel()
    d = y.size
    names = tuple(names) if names is not None else tuple(f"y{i}" for i in range(d))
    rtol, atol = settings.rel_tol, settings.abs_tol
    t = float(settings.t_start)
    t_end = float(settings.t_end)
    eps16 = 16 * np.finfo(float).eps
    A, C, E, D = _A_FULL, _C, _E, _D

    f = np.asarray(rhs(t, y), dtype=float)
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(y))):
        raise NonFiniteDerivative(f"non-finite derivative at t={t}")

    h = settings.first_step or _initial_step(rhs, t, y, f, rtol, atol, t_end - t)
    h = min(h, settings.max_step)

    ts, ys = [t], [y]
    k1s, k7s, dks = [], [], []
    events = []
    ev_prev = [float(ev.func(t, y)) for ev in settings.events]

    K = np.empty((7, d))
    K[0] = f
    err_old = 1e-4
    rejected = False
    n_steps = 0
    done = False
    while not done:
        if n_steps >= settings.max_steps:
            raise MaxStepsExceeded(f"{settings.max_steps} steps reached at t={t}")
        if h < eps16 * abs(t):
            raise StepSizeUnderflow(f"step size {h:.3e} below round-off at t={t}")
        last = t + h >= t_end
        if last:
            h = t_end - t
        for s in range(1, 7):
            K[s] = rhs(t + C[s] * h, y + h * np.dot(A[s, :s], K[:s]))
        # FSAL: the last stage is evaluated at the 5th order solution
        y_new = y + h * np.dot(A[6, :6], K[:6])
        n_steps += 1
        if not math.isfinite(float(K[1:].sum())):
            raise NonFiniteDerivative(f"non-finite derivative near t={t}")

        e = h * np.dot(E, K) / (atol + rtol * np.maximum(np.abs(y), np.abs(y_new)))
        err = math.sqrt(float(np.dot(e, e)) / d)

        if err <= 1.0:
            fac = err ** _ALPHA / err_old ** _BETA if err > 0 else 0.0
            fac = max(1.0 / _FAC_MAX, min(1.0 / _FAC_MIN, fac / _SAFETY))
            h_next = h / fac
            if rejected:
                h_next = min(h_next, h)
            err_old = max(err, 1e-4)
            rejected = False

            hk1, hk7, hdk = h * K[0], h * K[6], h * np.dot(D, K)
            t_new = t_end if last else t + h

            if settings.events:
                r = _step_coeffs(y, y_new, hk1, hk7, hdk)
                t_stop = _locate_events(settings.events, ev_prev, t, t_new, y_new, r, events)
                if t_stop is not None:
                    theta = (t_stop - t) / h
                    y_new = _eval_step(r, theta)
                    t_new = t_stop
                    # truncated step: store the refitted quartic directly
                    r = _refit_truncated(r, theta, y_new)
                    hk1, hk7, hdk = r[1] + r[2], r[1] - r[2] - r[3], r[4]
                    done = True

            t, y = t_new, y_new
            ts.append(t)
            ys.append(y)
            k1s.append(hk1)
            k7s.append(hk7)
            dks.append(hdk)
            K[0] = K[6]
            if last:
                done = True
            h = min(h_next, settings.max_step)
        else:
            fac = max(1.0 / _FAC_MAX, min(1.0 / _FAC_MIN, err ** _ALPHA / _SAFETY))
            h = h / fac
            rejected = True

    Y = np.array(ys)
    if k1s:
        coeffs = _step_coeffs(Y[:-1], Y[1:], np.array(k1s), np.array(k7s), np.array(dks))
        coeffs = np.moveaxis(coeffs, 0, 1)
    else:
        coeffs = np.empty((0, 5, d))
    return Trajectory(np.array(ts), Y, coeffs, names, events,
                      derive=derive, derived_names=derived_names)


def _step_coeffs(y0, y1, hk1, hk7, hdk):
    dy = y1 - y0
    r3 = hk1 - dy
    return np.stack([y0, dy, r3, dy - hk7 - r3, hdk])


def _eval_step(r, theta):
    th1 = 1.0 - theta
    return r[0] + theta * (r[1] + th1 * (r[2] + theta * (r[3] + th1 * r[4])))


def _refit_truncated(r, theta, y_end):
    # Re-express the quartic on [0, theta] in the local variable s = tau/theta by
    # sampling it; keeps the dense output exact for the truncated interval.
    s = np.linspace(0.0, 1.0, 5)
    vals = np.array([_eval_step(r, theta * si) for si in s])
    vals[-1] = y_end
    # basis of the contd5 form at s: [1, s, s(1-s), s^2(1-s), s^2(1-s)^2]
    B = np.stack([np.ones_like(s), s, s * (1 - s), s ** 2 * (1 - s), s ** 2 * (1 - s) ** 2], axis=1)
    return np.linalg.solve(B, vals)


def _locate_events(evs, ev_prev, t0, t1, y1, r, out):
    """Bisection on the dense output for sign changes of each event function."""
    h = t1 - t0
    t_stop = None
    for i, ev in enumerate(evs):
        g1 = float(ev.func(t1, y1))
        g0 = ev_prev[i]
        ev_prev[i] = g1
        crossed = (g0 < 0 <= g1 and ev.direction >= 0) or (g0 > 0 >= g1 and ev.direction <= 0)
        if not crossed or g0 == 0:
            continue
        lo, hi = 0.0, 1.0
        glo = g0
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            gm = float(ev.func(t0 + mid * h, _eval_step(r, mid)))
            if (gm > 0) == (glo > 0) and gm != 0:
                lo, glo = mid, gm
            else:
                hi = mid
            if (hi - lo) * abs(h) < 4 * np.finfo(float).eps * max(1.0, abs(t1)):
                break
        te = t0 + hi * h
        out.append((ev.kind, te, _eval_step(r, hi)))
        if ev.terminal and (t_stop is None or te < t_stop):
            t_stop = te
    if t_stop is not None:
        out[:] = [e for e in out if e[1] <= t_stop]
    return t_stop


# trajectory queries -------------------------------------------------------------

_GOLDEN = (math.sqrt(5) - 1) / 2


def golden_section(func, a, b, tol=1e-13, max_iter=200):
    """Minimise a unimodal scalar function on [a, b]; returns (x, f(x))."""
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = func(c), func(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = func(d)
    x = 0.5 * (a + b)
    fx = func(x)
    for xx, ff in ((c, fc), (d, fd)):
        if ff < fx:
            x, fx = xx, ff
    return x, fx


def _sample_times(traj: Trajectory, per_step: int):
    if len(traj.t) == 1:
        return traj.t.copy()
    theta = np.arange(per_step) / per_step
    tt = (traj.t[:-1, None] + theta[None, :] * np.diff(traj.t)[:, None]).ravel()
    return np.append(tt, traj.t[-1])


def detect_min_distance(traj: Trajectory, target, coords=("w", "c"), per_step: int = 8):
    """Global minimum of the Euclidean distance from the trajectory to ``target``.

    The distance is sampled on a sub-grid of every step, then the best sample
    is refined by golden-section search on the dense output over its two
    neighbouring sub-intervals.

    Returns:
        ``(time, distance)``.
    """
    target = np.asarray(target, dtype=float)

    def dist(tt):
        pts = np.stack([np.atleast_1d(traj.var(c, tt)) for c in coords], axis=-1)
        return np.linalg.norm(pts - target, axis=-1)

    tt = _sample_times(traj, per_step)
    dd = dist(tt)
    k = int(np.argmin(dd))
    if len(tt) == 1:
        return float(tt[0]), float(dd[0])
    a = tt[max(k - 1, 0)]
    b = tt[min(k + 1, len(tt) - 1)]
    t_best, d_best = golden_section(lambda s: float(dist(np.array([s]))[0]), a, b)
    if dd[k] < d_best:
        return float(tt[k]), float(dd[k])
    return float(t_best), float(d_best)


def detect_tube_entry(traj: Trajectory, curve, width: float, coords=("w", "c"),
                      per_step: int = 8):
    """First time the trajectory is within ``width`` of the graph ``c = curve(w)``.

    Deviations are sampled on a sub-grid of each step and the first crossing is
    refined by bisection on the dense output.

    Returns:
        The entry time, or ``None`` if the trajectory never enters the tube.
    """
    xname, yname = coords

    def gap(tt):
        x = np.atleast_1d(traj.var(xname, tt))
        y = np.atleast_1d(traj.var(yname, tt))
        return np.abs(y - curve(x)) - width

    tt = _sample_times(traj, per_step)
    g = gap(tt)
    inside = np.nonzero(g <= 0)[0]
    if inside.size == 0:
        return None
    k = int(inside[0])
    if k == 0:
        return float(tt[0])
    lo, hi = tt[k - 1], tt[k]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if gap(np.array([mid]))[0] <= 0:
            hi = mid
        else:
            lo = mid
    return float(hi)
