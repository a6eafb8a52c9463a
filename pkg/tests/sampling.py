"""Random configurations shared by the property and acceptance tests."""

import numpy as np

from qsslab.model import InitialConditions, RateConstants, derived


def loguniform(rng, lo, hi):
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def random_rates(rng, km1_zero=False, k2_range=(1e-3, 1.0)):
    k1 = loguniform(rng, 0.1, 10.0)
    km1 = 0.0 if km1_zero else loguniform(rng, 1e-2, 10.0)
    k2 = loguniform(rng, *k2_range)
    return RateConstants(k1, km1, k2)


def random_ics(rng, z_le_e=None):
    z0 = rng.uniform(0.1, 10.0)
    e0 = rng.uniform(0.1, 10.0)
    if z_le_e is True and z0 > e0:
        z0, e0 = e0, z0
    if z_le_e is False and z0 <= e0:
        z0, e0 = e0 + 1e-3, z0
    return InitialConditions(float(z0), float(e0))


def random_lambda_star_point(rng, params, ics):
    """Uniform ``w``, then ``c`` uniform below every Lambda* ceiling."""
    d = derived(params, ics)
    w = rng.uniform(0.0, ics.z0)
    top = min(0.5 * d.ET, ics.e0 + w, ics.z0 - w, d.lambdaZ)
    return float(w), float(rng.uniform(0.0, max(top, 0.0)))


def restart(ics, point):
    """Initial conditions with the same conserved totals started at ``(w, c)``."""
    w, c = point
    return InitialConditions(
        z0=max(ics.z0 - c - w, 0.0), e0=max(ics.e0 - c + w, 0.0), c0=c, w0=w)
