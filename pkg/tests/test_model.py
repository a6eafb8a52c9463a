import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsslab.errors import (
    ConfigError,
    ConfigNotFound,
    DegenerateEigenvalue,
    InvalidParameters,
)
from qsslab.model import (
    InitialConditions,
    RateConstants,
    State,
    classify,
    config_from_dict,
    conservation_residuals,
    derived,
    equilibria,
    h_minus,
    h_plus,
    in_lambda_star,
    jacobian_wc,
    load_config,
    rhs_full,
    rhs_wc,
    rhs_zc,
    simulate,
)

from conftest import FIG4, FIG5_TOP
from sampling import random_ics, random_lambda_star_point, random_rates, restart

pos = st.floats(min_value=1e-2, max_value=1e2, allow_nan=False, allow_infinity=False)
nonneg = st.one_of(st.just(0.0), pos)


def _roots_oracle(w, K, ics):
    """Both roots of c^2 - (K + E_T) c + (z0 - w)(e0 + w) via numpy's polynomial solver."""
    r = np.sort(np.roots([1.0, -(K + ics.ET), (ics.z0 - w) * (ics.e0 + w)]).real)
    return r[0], r[1]


# derived quantities -------------------------------------------------------------------

def test_derived_fig4_frozen():
    d = derived(*FIG4)
    assert d.KM == 500.0 and d.ET == 10.0
    assert d.mu == pytest.approx(509.96470, abs=5e-6)
    # exact value; a rounded mu gives 0.017651
    assert d.lambdaZ == pytest.approx(0.0176477, abs=5e-8)
    assert d.phi == d.mu


def test_derived_fig5_frozen():
    d = derived(*FIG5_TOP)
    assert d.gamma == pytest.approx(math.sqrt(5.01 * 25.01), rel=1e-15)
    assert d.gamma == pytest.approx(11.19375, abs=5e-6)
    assert d.lambdaZ == pytest.approx(1.908124, abs=5e-7)
    assert d.wT == 4.0 and d.phi == d.gamma


def test_lambda_z_is_grid_apex_of_h_minus():
    for params, ics in (FIG4, FIG5_TOP):
        d = derived(params, ics)
        w = np.linspace(0.0, ics.z0, 200_001)
        apex = max(_roots_oracle(x, d.KM, ics)[0] for x in w[::1000])
        fine = np.max(h_minus(w, d.KM, ics))
        assert d.lambdaZ == pytest.approx(fine, rel=1e-9)
        assert apex <= d.lambdaZ * (1 + 1e-12)


def test_wT_zero_when_symmetric():
    assert derived(RateConstants(1, 1, 1), InitialConditions(3, 3)).wT == 0.0


@given(pos, nonneg, nonneg, pos, pos)
def test_derived_invariants(k1, km1, k2, z0, e0):
    p, i = RateConstants(k1, km1, k2), InitialConditions(z0, e0)
    d = derived(p, i)
    assert d.KM == pytest.approx(d.KS + d.K, rel=2.3e-16, abs=0)
    assert 0.0 <= d.lambdaZ <= d.ET / 2 * (1 + 1e-14)
    assert d.phi == (d.gamma if e0 <= z0 else d.mu)


def test_derived_includes_c0_in_ET():
    assert derived(RateConstants(1, 1, 1), InitialConditions(2, 3, c0=0.5)).ET == 6.0


@pytest.mark.parametrize("kw", [dict(k1=0, km1=1, k2=1), dict(k1=1, km1=-1, k2=1),
                                dict(k1=1, km1=1, k2=math.nan)])
def test_invalid_rates(kw):
    with pytest.raises(InvalidParameters):
        RateConstants(**kw)


def test_invalid_ics():
    with pytest.raises(InvalidParameters):
        InitialConditions(0.0, 0.0)
    with pytest.raises(InvalidParameters):
        InitialConditions(1.0, -1.0)


# vector fields ------------------------------------------------------------------------

def test_rhs_zc_examples():
    p, i = FIG5_TOP
    assert rhs_zc(p, i, (0.0, 0.0)) == (0.0, 0.0)
    dz, dc = rhs_zc(p, i, (9.0, 0.0))
    assert (dz, dc) == pytest.approx((-9.0, 9.0))


def test_rhs_zc_vanishes_on_c_nullcline():
    p, i = FIG5_TOP
    KM = (p.km1 + p.k2) / p.k1
    for z in np.linspace(0.1, 9.9, 25):
        c = (i.ET - z) * z / (KM + 2 * z)
        assert rhs_zc(p, i, (z, c))[1] == pytest.approx(0.0, abs=1e-13)


def test_rhs_wc_examples():
    p, i = RateConstants(10, 0.1, 0.1), InitialConditions(z0=10, e0=5)
    dc, dw = rhs_wc(p, i, (0.0, 1.0))
    assert dc == pytest.approx(359.8, rel=1e-14)
    assert dw == pytest.approx(0.1, rel=1e-14)
    assert rhs_wc(p, i, (10.0, 0.0)) == (0.0, 0.0)
    assert rhs_wc(p, i, (-5.0, 0.0)) == pytest.approx((0.0, 0.0))


@given(pos, nonneg, nonneg, pos, pos, st.floats(0, 1), st.floats(0, 1))
def test_coordinate_systems_agree(k1, km1, k2, z0, e0, a, b):
    p, i = RateConstants(k1, km1, k2), InitialConditions(z0, e0)
    w = a * z0
    c = b * min(z0 - w, e0 + w)
    z = z0 - c - w
    e = i.ET - z - 2 * c
    dz, dc_zc = rhs_zc(p, i, (z, c))
    dc_wc, dw = rhs_wc(p, i, (w, c))
    full = rhs_full(p, State(z, c, e, w))
    scale = k1 * i.ET ** 2 + (km1 + k2) * i.ET
    assert dc_zc == pytest.approx(dc_wc, abs=1e-12 * scale)
    assert full[0] == pytest.approx(dz, abs=1e-12 * scale)
    assert full[3] == pytest.approx(dw, abs=1e-12 * scale)
    assert dz + dc_zc + dw == pytest.approx(0.0, abs=1e-12 * scale)


# nullclines ----------------------------------------------------------------------------

def test_h_minus_examples():
    p, i = FIG5_TOP
    assert h_minus(i.z0, 5.01, i) == pytest.approx(0.0, abs=1e-15)
    # 7.505 - sqrt(15.01^2 - 36)/2 (the printed 0.62572 is an arithmetic slip)
    assert h_minus(0.0, 5.01, i) == pytest.approx(7.505 - 0.5 * math.sqrt(15.01 ** 2 - 36), rel=1e-13)
    assert h_minus(0.0, 5.01, i) == pytest.approx(0.625681, abs=5e-7)
    assert h_minus(0.0, 5.0, i) == pytest.approx(0.626136, abs=5e-7)
    assert h_minus(4.0, 5.01, i) == pytest.approx(derived(p, i).lambdaZ, rel=1e-14)


@given(pos, pos, pos, st.floats(0, 1))
def test_h_roots_match_polynomial_solver(K, z0, e0, a):
    i = InitialConditions(z0, e0)
    w = -e0 + a * (z0 + e0)
    lo, hi = _roots_oracle(w, K, i)
    assert h_minus(w, K, i) == pytest.approx(lo, rel=1e-9, abs=1e-12 * i.ET)
    assert h_plus(w, K, i) == pytest.approx(hi, rel=1e-9)
    assert h_minus(w, K, i) <= h_plus(w, K, i)


@given(pos, nonneg, nonneg, pos, pos, st.floats(0, 1), st.floats(0, 2))
def test_cdot_factorisation(k1, km1, k2, z0, e0, a, b):
    p, i = RateConstants(k1, km1, k2), InitialConditions(z0, e0)
    KM = (km1 + k2) / k1
    w = -e0 + a * (z0 + e0)
    c = b * i.ET
    dc = rhs_wc(p, i, (w, c))[0]
    fact = k1 * (c - h_minus(w, KM, i)) * (c - h_plus(w, KM, i))
    scale = k1 * abs((e0 + w - c) * (z0 - c - w)) + (km1 + k2) * c
    # both forms can vanish exactly while the factors carry round-off of the roots' size
    hm, hp = h_minus(w, KM, i), h_plus(w, KM, i)
    scale += k1 * (c + abs(hm)) * (c + abs(hp))
    assert abs(dc - fact) <= 1e-12 * max(scale, 1e-300)


def test_h_vectorised():
    i = InitialConditions(9, 1)
    w = np.linspace(0, 9, 7)
    out = h_minus(w, 5.0, i)
    assert out.shape == w.shape
    assert np.allclose(out, [h_minus(float(x), 5.0, i) for x in w], rtol=1e-15)


# equilibria ----------------------------------------------------------------------------

def test_equilibria_prop_example():
    p, i = RateConstants(1.0, 0.0, 0.1), InitialConditions(1.0, 1.0)
    x1, x2 = equilibria(p, i)
    assert x1.point == (1.0, 0.0)
    assert sorted(x1.eigenvalues) == pytest.approx([-2.0, -0.1])
    assert x1.classification == "attracting"


def test_equilibria_fig4_saddle():
    x1, x2 = equilibria(*FIG4)
    assert x2.point == (-9.0, 0.0)
    assert x2.classification == "saddle"
    assert x1.classification == "attracting"


def test_equilibria_k2_zero_degenerate():
    with pytest.raises(DegenerateEigenvalue):
        equilibria(RateConstants(1.0, 1.0, 0.0), InitialConditions(1.0, 1.0))


def test_classify_signs():
    assert classify((-1.0, -2.0)) == "attracting"
    assert classify((-1.0, 2.0)) == "saddle"
    assert classify((1.0, 2.0)) == "repelling"


@given(pos, nonneg, pos, pos, pos)
def test_classification_matches_numeric_eigenvalues(k1, km1, k2, z0, e0):
    p, i = RateConstants(k1, km1, k2), InitialConditions(z0, e0)
    for eq in equilibria(p, i):
        ev = np.linalg.eigvals(jacobian_wc(p, i, eq.point)).real
        expected = "attracting" if np.all(ev < 0) else "saddle" if ev.min() < 0 < ev.max() else "repelling"
        assert eq.classification == expected


def test_jacobian_matches_finite_differences():
    p, i = FIG5_TOP
    x = np.array([2.0, 0.7])

    def f(y):
        dc, dw = rhs_wc(p, i, tuple(y))
        return np.array([dw, dc])
    J = jacobian_wc(p, i, tuple(x))
    h = 1e-6
    fd = np.column_stack([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(2)])
    assert np.allclose(J, fd, rtol=1e-7, atol=1e-8)


# invariant region ------------------------------------------------------------------------

def test_lambda_star_examples():
    p, i = FIG5_TOP
    d = derived(p, i)
    assert in_lambda_star((0.0, 0.0), p, i)
    assert in_lambda_star((i.z0, 0.0), p, i)
    assert not in_lambda_star((d.wT, d.ET / 2), p, i)
    assert not in_lambda_star((-1.0, 0.0), p, i)


def test_trajectories_stay_in_lambda_star():
    rng = np.random.default_rng(7)
    for _ in range(15):
        p, i = random_rates(rng), random_ics(rng)
        start = restart(i, random_lambda_star_point(rng, p, i))
        d = derived(p, i)
        traj = simulate(p, start, 3.0 / (p.k1 * d.phi) + 1.0 / p.k2, coords="wc")
        for w, c in zip(traj.var("w"), traj.var("c")):
            assert in_lambda_star((w, c), p, start, slack=1e-8)


# conservation ---------------------------------------------------------------------------------

def test_conservation_residuals():
    p, i = FIG5_TOP
    s0 = State(i.z0, i.c0, i.e0, i.w0)
    assert conservation_residuals(s0, p, i) == (0.0, 0.0)
    r1, r2 = conservation_residuals(State(i.z0 + 1e-3, 0.0, i.e0, 0.0), p, i)
    assert r1 == pytest.approx(1e-3) and r2 == pytest.approx(1e-3)


@pytest.mark.parametrize("coords", ["full", "zc", "wc"])
def test_conservation_over_long_runs(coords):
    rng = np.random.default_rng(11)
    for _ in range(5):
        p, i = random_rates(rng), random_ics(rng)
        traj = simulate(p, i, 5.0 / p.k2, coords=coords, rel_tol=1e-10)
        c = traj.columns()
        r1, r2 = conservation_residuals((c["z"], c["c"], c["e"], c["w"]), p, i)
        assert np.max(np.abs(r1)) <= 1e-7 and np.max(np.abs(r2)) <= 1e-7


def test_e0_zero_is_stationary():
    p, i = FIG5_TOP[0], InitialConditions(z0=4.0, e0=0.0)
    traj = simulate(p, i, 10.0)
    assert np.all(traj.var("z") == 4.0)
    assert np.all(traj.var("c") == 0.0)


# configuration ---------------------------------------------------------------------------------

def test_config_roundtrip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"k1": 1, "km1": 5, "k2": 0.01, "z0": 9, "e0": 1}))
    p, i = load_config(path)
    assert p == FIG5_TOP[0] and i == FIG5_TOP[1]


def test_config_errors(tmp_path):
    with pytest.raises(ConfigNotFound):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        config_from_dict({"k1": 1})
    with pytest.raises(ConfigError):
        config_from_dict({"k1": "x", "km1": 1, "k2": 1, "z0": 1, "e0": 1})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
