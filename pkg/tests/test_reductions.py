import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qsslab.errors import SingularDfN, UnsupportedC0, ZeroKM
from qsslab.model import InitialConditions, RateConstants, h_minus
from qsslab.reductions import (
    Kind,
    ReducedModel,
    center_manifold,
    center_manifold_rhs_z,
    classical_rhs_w,
    classical_rhs_z,
    fenichel_projection,
    make_reduced_ic,
    parse_kind,
    pqssa_rhs_z,
    rqssa_closed_form,
    rqssa_rhs_w,
    sqssa_closed_form,
    sqssa_rhs_z,
    tqssa_rhs_w,
)

from conftest import FIG4, FIG5_BOTTOM, FIG5_TOP
from sampling import random_ics, random_rates


# frozen examples --------------------------------------------------------------------------------

def test_classical_z_examples():
    params, ics = FIG5_TOP
    assert classical_rhs_z(0.0, params, ics) == 0.0
    assert classical_rhs_z(ics.ET, params, ics) == 0.0
    assert classical_rhs_z(5.0, params, ics) == pytest.approx(-0.016656, abs=5e-7)


def test_classical_w_examples():
    params, ics = FIG5_TOP
    assert classical_rhs_w(ics.z0, params, ics) == pytest.approx(0.0, abs=1e-15)
    assert classical_rhs_w(3.0, params.replace(k2=0.0), ics) == 0.0
    assert classical_rhs_w(0.0, params, ics) == pytest.approx(0.0062568, abs=5e-8)


def test_tqssa_example():
    params, ics = FIG5_TOP
    assert tqssa_rhs_w(0.0, params, ics) == pytest.approx(0.01 * (7.5 - 0.5 * math.sqrt(189.0)), rel=1e-12)
    assert tqssa_rhs_w(ics.z0, params, ics) == pytest.approx(0.0, abs=1e-15)


def test_pqssa_example():
    params, ics = FIG5_TOP   # K_S = 5, E_T = 10
    assert pqssa_rhs_z(5.0, params, ics) == pytest.approx(-3.75 / 175.0, rel=1e-12)
    assert pqssa_rhs_z(0.0, params, ics) == 0.0
    assert pqssa_rhs_z(ics.ET, params, ics) == 0.0


def test_pqssa_large_KS_limit():
    params = RateConstants(k1=1.0, km1=1e6, k2=0.01)
    ics = InitialConditions(z0=3.0, e0=7.0)
    for z in (0.5, 3.0, 9.0):
        slow = pqssa_rhs_z(z, params, ics)
        ref = -(params.k2 / 1e6) * (ics.ET - z) * z
        assert abs(slow / ref - 1) < 1e-4
        assert abs(slow / sqssa_rhs_z(z, params, ics) - 1) < 1e-4


def test_sqssa_closed_form_examples():
    params, ics = FIG4
    z, w = sqssa_closed_form(0.0, params, ics)
    assert z == pytest.approx(ics.z0) and w == pytest.approx(0.0, abs=1e-15)
    z, _ = sqssa_closed_form(0.1, params, ics)
    assert z == pytest.approx(10.0 / (9.0 * math.e + 1.0), rel=1e-12)
    assert z == pytest.approx(0.392703, abs=5e-7)
    z, w = sqssa_closed_form(1e4, params, ics)
    assert z == pytest.approx(0.0, abs=1e-300) and w == pytest.approx(ics.z0)


def test_rqssa_examples():
    params = RateConstants(k1=1.0, km1=1.0, k2=0.1)
    ics = InitialConditions(z0=5.0, e0=1.0)
    assert rqssa_closed_form(0.0, params, ics) == 0.0
    assert rqssa_closed_form(10.0, params, ics) == pytest.approx(3.16060, abs=5e-6)
    assert rqssa_rhs_w(ics.z0, params, ics) == 0.0


def test_zero_KM():
    params = RateConstants(k1=1.0, km1=0.0, k2=0.0)
    ics = InitialConditions(z0=1.0, e0=1.0)
    with pytest.raises(ZeroKM):
        sqssa_rhs_z(0.5, params, ics)
    with pytest.raises(ZeroKM):
        sqssa_closed_form(1.0, params, ics)
    with pytest.raises(ZeroKM):
        center_manifold(params)


# initial conditions --------------------------------------------------------------------------------

def test_reduced_initial_conditions():
    params, ics = FIG5_TOP
    assert make_reduced_ic("StandardZ", params, ics) == ics.z0
    assert make_reduced_ic("ReverseW", params, ics) == 0.0
    assert make_reduced_ic("TotalW", params, ics) == 0.0
    assert make_reduced_ic("PSlowZ", params, ics) == pytest.approx(7.09017, abs=5e-6)
    # layer start: z0 - h-(0; K_S)
    layer = make_reduced_ic("PSlowZ", params, ics, pslow_ic="layer")
    assert layer == pytest.approx(9.0 - (7.5 - 0.5 * math.sqrt(189.0)), rel=1e-12)


def test_layer_and_apex_agree_when_z_below_e():
    params, ics = FIG5_BOTTOM
    assert make_reduced_ic("PSlowZ", params, ics, "layer") == pytest.approx(
        make_reduced_ic("PSlowZ", params, ics, "apex"), rel=1e-12)


def test_reduced_ic_errors():
    params, _ = FIG5_TOP
    with pytest.raises(UnsupportedC0):
        make_reduced_ic("TotalW", params, InitialConditions(5.0, 5.0, c0=1.0))
    with pytest.raises(ValueError):
        make_reduced_ic("PSlowZ", params, InitialConditions(5.0, 5.0), pslow_ic="middle")


def test_parse_kind_aliases():
    assert parse_kind("tqssa") is Kind.TotalW
    assert parse_kind("standardz") is Kind.StandardZ
    assert Kind.ReverseW.var == "w" and Kind.PSlowZ.var == "z"
    with pytest.raises(ValueError):
        parse_kind("nope")


# properties ------------------------------------------------------------------------------------

@given(st.integers(0, 2**32 - 1), st.floats(0.001, 0.999))
def test_classical_vs_standard_ratio_bound(seed, frac):
    rng = np.random.default_rng(seed)
    params, ics = random_rates(rng), random_ics(rng)
    z = frac * ics.ET
    KM = (params.km1 + params.k2) / params.k1
    cl, st_ = classical_rhs_z(z, params, ics), sqssa_rhs_z(z, params, ics)
    assert abs(cl - st_) / abs(st_) <= 2 * z / KM * (1 + 1e-12)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_reduced_fields_have_physical_sign(seed, frac):
    rng = np.random.default_rng(seed)
    params, ics = random_rates(rng), random_ics(rng)
    z, w = frac * ics.ET, frac * ics.z0
    for f in (classical_rhs_z, sqssa_rhs_z, pqssa_rhs_z, center_manifold_rhs_z):
        assert f(z, params, ics) <= 1e-15
    for f in (classical_rhs_w, tqssa_rhs_w, rqssa_rhs_w):
        assert f(w, params, ics) >= -1e-15


@pytest.mark.parametrize("kind", ["StandardZ", "ReverseW"])
def test_closed_forms_match_integration(kind):
    params, ics = FIG5_BOTTOM
    model = ReducedModel.build(kind, params, ics)
    t = np.linspace(0.0, 500.0, 101)
    exact = model.solve(t)
    numeric = model.solve(t, closed_form=False)
    assert np.max(np.abs(exact - numeric)) < 1e-8 * max(ics.z0, 1.0)


def test_centre_manifold_flow_matches_standard_reduction():
    params, ics = FIG4
    z = np.linspace(0.0, ics.ET, 11)
    # z' on the manifold reduces to -(k2/K_M)(E_T - z) z
    assert np.allclose(center_manifold_rhs_z(z, params, ics), sqssa_rhs_z(z, params, ics),
                       rtol=1e-12, atol=1e-12 * params.k2 * ics.ET ** 2)


# projection ------------------------------------------------------------------------------------

def test_pi1_example():
    params = RateConstants(k1=1.0, km1=3.0, k2=1.0)
    ics = InitialConditions(2.0, 2.0)
    proj = fenichel_projection("Pi1Star", params, ics, (1.0, 0.0))
    assert np.allclose(proj.Pi, [[1.0, 0.75], [0.0, 0.0]], rtol=0, atol=1e-15)
    assert np.allclose(proj.Pi @ proj.N, 0.0, atol=1e-15)


@given(st.integers(0, 2**32 - 1), st.sampled_from(["Pi1Star", "Pi2Star"]), st.floats(0.01, 0.99))
def test_projection_is_idempotent_and_kills_N(seed, tfpv, frac):
    rng = np.random.default_rng(seed)
    params, ics = random_rates(rng), random_ics(rng)
    z = frac * ics.ET
    KS = params.km1 / params.k1
    c = 0.0 if tfpv == "Pi1Star" else (ics.ET - z) * z / (KS + 2 * z)
    proj = fenichel_projection(tfpv, params, ics, (z, c))
    scale = max(1.0, np.max(np.abs(proj.Pi)))
    assert np.max(np.abs(proj.Pi @ proj.Pi - proj.Pi)) <= 1e-12 * scale ** 2
    assert np.max(np.abs(proj.Pi @ proj.N)) <= 1e-12 * scale


def test_singular_DfN():
    # with km1 = 0, DfN = k1 (2c - E_T) vanishes on c = E_T / 2
    params = RateConstants(k1=1.0, km1=0.0, k2=1.0)
    ics = InitialConditions(z0=4.0, e0=6.0)
    with pytest.raises(SingularDfN):
        fenichel_projection("Pi2Star", params, ics, (3.0, 5.0))


def test_center_manifold_example():
    cm = center_manifold(RateConstants(k1=1.0, km1=3.0, k2=1.0))
    assert (cm.alpha, cm.beta, cm.gamma) == (-0.25, 0.25, 0.0)
    assert abs(cm.residual_ratio - 8.0) <= 0.2 * 8.0


def test_h_minus_is_tqssa_over_k2():
    params, ics = FIG5_TOP
    w = np.linspace(0.0, ics.z0, 7)
    assert np.allclose(tqssa_rhs_w(w, params, ics) / params.k2, h_minus(w, 5.0, ics), rtol=1e-14)
