import math

import numpy as np
import pytest
from scipy import integrate

from biolage.errors import ConvergenceError, RangeError, UnsupportedFamily
from biolage.model import (
    DemographyParams,
    Linear,
    ModelParams,
    PolynomialRejuvenation,
    SaturatingAging,
    chi_continuous,
    chi_k,
    gamma_cell_masses,
    gamma_density,
    gamma_moment,
    gamma_survival,
    jump_map_eval,
    jump_target,
    validate,
    x_max,
)

CASCADE = ModelParams(0.1, 0.1, g_plus=1.1, g_minus=0.99)


def brute_chi(tp, tm, gp, gm, k):
    return tp * (1 - 1 / gp**k) + tm * (1 - 1 / gm**k)


# validate ------------------------------------------------------------------
def test_validate_accepts_balanced_example():
    vp = validate(ModelParams(0.5, 0.5, g_plus=1.1, g_minus=0.9))
    assert (vp.tau_plus, vp.tau_minus, vp.g_plus, vp.g_minus) == (0.5, 0.5, 1.1, 0.9)
    assert vp.is_linear


def test_validate_rejects_g_plus_at_one():
    with pytest.raises(RangeError, match="g_plus"):
        validate(ModelParams(1.0, 0.0, g_plus=1.0, g_minus=0.9))


def test_validate_rejects_g_minus_at_one():
    with pytest.raises(RangeError, match="g_minus"):
        validate(ModelParams(0.0, 1.0, g_plus=1.1, g_minus=1.0))


def test_validate_negative_rate():
    with pytest.raises(RangeError):
        validate(ModelParams(-0.1, 0.5, g_plus=1.1, g_minus=0.9))


def test_tau_p_parameterization():
    vp = validate(ModelParams.from_tau_p(1.0, 0.25, g_plus=1.1, g_minus=0.9))
    assert vp.tau_plus == 0.25 and vp.tau_minus == 0.75
    assert vp.p == 0.25 and vp.tau == 1.0


@pytest.mark.parametrize("tau,p", [(0.0, 0.5), (1.0, -0.1), (1.0, 1.5)])
def test_tau_p_out_of_range(tau, p):
    with pytest.raises(RangeError):
        ModelParams.from_tau_p(tau, p)


def test_from_deltas():
    mp = ModelParams.from_deltas(0.1, 0.1, 0.1, 0.01)
    assert mp.g_plus == 1.1 and mp.g_minus == 0.99


def test_validate_demography_ranges():
    base = ModelParams(0.0, 0.0)
    for bad in (
        DemographyParams(0.0, 1.0),
        DemographyParams(0.1, 0.0),
        DemographyParams(0.1, 1.0, alpha=0),
        DemographyParams(0.1, 1.0, alpha=1.5),
        DemographyParams(0.1, 1.0, gamma_rate=0.0),
    ):
        with pytest.raises(RangeError):
            validate(base, bad)
    assert validate(base, DemographyParams(0.1, 1.0, 2, 1.0)).demography.alpha == 2


def test_validate_family_direction():
    with pytest.raises(RangeError):
        validate(ModelParams(1.0, 0.0, family_plus=SaturatingAging(0.1)))
    with pytest.raises(RangeError):
        validate(ModelParams(0.0, 1.0, family_minus=PolynomialRejuvenation(0.1)))
    vp = validate(ModelParams(1.0, 1.0, family_plus=PolynomialRejuvenation(0.1, 1), family_minus=SaturatingAging(0.2, 0.1, 1)))
    assert not vp.is_linear


def test_validated_params_are_frozen():
    vp = validate(CASCADE)
    with pytest.raises(Exception):
        vp.tau_plus = 2.0


# chi -----------------------------------------------------------------------
def test_chi_zero():
    assert chi_k(validate(CASCADE), 0) == 0.0


def test_chi_symmetric_k1_matches_closed_form():
    vp = validate(ModelParams.from_deltas(0.5, 0.5, 0.1, 0.1))
    assert chi_k(vp, 1) == pytest.approx(-1.0 * 0.01 / 0.99, rel=1e-13)
    assert chi_k(vp, 1) == pytest.approx(-0.0101010, abs=1e-7)


def test_chi_matches_brute_force():
    vp = validate(CASCADE)
    ks = np.arange(0, 101)
    expected = [brute_chi(0.1, 0.1, 1.1, 0.99, int(k)) for k in ks]
    np.testing.assert_allclose(chi_k(vp, ks), expected, rtol=1e-10, atol=1e-15)


def test_chi_sign_change_cascade():
    vp = validate(CASCADE)
    assert chi_k(vp, 68) > 0 > chi_k(vp, 69)
    # 40-digit reference values (mpmath)
    assert chi_k(vp, 68) == pytest.approx(1.782229165804508509e-3, rel=1e-11)
    assert chi_k(vp, 69) == pytest.approx(-2.044944150973593780e-4, rel=1e-10)


def test_chi_continuous_hand_value():
    vp = validate(ModelParams(1.0, 1.0, g_plus=2.0, g_minus=0.5))
    assert chi_continuous(vp, 1.0) == pytest.approx(-0.5, abs=1e-15)
    assert chi_continuous(vp, 0.0) == 0.0


def test_chi_continuous_agrees_at_integers():
    vp = validate(CASCADE)
    assert chi_continuous(vp, 69.0) == chi_k(vp, 69)


def test_chi_rejects_nonlinear_and_bad_k():
    vp = validate(ModelParams(1.0, 0.0, family_plus=PolynomialRejuvenation(0.1, 1)))
    with pytest.raises(UnsupportedFamily):
        chi_k(vp, 1)
    with pytest.raises(UnsupportedFamily):
        x_max(vp)
    with pytest.raises(RangeError):
        chi_k(validate(CASCADE), -1)
    with pytest.raises(RangeError):
        chi_k(validate(CASCADE), 1.5)


def test_rejuvenation_only_chi_increasing_and_bounded():
    vp = validate(ModelParams(1.0, 0.0, g_plus=1.1))
    c = chi_k(vp, np.arange(1, 301))
    assert np.all(np.diff(c) > 0)
    assert np.all((c > 0) & (c < 1.0))
    assert c[-1] == pytest.approx(1.0, abs=1e-10)
    assert chi_k(vp, 2000) == pytest.approx(1.0, abs=1e-15)


# x_max ---------------------------------------------------------------------
def test_x_max_case_i_stationary():
    vp = validate(CASCADE)
    res = x_max(vp)
    assert res.case == "(i)"
    h = 1e-4
    d = (chi_continuous(vp, res.x_max + h) - chi_continuous(vp, res.x_max - h)) / (2 * h)
    assert abs(d) < 1e-8
    assert res.x_max == pytest.approx(21.3508, abs=1e-4)


def test_x_max_case_ii_boundary():
    g = 1.25
    res = x_max(validate(ModelParams(0.3, 0.3, g_plus=g, g_minus=1 / g)))
    assert res.case == "(ii)" and res.x_max is None


def test_x_max_case_ii_strict():
    res = x_max(validate(ModelParams(0.01, 1.0, g_plus=1.01, g_minus=0.5)))
    assert res.case == "(ii)"
    assert res.criterion < 0


def test_x_max_requires_both_rates():
    with pytest.raises(RangeError):
        x_max(validate(ModelParams(1.0, 0.0, g_plus=1.1)))


# jump maps -----------------------------------------------------------------
def test_linear_target():
    assert jump_target(Linear(1.1), 30.0) == pytest.approx(27.272727272727, rel=1e-12)
    assert jump_target(Linear(1.1), 0.0) == 0.0


def test_polynomial_round_trip_example():
    fam = PolynomialRejuvenation(0.1, 1)
    assert fam.forward(10.0) == pytest.approx(20.0)
    assert jump_target(fam, 20.0) == pytest.approx(10.0, abs=1e-10)


@pytest.mark.parametrize("fam", [PolynomialRejuvenation(0.1, 1), SaturatingAging(0.3, 0.1, 2), Linear(0.9)])
def test_target_at_zero(fam):
    assert jump_target(fam, 0.0) == 0.0


def test_jump_map_eval_examples():
    assert jump_map_eval(Linear(0.9), 10.0) == pytest.approx((9.0, 0.9))
    f, fp = jump_map_eval(PolynomialRejuvenation(0.1, 1), 2.0)
    assert f == pytest.approx(2.4) and fp == pytest.approx(1.4)
    f, fp = jump_map_eval(SaturatingAging(0.5, 0.0, 0), 7.0)
    assert f == pytest.approx(3.5) and fp == pytest.approx(0.5)


def test_target_direction():
    b = np.linspace(0.5, 100, 50)
    assert np.all(jump_target(PolynomialRejuvenation(0.05, 0.5), b) <= b)
    assert np.all(jump_target(SaturatingAging(0.3, 0.2, 1), b) >= b)


def test_target_negative_age_rejected():
    with pytest.raises(RangeError):
        jump_target(Linear(1.1), -1.0)


def test_convergence_error_surfaces():
    class Stuck(PolynomialRejuvenation):
        def derivative(self, b):
            return np.full(np.shape(b), np.nan)

    fam = Stuck(0.1, 1)
    from biolage import model

    with pytest.raises(ConvergenceError):
        model._solve_increasing(fam.forward, fam.derivative, np.array([20.0]), np.array([0.0]), np.array([20.0]), maxiter=3)


def test_family_parameter_checks():
    with pytest.raises(RangeError):
        SaturatingAging(0.1, 0.2)
    with pytest.raises(RangeError):
        SaturatingAging(1.0, 0.0)
    with pytest.raises(RangeError):
        PolynomialRejuvenation(0.0)
    with pytest.raises(RangeError):
        Linear(0.0)


# gamma ---------------------------------------------------------------------
def test_gamma_density_examples():
    assert gamma_density(DemographyParams(0.1, 1.0, 1, 1.0), 0.0) == 1.0
    assert gamma_density(DemographyParams(0.1, 1.0, 2, 1.0), 1.0) == pytest.approx(math.exp(-1), rel=1e-14)


def test_gamma_density_integrates_to_one():
    dem = DemographyParams(0.1, 1.0, 3, 0.5)
    val, _ = integrate.quad(lambda b: gamma_density(dem, b), 0, np.inf, epsabs=0, epsrel=1e-12)
    assert val == pytest.approx(1.0, abs=1e-10)


def test_gamma_moment_examples():
    assert gamma_moment(DemographyParams(0.1, 1.0, 1, 2.0), 0) == 1.0
    assert gamma_moment(DemographyParams(0.1, 1.0, 1, 2.0), 1) == 0.5
    assert gamma_moment(DemographyParams(0.1, 1.0, 2, 1.0), 2) == 6.0


@pytest.mark.parametrize("alpha", [1, 2, 3, 5])
@pytest.mark.parametrize("rate", [0.5, 1.0, 3.0])
def test_gamma_moment_matches_quadrature(alpha, rate):
    dem = DemographyParams(0.1, 1.0, alpha, rate)
    for k in range(11):
        val, _ = integrate.quad(lambda b: b**k * gamma_density(dem, b), 0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
        assert gamma_moment(dem, k) == pytest.approx(val, rel=1e-8)


def test_gamma_survival_and_cells():
    dem = DemographyParams(0.1, 1.0, 3, 0.7)
    for b in (0.0, 0.3, 2.0, 9.0):
        val, _ = integrate.quad(lambda s: gamma_density(dem, s), b, np.inf, epsabs=0, epsrel=1e-12)
        assert gamma_survival(dem, b) == pytest.approx(val, rel=1e-10, abs=1e-15)
    edges = np.linspace(0, 50, 201)
    cells = gamma_cell_masses(dem, edges)
    assert np.all(cells >= 0)
    assert cells.sum() + gamma_survival(dem, 50.0) == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize(
    "mp",
    [CASCADE, ModelParams(0.5, 0.5, g_plus=1.1, g_minus=0.9), ModelParams(1.0, 0.05, g_plus=1.3, g_minus=0.95)],
)
def test_chi_decreasing_beyond_x_max(mp):
    vp = validate(mp)
    res = x_max(vp)
    start = math.ceil(res.x_max) + 1 if res.x_max is not None else 1
    c = chi_k(vp, np.arange(start, start + 200))
    assert np.all(np.diff(c) < 0)
    assert c[-1] < 0
