import numpy as np
import pytest
from scipy.integrate import solve_ivp

from heatblowup.errors import BandError, WindowError
from heatblowup.groundstate import norms
from heatblowup.matching import (
    alpha_closed_form,
    compute_constants,
    fit_scaling_law,
    lambda_ode_solve,
    power_law,
    time_change,
)

T_OF_L = {1: 0.5, 2: 0.8, 3: 0.8}


@pytest.fixture(scope="module")
def paths():
    return {l: lambda_ode_solve(l, 20.0, T_OF_L[l]) for l in (1, 2, 3)}


def test_closed_form_alpha_matches_quadrature_norms():
    qp, lq2 = norms()
    for l in (1, 2, 3):
        assert alpha_closed_form(l) == pytest.approx(3 * qp / (4 * (l + 1) * lq2), rel=1e-12)


@pytest.mark.parametrize("R", [20.0, 40.0, 100.0, 400.0])
def test_constant_signs_and_formula(R):
    for l in (1, 2, 3):
        k = compute_constants(l, R)
        assert k.b0 < 0 < k.denom
        assert k.alpha_l == pytest.approx(abs(k.b0) / (2 * (l + 1) * k.denom), rel=1e-14)
        assert len(k.b) == l


def test_alpha_decreasing_in_R_gap_and_l_scaling():
    gaps = [compute_constants(1, R).alpha_l / alpha_closed_form(1) - 1.0 for R in (20.0, 100.0, 400.0, 1600.0)]
    assert all(g > 0 for g in gaps)
    assert all(a > b for a, b in zip(gaps, gaps[1:]))
    # the gap is the missing tail of ||Lambda Q||^2 beyond ~4R, which decays like 1/R
    assert gaps[-1] < 2e-3
    a = [compute_constants(l, 40.0).alpha_l for l in (1, 2, 3)]
    assert a[0] > a[1] > a[2]
    for l, al in zip((1, 2, 3), a):
        assert al * (l + 1) == pytest.approx(2 * a[0], rel=1e-3)


def test_bk_bounded_uniformly():
    for l in (1, 2, 3):
        bs = np.array([compute_constants(l, R).b for R in (20.0, 40.0, 80.0, 160.0, 320.0)])
        assert np.all(np.abs(bs[1:]) <= np.abs(bs[0]) * 1.0001)


def test_constants_input_errors():
    with pytest.raises(ValueError):
        compute_constants(0, 20.0)
    with pytest.raises(ValueError):
        compute_constants(1, 10.0)


@pytest.mark.parametrize("l", [1, 2, 3])
def test_dropped_bk_is_exact_power_law(l):
    T = T_OF_L[l]
    p = lambda_ode_solve(l, 20.0, T, drop_bk=True)
    ref = p.constants.alpha_l**2 * (T - p.t) ** (2 * l + 2)
    assert np.max(np.abs(p.lam / ref - 1.0)) < 1e-9


@pytest.mark.parametrize("l", [1, 2, 3])
def test_full_ode_band_and_exponent(paths, l):
    p = paths[l]
    T = p.T
    sig = T - p.t
    dev = np.abs(p.lam / (p.constants.alpha_l**2 * sig ** (2 * l + 2)) - 1.0)
    assert np.all(dev <= 1.0 * sig / 20.0**2)
    fit = fit_scaling_law(p.t, p.lam, T)
    assert abs(fit.q - (2 * l + 2)) < 0.02


def test_derivative_matches_finite_difference(paths):
    p = paths[1]
    t = np.array([0.05, 0.2, 0.4, 0.49])
    h = 1e-6
    fd = (p(t + h) - p(t - h)) / (2 * h)
    assert np.allclose(p.deriv(t), fd, rtol=1e-6)
    lead = -(2 * 1 + 2) * p.constants.alpha_l**2 * (p.T - t) ** 3
    assert np.all(np.abs(p.deriv(t) / lead - 1.0) < (p.T - t) / 20.0**2)


def test_round_trip(paths):
    p = paths[1]
    C0 = float(p.C(0.0))
    t_mid = 0.5 * p.T
    fwd = solve_ivp(lambda t, y: [p.rhs_C(t, y[0])], (0.0, t_mid), [C0], method="DOP853", rtol=1e-13, atol=1e-16)
    C_mid = fwd.y[0, -1]
    assert C_mid == pytest.approx(float(p.C(t_mid)), rel=1e-8)
    back = solve_ivp(lambda t, y: [p.rhs_C(t, y[0])], (t_mid, 0.0), [C_mid], method="DOP853", rtol=1e-13, atol=1e-16)
    assert back.y[0, -1] ** 2 == pytest.approx(float(p(0.0)), rel=1e-8)


def test_amplitude_scales_like_A_squared():
    T = 0.2
    ref = lambda_ode_solve(1, 20.0, T)
    for A in (-0.5, -2.0):
        p = lambda_ode_solve(1, 20.0, T, A=A)
        win = (T - 1e-3, T)
        ratio = fit_scaling_law(p.t, p.lam, T, win).a / fit_scaling_law(ref.t, ref.lam, T, win).a
        assert ratio == pytest.approx(A * A, rel=1e-3)


def test_band_error_carries_time():
    with pytest.raises(BandError) as exc:
        lambda_ode_solve(1, 100.0, 0.5)
    assert 0.0 <= exc.value.t < 0.5


def test_solver_input_errors():
    with pytest.raises(ValueError):
        lambda_ode_solve(1, 20.0, 1.5)
    with pytest.raises(ValueError):
        lambda_ode_solve(1, 20.0, 0.5, A=1.0)


def test_fit_recovers_exact_power_law():
    T = 0.7
    t = np.linspace(0.0, T * 0.999, 50)
    fit = fit_scaling_law(t, 0.3 * (T - t) ** 4.5, T)
    assert fit.a == pytest.approx(0.3, rel=1e-10)
    assert fit.q == pytest.approx(4.5, rel=1e-10)
    assert fit.fit_residual < 1e-10
    with pytest.raises(WindowError):
        fit_scaling_law(t, 0.3 * (T - t) ** 4.5, T, (0.0, 0.05))


@pytest.mark.parametrize("l", [1, 2, 3])
def test_time_change_exact_power_law(l):
    T, a = 0.5, 0.1
    tc = time_change(power_law(a, l, T), T, l, a)
    m = 4 * l + 3
    exact = (tc.sigma ** (-m) - T ** (-m)) / (m * a**4)
    # lambda is evaluated at t = T - sigma, which carries ~eps T / sigma relative error
    assert np.allclose(tc.s, exact, rtol=1e-8, atol=0)
    assert np.all(np.diff(tc.s) > 0) and tc.s[-1] > 1e30
    assert tc.hypothesis.all()
    assert tc.holds and tc.violation_t is None
    # the printed bound with the factors swapped fails for large s
    assert not tc.printed_holds and tc.printed_violation_t is not None


def test_time_change_of_ode_path(paths):
    for l, p in paths.items():
        tc = time_change(p, p.T, l, p.constants.alpha_l)
        assert tc.hypothesis.all() and tc.holds


@pytest.mark.parametrize("l", [1, 2])
def test_extreme_outer_correction_widens_band_by_order_delta0(l):
    from heatblowup.ansatz import EnvelopeW

    T = 0.5
    ks = []
    for d0 in (0.05, 0.1):
        p = lambda_ode_solve(l, 20.0, T, EnvelopeW(l, T, d0))
        sig = T - p.t
        dev = np.abs(p.lam / (p.constants.alpha_l**2 * sig ** (2 * l + 2)) - 1.0)
        ks.append(np.max(dev / (d0 + sig / 20.0**2)))
        assert dev.max() > 0.1 * d0
    assert max(ks) < 4.0
    assert ks[0] == pytest.approx(ks[1], rel=0.1)
