import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import brentq

from heatblowup.errors import ScaleError
from heatblowup.groundstate import (
    eval_LambdaQ,
    eval_Q,
    eval_V,
    gamma_second_solution,
    lambdaq_zero,
    norms,
)
from heatblowup.radial import RadialFn, RadialGrid, inner_radial, radial_laplacian

# closed forms
QP_NORM = 8 * math.pi**2 * 15**1.5  # 4586.977617488941
LQ_NORM2 = 21 * math.pi**3 * 15**2.5 / 32  # 17731.56556001751
GAMMA_INF = -1.0 / (4.5 * 15**1.5)  # Wronskian with Lambda Q ~ -(3/2) 15^(3/2) r^-3


def test_q_values():
    assert eval_Q(0.0) == 1.0
    assert eval_Q(0.0, 0.3) == pytest.approx(0.3**-1.5, rel=1e-15)
    assert eval_Q(math.sqrt(15)) == pytest.approx(2**-1.5, rel=1e-15)
    with pytest.raises(ScaleError):
        eval_Q(1.0, 0.0)
    r = np.linspace(0, 50, 501)
    assert np.all(np.diff(eval_Q(r)) < 0)
    assert eval_Q(1e6) * 1e18 == pytest.approx(15**1.5, rel=1e-9)


@given(st.floats(0, 1e3), st.floats(1e-4, 1e2))
@settings(max_examples=100, deadline=None)
def test_q_scaling_covariance(r, lam):
    assert eval_Q(r, lam) == pytest.approx(lam**-1.5 * eval_Q(r / lam), rel=1e-13)


def test_potential():
    assert eval_V(0.0) == pytest.approx(7 / 3)
    assert eval_V(math.sqrt(15)) == pytest.approx(7 / 12)
    assert eval_V(1e4) * 1e16 == pytest.approx(525.0, rel=1e-6)
    r = np.linspace(0, 30, 301)
    np.testing.assert_allclose(eval_V(r), 7 / 3 * eval_Q(r) ** (4 / 3), rtol=1e-14)


def test_potential_symbolic_limit():
    sympy = pytest.importorskip("sympy")
    r = sympy.symbols("r", positive=True)
    V = sympy.Rational(7, 3) * (1 + r**2 / 15) ** -2
    assert sympy.limit(r**4 * V, r, sympy.oo) == 525


def test_lambda_q():
    assert eval_LambdaQ(0.0) == pytest.approx(1.5)
    root = brentq(eval_LambdaQ, 1.0, 10.0, xtol=1e-15)
    assert root == pytest.approx(lambdaq_zero(), rel=1e-13) and lambdaq_zero() == pytest.approx(math.sqrt(15))
    r = np.linspace(1e-3, 40, 4001)
    dq = (eval_Q(r + 1e-6) - eval_Q(r - 1e-6)) / 2e-6
    np.testing.assert_allclose(eval_LambdaQ(r), 1.5 * eval_Q(r) + r * dq, atol=1e-9)
    assert np.sum(np.diff(np.sign(eval_LambdaQ(r))) != 0) == 1


def test_stationarity_and_zero_mode_residuals():
    g = RadialGrid.tan(40, 4096, 2.0)
    q = RadialFn.sample(g, eval_Q)
    lq = RadialFn.sample(g, eval_LambdaQ)
    r1 = radial_laplacian(q).values + q.values ** (7 / 3)
    r2 = radial_laplacian(lq).values + eval_V(g.nodes) * lq.values
    assert np.abs(r1[:-1]).max() < 1e-6
    assert np.abs(r2[:-1]).max() < 1e-6


def test_norms_match_closed_forms_and_identity():
    qp, lq2 = norms()
    assert qp > 0 and lq2 > 0
    assert qp == pytest.approx(QP_NORM, rel=1e-10)
    assert lq2 == pytest.approx(LQ_NORM2, rel=1e-10)
    g = RadialGrid.sinh(400, 8192, 6.0)
    pair = inner_radial(RadialFn.sample(g, eval_V), RadialFn.sample(g, eval_LambdaQ), math.inf)
    assert pair == pytest.approx(-1.5 * qp, rel=1e-6)


def test_second_solution():
    gam = gamma_second_solution(RadialGrid.uniform(100, 64))
    np.testing.assert_allclose(gam.wronskian(np.array([1.0, 10.0])), 1.0, atol=1e-8)
    # r^3 Gamma has a finite nonzero limit at the origin
    small = np.array([2e-3, 4e-3, 8e-3])
    lim = small**3 * gam(small)
    assert np.all(np.abs(lim - lim[0]) < 1e-3 * abs(lim[0])) and lim[0] != 0
    assert gam.origin_coeff == pytest.approx(-2 / 9, rel=1e-9)
    assert gam.alpha == pytest.approx(GAMMA_INF, rel=1e-8)
    # independent of Lambda Q: it does not vanish at sqrt(15)
    assert abs(gam(math.sqrt(15))) > 1e-3
    with pytest.raises(ValueError):
        gamma_second_solution(RadialGrid.uniform(40, 64))
