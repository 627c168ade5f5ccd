import math

import numpy as np
import pytest

from heatblowup.ansatz import AnsatzState, FrozenScale
from heatblowup.errors import IntegrationError, ResolutionError
from heatblowup.evolve import (
    DtControl,
    EvolveConfig,
    ansatz_shorttime_run,
    evolve_heat,
    evolve_inner_linear,
    evolve_nonlinear,
    inner_operator,
)
from heatblowup.groundstate import eval_Q
from heatblowup.matching import lambda_ode_solve
from heatblowup.radial import RadialGrid
from heatblowup.selfsimilar import CaloricFn, basis_coeffs, caloric_eval, semigroup_apply
from heatblowup.spectral import eigen_ball

FLAT = EvolveConfig(r_max=10.0, N=64, grading=("uniform",), far_bc="neumann")
QCFG = EvolveConfig(r_max=20.0, N=2048, grading=("graded", 2e-6), far_bc="matched-decay")


def test_config_validation():
    with pytest.raises(ValueError):
        EvolveConfig(r_max=5.0)
    with pytest.raises(ValueError):
        EvolveConfig(blowup_threshold=1e3)
    with pytest.raises(ValueError):
        EvolveConfig(far_bc="robin")
    with pytest.raises(ValueError):
        EvolveConfig(grading=("spiral",)).grid()


def test_flat_data_follows_the_ode():
    tr = evolve_nonlinear(lambda r: np.ones_like(r), FLAT, save_times=[0.5, 0.7])
    d = tr.diagnostics
    assert tr.blew_up
    assert abs(d.T_est - 0.75) < 1e-3
    assert abs(d.exponent - 0.75) < 0.01
    assert d.type_flag == "I"
    for t, v in tr.snapshots:
        exact = ((4.0 / 3.0) * (0.75 - t)) ** -0.75
        assert np.allclose(v, exact, rtol=1e-3)
        assert np.ptp(v) < 1e-12 * exact


def test_ground_state_is_stationary():
    tr = evolve_nonlinear(eval_Q, QCFG, 1.0)
    assert not tr.blew_up and tr.diagnostics.type_flag == "none"
    assert tr.t[-1] == 1.0
    assert np.max(np.abs(tr.final - eval_Q(tr.grid.nodes))) < 1e-4


def test_supercritical_ground_state_perturbation_is_type_one():
    seen = []
    tr = evolve_nonlinear(lambda r: 1.2 * eval_Q(r), QCFG, sink=seen.append)
    d = tr.diagnostics
    assert tr.blew_up and d.type_flag == "I"
    assert abs(d.exponent - 0.75) < 0.05
    assert len(seen) == tr.steps and len(seen[-1]) == 4
    t, umax, lam, u0 = seen[-1]
    assert umax >= QCFG.blowup_threshold and lam == pytest.approx(abs(u0) ** (-2 / 3))


def test_step_collapse_raises():
    cfg = EvolveConfig(r_max=10.0, N=64, grading=("uniform",), far_bc="neumann",
                       dt_ctrl=DtControl(dt_min=1e-3))
    with pytest.raises(IntegrationError):
        evolve_nonlinear(lambda r: np.ones_like(r), cfg)


def test_deterministic_trajectories():
    a = evolve_nonlinear(lambda r: 1.2 * eval_Q(r), QCFG, 0.5)
    b = evolve_nonlinear(lambda r: 1.2 * eval_Q(r), QCFG, 0.5)
    assert np.array_equal(a.final, b.final) and np.array_equal(a.t, b.t)


def test_heat_constant_stays():
    tr = evolve_heat(lambda r: np.ones_like(r), FLAT, 1.0)
    assert np.max(np.abs(tr.final - 1.0)) < 1e-13


def _caloric_run(l, N, horizon=0.1, T=1.0):
    c = CaloricFn(l, 1.0, T)
    cfg = EvolveConfig(r_max=10.0, N=N, grading=("uniform",), dt_ctrl=DtControl(dt_max=1e-4))
    tr = evolve_heat(lambda r: caloric_eval(c, r, 0.0), cfg, horizon,
                     boundary=lambda t: float(caloric_eval(c, 10.0, t)))
    return tr, c


@pytest.mark.parametrize("l", [1, 2, 3])
def test_heat_reproduces_caloric_functions(l):
    tr, c = _caloric_run(l, 256)
    r = tr.grid.nodes
    exact = caloric_eval(c, r, 0.1)
    clean = r < 10.0 - 6.0 * math.sqrt(0.1)
    assert np.max(np.abs(tr.final - exact)[clean]) < 1e-4 * max(1.0, np.max(np.abs(exact[clean])))


def test_heat_second_order_in_space():
    errs = []
    for N in (64, 128, 256):
        tr, c = _caloric_run(2, N)
        errs.append(np.max(np.abs(tr.final - caloric_eval(c, tr.grid.nodes, 0.1))))
    assert errs[0] / errs[1] >= 3.5 and errs[1] / errs[2] >= 3.5
    # quadratic data is reproduced exactly by the finite-volume stencil
    tr, c = _caloric_run(1, 64)
    assert np.max(np.abs(tr.final - caloric_eval(c, tr.grid.nodes, 0.1))) < 1e-10


def test_heat_matches_semigroup():
    l, t = 2, 0.3
    e = basis_coeffs(l)
    cfg = EvolveConfig(r_max=12.0, N=512, grading=("uniform",), dt_ctrl=DtControl(dt_max=1e-4))
    c = CaloricFn(l, 1.0, 1.0)
    tr = evolve_heat(lambda r: e(r), cfg, t, boundary=lambda s: float(caloric_eval(c, 12.0, s)))
    idx = np.arange(0, 257, 16)
    z = tr.grid.nodes[idx] / math.sqrt(1.0 - t)
    sg = semigroup_apply(e, -math.log(1.0 - t), z)
    assert np.max(np.abs(tr.final[idx] - sg)) < 1e-4 * max(1.0, np.max(np.abs(sg)))


def test_heat_maximum_principle_every_step():
    cfg = EvolveConfig(r_max=10.0, N=256, grading=("uniform",), dt_ctrl=DtControl(dt_max=1e-2))
    times = np.linspace(0.0, 1.0, 101)
    tr = evolve_heat(lambda r: (r < 1.0).astype(float), cfg, 1.0, save_times=times)
    prev = 1.0
    for _, v in tr.snapshots:
        assert np.min(v) >= 0.0
        assert np.max(v) <= prev + 1e-13
        prev = np.max(v)


@pytest.fixture(scope="module")
def inner_runs():
    R, T = 20.0, 0.5
    st = AnsatzState(1, R, T, lambda_ode_solve(1, R, T))
    return st, {N: evolve_inner_linear(st, N=N) for N in (400, 800)}


def test_inner_zero_problem(inner_runs):
    st, _ = inner_runs
    res = evolve_inner_linear(st, data="zero", forcing=False, n_s=50)
    assert np.all(res.eps == 0.0)


def test_inner_second_mode_decays_at_its_eigenvalue(inner_runs):
    st, _ = inner_runs
    mu2 = eigen_ball(40.0, 2).mu
    nus = []
    for N in (400, 800, 1600):
        H = inner_operator(RadialGrid.uniform(40.0, N))
        nus.append(H.nu[1])
    assert all(nu < 0 for nu in nus)
    errs = [abs(-nu - mu2) for nu in nus]
    assert errs[0] / errs[1] > 3.5 and errs[1] / errs[2] > 3.5
    H = inner_operator(RadialGrid.uniform(40.0, 800))
    psi2 = H.mode(1)
    res = evolve_inner_linear(st, s_horizon=20.0, data=psi2, forcing=False, N=800, n_s=80)
    ratio = res.eps[:, 0] / psi2[0]
    assert np.allclose(ratio, np.exp(H.nu[1] * res.s), rtol=1e-10)


def test_inner_envelope_bounded_and_refinement_stable(inner_runs):
    _, runs = inner_runs
    for res in runs.values():
        assert res.lam_decades >= 2.0
        assert res.stat_ratio < 10.0
        assert not res.escaped
        assert res.unstable[-1] == 0.0
        assert np.all(res.eps[:, -1] == 0.0)
    a, b = runs[400], runs[800]
    assert abs(b.stat.max() / a.stat.max() - 1.0) < 0.2
    assert abs(b.d_in / a.d_in - 1.0) < 0.01


@pytest.fixture(scope="module")
def short_run():
    st = AnsatzState(1, 20.0, 1.0, FrozenScale(0.1))
    return ansatz_shorttime_run(st, (0.0, 0.004))


def test_short_window_drift_sign_and_ablation(short_run):
    rep = short_run
    assert rep.drift < 0 and rep.drift_ode < 0 and rep.sign_ok
    assert rep.ablation_ratio >= 10.0
    assert rep.max_norm_dev < 0.1


def test_short_window_initial_rate_matches_projection(short_run):
    rep = short_run
    slope0 = (rep.lam_mod[1] - rep.lam_mod[0]) / (rep.t[1] - rep.t[0])
    assert slope0 == pytest.approx(rep.drift_pred, rel=0.02)


def test_short_window_resolution_error():
    st = AnsatzState(1, 20.0, 1.0, FrozenScale(1e-3))
    with pytest.raises(ResolutionError):
        ansatz_shorttime_run(st, (0.0, 1e-4))
