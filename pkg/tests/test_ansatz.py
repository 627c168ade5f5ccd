import math
import warnings

import numpy as np
import pytest

from heatblowup.ansatz import (
    AnsatzState,
    EnvelopeW,
    FrozenScale,
    ResolutionWarning,
    SurrogateEps,
    assemble,
    cutoffs,
    envelope_audit,
    extend_w,
    forcing_G_in,
    forcing_G_out,
    forcing_h_in,
    forcing_h_out,
    full_residual,
    majorant,
    nonlinear_N,
    orthogonality_residual,
    project_G_out,
    region_masks,
    xsigma_sup,
)
from heatblowup.ansatz import _f, _taylor_defect
from heatblowup.errors import EnvelopeError
from heatblowup.groundstate import P_EXP, eval_Q
from heatblowup.matching import lambda_ode_solve

R = 20.0
L = 1
T_C = math.exp(-R)
TAUS = np.linspace(20.5, 33.0, 6)


@pytest.fixture(scope="module")
def coupled():
    path = lambda_ode_solve(L, R, T_C)
    env = EnvelopeW(L, T_C, 0.1)
    full = AnsatzState(L, R, T_C, path, eps=SurrogateEps(R, L, path), w_tilde=env, delta0=0.1)
    bare = AnsatzState(L, R, T_C, path)
    return path, env, full, bare


def _t(tau):
    return T_C - np.exp(-tau)


def test_cutoff_plateaus_and_time_derivative():
    st = AnsatzState(1, R, 0.5, FrozenScale(0.01))
    t = 0.3
    sig = 0.2
    B = st.B
    zb = sig ** (-B)
    x = np.array([0.5, 0.99]) * zb * math.sqrt(sig)
    c = cutoffs(st, t, x)
    assert np.all(c.chi_out == 1.0) and np.all(c.out_r == 0) and np.all(c.out_t == 0)
    c = cutoffs(st, t, np.array([0.5, 0.99]) * R * 0.01)
    assert np.all(c.chi_in == 1.0) and np.all(c.in_r == 0)
    # time derivative of chi_out against a centred difference
    x = np.linspace(1.1, 1.9, 9) * zb * math.sqrt(sig)
    h = 1e-6
    fd = (cutoffs(st, t + h, x).chi_out - cutoffs(st, t - h, x).chi_out) / (2 * h)
    assert np.allclose(cutoffs(st, t, x).out_t, fd, rtol=1e-5, atol=1e-8)


def test_envelope_branches_agree_on_matching_sphere():
    for l in (1, 2, 3):
        env = EnvelopeW(l, 0.5, 0.1)
        for t in (0.0, 0.4, 0.5 - 1e-6):
            ratio = env.branch_ratio(t)
            assert 0.25 <= ratio <= 4.0


def test_extend_w():
    env = EnvelopeW(1, 0.5, 0.1)
    sigma = 0.01
    x = np.geomspace(1e-3, 10.0, 200)
    ts = np.linspace(0.0, 0.5 - 2 * sigma, 20)
    zero = extend_w(lambda x, t: np.zeros_like(x), env, sigma, check=(x, ts))
    assert np.all(zero(x, 0.49) == 0.0)
    ext = extend_w(env, env, sigma, check=(x, ts))
    assert np.allclose(ext(x, 0.2), env(x, 0.2), rtol=1e-15)
    for t in np.linspace(0.5 - 2 * sigma, 0.5 - 1e-9, 40):
        assert np.all(np.abs(ext(x, t)) <= env(x, t) * (1 + 1e-14))
        if t >= 0.5 - sigma:
            assert np.all(ext(x, t) == 0.0)
    assert xsigma_sup(env, env, x, ts) == pytest.approx(0.1, rel=1e-14)
    with pytest.raises(EnvelopeError):
        extend_w(lambda x, t: 2.0 * env(x, t), env, sigma, check=(x, ts))


def test_G_in_trivial_and_orthogonal(coupled):
    st = AnsatzState(1, R, 0.5, FrozenScale(0.1), theta_on=False)
    assert np.all(forcing_G_in(st, 0.2, np.linspace(0, 50, 20)) == 0.0)
    path, _, _, bare = coupled
    for tau in np.linspace(20.1, 33.5, 20):
        assert orthogonality_residual(bare, _t(tau)) < 1e-8


def test_G_in_orthogonal_on_order_one_horizon():
    st = AnsatzState(1, R, 0.5, lambda_ode_solve(1, R, 0.5))
    for t in 0.5 - 0.5 * np.geomspace(1.0, 1e-5, 20) * 0.999:
        assert orthogonality_residual(st, t) < 1e-8


def test_G_in_magnitude_envelope(coupled):
    path, _, full, bare = coupled
    y = np.geomspace(1e-3, 8 * R, 2000)
    gam = bare.gamma
    for st in (bare, full):
        c = [np.max(np.abs(forcing_G_in(st, _t(tau), y)) * (1 + y**3) / path(_t(tau)) ** gam) for tau in TAUS]
        assert max(c) / min(c) < 1.01


def test_h_out_support_and_annulus_bound(coupled):
    _, _, st, _ = coupled
    B = st.B
    consts = []
    for tau in TAUS:
        t = _t(tau)
        sq = math.exp(-0.5 * tau)
        zb = math.exp(B * tau)
        off = np.concatenate([np.linspace(0.01, 1.0, 50), np.linspace(2.0, 5.0, 50)]) * zb
        assert np.all(forcing_h_out(st, t, off * sq) == 0.0)
        z = np.linspace(1.0, 2.0, 2001)[1:-1] * zb
        h = np.abs(forcing_h_out(st, t, z * sq))
        consts.append(np.max(h * math.exp((L - 1 / (2 * L + 2)) * tau) * z ** (-(2 * L + 2))))
    assert max(consts) / min(consts) < 1.01


def test_h_out_is_caloric_defect():
    # h_out = -(d_t - Lap)(Theta chi_out) because Theta is caloric
    st = AnsatzState(1, R, 0.5, FrozenScale(0.01))
    t = 0.3
    zb = 0.2 ** (-st.B) * math.sqrt(0.2)
    errs = []
    for n in (200, 400):
        x = np.linspace(0.8 * zb, 2.2 * zb, n + 1)
        dt = 1e-5

        def tc(tt):
            return assemble(st, tt, x)["theta"]

        ut = (tc(t + dt) - tc(t - dt)) / (2 * dt)
        u = tc(t)
        hx = x[1] - x[0]
        lap = (u[2:] - 2 * u[1:-1] + u[:-2]) / hx**2 + 4 / x[1:-1] * (u[2:] - u[:-2]) / (2 * hx)
        errs.append(np.max(np.abs(-(ut[1:-1] - lap) - forcing_h_out(st, t, x[1:-1]))))
    assert errs[1] < errs[0] / 3.5
    assert errs[1] < 1e-3 * np.max(np.abs(forcing_h_out(st, t, x)))


def test_h_in_trivial_support_and_bound(coupled):
    path, _, full, bare = coupled
    y = np.geomspace(1e-3, 4 * R, 3000)
    assert np.all(forcing_h_in(bare, _t(25.0), y) == 0.0)
    consts = []
    for tau in TAUS:
        t = _t(tau)
        h = np.abs(forcing_h_in(full, t, y))
        inside = y < 2 * R
        assert np.all(h[~inside] == 0.0)
        maj = math.exp(-L * tau) / path(t) ** 2 * R**-0.25 / (1 + y[inside]) ** 2.25
        consts.append(np.max(h[inside] / maj))
    assert max(consts) / min(consts) < 1.01


def test_N_trivial_and_quadratic():
    st = AnsatzState(1, R, 0.5, FrozenScale(0.01), theta_on=False)
    assert np.all(nonlinear_N(st, 0.2, np.linspace(0, 3, 50)) == 0.0)
    lam = 1e-3
    x = np.array([0.5, 1.0, 3.0]) * lam
    q = eval_Q(x, lam)
    phi = np.array([1.0, -2.0, 0.5]) * q
    lead = 0.5 * P_EXP * (P_EXP - 1) * q ** (P_EXP - 2) * phi**2
    errs = [np.max(np.abs(_taylor_defect(q, h * phi) / h**2 / lead - 1)) for h in (1e-2, 1e-3, 1e-4)]
    assert errs[0] > errs[1] > errs[2] and errs[2] < 1e-4
    # series branch agrees with the direct formula where both are accurate
    a = np.full(5, 2.0)
    b = np.array([-0.9, -0.3, 0.1, 0.4, 0.9])
    direct = _f(a + b) - _f(a) - P_EXP * a ** (P_EXP - 1) * b
    assert np.allclose(_taylor_defect(a, b), direct, rtol=1e-12)


def test_N_below_selfsimilar_majorant(coupled):
    _, _, st, _ = coupled
    for tau in TAUS:
        t = _t(tau)
        sq = math.exp(-0.5 * tau)
        z = np.geomspace(1.0, math.exp(L * tau / (2 * L + 2)), 400)[1:]
        ratio = np.abs(nonlinear_N(st, t, z * sq)) / majorant("selfsimilar", st, t, z * sq)
        assert np.max(ratio) < 1.0


def test_G_out_trivial():
    st = AnsatzState(1, R, 0.5, FrozenScale(0.01), theta_on=False)
    g, parts = forcing_G_out(st, 0.2, np.linspace(0, 3, 50), parts=True)
    assert np.all(g == 0.0)
    assert set(parts) == {"h_out", "h_in", "potential", "scaling", "N"}


def test_regions_partition():
    tau = 25.0
    sq = math.exp(-0.5 * tau)
    x = np.geomspace(1e-8, 1e3, 5000)
    m = region_masks(1, tau, x / sq, x)
    total = sum(v.astype(int) for v in m.values())
    assert np.all(total == 1)
    # boundary points go to the inner region
    assert region_masks(1, tau, np.array([1.0]), np.array([sq]))["inner"][0]


def test_envelope_audit_refinement_stable(coupled):
    _, _, st, _ = coupled
    audit = envelope_audit(st, _t(np.linspace(20.5, 33.0, 8)), n=400)
    assert audit.max_change < 0.2
    assert all(0 < c < np.inf for c in audit.constants.values())


def test_projection_decay_and_k_sweep(coupled):
    _, _, full, bare = coupled
    for st in (full, bare):
        sup = []
        for k in range(L + 1):
            vals = [abs(project_G_out(st, _t(tau), k)) * math.exp(2 * L * tau) for tau in TAUS]
            assert vals[-1] <= vals[0]
            sup.append(max(vals))
        assert max(sup) / min(sup) < 10.0
    with pytest.raises(ValueError):
        project_G_out(bare, _t(25.0), L + 1)


def test_decomposition_identity(coupled):
    _, _, st, _ = coupled
    t = _t(25.0)
    x = np.geomspace(1e-12, 10.0, 500)
    c = assemble(st, t, x)
    assert np.array_equal(c["u"], c["Q"] + c["theta"] + c["inner"] + c["w"])
    lam = float(st.lam(t))
    assert np.array_equal(c["Q"], eval_Q(x, lam))
    assert np.array_equal(c["w"], st.w_tilde(x, t))


def test_residual_of_ground_state_is_second_order():
    st = AnsatzState(1, R, 0.5, FrozenScale(1.0), theta_on=False)
    res = []
    for n in (400, 800, 1600):
        r = np.linspace(0.0, 20.0, n + 1)[1:]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ResolutionWarning)
            rep = full_residual(st, [0.1], r, split_stationary=False)
        res.append(np.max(np.abs(rep.field)))
    assert res[0] / res[1] > 3.5 and res[1] / res[2] > 3.5
    assert res[2] < 1e-4


def test_residual_warns_when_unresolved():
    st = AnsatzState(1, R, 0.5, FrozenScale(1.0), theta_on=False)
    with pytest.warns(ResolutionWarning):
        full_residual(st, [0.1], np.linspace(0.0, 20.0, 401)[1:], split_stationary=False)


def test_residual_with_frozen_scale_matches_identity():
    st = AnsatzState(1, R, 0.5, FrozenScale(0.5))
    t = 0.2
    for n in (800, 1600):
        r = np.linspace(0.0, 3.0, n + 1)[1:]
        rep = full_residual(st, [t], r, warn=False)
        c = assemble(st, t, rep.r)
        direct = -forcing_h_out(st, t, rep.r) - (_f(c["u"]) - _f(c["Q"]))
        assert np.max(np.abs(rep.field[0] - direct)) <= np.max(rep.fd_error)
