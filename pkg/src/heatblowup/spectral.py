"""Radial spectral problems for ``H = Lap + V`` in five dimensions.

* Dirichlet eigenpairs of ``-H psi = mu psi`` on the ball ``B_R`` by shooting.
* The whole-space ground mode ``(mu_1, psi_1)`` by matching to the decaying
  free solution ``exp(-kappa r) r^-2 (1 + 1/(kappa r))`` at a far radius.
* The perturbed profile ``p_M`` solving ``Lap p + (1 - chi_M) V p = 0`` with
  ``p = 1`` on ``[0, M]``, and the barrier ``p`` solving
  ``Lap p + (1 - chi_M) V p + 1/(1 + r) = 0`` on ``B_16R`` with ``p(16R) = 0``.

Eigenfunctions are normalized by ``psi(0) = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .cutoff import chi
from .errors import BracketError, IntegrationError
from .groundstate import eval_V
from .radial import FVLaplacian, RadialFn, RadialGrid

__all__ = [
    "EigenPair",
    "eigen_ball",
    "GroundMode",
    "whole_space_ground",
    "mu2_scaling_exponent",
    "EnvelopeReport",
    "ground_envelope_check",
    "find_M1",
    "PerturbedProfile",
    "perturbed_pM",
    "BarrierProfile",
    "barrier_p",
]

_R0 = 1.0e-4
_NG = 8
_V0 = 7.0 / 3.0
# first two positive zeros of the spherical Bessel function j_1
_J_ZEROS = (4.493409457909064, 7.725251836937707)
_ODE = dict(method="DOP853", rtol=1e-12, atol=1e-300)
# inward runs start from psi(R) = 0, where a vanishing atol stalls step selection
_ODE_IN = dict(method="DOP853", rtol=1e-12, atol=1e-24)


def _v(r: float) -> float:
    q = 1.0 + r * r / 15.0
    return _V0 / (q * q)


def _rhs(mu: float):
    def f(r, y):
        return (y[1], -4.0 / r * y[1] - (_v(r) + mu) * y[0])

    return f


def _start(mu: float, r0: float = _R0):
    # psi = 1 - c r^2 + d r^4 with V = V0 (1 - 2 r^2/15 + ...)
    c = (_V0 + mu) / 10.0
    d = ((_V0 + mu) * c + 2.0 * _V0 / 15.0) / 28.0
    r2 = r0 * r0
    return [1.0 - c * r2 + d * r2 * r2, -2.0 * c * r0 + 4.0 * d * r2 * r0]


def _zero_event(r, y):
    return y[0]


def _outward(mu: float, r_end: float, count: bool = False, dense: bool = False):
    ev = _zero_event if count else None
    sol = solve_ivp(_rhs(mu), (_R0, r_end), _start(mu), events=ev, dense_output=dense, **_ODE)
    if not sol.success:
        raise IntegrationError(f"shooting failed at mu={mu}: {sol.message}")
    return sol


def _count_zeros(mu: float, R: float) -> int:
    sol = _outward(mu, R, count=True)
    return int(np.sum(sol.t_events[0] < R * (1.0 - 1e-9)))


def _shoot_value(mu: float, R: float) -> float:
    return float(_outward(mu, R).y[0, -1])


@dataclass(frozen=True, eq=False)
class EigenPair:
    """Dirichlet eigenpair on ``B_R`` (``R = inf`` for the whole space)."""

    mu: float
    psi: RadialFn
    R: float
    index: int
    zeros: tuple = ()
    exact: Callable | None = None

    def residual(self, n: int = 4001, h: float = 1e-3) -> float:
        """``max |H psi + mu psi| / max |psi|`` on the shooting interpolant.

        Derivatives use a five-point stencil of width ``h`` at ``n`` points of
        ``[h, R - 2h]``; truncation is ``O(h^4)``, roundoff ``O(eps / h^2)``.
        """
        if self.exact is None:
            raise ValueError("pair carries no shooting interpolant")
        r_hi = (self.R if math.isfinite(self.R) else self.psi.grid.r_max) - 2.0 * h
        r = np.linspace(2.0 * h, r_hi, n)
        f = [self.exact(r + k * h) for k in (-2, -1, 0, 1, 2)]
        d1 = (f[0] - 8.0 * f[1] + 8.0 * f[3] - f[4]) / (12.0 * h)
        d2 = (-f[0] + 16.0 * f[1] - 30.0 * f[2] + 16.0 * f[3] - f[4]) / (12.0 * h * h)
        res = d2 + 4.0 / r * d1 + (eval_V(r) + self.mu) * f[2]
        return float(np.max(np.abs(res)) / np.max(np.abs(self.psi.values)))


def _default_grid(R: float) -> RadialGrid:
    return RadialGrid.graded(R, 8192, min(2e-3, R / 8192))


def _glue(out, inw, scale: float, r_m: float, r_end: float):
    """Piecewise evaluator: outward solution up to ``r_m``, scaled inward beyond."""

    def f(r):
        r = np.asarray(r, dtype=float)
        left = r <= r_m
        vals = np.empty_like(r)
        vals[left] = out.sol(np.maximum(r[left], _R0))[0]
        vals[left & (r < _R0)] = 1.0
        vals[~left] = scale * inw.sol(np.minimum(r[~left], r_end))[0]
        return vals

    return f


def _two_sided(mu: float, R: float, r_m: float, grid: RadialGrid):
    out = _outward(mu, r_m, dense=True)
    inw = solve_ivp(_rhs(mu), (R, r_m), [0.0, -1.0], dense_output=True, **_ODE_IN)
    if not inw.success:
        raise IntegrationError(inw.message)
    f = _glue(out, inw, out.y[0, -1] / inw.y[0, -1], r_m, R)
    vals = f(grid.nodes)
    vals[-1] = 0.0
    return vals, f


def _sign_changes(r: np.ndarray, v: np.ndarray, fn: RadialFn) -> tuple:
    idx = np.nonzero(np.sign(v[1:-1]) * np.sign(v[2:]) < 0)[0] + 1
    return tuple(brentq(lambda x: float(fn(x)), r[i], r[i + 1], xtol=1e-14) for i in idx)


def eigen_ball(R: float, k: int, grid: RadialGrid | None = None) -> EigenPair:
    """``k``-th radial Dirichlet eigenpair of ``-H`` on ``B_R`` (``k`` in {1, 2}).

    The oscillation count brackets the eigenvalue (``k - 1`` interior zeros),
    then Brent's method on ``psi(R; mu)`` refines it to ~1e-14 relative.  The
    eigenfunction is assembled from an outward and an inward integration
    matched at an interior radius, which keeps the exponentially decaying
    ground mode free of the growing component.
    """
    if R < 5:
        raise ValueError("R must be at least 5")
    if k not in (1, 2):
        raise ValueError("only k = 1, 2 are supported")
    # below -V(0) the solution is monotone; stepping off -V(0) itself avoids
    # roundoff in V + mu that stalls the step-size control near the origin
    lo, hi = -_V0 - 1.0, (_J_ZEROS[k - 1] / R) ** 2
    c_lo, c_hi = _count_zeros(lo, R), _count_zeros(hi, R)
    if c_lo > k - 1 or c_hi < k:
        raise BracketError(f"zero counts {c_lo}, {c_hi} do not bracket k - 1 = {k - 1}")
    for _ in range(200):
        if c_lo == k - 1 and c_hi == k:
            break
        mid = 0.5 * (lo + hi)
        c = _count_zeros(mid, R)
        if c >= k:
            hi, c_hi = mid, c
        else:
            lo, c_lo = mid, c
    else:
        raise BracketError("oscillation count never isolated the eigenvalue")
    mu = brentq(_shoot_value, lo, hi, args=(R,), xtol=1e-300, rtol=1e-14, maxiter=200)
    grid = grid or _default_grid(R)
    if k == 1 and -mu < _V0:
        r_turn = math.sqrt(15.0 * (math.sqrt(_V0 / -mu) - 1.0)) if mu < 0 else R
        r_m = min(r_turn + 3.0, 0.5 * R)
    else:
        r_m = 0.5 * R
    vals, exact = _two_sided(mu, R, r_m, grid)
    fn = RadialFn(grid, vals)
    return EigenPair(float(mu), fn, float(R), k, _sign_changes(grid.nodes, vals, fn), exact)


# ---------------------------------------------------------------------------
# whole space


def _decaying(mu: float, r: float):
    kap = math.sqrt(-mu)
    e = math.exp(-kap * r)
    phi = e * (r**-2 + r**-3 / kap)
    dphi = -kap * phi + e * (-2.0 * r**-3 - 3.0 * r**-4 / kap)
    return phi, dphi


@dataclass(frozen=True, eq=False)
class GroundMode:
    """Whole-space ground mode; evaluable for every ``r >= 0``."""

    mu: float
    pair: EigenPair
    tail_coeff: float

    @property
    def kappa(self) -> float:
        return math.sqrt(-self.mu)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        inside = r <= self.pair.psi.grid.r_max
        out = np.empty_like(r)
        out[inside] = self.pair.psi(r[inside])
        ro = r[~inside]
        kap = self.kappa
        out[~inside] = self.tail_coeff * np.exp(-kap * ro) * (ro**-2 + ro**-3 / kap)
        return out


def whole_space_ground(r_match: float = 5.0, r_far: float = 60.0) -> GroundMode:
    """Negative eigenvalue and ground mode of ``H`` on R^5.

    The inward solution starts from the exact free decaying solution at
    ``r_far``; the eigenvalue is the lowest root of the Wronskian mismatch
    with the regular outward solution at ``r_match``.
    """

    def mismatch(mu):
        o = _outward(mu, r_match).y[:, -1]
        inw = solve_ivp(_rhs(mu), (r_far, r_match), list(_decaying(mu, r_far)), **_ODE_IN).y[:, -1]
        return (o[0] * inw[1] - o[1] * inw[0]) / math.hypot(*inw)

    scan = np.linspace(-_V0 + 1e-3, -1e-3, 24)
    vals = [mismatch(m) for m in scan]
    for a, b, fa, fb in zip(scan[:-1], scan[1:], vals[:-1], vals[1:]):
        if fa * fb < 0:
            mu = brentq(mismatch, a, b, xtol=1e-300, rtol=1e-14)
            break
    else:
        raise BracketError("no negative eigenvalue found")
    grid = RadialGrid.graded(r_far, 8192, 2e-3)
    r_m = min(math.sqrt(15.0 * (math.sqrt(_V0 / -mu) - 1.0)) + 3.0, 0.5 * r_far)
    out = _outward(mu, r_m, dense=True)
    phi, dphi = _decaying(mu, r_far)
    inw = solve_ivp(_rhs(mu), (r_far, r_m), [phi, dphi], dense_output=True, **_ODE_IN)
    scale = out.y[0, -1] / inw.y[0, -1]
    exact = _glue(out, inw, scale, r_m, r_far)
    pair = EigenPair(float(mu), RadialFn(grid, exact(grid.nodes)), math.inf, 1, (), exact)
    return GroundMode(float(mu), pair, float(scale))


# ---------------------------------------------------------------------------
# sweeps and envelopes


def mu2_scaling_exponent(R_list: Sequence[float]) -> float:
    """Least-squares slope of ``log mu_2^(R)`` against ``log R``."""
    R = np.asarray(R_list, dtype=float)
    if R.size < 4:
        raise ValueError("need at least 4 radii")
    if R.max() < 160:
        raise ValueError("largest radius must be at least 160")
    ratios = R[1:] / R[:-1]
    if np.any(np.abs(ratios / ratios[0] - 1.0) > 1e-9):
        raise ValueError("radii must form a geometric sequence")
    mu2 = np.array([eigen_ball(r, 2).mu for r in R])
    if np.any(mu2 <= 0):
        raise BracketError("second eigenvalue is not positive")
    return float(np.polyfit(np.log(R), np.log(mu2), 1)[0])


@dataclass(frozen=True)
class EnvelopeReport:
    envelope_max: float
    min_interior: float
    positive: bool
    max_ratio_to_whole: float
    kappa: float


def ground_envelope_check(pair: EigenPair, ground: GroundMode | None = None) -> EnvelopeReport:
    """Exponential envelope of a ball ground state against the whole-space decay rate.

    Reports ``max psi (1 + r)^2 exp(kappa r)`` over the nodes, the minimum of
    ``psi`` on ``(0, R - h)`` and ``max psi / psi_1`` against the whole-space
    mode.
    """
    if pair.index != 1:
        raise ValueError("envelope check applies to the ground state")
    ground = ground or whole_space_ground()
    r = pair.psi.grid.nodes
    v = pair.psi.values
    kap = ground.kappa
    env = float(np.max(v * (1.0 + r) ** 2 * np.exp(kap * r)))
    interior = v[:-1]
    ratio = float(np.max(interior / ground(r[:-1])))
    return EnvelopeReport(env, float(interior.min()), bool(interior.min() > 0), ratio, kap)


# ---------------------------------------------------------------------------
# perturbed profile and barrier


def find_M1(r_lo: float = 1.0, r_hi: float = 1.0e4, n_scan: int = 400) -> float:
    """Least ``M`` with ``r^2 V(r) < 2`` for all ``r > M`` (log-grid scan + refine)."""
    r = np.geomspace(r_lo, r_hi, n_scan)
    f = r * r * eval_V(r) - 2.0
    bad = np.nonzero(f >= 0)[0]
    if bad.size == 0:
        return r_lo
    i = bad[-1]
    if i == r.size - 1:
        raise BracketError("tail condition fails on the whole scan window")
    return float(brentq(lambda x: x * x * _v(x) - 2.0, r[i], r[i + 1], xtol=1e-13))


@dataclass(frozen=True, eq=False)
class PerturbedProfile:
    fn: RadialFn
    M: float
    k_inf: float
    sup: float
    max_slope: float


def _pm_solution(M: float, r_max: float):
    def rhs(r, y):
        return (y[1] / r**4, -(r**4) * (1.0 - float(chi(r / M))) * _v(r) * y[0])

    sol = solve_ivp(rhs, (M, r_max), [1.0, 0.0], dense_output=True, method="DOP853", rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise IntegrationError(sol.message)
    return sol


def perturbed_pM(M: float, r_max: float = 1.0e4, N: int = 4096) -> PerturbedProfile:
    """``p_M`` on ``[0, r_max]`` with bounds ``inf``, ``sup`` and the largest slope."""
    if M < 5:
        raise ValueError("M must be at least 5")
    sol = _pm_solution(M, r_max)
    grid = RadialGrid.sinh(r_max, N, max(1.0, math.log(r_max / M) + 2.0))
    r = grid.nodes
    vals = np.ones_like(r)
    out = r > M
    y = sol.sol(r[out])
    vals[out] = y[0]
    slope = np.zeros_like(r)
    slope[out] = y[1] / r[out] ** 4
    return PerturbedProfile(RadialFn(grid, vals), float(M), float(vals.min()), float(vals.max()), float(slope.max()))


@dataclass(frozen=True, eq=False)
class BarrierProfile:
    """Barrier on ``[0, 16R]`` with ``k1 R <= p <= k2 R`` on ``(0, 8R]``.

    ``residual`` is the max FV residual on ``[1, 16R)``, which converges as
    ``O(h^2)``.  ``residual_origin`` covers ``[0, 1)``: the forcing gives ``p``
    an ``r^3`` term, for which any second-order radial stencil has ``O(h)``
    truncation in the first few cells.
    """

    fn: RadialFn
    M: float
    R: float
    k1: float
    k2: float
    residual: float
    residual_origin: float


def barrier_p(M: float, R: float, N: int = 8192) -> BarrierProfile:
    """Nested-quadrature barrier and its finite-volume PDE residual.

    Both integrals use 8-point Gauss-Legendre per grid cell; the inner one is
    accumulated exactly up to each Gauss point of the outer one.

    ``p(r) = p1(r) int_r^16R dr1 / (p1^2 r1^4) int_0^r1 p1 r2^4/(1 + r2) dr2``
    with ``p1 = p_M``.
    """
    if R < 20:
        raise ValueError("R must be at least 20")
    L = 16.0 * R
    grid = RadialGrid.sinh(L, N, 3.0)
    r = grid.nodes
    sol = _pm_solution(M, max(L, M * 1.0001))

    def p1(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > M, sol.sol(np.maximum(x, M).ravel())[0].reshape(x.shape), 1.0)

    t, w = leggauss(_NG)

    def f_in(x):
        return p1(x) * x**4 / (1.0 + x)

    def cellwise(a, b):
        # Gauss-Legendre of f_in on each [a_i, b_i]
        x = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * t
        return 0.5 * (b - a) * (f_in(x) * w).sum(axis=1)

    # inner(r) = int_0^r f_in at the nodes, then at the Gauss points of each cell
    a, b = r[:-1], r[1:]
    inner = np.concatenate(([0.0], np.cumsum(cellwise(a, b))))
    xg = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * t
    inner_g = inner[:-1, None] + cellwise(np.repeat(a, _NG), xg.ravel()).reshape(xg.shape)
    outer_cell = 0.5 * (b - a) * (inner_g / (p1(xg) ** 2 * xg**4) * w).sum(axis=1)
    tail = np.concatenate((np.cumsum(outer_cell[::-1])[::-1], [0.0]))
    p = p1(r) * tail
    p[-1] = 0.0
    fv = FVLaplacian(grid)
    # the FV operator yields dual-cell averages, so the forcing is averaged too
    edges = np.concatenate(([0.0], 0.5 * (a + b), [r[-1]]))
    xs = 0.5 * (edges[:-1] + edges[1:])[:, None] + 0.5 * np.diff(edges)[:, None] * t
    src = 0.5 * np.diff(edges) * (xs**4 / (1.0 + xs) * w).sum(axis=1) / fv.vol
    res = fv.apply(p) + (1.0 - chi(r / M)) * eval_V(r) * p + src
    band = (r > 0) & (r <= 8.0 * R)
    ratio = p[band] / R
    near = r < 1.0
    away = ~near
    away[-1] = False
    return BarrierProfile(RadialFn(grid, p), float(M), float(R), float(ratio.min()), float(ratio.max()),
                          float(np.abs(res[away]).max()), float(np.abs(res[near]).max()))
