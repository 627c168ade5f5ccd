"""Self-similar operator ``A = Lap_z - (z/2).grad_z`` on radial functions.

Radial eigenfunctions are even polynomials ``e_i(z) = sum_k a_k |z|^(2k)``
with ``-A e_i = i e_i`` and ``a_0 = 1``.  Matching powers of ``|z|^2`` gives

    a_{k+1} = a_k (k - i) / (2 (k+1) (2k + n)),

evaluated in exact rational arithmetic.  The semigroup ``exp(tau A)`` is the
Mehler kernel

    (exp(tau A) f)(z) = (4 pi s)^(-n/2) int exp(-|a z - xi|^2/(4 s)) f(xi) dxi,
    a = exp(-tau/2),  s = 1 - exp(-tau),

whose normalization is fixed by ``exp(tau A) 1 = 1``.  For radial ``f`` in
five dimensions the sphere average reduces it to

    (4 pi s)^(-5/2) 2 pi^2 int_0^inf rho^4 f(rho) exp(-(a r - rho)^2/(4 s)) g(beta) drho,
    g(beta) = 4 exp(-beta) i_1(beta)/beta,  beta = a r rho/(2 s),

with ``i_1`` the modified spherical Bessel function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .errors import GrowthError, QuadratureError, TimeRangeError
from .radial import FVLaplacian, RadialGrid, inner_rho

__all__ = [
    "PolyRadial",
    "basis_coeffs",
    "gaussian_moment",
    "kappa_sq",
    "CaloricFn",
    "caloric_eval",
    "caloric_derivs",
    "semigroup_apply",
    "SemigroupImage",
    "L36Report",
    "bound_check_L36",
    "power_envelope_ratio",
    "ForcedOUResult",
    "forced_ou_solve",
    "forced_ou_refinement",
]

MAX_INDEX = 8


@dataclass(frozen=True)
class PolyRadial:
    """Even polynomial ``sum_k coeffs[k] |z|^(2k)`` with exact coefficients."""

    index: int
    coeffs: tuple
    n: int = 5

    def __post_init__(self):
        c = tuple(Fraction(x) for x in self.coeffs)
        object.__setattr__(self, "coeffs", c)

    @property
    def float_coeffs(self) -> np.ndarray:
        return np.array([float(c) for c in self.coeffs])

    def __call__(self, z):
        z2 = np.asarray(z, dtype=float) ** 2
        out = np.zeros_like(z2)
        for c in reversed(self.float_coeffs):
            out = out * z2 + c
        return out

    def deriv(self, z):
        """Radial derivative ``d/dr``."""
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        for k, c in enumerate(self.float_coeffs):
            if k:
                out = out + 2 * k * c * z ** (2 * k - 1)
        return out

    def apply_A(self) -> tuple:
        """Exact coefficients of ``A e`` (same ``|z|^(2k)`` basis)."""
        a = self.coeffs
        out = [Fraction(0)] * len(a)
        for k, ak in enumerate(a):
            if k:
                # Lap |z|^2k = 2k(2k + n - 2)|z|^(2k-2);  (z/2).grad |z|^2k = k |z|^2k
                out[k - 1] += ak * 2 * k * (2 * k + self.n - 2)
                out[k] -= ak * k
        return tuple(out)

    def eigen_defect(self) -> tuple:
        """Coefficients of ``-A e_i - i e_i`` (all zero for a true eigenfunction)."""
        return tuple(-x - self.index * c for x, c in zip(self.apply_A(), self.coeffs))


def basis_coeffs(i: int, n: int = 5) -> PolyRadial:
    """Radial eigenfunction ``e_i`` of ``-A`` with eigenvalue ``i`` and ``e_i(0) = 1``."""
    if not 0 <= i <= MAX_INDEX:
        raise ValueError(f"index must lie in [0, {MAX_INDEX}]")
    a = [Fraction(1)]
    for k in range(i):
        a.append(a[-1] * Fraction(k - i, 2 * (k + 1) * (2 * k + n)))
    return PolyRadial(i, tuple(a), n)


def gaussian_moment(m: int, n: int = 5) -> tuple[Fraction, float]:
    """``int_{R^n} |z|^(2m) rho dz = q (4 pi)^(n/2)``; returns ``(q, value)``."""
    q = Fraction(4) ** m
    for j in range(m):
        q *= Fraction(n, 2) + j
    return q, float(q) * (4 * math.pi) ** (n / 2)


def kappa_sq(i: int, n: int = 5) -> float:
    """``(e_i, e_i)_rho`` from exact Gaussian moments."""
    e = basis_coeffs(i, n).coeffs
    q = Fraction(0)
    for j, aj in enumerate(e):
        for k, ak in enumerate(e):
            q += aj * ak * gaussian_moment(j + k, n)[0]
    return float(q) * (4 * math.pi) ** (n / 2)


# ---------------------------------------------------------------------------
# caloric functions


@dataclass(frozen=True)
class CaloricFn:
    """``Theta_i(x, t) = A (T - t)^i e_i(x / sqrt(T - t))``."""

    i: int
    A: float
    T: float
    n: int = 5


def _sigma(c: CaloricFn, t):
    t = np.asarray(t, dtype=float)
    if np.any(t >= c.T):
        raise TimeRangeError("caloric functions are evaluated for t < T")
    return c.T - t


def caloric_eval(c: CaloricFn, x, t):
    """Value of the caloric function, written as a polynomial in ``x``."""
    return caloric_derivs(c, x, t)[0]


def caloric_derivs(c: CaloricFn, x, t):
    """``(Theta, Theta_r, Theta_rr, Theta_t)`` in closed form."""
    sig = _sigma(c, t)
    x = np.asarray(x, dtype=float)
    a = basis_coeffs(c.i, c.n).float_coeffs
    th = np.zeros(np.broadcast(x, sig).shape)
    tr = np.zeros_like(th)
    trr = np.zeros_like(th)
    tt = np.zeros_like(th)
    for k, ak in enumerate(a):
        sk = sig ** (c.i - k)
        th = th + ak * sk * x ** (2 * k)
        if k:
            tr = tr + ak * sk * 2 * k * x ** (2 * k - 1)
            trr = trr + ak * sk * 2 * k * (2 * k - 1) * x ** (2 * k - 2)
        if c.i - k:
            tt = tt - ak * (c.i - k) * sig ** (c.i - k - 1) * x ** (2 * k)
    return c.A * th, c.A * tr, c.A * trr, c.A * tt


# ---------------------------------------------------------------------------
# semigroup


def _g(beta: np.ndarray) -> np.ndarray:
    """``4 exp(-beta) i_1(beta)/beta``, stable for all ``beta >= 0``."""
    beta = np.asarray(beta, dtype=float)
    small = beta < 0.1
    b = np.where(small, 1.0, beta)
    big = ((b - 1.0) + (b + 1.0) * np.exp(-2.0 * b)) / (2.0 * b**3)
    b2 = beta * beta
    ser = np.exp(-beta) * (1 / 3 + b2 / 30 + b2 * b2 / 840 + b2**3 / 45360)
    return 4.0 * np.where(small, ser, big)


_WIDTH2 = 180.0  # exp(-45) ~ 3e-20 at the window ends


def _check_growth(theta0) -> None:
    pts = np.array([0.0, 1.0, 10.0, 40.0])
    with np.errstate(over="ignore", invalid="ignore"):
        v = np.asarray(theta0(pts), dtype=float)
    if not np.all(np.isfinite(v)):
        raise GrowthError("initial data is not finite")
    cap = max(1.0, abs(v[0]), abs(v[1])) * 1e3 * (1.0 + pts) ** 20
    if np.any(np.abs(v) > cap):
        raise GrowthError("initial data exceeds the polynomial growth envelope (degree 20)")


def _mehler(theta0, tau: float, r: np.ndarray, panels: int, npts: int) -> np.ndarray:
    a = math.exp(-0.5 * tau)
    s = -math.expm1(-tau)
    c = a * r
    half = math.sqrt(_WIDTH2 * s)
    lo = np.maximum(0.0, c - half)
    hi = c + half
    t, w = np.polynomial.legendre.leggauss(npts)
    edges = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, panels + 1)
    A, B = edges[:, :-1, None], edges[:, 1:, None]
    rho = (0.5 * (A + B) + 0.5 * (B - A) * t).reshape(r.size, -1)
    wr = (0.5 * (B - A) * w).reshape(r.size, -1)
    f = np.asarray(theta0(rho.ravel()), dtype=float).reshape(rho.shape)
    beta = a * rho * r[:, None] / (2.0 * s)
    integrand = rho**4 * f * np.exp(-((c[:, None] - rho) ** 2) / (4.0 * s)) * _g(beta)
    return (4.0 * math.pi * s) ** -2.5 * 2.0 * math.pi**2 * np.sum(wr * integrand, axis=1)


@dataclass(frozen=True, eq=False)
class SemigroupImage:
    """Callable ``z -> (exp(tau A) theta0)(z)``."""

    theta0: Callable
    tau: float
    panels: int = 8
    npts: int = 16
    tol: float = 1e-10

    max_panels: int = 256

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        r = np.abs(z).ravel()
        panels = self.panels
        v1 = _mehler(self.theta0, self.tau, r, panels, self.npts)
        while True:
            panels *= 2
            v2 = _mehler(self.theta0, self.tau, r, panels, self.npts)
            scale = max(np.max(np.abs(v2)), 1e-300)
            if np.max(np.abs(v1 - v2)) <= self.tol * scale:
                return v2.reshape(z.shape)
            if panels >= self.max_panels:
                raise QuadratureError("kernel quadrature did not converge")
            v1 = v2


def semigroup_apply(theta0: Callable, tau: float, z=None, *, tol: float = 1e-10):
    """Apply ``exp(tau A)`` to a radial function of ``|z|``.

    Returns a callable when ``z`` is omitted, otherwise its values at ``z``.
    """
    if not tau > 0:
        raise ValueError("tau must be positive")
    _check_growth(theta0)
    img = SemigroupImage(theta0, float(tau), tol=tol)
    return img if z is None else img(z)


@dataclass(frozen=True)
class L36Report:
    sup_ratio: float
    argmax: tuple
    finite: bool
    norm_rho: float


def bound_check_L36(theta0: Callable, z: np.ndarray, tau: np.ndarray) -> L36Report:
    """Sup over the grid of the Gaussian-envelope ratio for ``exp(tau A) theta0``.

    ratio = |exp(tau A) theta0| (1 - e^-tau)^(5/4) exp(-e^-tau z^2/(4(1 + e^-tau))) / ||theta0||_rho
    """
    nrm = math.sqrt(inner_rho(theta0, theta0))
    z = np.asarray(z, dtype=float)
    best, arg = -1.0, (math.nan, math.nan)
    for tv in np.asarray(tau, dtype=float):
        u = semigroup_apply(theta0, tv, z)
        e = math.exp(-tv)
        ratio = np.abs(u) * (1.0 - e) ** 1.25 * np.exp(-e * z * z / (4.0 * (1.0 + e))) / nrm
        k = int(np.argmax(ratio))
        if ratio[k] > best:
            best, arg = float(ratio[k]), (float(z[k]), float(tv))
    return L36Report(best, arg, bool(np.isfinite(best)), nrm)


def power_envelope_ratio(l: int, z: np.ndarray, tau: np.ndarray) -> float:
    """``sup |exp(tau A)|z|^(2l)| / (1 + e^(-l tau) |z|^(2l))`` over the grid."""
    z = np.asarray(z, dtype=float)
    best = 0.0
    for tv in np.asarray(tau, dtype=float):
        u = semigroup_apply(lambda x: x ** (2 * l), tv, z)
        best = max(best, float(np.max(np.abs(u) / (1.0 + math.exp(-l * tv) * z ** (2 * l)))))
    return best


# ---------------------------------------------------------------------------
# forced Ornstein-Uhlenbeck problem


@dataclass(frozen=True, eq=False)
class ForcedOUResult:
    """Path of ``Phi(z, tau)`` with its envelope statistic.

    ``statistic`` is ``sup Phi / ((1 + |y|^a)^-1 + T1^((gamma - 1/2) a))`` over
    the whole run; ``history`` holds the per-step sup.
    """

    z: np.ndarray
    tau: np.ndarray
    phi: np.ndarray
    statistic: float
    history: np.ndarray
    k1: float
    k2: float


def forced_ou_solve(
    a: float,
    gamma: float,
    lam_fn: Callable[[float], float],
    tau1: float,
    horizon: float = 4.0,
    coeff: float = 1.0,
    n_z: int = 600,
    dtau: float = 0.01,
    z_max: float = 40.0,
    keep_every: int = 10,
) -> ForcedOUResult:
    """Backward-Euler solve of ``Phi_tau = A Phi + coeff e^-tau/lam^2 (1 + |y|^(2+a))^-1``.

    ``y = e^(-tau/2) z / lam`` and ``Phi(tau1) = 0``.  Space is a log-stretched
    grid resolving the inner scale ``lam e^(tau/2)``; diffusion uses the
    conservative radial Laplacian and the outward drift ``z/2`` is upwinded,
    so the step matrix is an M-matrix and ``Phi`` stays nonnegative.
    """
    if a <= 0 or gamma <= 0.5:
        raise ValueError("need a > 0 and gamma > 1/2")
    n_steps = int(round(horizon / dtau))
    taus = tau1 + dtau * np.arange(n_steps + 1)
    lam = np.array([lam_fn(t) for t in taus], dtype=float)
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        raise ValueError("scale path must be positive and finite")
    band = lam * np.exp(gamma * taus)
    k1, k2 = float(band.min()), float(band.max())
    inner = float(np.min(lam * np.exp(0.5 * taus)))
    z_min = min(0.02 * inner, 1e-3)
    z = np.concatenate([[0.0], np.geomspace(z_min, z_max, n_z)])
    grid = RadialGrid(z, ("geometric", (z_max / z_min) ** (1.0 / (n_z - 1))))
    lo, di, up = FVLaplacian(grid).tridiag()
    # upwind drift -(z/2) Phi_z with velocity pointing outward
    h = np.diff(z)
    drift = 0.5 * z[1:] / h
    di = di.copy()
    lo = lo.copy()
    di[1:] -= drift
    lo += drift
    # Dirichlet Phi = 0 at z_max
    m = z.size - 1
    ab = np.zeros((3, m))
    ab[0, 1:] = -dtau * up[: m - 1]
    ab[1, :] = 1.0 - dtau * di[:m]
    ab[2, :-1] = -dtau * lo[: m - 1]
    T1 = math.exp(-tau1)
    floor = T1 ** ((gamma - 0.5) * a)
    phi = np.zeros(z.size)
    hist = np.zeros(n_steps + 1)
    kept_t, kept = [taus[0]], [phi.copy()]
    for k in range(1, n_steps + 1):
        tk, lk = taus[k], lam[k]
        y = math.exp(-0.5 * tk) * z / lk
        force = coeff * math.exp(-tk) / lk**2 / (1.0 + y ** (2.0 + a))
        phi[:m] = solve_banded((1, 1), ab, phi[:m] + dtau * force[:m])
        phi[m] = 0.0
        hist[k] = np.max(phi * ((1.0 + y**a) ** -1 + floor) ** -1)
        if k % keep_every == 0 or k == n_steps:
            kept_t.append(tk)
            kept.append(phi.copy())
    return ForcedOUResult(z, np.array(kept_t), np.array(kept), float(hist.max()), hist, k1, k2)


def forced_ou_refinement(levels: int = 3, **kw) -> tuple[list[float], bool]:
    """Statistic under successive halving of ``dtau`` and doubling of ``n_z``.

    The flag is set when the statistic grows monotonically with every refinement
    by more than 5%, a sign that the envelope is not bounded.
    """
    n_z = kw.pop("n_z", 300)
    dtau = kw.pop("dtau", 0.02)
    stats = []
    for j in range(levels):
        stats.append(forced_ou_solve(n_z=n_z * 2**j, dtau=dtau / 2**j, **kw).statistic)
    growth = [stats[j + 1] > 1.05 * stats[j] for j in range(levels - 1)]
    return stats, bool(all(growth))
