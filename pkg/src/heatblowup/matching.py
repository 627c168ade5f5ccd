"""Blowup-rate matching: constants, the scale ODE and the time change.

The scale ``lambda = C^2`` is fixed by orthogonality of the inner forcing to
``Lambda Q`` on ``B_8R``.  With ``Theta = A (T-t)^l e_l(x / sqrt(T-t))`` and
``x = C^2 y`` this reads

    dC/dt = -[A (T-t)^l (b0 + sum_k b_k R^2k C^4k (T-t)^-k) + W(C, t)] / (2 d)

where ``b0 = (chi_4R V, Lambda Q)``, ``d = (chi_4R Lambda Q, Lambda Q)``,
``b_k = a_k (chi_4R V (|y|/R)^2k, Lambda Q)`` and
``W = (chi_4R V w(C^2 y, t), Lambda Q)``.

The terminal point ``C(T) = 0`` is degenerate.  Writing ``sigma = T - t``,
``tau = -log sigma`` and ``C = sigma^(l+1) c`` gives

    dc/dtau = (l+1) c - A B(c, sigma) / (2 d) - sigma^-l W / (2 d),

whose fixed point ``c* = A b0 / (2 (l+1) d) = alpha_l`` attracts backward in
``tau``.  The solver seeds at the root of the right-hand side at
``sigma = 1e-6 T`` and integrates backward to ``t = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .cutoff import chi
from .errors import BandError, IntegrationError, WindowError
from .groundstate import eval_LambdaQ, eval_V
from .radial import OMEGA4, gauss_panels
from .selfsimilar import basis_coeffs

__all__ = [
    "MatchingConstants",
    "compute_constants",
    "alpha_closed_form",
    "LambdaPath",
    "lambda_ode_solve",
    "ScalingLaw",
    "fit_scaling_law",
    "TimeChange",
    "time_change",
    "power_law",
]

# seed offset relative to T, so that T = exp(-R) stays admissible
SIGMA_END = 1.0e-6
# ||Q||_p^p and ||Lambda Q||_2^2 in closed form
_QP = 8.0 * math.pi**2 * 15.0**1.5
_LQ2 = 21.0 * math.pi**3 * 15.0**2.5 / 32.0

WFun = Callable[[np.ndarray, float], np.ndarray]


def _ball_rule(R: float, npts: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Gauss rule on ``[0, 8R]`` with ``OMEGA4 r^4`` folded into the weights."""
    edges = np.unique(np.concatenate([
        np.linspace(0.0, 1.0, 9),
        np.geomspace(1.0, 4.0 * R, 64),
        np.linspace(4.0 * R, 8.0 * R, 65),
    ]))
    r, w = gauss_panels(edges, npts)
    return r, OMEGA4 * w * r**4


@dataclass(frozen=True)
class MatchingConstants:
    """Inner products entering the scale ODE.

    Attributes
    ----------
    b0 : float
        ``(chi_4R V, Lambda Q)`` on ``B_8R``; negative.
    denom : float
        ``(chi_4R Lambda Q, Lambda Q)`` on ``B_8R``; positive.
    alpha_l : float
        ``|b0| / (2 (l+1) denom)``.
    b : tuple of float
        ``b_1 .. b_l``.
    """

    l: int
    R: float
    b0: float
    denom: float
    alpha_l: float
    b: tuple


def compute_constants(l: int, R: float) -> MatchingConstants:
    """Quadrature of ``b0``, ``denom`` and ``b_k`` with cutoff ``chi(|y| / 4R)``."""
    if l < 1:
        raise ValueError("l must be at least 1")
    if R < 20:
        raise ValueError("R must be at least 20")
    r, w = _ball_rule(R)
    cut = chi(r / (4.0 * R))
    lq = eval_LambdaQ(r)
    vl = w * cut * eval_V(r) * lq
    b0 = float(vl.sum())
    denom = float((w * cut * lq * lq).sum())
    a = basis_coeffs(l).float_coeffs
    b = tuple(float(a[k] * (vl * (r / R) ** (2 * k)).sum()) for k in range(1, l + 1))
    return MatchingConstants(l, float(R), b0, denom, -b0 / (2.0 * (l + 1) * denom), b)


def alpha_closed_form(l: int) -> float:
    """``R -> inf`` limit ``3 ||Q||_p^p / (4 (l+1) ||Lambda Q||_2^2)``."""
    return 3.0 * _QP / (4.0 * (l + 1) * _LQ2)


@dataclass(frozen=True, eq=False)
class LambdaPath:
    """Solution of the scale ODE on ``[0, T]``.

    Callable as ``path(t) -> lambda(t)``.  ``t``, ``lam`` hold samples on a
    grid uniform in ``log(T - t)``.
    """

    l: int
    R: float
    T: float
    A: float
    constants: MatchingConstants
    t: np.ndarray
    lam: np.ndarray
    c_end: float
    sigma_end: float
    _sol: object
    _rhs: Callable

    def _c(self, t):
        t = np.asarray(t, dtype=float)
        sig = self.T - t
        late = sig <= self.sigma_end
        tau = -np.log(np.where(late, self.sigma_end, sig))
        return np.where(late, self.c_end, self._sol.sol(tau.ravel())[0].reshape(tau.shape)), sig

    def C(self, t):
        c, sig = self._c(t)
        return np.where(sig > 0, np.maximum(sig, 0.0) ** (self.l + 1) * c, 0.0)

    def __call__(self, t):
        return self.C(t) ** 2

    def deriv(self, t):
        """``d lambda / dt = 2 C dC/dt`` with ``dC/dt = -sigma^l ((l+1) c - dc/dtau)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        c, sig = self._c(t)
        dc = np.array([self._rhs(-math.log(s), [ci])[0] if s > 0 else 0.0 for s, ci in zip(sig, c)])
        sp = np.maximum(sig, 0.0)
        dC = -(sp**self.l) * ((self.l + 1) * c - dc)
        return 2.0 * sp ** (self.l + 1) * c * dC

    def rhs_C(self, t: float, C: float) -> float:
        """Right-hand side of the unscaled ODE ``dC/dt`` (for round-trip checks)."""
        sig = self.T - t
        c = C / sig ** (self.l + 1)
        dc = self._rhs(-math.log(sig), [c])[0]
        return -(sig**self.l) * ((self.l + 1) * c - dc)


def lambda_ode_solve(
    l: int,
    R: float,
    T: float,
    w_tilde: WFun | None = None,
    *,
    A: float = -1.0,
    drop_bk: bool = False,
    n_samples: int = 2000,
    constants: MatchingConstants | None = None,
) -> LambdaPath:
    """Integrate the scale ODE backward from ``C(T) = 0``.

    Parameters
    ----------
    w_tilde : callable ``(x, t) -> values`` or None
        Outer correction evaluated at ``|x|``; None means zero.
    A : float
        Amplitude of the caloric term; must be negative.
    drop_bk : bool
        Drop the ``b_k`` terms, which makes ``C = alpha_l (T-t)^(l+1)`` exact.

    Raises
    ------
    BandError
        If ``C`` leaves ``0 <= C <= sqrt(T-t) / R``; carries the time.
    """
    if not 0.0 < T < 1.0:
        raise ValueError("T must lie in (0, 1)")
    if A >= 0:
        raise ValueError("A must be negative")
    k = constants or compute_constants(l, R)
    d2 = 2.0 * k.denom
    bk = () if drop_bk else k.b
    r_q, w_q = _ball_rule(R)
    wq = w_q * chi(r_q / (4.0 * R)) * eval_V(r_q) * eval_LambdaQ(r_q)
    m = 4 * l + 3

    def big_b(c, sig):
        s = k.b0
        for j, b in enumerate(bk, start=1):
            s += b * R ** (2 * j) * c ** (4 * j) * sig ** (j * m)
        return s

    def rhs(tau, y):
        c = y[0]
        sig = math.exp(-tau)
        out = (l + 1) * c - A * big_b(c, sig) / d2
        if w_tilde is not None:
            t = T - sig
            C = sig ** (l + 1) * c
            W = float(np.dot(wq, w_tilde(C * C * r_q, t)))
            out -= sig ** (-l) * W / d2
        return [out]

    sigma_end = SIGMA_END * T
    tau_end = -math.log(sigma_end)
    tau0 = -math.log(T)
    c_star = A * k.b0 / ((l + 1) * d2)
    c_end = brentq(lambda c: rhs(tau_end, [c])[0], 0.5 * c_star, 2.0 * c_star, xtol=1e-15, rtol=1e-15)
    sol = solve_ivp(rhs, (tau_end, tau0), [c_end], method="DOP853", rtol=1e-12, atol=1e-15, dense_output=True)
    if not sol.success:
        raise IntegrationError(f"scale ODE failed: {sol.message}")
    tau = np.linspace(tau0, tau_end, n_samples)
    sig = np.exp(-tau)
    C = sig ** (l + 1) * sol.sol(tau)[0]
    bad = np.nonzero((C < 0) | (C > np.sqrt(sig) / R))[0]
    if bad.size:
        t_bad = float(T - sig[bad[0]])
        raise BandError(f"C left the band 0 <= C <= sqrt(T-t)/R at t = {t_bad:.6g}", t_bad)
    return LambdaPath(l, float(R), float(T), float(A), k, T - sig, C * C, float(c_end), sigma_end, sol, rhs)


@dataclass(frozen=True)
class ScalingLaw:
    """``lambda ~ a (T - t)^q`` with the max relative deviation on the window."""

    a: float
    T: float
    q: float
    fit_residual: float


def fit_scaling_law(t, lam, T: float, window: tuple[float, float] | None = None) -> ScalingLaw:
    """Least-squares fit of ``log lambda`` against ``log(T - t)``."""
    t = np.asarray(t, dtype=float)
    lam = np.asarray(lam, dtype=float)
    sel = np.ones_like(t, dtype=bool) if window is None else (t >= window[0]) & (t <= window[1])
    sel &= t < T
    if np.count_nonzero(sel) < 8:
        raise WindowError("fit window holds fewer than 8 samples")
    if np.any(lam[sel] <= 0):
        raise ValueError("lambda must be positive on the window")
    x = np.log(T - t[sel])
    y = np.log(lam[sel])
    q, loga = np.polyfit(x, y, 1)
    a = math.exp(loga)
    res = float(np.max(np.abs(lam[sel] / (a * np.exp(q * x)) - 1.0)))
    return ScalingLaw(a, float(T), float(q), res)


def power_law(alpha: float, l: int, T: float) -> Callable:
    """``t -> alpha^2 (T - t)^(2l+2)``."""
    return lambda t: alpha**2 * (T - np.asarray(t, dtype=float)) ** (2 * l + 2)


@dataclass(frozen=True)
class TimeChange:
    """Time change ``s(t)`` and the two-sided bound on ``lambda`` in terms of ``s``.

    ``lower``, ``upper`` are the bounds implied by the band
    ``alpha^2/2 < lambda/(T-t)^(2l+2) < 2 alpha^2``; ``printed_lower``,
    ``printed_upper`` swap the factors ``4m`` and ``m/4`` and are kept for
    comparison.  ``hypothesis`` marks times where the band held on ``[0, t]``.
    ``sigma = T - t`` is stored separately since ``t`` rounds near ``T``.
    """

    t: np.ndarray
    sigma: np.ndarray
    s: np.ndarray
    lam: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    printed_lower: np.ndarray
    printed_upper: np.ndarray
    hypothesis: np.ndarray
    holds: bool
    violation_t: float | None
    printed_holds: bool
    printed_violation_t: float | None


def _first_violation(t, ok, hyp):
    bad = np.nonzero(hyp & ~ok)[0]
    return (True, None) if bad.size == 0 else (False, float(t[bad[0]]))


def time_change(lam: Callable, T: float, l: int, alpha: float, *, n: int = 4000,
                sigma_min: float | None = None) -> TimeChange:
    """``s(t) = int_0^t lambda^-2`` and the sandwich check.

    Integration runs in ``tau = -log(T - t)``, where the integrand
    ``exp(-tau) / lambda^2`` is close to exponential; each segment is
    integrated exactly for the log-linear interpolant.
    """
    sigma_min = SIGMA_END * T if sigma_min is None else sigma_min
    tau = np.linspace(-math.log(T), -math.log(sigma_min), n)
    sig = np.exp(-tau)
    t = T - sig
    t[0] = 0.0
    lv = np.asarray(lam(t), dtype=float)
    if np.any(lv <= 0):
        raise ValueError("lambda must be positive on (0, T)")
    lg = -tau - 2.0 * np.log(lv)
    d = np.diff(lg)
    h = np.diff(tau)
    ga = np.exp(lg[:-1])
    small = np.abs(d) < 1e-8
    seg = np.where(small, h * ga * (1.0 + 0.5 * d), h * ga * np.expm1(d) / np.where(small, 1.0, d))
    s = np.concatenate(([0.0], np.cumsum(seg)))
    m = 4 * l + 3
    q = (2 * l + 2) / m
    a2, a4 = alpha**2, alpha**4
    base = T ** (-m)
    lower = 0.5 * a2 * (base + 4.0 * m * a4 * s) ** (-q)
    upper = 2.0 * a2 * (base + 0.25 * m * a4 * s) ** (-q)
    p_lower = 0.5 * a2 * (base + 0.25 * m * a4 * s) ** (-q)
    p_upper = 2.0 * a2 * (base + 4.0 * m * a4 * s) ** (-q)
    ref = sig ** (2 * l + 2)
    hyp = np.logical_and.accumulate((0.5 * a2 * ref < lv) & (lv < 2.0 * a2 * ref))
    holds, vt = _first_violation(t, (lower < lv) & (lv < upper), hyp)
    p_holds, p_vt = _first_violation(t, (p_lower < lv) & (lv < p_upper), hyp)
    return TimeChange(t, sig, s, lv, lower, upper, p_lower, p_upper, hyp, holds, vt, p_holds, p_vt)
