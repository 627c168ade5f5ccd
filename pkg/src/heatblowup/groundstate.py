"""Ground state of the 5-D energy-critical heat equation and its zero mode.

``Q(r) = (1 + r^2/15)^(-3/2)`` solves ``Q'' + (4/r) Q' + Q^(7/3) = 0``.  The
linearization ``H = Lap + V`` with ``V = (7/3) Q^(4/3)`` annihilates the
scaling generator ``Lambda Q = (3/2) Q + r Q'``.  Formulas are written for a
general dimension ``n`` (with ``p = (n+2)/(n-2)``); only ``n = 5`` is tested.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad, solve_ivp

from .errors import IntegrationError, ScaleError
from .radial import OMEGA4, RadialGrid

__all__ = [
    "N_DIM",
    "P_EXP",
    "GroundState",
    "GROUND",
    "eval_Q",
    "eval_dQ",
    "eval_V",
    "eval_LambdaQ",
    "eval_dLambdaQ",
    "lambdaq_zero",
    "SecondSolution",
    "gamma_second_solution",
    "norms",
]

N_DIM = 5
P_EXP = 7.0 / 3.0


@dataclass(frozen=True)
class GroundState:
    """Closed-form evaluators for dimension ``n``."""

    n: int = N_DIM

    @property
    def p(self) -> float:
        return (self.n + 2) / (self.n - 2)

    @property
    def _c(self) -> float:
        return float(self.n * (self.n - 2))

    @property
    def _e(self) -> float:
        return (self.n - 2) / 2.0

    def Q(self, r, lam: float = 1.0):
        if np.any(np.asarray(lam) <= 0):
            raise ScaleError("scale must be positive")
        r = np.asarray(r, dtype=float)
        return lam ** (-self._e) * (1.0 + r * r / (self._c * lam * lam)) ** (-self._e)

    def dQ(self, r):
        r = np.asarray(r, dtype=float)
        return -2.0 * self._e / self._c * r * (1.0 + r * r / self._c) ** (-self._e - 1.0)

    def V(self, r):
        r = np.asarray(r, dtype=float)
        # Q^(p-1) = (1 + r^2/c)^(-2) for every n
        return self.p * (1.0 + r * r / self._c) ** (-2.0)

    def LambdaQ(self, r):
        r = np.asarray(r, dtype=float)
        s = r * r / self._c
        return self._e * (1.0 - s) * (1.0 + s) ** (-self._e - 1.0)

    def dLambdaQ(self, r):
        r = np.asarray(r, dtype=float)
        s = r * r / self._c
        ds = 2.0 * r / self._c
        e = self._e
        return e * ds * (-(1.0 + s) ** (-e - 1.0) - (e + 1.0) * (1.0 - s) * (1.0 + s) ** (-e - 2.0))

    def zero_of_LambdaQ(self) -> float:
        return math.sqrt(self._c)


GROUND = GroundState()


def eval_Q(r, lam: float = 1.0):
    """``lam^(-3/2) (1 + r^2/(15 lam^2))^(-3/2)``."""
    return GROUND.Q(r, lam)


def eval_dQ(r):
    return GROUND.dQ(r)


def eval_V(r):
    """``(7/3) Q^(4/3)``."""
    return GROUND.V(r)


def eval_LambdaQ(r):
    """``(3/2) Q + r Q'``."""
    return GROUND.LambdaQ(r)


def eval_dLambdaQ(r):
    return GROUND.dLambdaQ(r)


def lambdaq_zero() -> float:
    """Unique positive zero of ``Lambda Q`` (``sqrt(15)``)."""
    return GROUND.zero_of_LambdaQ()


# ---------------------------------------------------------------------------
# second solution


@dataclass(frozen=True, eq=False)
class SecondSolution:
    """Second solution ``Gamma`` of ``H Z = 0``, singular like ``r^-3`` at 0.

    Normalized so that ``r^4 (LambdaQ Gamma' - Gamma LambdaQ') = 1``.  It is a
    callable rather than a :class:`RadialFn` because it is unbounded at the
    origin.

    Attributes
    ----------
    alpha : float
        Limit of ``Gamma(r)`` as ``r -> inf``.
    origin_coeff : float
        Limit of ``r^3 Gamma(r)`` as ``r -> 0``.
    """

    r_start: float
    r_end: float
    alpha: float
    origin_coeff: float
    _sol: object
    _scale: float

    def _check(self, r):
        if np.any(r < self.r_start) or np.any(r > self.r_end):
            raise ValueError(f"Gamma evaluated outside [{self.r_start}, {self.r_end}]")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        self._check(r)
        return self._scale * self._sol.sol(r)[0]

    def deriv(self, r):
        r = np.asarray(r, dtype=float)
        self._check(r)
        y = self._sol.sol(r)
        return self._scale * y[1] / r**4

    def wronskian(self, r):
        r = np.asarray(r, dtype=float)
        return r**4 * (eval_LambdaQ(r) * self.deriv(r) - self(r) * eval_dLambdaQ(r))

    def on_grid(self, grid: RadialGrid) -> np.ndarray:
        """Samples at the positive nodes of ``grid`` (``nodes[1:]``)."""
        return self(grid.nodes[1:])


def gamma_second_solution(grid: RadialGrid | float = 1.0e4, r0: float = 1.0e-3) -> SecondSolution:
    """Integrate the singular solution outward and Wronskian-normalize it.

    Uses the state ``(Z, r^4 Z')`` so that ``(r^4 Z')' = -r^4 V Z``.  The
    start values come from the two-term Frobenius series
    ``Z = r^-3 (1 + 7 r^2/6)``; the next term is ``O(r^2)`` relative.
    """
    r_far = grid.r_max if isinstance(grid, RadialGrid) else float(grid)
    if r_far < 50.0:
        raise ValueError("grid must reach r >= 50")
    r_far = max(r_far, 1.0e4)
    z0 = r0**-3 * (1.0 + 7.0 / 6.0 * r0 * r0)
    dz0 = -3.0 * r0**-4 - 7.0 / 6.0 * r0**-2

    def rhs(r, y):
        return [y[1] / r**4, -(r**4) * eval_V(r) * y[0]]

    sol = solve_ivp(rhs, (r0, r_far), [z0, r0**4 * dz0], method="DOP853",
                    rtol=1e-12, atol=1e-14, dense_output=True)
    if not sol.success:
        raise IntegrationError(f"second-solution integration failed: {sol.message}")
    w0 = r0**4 * (eval_LambdaQ(r0) * dz0 - z0 * eval_dLambdaQ(r0))
    scale = 1.0 / w0
    # Gamma = alpha (1 + c/r^2 + ...) at infinity: eliminate the r^-2 term
    r1, r2 = r_far / 2.0, r_far
    g1, g2 = scale * sol.sol(r1)[0], scale * sol.sol(r2)[0]
    alpha = (r2 * r2 * g2 - r1 * r1 * g1) / (r2 * r2 - r1 * r1)
    return SecondSolution(r0, r_far, float(alpha), float(scale), sol, scale)


# ---------------------------------------------------------------------------
# norms


def norms() -> tuple[float, float]:
    """``(||Q||_p^p, ||Lambda Q||_2^2)`` over R^5 by adaptive quadrature.

    ``||Q||_p^p = OMEGA4 int Q^(7/3) r^4 dr`` (tail ``~ r^-3``) and
    ``||Lambda Q||_2^2 = OMEGA4 int (Lambda Q)^2 r^4 dr`` (tail ``~ r^-2``).
    """
    p = P_EXP
    kw = dict(epsabs=0.0, epsrel=1e-13, limit=500)
    a1, _ = quad(lambda r: eval_Q(r) ** p * r**4, 0.0, 30.0, **kw)
    a2, _ = quad(lambda r: eval_Q(r) ** p * r**4, 30.0, np.inf, **kw)
    b1, _ = quad(lambda r: eval_LambdaQ(r) ** 2 * r**4, 0.0, 30.0, **kw)
    b2, _ = quad(lambda r: eval_LambdaQ(r) ** 2 * r**4, 30.0, np.inf, **kw)
    return OMEGA4 * (a1 + a2), OMEGA4 * (b1 + b2)
