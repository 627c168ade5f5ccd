"""Smooth plateau cutoff built from ``exp(-1/s)`` mollifiers.

``chi(xi)`` equals 1 for ``xi <= 1``, 0 for ``xi >= 2`` and is C-infinity in
between.  Derivatives are closed-form, so the chain rule for rescaled cutoffs
(``chi(|y|/R)``, ``chi((T-t)^B |z|)``, ...) never needs finite differences.
"""

from __future__ import annotations

import numpy as np

__all__ = ["chi", "chi_derivs"]


def _f_derivs(s: np.ndarray):
    """Return ``f, f', f''`` for ``f(s) = exp(-1/s)`` (zero for ``s <= 0``)."""
    s = np.asarray(s, dtype=float)
    pos = s > 0
    safe = np.where(pos, s, 1.0)
    f = np.where(pos, np.exp(-1.0 / safe), 0.0)
    f1 = np.where(pos, f / safe**2, 0.0)
    f2 = np.where(pos, f * (1.0 - 2.0 * safe) / safe**4, 0.0)
    return f, f1, f2


def chi_derivs(xi):
    """Cutoff value and first two derivatives at ``xi``.

    Returns
    -------
    (chi, dchi, d2chi) : tuple of ndarray
        Same shape as ``xi``.
    """
    xi = np.asarray(xi, dtype=float)
    a, a1, a2 = _f_derivs(2.0 - xi)
    b, b1, b2 = _f_derivs(xi - 1.0)
    # d/dxi of a(2 - xi) flips sign of odd derivatives
    a1 = -a1
    den = a + b  # strictly positive: at least one of a, b is nonzero
    num1 = a1 * b - a * b1
    c = a / den
    c1 = num1 / den**2
    c2 = (a2 * b - a * b2) / den**2 - 2.0 * num1 * (a1 + b1) / den**3
    return c, c1, c2


def chi(xi):
    """Cutoff value only."""
    return chi_derivs(xi)[0]
