"""Radial grids, sampled radial functions, inner products and the Laplacian.

Every integral carries the surface measure of the unit 4-sphere,
``OMEGA4 = 8 pi^2 / 3``, so that radial integrals equal whole-space
integrals over R^5:

    inner_radial(f, g, r_max) = OMEGA4 * int_0^r_max f g r^4 dr
    inner_rho(f, g)           = OMEGA4 * int_0^inf  f g exp(-r^2/4) r^4 dr

The radial Laplacian ``f'' + (4/r) f'`` is discretized in conservative
finite-volume form.  On each dual cell ``[r_{i-1/2}, r_{i+1/2}]``

    vol_i * (Lap f)_i = c_{i+1/2} (f_{i+1} - f_i) - c_{i-1/2} (f_i - f_{i-1}),
    c_{i+1/2} = r_{i+1/2}^4 / (r_{i+1} - r_i),  vol_i = (r_{i+1/2}^5 - r_{i-1/2}^5)/5,

which is exact for ``r^2``, second order on smooth grids, reduces to
``10 (f_1 - f_0)/h^2`` (the even-extension form ``5 f''(0)``) at the origin,
and yields an M-matrix, so implicit heat steps obey a discrete maximum
principle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import DomainError

__all__ = [
    "OMEGA4",
    "RadialGrid",
    "RadialFn",
    "FVLaplacian",
    "inner_radial",
    "inner_rho",
    "radial_laplacian",
    "gauss_panels",
]

OMEGA4 = 8.0 * math.pi**2 / 3.0

Radial = Union["RadialFn", Callable[[np.ndarray], np.ndarray]]

_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def gauss_panels(edges: np.ndarray, npts: int = 10) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes and weights on consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    t, w = _gauss(npts)
    a, b = edges[:-1, None], edges[1:, None]
    x = 0.5 * (a + b) + 0.5 * (b - a) * t
    wx = 0.5 * (b - a) * w
    return x.ravel(), wx.ravel()


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Strictly increasing radial nodes with ``r_0 = 0`` and ``N >= 16``.

    ``stretch`` records how the nodes were produced, e.g. ``("uniform",)``,
    ``("sinh", beta)`` or ``("geometric", ratio)``.
    """

    nodes: np.ndarray
    stretch: tuple = ("custom",)

    def __post_init__(self):
        r = np.array(self.nodes, dtype=float)
        if r.ndim != 1 or r.size < 17:
            raise ValueError("a radial grid needs at least 17 nodes (N >= 16)")
        if r[0] != 0.0:
            raise ValueError("first node must be r = 0")
        if not np.all(np.diff(r) > 0):
            raise ValueError("nodes must be strictly increasing")
        r.setflags(write=False)
        object.__setattr__(self, "nodes", r)

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    @property
    def r_max(self) -> float:
        return float(self.nodes[-1])

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @classmethod
    def uniform(cls, r_max: float, N: int) -> "RadialGrid":
        return cls(np.linspace(0.0, r_max, N + 1), ("uniform",))

    @classmethod
    def sinh(cls, r_max: float, N: int, beta: float) -> "RadialGrid":
        """Nodes ``r_max sinh(beta xi)/sinh(beta)`` for uniform ``xi`` in [0, 1].

        Spacing is ~``r_max beta/(N sinh beta)`` at the origin and grows
        roughly in proportion to ``r`` once ``r >> r_max/sinh(beta)``.
        """
        if beta <= 0:
            return cls.uniform(r_max, N)
        xi = np.linspace(0.0, 1.0, N + 1)
        r = r_max * np.sinh(beta * xi) / math.sinh(beta)
        r[-1] = r_max
        return cls(r, ("sinh", float(beta)))

    @classmethod
    def graded(cls, r_max: float, N: int, h0: float) -> "RadialGrid":
        """Sinh grid whose first cell has width ``h0`` (chooses ``beta``)."""
        if h0 * N >= r_max:
            return cls.uniform(r_max, N)

        def first_cell(beta):
            return r_max * math.sinh(beta / N) / math.sinh(beta) - h0

        beta = brentq(first_cell, 1e-8, 700.0, xtol=1e-14)
        return cls.sinh(r_max, N, beta)

    @classmethod
    def tan(cls, r_max: float, N: int, r_core: float) -> "RadialGrid":
        """Nodes ``r_core tan(theta xi)`` with ``theta = atan(r_max/r_core)``.

        Node density is proportional to ``1/(1 + (r/r_core)^2)``: nearly
        uniform inside the core and sparse in algebraic tails.
        """
        theta = math.atan(r_max / r_core)
        r = r_core * np.tan(theta * np.linspace(0.0, 1.0, N + 1))
        r[0] = 0.0
        r[-1] = r_max
        return cls(r, ("tan", float(r_core)))

    @classmethod
    def geometric(cls, r_max: float, N: int, ratio: float) -> "RadialGrid":
        """Cell widths ``h0 ratio**i`` summing to ``r_max``."""
        if ratio == 1.0:
            return cls.uniform(r_max, N)
        h = ratio ** np.arange(N)
        r = np.concatenate([[0.0], np.cumsum(h)])
        r *= r_max / r[-1]
        r[-1] = r_max
        return cls(r, ("geometric", float(ratio)))


# ---------------------------------------------------------------------------
# sampled functions


@dataclass(frozen=True, eq=False)
class RadialFn:
    """Node samples on a :class:`RadialGrid` with monotone cubic interpolation."""

    grid: RadialGrid
    values: np.ndarray
    _interp: PchipInterpolator = field(init=False, repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise ValueError("values must have one sample per node")
        if not np.all(np.isfinite(v)):
            raise ValueError("values must be finite at every node")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "_interp", PchipInterpolator(self.grid.nodes, v, extrapolate=False))

    @classmethod
    def sample(cls, grid: RadialGrid, func: Callable[[np.ndarray], np.ndarray]) -> "RadialFn":
        return cls(grid, np.asarray(func(grid.nodes), dtype=float) * np.ones(grid.nodes.size))

    def _check(self, r: np.ndarray) -> None:
        if np.any(r < 0) or np.any(r > self.grid.r_max * (1 + 1e-12)):
            raise DomainError(f"evaluation outside [0, {self.grid.r_max}]")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        self._check(r)
        rc = np.minimum(r, self.grid.r_max)
        out = self._interp(rc)
        # return stored samples bit-exactly at nodes
        nodes = self.grid.nodes
        idx = np.clip(np.searchsorted(nodes, rc), 0, nodes.size - 1)
        hit = nodes[idx] == rc
        return np.where(hit, self.values[idx], out)

    def deriv(self, r, nu: int = 1):
        r = np.asarray(r, dtype=float)
        self._check(r)
        return self._interp.derivative(nu)(np.minimum(r, self.grid.r_max))

    def __mul__(self, other):
        if isinstance(other, RadialFn):
            if other.grid is not self.grid and not np.array_equal(other.grid.nodes, self.grid.nodes):
                raise ValueError("pointwise product needs a shared grid")
            return RadialFn(self.grid, self.values * other.values)
        return RadialFn(self.grid, self.values * float(other))

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# quadrature


def _product_weights(nodes: np.ndarray, r_end: float, weight, npts: int = 8) -> np.ndarray:
    """Weights ``w`` with ``sum(w * F(nodes)) ~ int_0^r_end weight(r) F(r) dr``.

    ``F`` is replaced on each cell by the cubic through a 4-node stencil
    (centred where possible) and the weighted cell integral is done by
    Gauss-Legendre.  Exact for cubic ``F`` up to the accuracy of the GL rule
    on ``weight * cubic``.
    """
    x = nodes
    n = x.size
    if n < 4:
        raise DomainError("need at least 4 nodes for cubic product rule")
    m = int(np.searchsorted(x, r_end * (1 - 1e-14), side="left"))
    m = max(m, 1)
    a = x[:m]
    b = np.minimum(x[1 : m + 1], r_end)
    j = np.clip(np.arange(m) - 1, 0, n - 4)
    S = j[:, None] + np.arange(4)
    xs = x[S]
    t, w = _gauss(npts)
    q = 0.5 * (a + b)[:, None] + 0.5 * (b - a)[:, None] * t
    wq = 0.5 * (b - a)[:, None] * w * weight(q)
    L = np.ones((m, npts, 4))
    for k in range(4):
        for mm in range(4):
            if mm != k:
                L[:, :, k] *= (q - xs[:, mm, None]) / (xs[:, k, None] - xs[:, mm, None])
    W = np.einsum("mq,mqk->mk", wq, L)
    out = np.zeros(n)
    np.add.at(out, S, W)
    return out


def _as_values(f: Radial, nodes: np.ndarray) -> np.ndarray:
    if isinstance(f, RadialFn):
        if f.grid.nodes is nodes or (f.grid.nodes.size == nodes.size and np.array_equal(f.grid.nodes, nodes)):
            return f.values
        return f(nodes)
    return np.asarray(f(nodes), dtype=float) * np.ones(nodes.size)


def _host_grid(f: Radial, g: Radial) -> RadialGrid | None:
    for h in (f, g):
        if isinstance(h, RadialFn):
            return h.grid
    return None


def _tail(r: np.ndarray, G: np.ndarray) -> float:
    """Extrapolated ``int_{r_N}^inf G dr`` for an algebraically decaying ``G``.

    Model ``G = C r^-k (1 + a r^-2)``: ``k`` from a Richardson step on the
    local exponents over ``[r_N/4, r_N/2]`` and ``[r_N/2, r_N]``, then ``C``
    and ``a`` from the two outer samples.  Raises :class:`DomainError` if the
    tail is not yet algebraic or not integrable.
    """
    rN, GN = r[-1], G[-1]
    if GN == 0.0:
        return 0.0
    i2 = int(np.searchsorted(r, rN / 2))
    i4 = int(np.searchsorted(r, rN / 4))
    r2, r4 = r[i2], r[i4]
    if G[i2] * GN <= 0 or G[i4] * GN <= 0:
        raise DomainError("integrand changes sign in the tail; extend the grid")
    k1 = -math.log(GN / G[i2]) / math.log(rN / r2)
    k2 = -math.log(G[i2] / G[i4]) / math.log(r2 / r4)
    if k1 <= 1.05:
        raise DomainError(f"tail exponent {k1:.3f} is not integrable")
    if abs(k1 - k2) > 0.05 * k1:
        raise DomainError("tail not yet algebraic; extend the grid")
    k = k1 + (k1 - k2) * math.log(rN / r2) / (math.log(r2 / r4) * 3.0)
    # G r^k = C + (C a) r^-2, solved from the samples at r2 and rN
    y2, yN = G[i2] * r2**k, GN * rN**k
    Ca = (y2 - yN) / (r2**-2 - rN**-2)
    C = yN - Ca * rN**-2
    return C * rN ** (1 - k) / (k - 1) + Ca * rN ** (-1 - k) / (k + 1)


def inner_radial(f: Radial, g: Radial, r_max: float | None = None) -> float:
    """``OMEGA4 * int_0^r_max f g r^4 dr``.

    At least one argument should be a :class:`RadialFn`; its grid hosts the
    cubic product rule and the other argument is sampled at its nodes.  With
    two callables an adaptive Gauss-Kronrod rule is used.  ``r_max = inf``
    integrates to the end of the grid and adds an extrapolated algebraic tail.
    """
    grid = _host_grid(f, g)
    if grid is None:
        from scipy.integrate import quad

        if r_max is None:
            raise ValueError("r_max required when neither argument is sampled")
        val, _ = quad(lambda r: float(f(np.array(r)) * g(np.array(r))) * r**4, 0.0, r_max,
                      epsabs=0.0, epsrel=1e-13, limit=400)
        return OMEGA4 * val
    for h in (f, g):
        if isinstance(h, RadialFn) and r_max is not None and math.isfinite(r_max):
            if h.grid.r_max < r_max * (1 - 1e-12):
                raise DomainError(f"grid ends at {h.grid.r_max} < r_max = {r_max}")
    nodes = grid.nodes
    F = _as_values(f, nodes) * _as_values(g, nodes)
    if r_max is None or not math.isfinite(r_max):
        r_end = grid.r_max
    else:
        r_end = r_max
    w = _product_weights(nodes, r_end, lambda r: r**4)
    val = float(w @ F)
    if r_max is not None and not math.isfinite(r_max):
        val += _tail(nodes, F * nodes**4)
    return OMEGA4 * val


_RHO_MIN_ZMAX = 30.0


def inner_rho(f: Radial, g: Radial, z_max: float | None = None) -> float:
    """Gaussian-weighted pairing ``OMEGA4 * int f g exp(-r^2/4) r^4 dr``.

    Sampled functions must cover ``[0, 30]`` (the weight is below 1e-97 there
    relative to its peak region).  Callables are evaluated directly at
    composite Gauss-Legendre nodes on ``[0, z_max]`` (default 40).
    """

    def weight(r):
        return r**4 * np.exp(-0.25 * r * r)

    grid = _host_grid(f, g)
    if grid is None:
        z_end = 40.0 if z_max is None else float(z_max)
        if z_end < _RHO_MIN_ZMAX:
            raise DomainError("z_max must be >= 30")
        x, wx = gauss_panels(np.linspace(0.0, z_end, 81), 12)
        F = np.asarray(f(x), dtype=float) * np.asarray(g(x), dtype=float)
        return OMEGA4 * float(np.sum(wx * weight(x) * F))
    cover = min(h.grid.r_max for h in (f, g) if isinstance(h, RadialFn))
    if cover < _RHO_MIN_ZMAX or (z_max is not None and z_max < _RHO_MIN_ZMAX):
        raise DomainError("Gaussian pairing needs functions on [0, z_max] with z_max >= 30")
    nodes = grid.nodes
    F = _as_values(f, nodes) * _as_values(g, nodes)
    w = _product_weights(nodes, min(grid.r_max, 60.0), weight)
    return OMEGA4 * float(w @ F)


# ---------------------------------------------------------------------------
# Laplacian


class FVLaplacian:
    """Conservative radial Laplacian on a grid (see module docstring).

    Attributes
    ----------
    vol : ndarray
        Dual-cell volumes (without OMEGA4); the last cell is the half cell
        ``[r_{N-1/2}, r_N]`` used by the zero-flux (Neumann) closure.
    cond : ndarray
        Face conductances ``c_{i+1/2}``, length ``N``.
    """

    def __init__(self, grid: RadialGrid):
        r = grid.nodes
        self.grid = grid
        h = np.diff(r)
        rm = 0.5 * (r[1:] + r[:-1])
        edges = np.concatenate([[0.0], rm, [r[-1]]])
        self.vol = (edges[1:] ** 5 - edges[:-1] ** 5) / 5.0
        self.cond = rm**4 / h

    def flux_form(self, f: np.ndarray) -> np.ndarray:
        """``vol * Lap f`` at every node with zero flux through ``r_N``."""
        d = self.cond * np.diff(f)
        out = np.empty_like(f, dtype=float)
        out[0] = d[0]
        out[1:-1] = d[1:] - d[:-1]
        out[-1] = -d[-1]
        return out

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.flux_form(np.asarray(f, dtype=float)) / self.vol

    def tridiag(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(lower, diag, upper)`` of ``Lap`` with the zero-flux last row."""
        c = self.cond
        n = self.vol.size
        diag = np.zeros(n)
        diag[:-1] -= c
        diag[1:] -= c
        lower = c / self.vol[1:]
        upper = c / self.vol[:-1]
        return lower, diag / self.vol, upper


def radial_laplacian(f: RadialFn) -> RadialFn:
    """Second-order Laplacian ``f'' + (4/r) f'`` of a sampled radial function.

    The last node has no outer neighbour; its value is extrapolated
    quadratically from the three preceding nodes.
    """
    op = FVLaplacian(f.grid)
    lap = op.apply(f.values)
    r = f.grid.nodes
    x = r[-4:-1]
    y = lap[-4:-1]
    lap[-1] = np.polyval(np.polyfit(x - r[-1], y, 2), 0.0)
    return RadialFn(f.grid, lap)
