"""Radial discretization of R^N for N in {2, 3, 4}.

A radial function u(|x|) is sampled on a uniform grid r_j = j h of [0, R].
Integrals use trapezoid-in-measure weights, so that

    integrate(f) = sum_j w_j f(r_j)  ~  s_{N-1} int_0^R f(r) r^{N-1} dr.

The Laplacian is written in flux (finite-volume) form with face coefficients
derived from the same weights, which makes it exactly self-adjoint for the
weighted inner product:

    sum_j w_j (-Lap_h u)_j v_j = <grad u, grad v>_h    whenever v(R) = 0.

That discrete integration by parts is what lets the multiplier formula and
the solved multiplier agree to solver precision, not just to O(h^2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np
import scipy.sparse as sp

from .exceptions import GridError

SUPPORTED_DIMENSIONS = (2, 3, 4)
MIN_NODES = 16


def sphere_measure(N: int) -> float:
    """Surface measure s_{N-1} of the unit sphere in R^N."""
    return 2.0 * pi ** (N / 2.0) / gamma(N / 2.0)


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RadialGrid:
    """Uniform radial grid with quadrature weights carrying the r^{N-1} measure.

    Only ``(N, R, M)`` take part in equality and hashing; the derived arrays
    are read-only.
    """

    N: int
    R: float
    M: int
    r: np.ndarray = field(init=False, repr=False, compare=False)
    h: float = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)
    faces: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.N not in SUPPORTED_DIMENSIONS:
            raise GridError(f"dimension outside {{2,3,4}}: N={self.N} ((H): 2 ≤ N ≤ 4)")
        if not self.R > 0:
            raise GridError(f"truncation radius must be positive, got R={self.R}")
        if self.M < MIN_NODES:
            raise GridError(f"need at least {MIN_NODES} nodes, got M={self.M}")
        N, R, M = self.N, float(self.R), int(self.M)
        r = np.linspace(0.0, R, M)
        h = R / (M - 1)
        s = sphere_measure(N)

        w = h * r ** (N - 1)
        w[-1] *= 0.5
        # exact volume of the half cell [0, h/2]; keeps the origin coupled
        w[0] = (0.5 * h) ** N / N

        # face coefficients chosen so the flux form is exact on r^2
        mid = r[:-1] + 0.5 * h
        faces = N * np.cumsum(w[:-1]) / mid

        object.__setattr__(self, "R", R)
        object.__setattr__(self, "M", M)
        object.__setattr__(self, "r", _readonly(r))
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "weights", _readonly(s * w))
        object.__setattr__(self, "faces", _readonly(s * faces))

    @property
    def sphere(self) -> float:
        return sphere_measure(self.N)

    def stiffness(self) -> sp.csr_matrix:
        """Symmetric M x M matrix K with u @ K @ v = <grad u, grad v>_h."""
        d = self.faces / self.h
        main = np.zeros(self.M)
        main[:-1] += d
        main[1:] += d
        return sp.diags([main, -d, -d], [0, 1, -1], format="csr")

    def field(self, values) -> "RadialField":
        return RadialField(self, values)

    def zeros(self) -> "RadialField":
        return RadialField(self, np.zeros(self.M))

    def sample(self, fn) -> "RadialField":
        """Field with values ``fn(r)`` at the nodes."""
        return RadialField(self, fn(self.r))


def make_grid(N: int, R: float, M: int) -> RadialGrid:
    return RadialGrid(N, R, M)


class RadialField:
    """A radial function sampled on a grid.

    Arithmetic is only defined between fields living on the identical grid.
    """

    __slots__ = ("grid", "values")

    def __init__(self, grid: RadialGrid, values) -> None:
        v = np.array(values, dtype=float)
        if v.shape != (grid.M,):
            raise GridError(f"expected {grid.M} values, got shape {v.shape}")
        v.setflags(write=False)
        self.grid = grid
        self.values = v

    def _coerce(self, other):
        if isinstance(other, RadialField):
            if other.grid != self.grid:
                raise GridError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return RadialField(self.grid, self.values + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return RadialField(self.grid, self.values - self._coerce(other))

    def __rsub__(self, other):
        return RadialField(self.grid, self._coerce(other) - self.values)

    def __mul__(self, other):
        return RadialField(self.grid, self.values * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return RadialField(self.grid, self.values / self._coerce(other))

    def __neg__(self):
        return RadialField(self.grid, -self.values)

    def __pow__(self, k):
        return RadialField(self.grid, self.values**k)

    def positive_part(self) -> "RadialField":
        return RadialField(self.grid, np.maximum(self.values, 0.0))

    def __call__(self, r):
        """Linear interpolation in r (zero beyond R)."""
        return np.interp(r, self.grid.r, self.values, right=0.0)

    def __repr__(self) -> str:
        return f"RadialField(N={self.grid.N}, R={self.grid.R:g}, M={self.grid.M})"


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, RadialField) else np.asarray(u, dtype=float)


def _same_grid(u: RadialField, v: RadialField) -> None:
    if u.grid != v.grid:
        raise GridError("fields live on different grids")


def integrate(f: RadialField) -> float:
    """Integral of the radial function over R^N (truncated at R)."""
    return float(f.grid.weights @ f.values)


def grad_inner(u: RadialField, v: RadialField) -> float:
    """<grad u, grad v>_h using one-sided differences on each cell."""
    _same_grid(u, v)
    g = u.grid
    return float(np.sum(g.faces * np.diff(u.values) * np.diff(v.values)) / g.h)


def grad_norm_sq(u: RadialField) -> float:
    """Discrete Dirichlet energy  int |grad u|^2  (always >= 0)."""
    g = u.grid
    return float(np.sum(g.faces * np.diff(u.values) ** 2) / g.h)


def apply_laplacian(u: RadialField) -> RadialField:
    """Discrete u'' + (N-1)/r u'.

    At the origin this reduces to 2N (u_1 - u_0)/h^2.  The last entry is the
    half-cell balance with no outward flux; PDE solvers replace that row by
    the Dirichlet condition u(R) = 0.
    """
    g = u.grid
    flux = g.faces * np.diff(u.values) / g.h
    div = np.zeros(g.M)
    div[:-1] += flux
    div[1:] -= flux
    return RadialField(g, div / g.weights)


def inner_h1(u: RadialField, v: RadialField) -> float:
    """H^1 inner product  int grad u . grad v + int u v."""
    _same_grid(u, v)
    return grad_inner(u, v) + float(u.grid.weights @ (u.values * v.values))


def h1_norm(u: RadialField) -> float:
    return float(np.sqrt(inner_h1(u, u)))


def l2_norm_sq(u: RadialField) -> float:
    return float(u.grid.weights @ u.values**2)


def auto_radius(kappa_min: float, decay_lengths: float = 25.0) -> float:
    """Truncation radius R with sqrt(kappa_min) * R = decay_lengths."""
    if kappa_min <= 0:
        raise GridError("auto radius needs a positive multiplier")
    return decay_lengths / np.sqrt(kappa_min)
