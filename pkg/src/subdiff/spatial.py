"""1-D finite differences on a uniform grid: the operator -(mu u')', discrete
norms, tridiagonal assembly and solve."""

from __future__ import annotations

import math
from typing import Optional
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack

__all__ = [
    "ZeroPivotError",
    "SpaceGrid",
    "TridiagonalSystem",
    "build_grid",
    "half_point_values",
    "apply_Lh",
    "assemble_weighted_system",
    "solve_tridiagonal",
    "l2_inner",
    "l2_norm",
    "h1_seminorm",
    "embedding_constant",
]


class ZeroPivotError(ArithmeticError):
    pass


@dataclass(frozen=True)
class SpaceGrid:
    xl: float
    xr: float
    M: int

    def __post_init__(self):
        if not self.xr > self.xl:
            raise ValueError(f"degenerate domain ({self.xl}, {self.xr})")
        if self.M < 2:
            raise ValueError(f"need M >= 2 subintervals, got {self.M}")

    @property
    def h(self) -> float:
        return (self.xr - self.xl) / self.M

    @property
    def nodes(self) -> np.ndarray:
        return self.xl + np.arange(self.M + 1) * self.h

    @property
    def interior(self) -> np.ndarray:
        return self.nodes[1:-1]

    @property
    def half_points(self) -> np.ndarray:
        """x_{i-1/2} for i = 1..M."""
        return self.xl + (np.arange(self.M) + 0.5) * self.h


def build_grid(xl: float, xr: float, M: int) -> SpaceGrid:
    return SpaceGrid(float(xl), float(xr), int(M))


def half_point_values(grid: SpaceGrid, mu) -> np.ndarray:
    """mu sampled at x_{1/2}..x_{M-1/2}; ``mu`` may be a callable or already
    such an array."""
    if callable(mu):
        vals = np.broadcast_to(np.asarray(mu(grid.half_points), dtype=float), (grid.M,))
    else:
        vals = np.asarray(mu, dtype=float)
        if vals.shape != (grid.M,):
            raise ValueError(f"expected {grid.M} half-point values, got shape {vals.shape}")
    return np.array(vals)


def _node_values(grid: SpaceGrid, c) -> np.ndarray:
    if callable(c):
        return np.broadcast_to(np.asarray(c(grid.nodes), dtype=float), (grid.M + 1,)).copy()
    vals = np.asarray(c, dtype=float)
    if vals.shape != (grid.M + 1,):
        raise ValueError(f"expected {grid.M + 1} node values, got shape {vals.shape}")
    return vals


def apply_Lh(grid: SpaceGrid, mu, v) -> np.ndarray:
    """-(mu_{i+1/2}(v_{i+1}-v_i) - mu_{i-1/2}(v_i-v_{i-1}))/h^2 at interior nodes.

    ``v`` holds all M+1 node values (a trailing batch axis is allowed).
    """
    v = np.asarray(v, dtype=float)
    if v.shape[0] != grid.M + 1:
        raise ValueError(f"expected {grid.M + 1} node values, got {v.shape[0]}")
    m = half_point_values(grid, mu)
    if v.ndim > 1:
        m = m.reshape((-1,) + (1,) * (v.ndim - 1))
    flux = m * np.diff(v, axis=0)
    return -(flux[1:] - flux[:-1]) / grid.h**2


@dataclass
class TridiagonalSystem:
    """Rows i = 0..n-1: sub[i] x[i-1] + diag[i] x[i] + sup[i] x[i+1] = rhs[i];
    sub[0] and sup[-1] are ignored.

    The LU factors are cached on first use; treat the coefficient arrays as
    fixed afterwards (``rhs`` may change freely).
    """

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    rhs: np.ndarray
    _factors: Optional[tuple] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        n = self.diag.shape[0]
        if self.sub.shape != (n,) or self.sup.shape != (n,) or self.rhs.shape[0] != n:
            raise ValueError("inconsistent tridiagonal dimensions")

    def matvec(self, x) -> np.ndarray:
        y = self.diag * x
        y[1:] += self.sub[1:] * x[:-1]
        y[:-1] += self.sup[:-1] * x[1:]
        return y

    def dense(self) -> np.ndarray:
        n = self.diag.shape[0]
        A = np.diag(self.diag)
        if n > 1:
            A += np.diag(self.sub[1:], -1) + np.diag(self.sup[:-1], 1)
        return A

    def strictly_diagonally_dominant(self) -> bool:
        off = np.abs(self.sub) + np.abs(self.sup)
        off[0] -= abs(self.sub[0])
        off[-1] -= abs(self.sup[-1])
        return bool(np.all(np.abs(self.diag) > off))


def assemble_weighted_system(grid: SpaceGrid, mu, c, a0: float, nu: float) -> TridiagonalSystem:
    """a0 I + (1 - nu)(L_h - c I) on the interior nodes, with zero rhs.

    Boundary columns of L_h are dropped; the caller folds them into rhs.
    """
    if not a0 >= 0:
        raise ValueError("a0 must be nonnegative")
    m = half_point_values(grid, mu)
    cv = _node_values(grid, c)[1:-1]
    w = (1.0 - nu) / grid.h**2
    diag = a0 + w * (m[:-1] + m[1:]) - (1.0 - nu) * cv
    sub = np.zeros_like(diag)
    sup = np.zeros_like(diag)
    sub[1:] = -w * m[1:-1]
    sup[:-1] = -w * m[1:-1]
    return TridiagonalSystem(sub, diag, sup, np.zeros_like(diag))


def _factorize(sys: TridiagonalSystem) -> tuple:
    if sys._factors is None:
        dl, d, du, du2, ipiv, info = lapack.dgttrf(sys.sub[1:], sys.diag, sys.sup[:-1])
        if info > 0:
            raise ZeroPivotError(_PIVOT_ADVICE + f" (pivot {info})")
        if info < 0:
            raise ValueError(f"illegal argument {-info} passed to dgttrf")
        sys._factors = (dl, d, du, du2, ipiv)
    return sys._factors


def _lu_solve(factors, b) -> np.ndarray:
    x, info = lapack.dgttrs(*factors, b)
    if info != 0:
        raise ValueError(f"illegal argument {-info} passed to dgttrs")
    return x


def solve_tridiagonal(sys: TridiagonalSystem) -> np.ndarray:
    """Direct tridiagonal solve (LAPACK gttrf/gttrs: Gaussian elimination
    with partial pivoting, the Thomas recursion when no rows swap). The
    factors are kept on ``sys``, so repeated right sides cost one sweep.

    Raises :class:`ZeroPivotError` on an exactly singular system.
    """
    n = sys.diag.shape[0]
    rhs = np.asarray(sys.rhs, dtype=float)
    if n == 1:
        if sys.diag[0] == 0:
            raise ZeroPivotError(_PIVOT_ADVICE)
        return rhs / sys.diag[0]
    if n == 2:
        # the SciPy gttrf wrapper rejects n = 2 (empty du2)
        (a, b), (c, d) = (sys.diag[0], sys.sup[0]), (sys.sub[1], sys.diag[1])
        det = a * d - b * c
        if det == 0:
            raise ZeroPivotError(_PIVOT_ADVICE)
        return np.array([d * rhs[0] - b * rhs[1], a * rhs[1] - c * rhs[0]]) / det
    return _lu_solve(_factorize(sys), rhs)


_PIVOT_ADVICE = (
    "zero pivot in the tridiagonal solve; the step-size restriction "
    "(tau small enough relative to the reaction bound) is probably violated"
)


def _interior(grid: SpaceGrid, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[0] == grid.M + 1:
        return v[1:-1]
    if v.shape[0] == grid.M - 1:
        return v
    raise ValueError(f"vector of length {v.shape[0]} does not fit a grid with M={grid.M}")


def l2_inner(grid: SpaceGrid, v, w) -> float:
    """h * sum over interior nodes of v w (accepts node or interior vectors)."""
    return float(grid.h * np.dot(_interior(grid, v), _interior(grid, w)))


def l2_norm(grid: SpaceGrid, v) -> float:
    return math.sqrt(l2_inner(grid, v, v))


def h1_seminorm(grid: SpaceGrid, mu, v) -> float:
    """sqrt(h sum_i mu_{i-1/2} (d_h v_{i-1/2})^2) for a node vector vanishing
    on the boundary; equals sqrt(<v, L_h v>)."""
    v = np.asarray(v, dtype=float)
    if v.shape != (grid.M + 1,):
        raise ValueError(f"expected {grid.M + 1} node values, got shape {v.shape}")
    m = half_point_values(grid, mu)
    dv = np.diff(v) / grid.h
    return math.sqrt(grid.h * float(np.dot(m, dv * dv)))


def embedding_constant(grid: SpaceGrid, mu) -> float:
    """(xr - xl)/sqrt(6 mu0) with mu0 the smallest half-point sample of mu."""
    m = half_point_values(grid, mu)
    mu0 = float(m.min())
    if not mu0 > 0:
        raise ValueError(f"diffusivity must be positive, sampled minimum {mu0!r}")
    return (grid.xr - grid.xl) / math.sqrt(6.0 * mu0)
