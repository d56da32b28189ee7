"""Problem data for the reaction-subdiffusion equation

    D_t^alpha u - (mu u_x)_x = c u + f  on (xl, xr) x (0, T],

with Dirichlet data ub and initial data u0. Space functions take numpy
arrays; space-time functions take (x array, scalar t).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np

from .special import omega

__all__ = ["ProblemError", "ProblemSpec", "example1", "example2", "custom_problem", "zero_problem"]

CONSISTENCY_TOL = 1e-13
_CHECK_POINTS = 257


class ProblemError(ValueError):
    pass


def _zero_time(t):
    return 0.0


@dataclass(frozen=True)
class ProblemSpec:
    mu: Callable
    c: Callable
    f: Callable
    u0: Callable
    ub: Tuple[Callable, Callable] = (_zero_time, _zero_time)
    exact: Optional[Callable] = None
    exact_caputo: Optional[Callable] = None
    alpha: Optional[float] = None
    sigma: Optional[float] = None
    xl: float = 0.0
    xr: float = math.pi
    T: float = 1.0
    name: str = "custom"
    # separable pieces of the exact solution (time factor, L applied to the
    # space factor, u_x) for diagnostics
    meta: dict = field(default_factory=dict, compare=False)

    def kappa(self, samples: int = 4097) -> float:
        """max |c| sampled on the closed domain."""
        x = np.linspace(self.xl, self.xr, samples)
        return float(np.max(np.abs(np.broadcast_to(self.c(x), x.shape))))

    def source(self, x, t) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.f(x, t), dtype=float), np.shape(x))


def _validate(spec: ProblemSpec) -> ProblemSpec:
    x = np.linspace(spec.xl, spec.xr, _CHECK_POINTS)
    mu = np.broadcast_to(np.asarray(spec.mu(x), dtype=float), x.shape)
    if not np.all(mu > 0):
        raise ProblemError("diffusivity mu must be positive on the domain")
    if spec.exact is not None:
        ex0 = np.asarray(spec.exact(x, 0.0), dtype=float)
        u0 = np.asarray(spec.u0(x), dtype=float)
        if np.max(np.abs(ex0 - u0)) > CONSISTENCY_TOL:
            raise ProblemError("initial data does not match exact(., 0)")
        for t in np.linspace(0.0, spec.T, 9):
            left = float(np.asarray(spec.exact(np.array([spec.xl]), t))[0])
            right = float(np.asarray(spec.exact(np.array([spec.xr]), t))[0])
            if abs(left - spec.ub[0](t)) > CONSISTENCY_TOL or abs(right - spec.ub[1](t)) > CONSISTENCY_TOL:
                raise ProblemError(f"boundary data does not match the exact trace at t={t}")
    return spec


def _check_params(alpha: float, sigma: float) -> None:
    if not 0.0 < alpha < 1.0:
        raise ProblemError(f"alpha must lie in (0, 1), got {alpha!r}")
    if not sigma > 0.0:
        raise ProblemError(f"sigma must be positive, got {sigma!r}")


def _reaction(x):
    return 2.0 * np.sin(x) + 1.0


def example1(alpha: float, sigma: float) -> ProblemSpec:
    """mu = e^x, c = 2 sin x + 1, u = omega_{1+sigma}(t) sin x on (0, pi)."""
    _check_params(alpha, sigma)

    def exact(x, t):
        return omega(1.0 + sigma, t) * np.sin(x)

    def caputo(x, t):
        return omega(1.0 + sigma - alpha, t) * np.sin(x)

    def lu_shape(x):
        # -(e^x cos x)' for the spatial factor sin x
        return np.exp(x) * (np.sin(x) - np.cos(x))

    def f(x, t):
        s = np.sin(x)
        return omega(1.0 + sigma - alpha, t) * s + omega(1.0 + sigma, t) * (lu_shape(x) - _reaction(x) * s)

    spec = ProblemSpec(
        mu=np.exp,
        c=_reaction,
        f=f,
        u0=np.zeros_like,
        exact=exact,
        exact_caputo=caputo,
        alpha=alpha,
        sigma=sigma,
        name="example1",
        meta={
            "time_factor": lambda t: omega(1.0 + sigma, t),
            "lu_shape": lu_shape,
            "dx_exact": lambda x, t: omega(1.0 + sigma, t) * np.cos(x),
        },
    )
    return _validate(spec)


def example2(alpha: float, sigma: float) -> ProblemSpec:
    """mu = cos x + 2, c = 2 sin x + 1, u = (1 + omega_{1+sigma}(t)) sin x, u0 = sin x."""
    _check_params(alpha, sigma)

    def exact(x, t):
        return (1.0 + omega(1.0 + sigma, t)) * np.sin(x)

    def caputo(x, t):
        return omega(1.0 + sigma - alpha, t) * np.sin(x)

    def lu_shape(x):
        return 2.0 * np.sin(x) * (1.0 + np.cos(x))

    def f(x, t):
        s = np.sin(x)
        return omega(1.0 + sigma - alpha, t) * s + (1.0 + omega(1.0 + sigma, t)) * (lu_shape(x) - _reaction(x) * s)

    spec = ProblemSpec(
        mu=lambda x: np.cos(x) + 2.0,
        c=_reaction,
        f=f,
        u0=np.sin,
        exact=exact,
        exact_caputo=caputo,
        alpha=alpha,
        sigma=sigma,
        name="example2",
        meta={
            "time_factor": lambda t: 1.0 + omega(1.0 + sigma, t),
            "lu_shape": lu_shape,
            "dx_exact": lambda x, t: (1.0 + omega(1.0 + sigma, t)) * np.cos(x),
        },
    )
    return _validate(spec)


def custom_problem(
    mu,
    c,
    f,
    u0,
    ub=(_zero_time, _zero_time),
    exact=None,
    exact_caputo=None,
    *,
    alpha=None,
    xl=0.0,
    xr=math.pi,
    T=1.0,
    name="custom",
) -> ProblemSpec:
    spec = ProblemSpec(
        mu=mu,
        c=c,
        f=f,
        u0=u0,
        ub=tuple(ub),
        exact=exact,
        exact_caputo=exact_caputo,
        alpha=alpha,
        xl=float(xl),
        xr=float(xr),
        T=float(T),
        name=name,
    )
    return _validate(spec)


def zero_problem(xl=0.0, xr=math.pi) -> ProblemSpec:
    zero = lambda x, t=None: np.zeros_like(np.asarray(x, dtype=float))  # noqa: E731
    return custom_problem(
        mu=np.ones_like,
        c=np.zeros_like,
        f=lambda x, t: np.zeros_like(x),
        u0=zero,
        exact=lambda x, t: np.zeros_like(np.asarray(x, dtype=float)),
        exact_caputo=lambda x, t: np.zeros_like(np.asarray(x, dtype=float)),
        xl=xl,
        xr=xr,
        name="zero",
    )
