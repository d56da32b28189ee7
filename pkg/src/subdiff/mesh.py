"""Nonuniform time meshes and their diagnostics."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "MeshError",
    "TimeMesh",
    "MeshReport",
    "default_t0",
    "graded_n0",
    "build_graded_mesh",
    "build_custom_mesh",
    "build_uniform_mesh",
    "random_mesh",
    "mesh_diagnostics",
    "save_mesh_csv",
    "load_mesh_csv",
]

RHO_A3R = 7.0 / 4.0
_RANDOM_SPAN = 1e6


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class TimeMesh:
    """Time grid 0 = t_0 < t_1 < ... < t_N = T.

    Steps and ratios are derived from ``times`` and cached; they are never
    set independently.
    """

    times: np.ndarray
    gamma_hint: Optional[float] = None
    steps: np.ndarray = field(init=False, repr=False, compare=False)
    ratios: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise MeshError("a mesh needs at least the two points t_0 and t_1")
        if t[0] != 0.0:
            raise MeshError(f"mesh must start at 0, got {t[0]!r}")
        if not np.all(np.isfinite(t)):
            raise MeshError("mesh contains non-finite times")
        steps = np.diff(t)
        if np.any(steps <= 0):
            raise MeshError("mesh times must be strictly increasing")
        t.setflags(write=False)
        steps.setflags(write=False)
        ratios = steps[:-1] / steps[1:]
        ratios.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "steps", steps)
        object.__setattr__(self, "ratios", ratios)

    @property
    def N(self) -> int:
        return self.times.size - 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def tau_max(self) -> float:
        return float(self.steps.max())

    def tau(self, k: int) -> float:
        """Step size tau_k = t_k - t_{k-1}, 1 <= k <= N."""
        if not 1 <= k <= self.N:
            raise IndexError(f"step index {k} outside 1..{self.N}")
        return float(self.steps[k - 1])

    def rho(self, k: int) -> float:
        """Local ratio rho_k = tau_k / tau_{k+1}, 1 <= k <= N-1."""
        if not 1 <= k <= self.N - 1:
            raise IndexError(f"ratio index {k} outside 1..{self.N - 1}")
        return float(self.ratios[k - 1])

    def offset_time(self, n: int, nu: float) -> float:
        """t_{n-nu} = nu t_{n-1} + (1 - nu) t_n."""
        return nu * float(self.times[n - 1]) + (1.0 - nu) * float(self.times[n])

    def __eq__(self, other):
        if not isinstance(other, TimeMesh):
            return NotImplemented
        return np.array_equal(self.times, other.times)

    __hash__ = None


def default_t0(gamma: float, T: float = 1.0) -> float:
    return min(1.0 / gamma, 2.0 ** (-gamma), T)


def graded_n0(gamma: float, N: int, T: float, T0: float) -> int:
    x = gamma * N * T0 / (T + (gamma - 1.0) * T0)
    # absorb round-off so exact integers are not bumped by ceil
    return int(math.ceil(round(x, 10)))


def build_graded_mesh(
    gamma: float, N: int, T: float = 1.0, T0: Optional[float] = None
) -> TimeMesh:
    """Initially graded grid: (k/N0)^gamma * T0 up to T0, uniform afterwards.

    The uniform phase uses the step (T - T0)/(N - N0), so t_N = T exactly.
    """
    if gamma < 1:
        raise MeshError(f"grading parameter must be >= 1, got {gamma!r}")
    if N < 2:
        raise MeshError(f"need N >= 2, got {N!r}")
    if T <= 0:
        raise MeshError("T must be positive")
    if T0 is None:
        T0 = default_t0(gamma, T)
    if not 0 < T0 <= T:
        raise MeshError(f"T0 must lie in (0, T], got {T0!r}")
    n0 = graded_n0(gamma, N, T, T0)
    if n0 >= N:
        raise MeshError(
            f"N0 = {n0} >= N = {N}: no room for the uniform phase "
            f"(T0={T0} too large for gamma={gamma})"
        )
    k = np.arange(N + 1, dtype=float)
    t = np.empty(N + 1)
    t[: n0 + 1] = (k[: n0 + 1] / n0) ** gamma * T0
    t[n0 + 1 :] = T0 + (k[n0 + 1 :] - n0) * (T - T0) / (N - n0)
    t[n0] = T0
    t[N] = T
    return TimeMesh(t, gamma_hint=float(gamma))


def build_uniform_mesh(N: int, T: float = 1.0) -> TimeMesh:
    return TimeMesh(np.arange(N + 1) * (T / N), gamma_hint=1.0)


def build_custom_mesh(times) -> TimeMesh:
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise MeshError("negative mesh times")
    return TimeMesh(times)


def random_mesh(
    N: int, T: float = 1.0, rho: float = RHO_A3R, rng=None
) -> TimeMesh:
    """Random mesh whose ratios are drawn uniformly from [1/rho, rho].

    Normalizing to T rescales all steps equally, so every local ratio stays
    within the bound.
    """
    rng = np.random.default_rng(rng)
    draws = rng.uniform(1.0 / rho, rho, size=N - 1)
    steps = np.empty(N)
    steps[0] = 1.0
    lo, hi = 1.0, 1.0
    for k in range(1, N):
        # rho_k = tau_k / tau_{k+1}; a draw that would stretch the step range
        # past _RANDOM_SPAN is inverted (still inside [1/rho, rho]) so that
        # no step vanishes against the final time in double precision
        s = steps[k - 1] / draws[k - 1]
        if max(hi, s) / min(lo, s) > _RANDOM_SPAN:
            s = steps[k - 1] * draws[k - 1]
        steps[k] = s
        lo, hi = min(lo, s), max(hi, s)
    steps *= T / steps.sum()
    t = np.concatenate([[0.0], np.cumsum(steps)])
    t[-1] = T
    return TimeMesh(t)


@dataclass(frozen=True)
class MeshReport:
    rho_max: float
    rho_bound: float
    a3_ok: bool
    mconv_step: float
    mconv_growth: float
    mconv_relative: float
    tau1_order: float

    @property
    def mconv_constants(self) -> tuple:
        return (self.mconv_step, self.mconv_growth, self.mconv_relative)

    def as_dict(self) -> dict:
        return {
            "rho_max": self.rho_max,
            "rho_bound": self.rho_bound,
            "a3_ok": self.a3_ok,
            "mconv_step": self.mconv_step,
            "mconv_growth": self.mconv_growth,
            "mconv_relative": self.mconv_relative,
            "tau1_order": self.tau1_order,
        }


def mesh_diagnostics(mesh: TimeMesh, gamma: float, rho_bound: float = RHO_A3R) -> MeshReport:
    """Local step-ratio check and empirical M-conv constants.

    The M-conv numbers are maxima over the mesh of
    tau_k / (tau min(1, t_k^(1-1/gamma))), t_k / t_{k-1} and
    (tau_k/t_k) / (tau_{k-1}/t_{k-1}); they describe one mesh and do not
    certify the asymptotic property of a family.
    """
    if mesh.N < 2:
        raise MeshError("diagnostics need N >= 2")
    t = mesh.times
    tau = mesh.steps
    tau_max = mesh.tau_max
    rho_max = float(mesh.ratios.max())
    scale = tau_max * np.minimum(1.0, t[1:] ** (1.0 - 1.0 / gamma))
    mconv_step = float(np.max(tau / scale))
    mconv_growth = float(np.max(t[2:] / t[1:-1]))
    rel = tau / t[1:]
    mconv_relative = float(np.max(rel[1:] / rel[:-1]))
    if tau_max == 1.0:
        tau1_order = float("nan") if tau[0] != 1.0 else 1.0
    else:
        tau1_order = float(np.log(tau[0]) / np.log(tau_max))
    return MeshReport(
        rho_max=rho_max,
        rho_bound=float(rho_bound),
        a3_ok=bool(rho_max <= rho_bound),
        mconv_step=mconv_step,
        mconv_growth=mconv_growth,
        mconv_relative=mconv_relative,
        tau1_order=tau1_order,
    )


def save_mesh_csv(mesh: TimeMesh, path) -> None:
    np.savetxt(Path(path), mesh.times, fmt="%.17e")


def load_mesh_csv(path) -> TimeMesh:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # empty file; rejected below
        times = np.loadtxt(Path(path), dtype=float, ndmin=1)
    return build_custom_mesh(times)
