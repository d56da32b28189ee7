"""Error measurement, convergence orders, global consistency sums and the
evaluators for the stability and Groenwall bounds."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from .kernels import (
    ComplementaryRow,
    KernelRow,
    kernel_rows,
    local_consistency,
    scheme_offset,
)
from .mesh import TimeMesh, build_graded_mesh
from .problems import ProblemSpec, example1, example2
from .solver import SchemeConfig, SolutionHistory, solve
from .spatial import SpaceGrid, apply_Lh, build_grid, h1_seminorm, half_point_values, l2_norm
from .special import SeriesDivergenceError, mittag_leffler

__all__ = [
    "ConvergenceRow",
    "ConvergenceReport",
    "ErrorTracker",
    "GronwallInstance",
    "GronwallResult",
    "GronwallHypothesisError",
    "StabilityBound",
    "Preset",
    "TABLE_PRESETS",
    "predicted_order",
    "h1_error",
    "solve_error",
    "convergence_order",
    "run_convergence",
    "spatial_gap",
    "global_consistency_accumulate",
    "bound_factor",
    "stability_bound",
    "gronwall_check",
    "harvest_l1_error_sequences",
    "consistency_bound_check_l1",
    "consistency_bound_check_alikhanov",
]

log = logging.getLogger(__name__)

GUARD_TOL = 0.05
# "energy": |v|_1 = sqrt(<v, L_h v>) with the problem's mu at half points;
# "plain": the same half-point form with mu = 1, i.e. sqrt(h sum (d_h v)^2)
NORMS = ("energy", "plain")
DEFAULT_M = 2048
# largest M used as the accepted resolution
DEFAULT_M_MAX = 65536
GUARD_MODES = ("proxy", "full", "off")


def predicted_order(scheme: str, alpha: float, sigma: float, gamma: float) -> float:
    """min{gamma sigma, 2 - alpha} for L1, min{gamma sigma, 2} for FracCN."""
    cap = 2.0 - alpha if scheme_offset(scheme, alpha) == 0.0 else 2.0
    return min(gamma * sigma, cap)


# ---------------------------------------------------------------- errors


class ErrorTracker:
    """Observer for :func:`subdiff.solver.solve` that records the H1 error of
    every level, so long runs need not keep the levels."""

    def __init__(self, problem: ProblemSpec, mesh: TimeMesh, grid: SpaceGrid, norm: str = "energy"):
        if problem.exact is None:
            raise ValueError("error tracking needs an exact solution")
        if norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}, got {norm!r}")
        self.problem = problem
        self.mesh = mesh
        self.grid = grid
        self._mu = half_point_values(grid, problem.mu) if norm == "energy" else np.ones(grid.M)
        self.errors = np.zeros(mesh.N + 1)

    def __call__(self, n: int, u: np.ndarray) -> None:
        ex = self.problem.exact(self.grid.nodes, float(self.mesh.times[n]))
        self.errors[n] = h1_seminorm(self.grid, self._mu, u - ex)

    @property
    def max_error(self) -> float:
        return float(self.errors[1:].max())


def h1_error(history: SolutionHistory, problem: ProblemSpec, grid: Optional[SpaceGrid] = None, norm: str = "energy"):
    """max_{1<=n<=N} |u(t_n) - u_h^n|_1 and the per-level errors (index 0 is
    the initial level)."""
    grid = history.grid if grid is None else grid
    tracker = ErrorTracker(problem, history.mesh, grid, norm)
    for n in range(history.mesh.N + 1):
        tracker(n, history.level(n))
    return tracker.max_error, tracker.errors


def solve_error(config: SchemeConfig, problem: ProblemSpec, mesh: TimeMesh, M: int, norm: str = "energy") -> float:
    """e(M, N) for one run without storing the levels."""
    grid = build_grid(problem.xl, problem.xr, M)
    tracker = ErrorTracker(problem, mesh, grid, norm)
    cfg = SchemeConfig(config.scheme, config.alpha, "recompute")
    solve(cfg, problem, mesh, grid, check=False, observer=tracker)
    return tracker.max_error


def spatial_gap(config: SchemeConfig, problem: ProblemSpec, mesh: TimeMesh, M: int, norm: str = "energy") -> float:
    """max_n |u_h^n(M) - u_h^n(2M)|_1 with the fine solution restricted to the
    coarse nodes. By the triangle inequality it bounds |e(M, N) - e(2M, N)|,
    and it hardly depends on N, so a coarse mesh can stand in for a fine one."""
    coarse = build_grid(problem.xl, problem.xr, M)
    fine = build_grid(problem.xl, problem.xr, 2 * M)
    hist = solve(SchemeConfig(config.scheme, config.alpha, "full"), problem, mesh, coarse, check=False)
    mu = half_point_values(coarse, problem.mu) if norm == "energy" else np.ones(M)
    gap = np.zeros(mesh.N + 1)

    def obs(n, u):
        gap[n] = h1_seminorm(coarse, mu, hist.level(n) - u[::2])

    solve(SchemeConfig(config.scheme, config.alpha, "recompute"), problem, mesh, fine, check=False, observer=obs)
    return float(gap.max())


def convergence_order(errors: Sequence[float], Ns: Optional[Sequence[int]] = None) -> np.ndarray:
    """log2(e_i / e_{i+1}) for consecutive entries of a doubling sequence."""
    e = np.asarray(errors, dtype=float)
    if e.size < 2:
        raise ValueError("need at least two errors")
    if Ns is not None:
        Ns = list(Ns)
        if len(Ns) != e.size:
            raise ValueError("errors and N values differ in length")
        for a, b in zip(Ns, Ns[1:]):
            if b != 2 * a:
                raise ValueError(f"N sequence must double; got {a} then {b}")
    if np.any(e <= 0):
        raise ValueError("errors must be positive to take logarithms")
    return np.log2(e[:-1] / e[1:])


@dataclass
class ConvergenceRow:
    N: int
    M: int
    error: float
    order: Optional[float] = None
    guard_diff: Optional[float] = None
    guard_ok: Optional[bool] = None


@dataclass
class ConvergenceReport:
    rows: list
    params: dict
    predicted_order: float
    published_orders: Optional[list] = None

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.rows])

    @property
    def orders(self) -> np.ndarray:
        return np.array([r.order for r in self.rows[:-1]], dtype=float)

    def _columns(self):
        cols = ["N", "M", "error", "order", "guard_rel_diff", "guard_ok"]
        if self.published_orders is not None:
            cols += ["published_order", "abs_diff"]
        return cols

    def _records(self):
        out = []
        for i, r in enumerate(self.rows):
            rel = None if r.guard_diff is None else r.guard_diff / r.error
            rec = [r.N, r.M, r.error, r.order, rel, r.guard_ok]
            if self.published_orders is not None:
                pub = self.published_orders[i] if i < len(self.published_orders) else None
                diff = None if (pub is None or r.order is None) else abs(r.order - pub)
                rec += [pub, diff]
            out.append(rec)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self._columns())
        for rec in self._records():
            w.writerow([_fmt_full(v) for v in rec])
        return buf.getvalue()

    def to_markdown(self) -> str:
        p = self.params
        head = ", ".join(f"{k}={_fmt_param(v)}" for k, v in p.items())
        cols = self._columns()
        lines = [f"**{head}**", "", "| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
        for rec in self._records():
            lines.append("| " + " | ".join(_fmt_short(v) for v in rec) + " |")
        lines.append(f"| predicted order | | | {self.predicted_order:.2f} |" + " |" * (len(cols) - 4))
        return "\n".join(lines) + "\n"

    def as_dict(self) -> dict:
        return {
            "params": {k: _fmt_param(v) for k, v in self.params.items()},
            "predicted_order": self.predicted_order,
            "rows": [r.__dict__.copy() for r in self.rows],
            "published_orders": self.published_orders,
        }


def _fmt_full(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return f"{v:.16e}"
    return str(v)


def _fmt_short(v):
    if v is None:
        return "*"
    if isinstance(v, bool):
        return "yes" if v else "NO"
    if isinstance(v, float):
        if v != 0 and (abs(v) < 1e-2 or abs(v) >= 1e3):
            return f"{v:.2e}"
        return f"{v:.2f}"
    return str(v)


def _fmt_param(v):
    if isinstance(v, Fraction):
        return str(v)
    return v


def _problem(example: int, alpha: float, sigma: float) -> ProblemSpec:
    if example == 1:
        return example1(alpha, sigma)
    if example == 2:
        return example2(alpha, sigma)
    raise ValueError(f"example must be 1 or 2, got {example!r}")


def run_convergence(
    scheme: str,
    example: int,
    alpha: float,
    sigma: float,
    gamma,
    Ns: Sequence[int],
    M: int = DEFAULT_M,
    *,
    guard="proxy",
    guard_tol: float = GUARD_TOL,
    M_max: int = DEFAULT_M_MAX,
    T: float = 1.0,
    norm: str = "energy",
    uniform_M: bool = True,
    published_orders: Optional[Sequence[float]] = None,
) -> ConvergenceReport:
    """Errors and orders over a doubling N sequence on graded meshes.

    The spatial guard requires the M-to-2M change of the error to stay below
    ``guard_tol * e(M, N)``; otherwise M is doubled (up to ``M_max``).

    * ``"full"`` compares e(M, N) with e(2M, N) at every N.
    * ``"proxy"`` (default) bounds that change by :func:`spatial_gap`
      computed once per M on the coarsest mesh of the sweep, which avoids
      the 2M runs at fine N.
    * ``"off"`` (or False) keeps M fixed.

    The accepted M carries over to the next, finer N because the spatial
    error does not shrink with N. A row whose guard still fails at ``M_max``
    is kept and flagged. With ``uniform_M`` all rows are finally reported at
    the largest M reached, so every order compares one M.
    """
    if guard is True:
        guard = "proxy"
    elif guard is False or guard is None:
        guard = "off"
    if guard not in GUARD_MODES:
        raise ValueError(f"guard must be one of {GUARD_MODES}, got {guard!r}")
    Ns = [int(n) for n in Ns]
    if not Ns:
        raise ValueError("empty N list")
    if len(Ns) > 1:
        convergence_order(np.ones(len(Ns)), Ns)  # doubling check only
    problem = _problem(example, alpha, sigma)
    if T != problem.T:
        raise ValueError("the example problems are posed on [0, 1]")
    g = float(Fraction(gamma)) if isinstance(gamma, (str, Fraction)) else float(gamma)
    config = SchemeConfig(scheme, alpha)
    gaps = {}

    def gap(m):
        if m not in gaps:
            gaps[m] = spatial_gap(config, problem, build_graded_mesh(g, Ns[0], T), m, norm)
        return gaps[m]

    p_pred = predicted_order(scheme, alpha, sigma, g)
    rows = []
    for N in Ns:
        mesh = build_graded_mesh(g, N, T)
        if guard == "proxy" and rows:
            # extrapolate e(N) from the rows so far and raise M up front; the
            # check below still uses the computed error
            prev = rows[-1].error
            e_est = prev * prev / rows[-2].error if len(rows) > 1 else prev * 2.0 ** (-p_pred)
            while 2 * M <= M_max and gap(M) >= guard_tol * e_est:
                M *= 2
        e = solve_error(config, problem, mesh, M, norm)
        diff = ok = None
        if guard == "full":
            while True:
                e2 = solve_error(config, problem, mesh, 2 * M, norm)
                diff = abs(e - e2)
                ok = diff < guard_tol * e
                if ok or 2 * M > M_max:
                    break
                log.info("spatial guard failed at N=%d, M=%d (rel diff %.3g); doubling M", N, M, diff / e)
                M, e = 2 * M, e2
        elif guard == "proxy":
            while True:
                diff = gap(M)
                ok = diff < guard_tol * e
                if ok or 2 * M > M_max:
                    break
                # e barely moves with M, so jump straight to the M whose gap
                # clears the current error, then re-check with the new e
                m = 2 * M
                while 2 * m <= M_max and gap(m) >= guard_tol * e:
                    m *= 2
                log.info("spatial guard failed at N=%d, M=%d (rel gap %.3g); M -> %d", N, M, diff / e, m)
                M = m
                e = solve_error(config, problem, mesh, M, norm)
        rows.append(ConvergenceRow(N, M, e, None, diff, ok))
        log.info("N=%d M=%d e=%.4e", N, M, e)
    if uniform_M:
        # orders compare errors at one M; coarser rows are rerun at the final
        # M (their guard passed at a smaller M, so it holds a fortiori)
        for r in rows:
            if r.M != M:
                r.M = M
                r.error = solve_error(config, problem, build_graded_mesh(g, r.N, T), M, norm)
    if len(rows) > 1:
        orders = convergence_order([r.error for r in rows], Ns)
        for r, o in zip(rows, orders):
            r.order = float(o)
    params = {"scheme": scheme, "example": example, "alpha": alpha, "sigma": sigma, "gamma": gamma, "norm": norm}
    return ConvergenceReport(
        rows,
        params,
        p_pred,
        None if published_orders is None else list(published_orders),
    )


# -------------------------------------------------- reproduction presets


@dataclass(frozen=True)
class Preset:
    """One column of a published table: parameters, N values and the printed
    errors/orders (order i belongs to the pair N_i, 2 N_i)."""

    scheme: str
    example: int
    alpha: float
    sigma: float
    gamma: str
    Ns: tuple
    errors: tuple
    orders: tuple


def _l1(alpha, sigma, gamma, errors, orders):
    return Preset("l1", 1, alpha, sigma, gamma, (100, 200, 400, 800, 1600), errors, orders)


def _cn(alpha, sigma, gamma, Ns, errors, orders):
    return Preset("fraccn", 2, alpha, sigma, gamma, Ns, errors, orders)


_CN5 = (128, 256, 512, 1024, 2048)

TABLE_PRESETS = {
    1: [
        _l1(0.1, 1.9, "1", (3.84e-06, 1.08e-06, 3.02e-07, 8.46e-08, 2.37e-08), (1.83, 1.84, 1.84, 1.84)),
        _l1(0.5, 1.5, "1", (1.71e-04, 6.56e-05, 2.48e-05, 9.27e-06, 3.43e-06), (1.38, 1.40, 1.42, 1.43)),
        _l1(0.9, 1.1, "1", (1.03e-03, 5.36e-04, 2.75e-04, 1.40e-04, 7.04e-05), (0.94, 0.96, 0.98, 0.99)),
    ],
    2: [
        _l1(0.5, 0.5, "1", (2.57e-02, 1.88e-02, 1.37e-02, 9.88e-03, 7.11e-03), (0.45, 0.46, 0.47, 0.47)),
        _l1(0.5, 0.5, "3", (6.34e-04, 2.34e-04, 8.56e-05, 3.10e-05, 1.11e-05), (1.43, 1.45, 1.47, 1.48)),
        _l1(0.5, 0.5, "15/4", (4.66e-04, 1.68e-04, 6.01e-05, 2.14e-05, 7.63e-06), (1.47, 1.48, 1.49, 1.49)),
    ],
    3: [
        _l1(0.5, 0.75, "1", (3.70e-03, 2.28e-03, 1.39e-03, 8.46e-04, 5.12e-04), (0.70, 0.71, 0.72, 0.72)),
        _l1(0.5, 0.75, "2", (2.26e-04, 8.48e-05, 3.14e-05, 1.15e-05, 4.18e-06), (1.41, 1.43, 1.45, 1.46)),
        _l1(0.5, 0.75, "5/2", (1.47e-04, 5.30e-05, 1.90e-05, 6.79e-06, 2.42e-06), (1.47, 1.48, 1.48, 1.49)),
    ],
    4: [
        _l1(0.5, 1.25, "1", (2.75e-04, 1.22e-04, 5.33e-05, 2.31e-05, 9.92e-06), (1.17, 1.20, 1.21, 1.22)),
        _l1(0.5, 1.25, "6/5", (1.18e-04, 4.52e-05, 1.70e-05, 6.34e-06, 2.34e-06), (1.39, 1.41, 1.43, 1.44)),
        _l1(0.5, 1.25, "9/5", (7.76e-05, 2.75e-05, 9.55e-06, 3.14e-06, 9.96e-07), (1.49, 1.53, 1.60, 1.66)),
    ],
    5: [
        _cn(0.4, 1.4, "1", _CN5 + (4096,), (3.42e-05, 1.10e-05, 3.73e-06, 1.28e-06, 4.50e-07, 1.60e-07), (1.63, 1.57, 1.54, 1.51, 1.49)),
        _cn(0.6, 1.6, "1", _CN5 + (4096,), (3.43e-05, 8.73e-06, 2.23e-06, 5.40e-07, 1.33e-07, 5.02e-08), (1.97, 1.96, 1.90, 1.71, 1.71)),
        _cn(0.8, 1.8, "1", _CN5 + (4096,), (2.65e-05, 6.76e-06, 1.73e-06, 4.61e-07, 1.27e-07, 3.57e-08), (1.97, 1.96, 1.92, 1.86, 1.83)),
    ],
    6: [
        _cn(0.4, 1.2, "1", _CN5, (6.17e-05, 2.40e-05, 9.49e-06, 3.83e-06, 1.57e-06), (1.36, 1.34, 1.31, 1.29)),
        _cn(0.4, 1.2, "5/3", _CN5, (1.32e-05, 3.19e-06, 7.98e-07, 1.91e-07, 4.61e-08), (2.05, 2.00, 2.06, 2.05)),
        _cn(0.4, 1.2, "2", _CN5, (1.39e-05, 3.36e-06, 8.16e-07, 1.96e-07, 4.70e-08), (2.04, 2.04, 2.06, 2.06)),
    ],
    7: [
        _cn(0.4, 0.8, "2", _CN5, (2.43e-05, 5.59e-06, 1.74e-06, 5.69e-07, 1.87e-07), (2.12, 1.69, 1.61, 1.61)),
        _cn(0.4, 0.8, "5/2", _CN5, (2.49e-05, 5.72e-06, 1.29e-06, 2.53e-07, 4.67e-08), (2.12, 2.15, 2.35, 2.43)),
        _cn(0.4, 0.8, "3", _CN5, (2.75e-05, 6.35e-06, 1.43e-06, 2.84e-07, 5.66e-08), (2.12, 2.15, 2.33, 2.33)),
    ],
    8: [
        _cn(0.4, 0.4, "2", _CN5, (3.35e-03, 1.91e-03, 1.09e-03, 6.21e-04, 3.56e-04), (0.81, 0.81, 0.81, 0.80)),
        _cn(0.4, 0.4, "5/2", _CN5, (1.50e-03, 7.41e-04, 3.71e-04, 1.85e-04, 9.25e-05), (1.01, 1.00, 1.00, 1.00)),
        _cn(0.4, 0.4, "5", _CN5, (4.56e-04, 1.01e-04, 2.20e-05, 4.90e-06, 1.11e-06), (2.17, 2.20, 2.17, 2.14)),
    ],
}


# ------------------------------------------------- consistency and bounds


def global_consistency_accumulate(p_rows: Sequence[ComplementaryRow], upsilon, power: int = 1) -> np.ndarray:
    """sum_{j=1}^n P^(n)_{n-j} |Upsilon^j|^power for n = 1..len(p_rows)."""
    if power not in (1, 2):
        raise ValueError("power must be 1 or 2")
    u = np.abs(np.asarray(upsilon, dtype=float)) ** power
    if u.shape[0] < len(p_rows):
        raise ValueError(f"need {len(p_rows)} consistency values, got {u.shape[0]}")
    out = np.empty(len(p_rows))
    for i, p in enumerate(p_rows):
        if p.n != i + 1:
            raise ValueError("complementary rows must be consecutive from 1")
        out[i] = np.dot(p.coeffs[::-1], u[: p.n])
    return out


def bound_factor(alpha: float, z: float) -> float:
    """2 E_alpha(z), or +inf when the series overflows (the bound is then
    vacuous, not violated)."""
    try:
        return 2.0 * mittag_leffler(alpha, z)
    except SeriesDivergenceError:
        return math.inf


@dataclass
class StabilityBound:
    bound: np.ndarray  # bound on |u^n|_1^2, n = 1..N
    restriction_ok: bool
    threshold: float

    @property
    def sqrt_bound(self) -> np.ndarray:
        return np.sqrt(self.bound)


def stability_bound(
    v0_h1: float,
    f_norms,
    p_rows: Sequence[ComplementaryRow],
    mesh: TimeMesh,
    alpha: float,
    kappa: float,
    c_omega: float,
    rho: Optional[float] = None,
    pi_a: float = 1.0,
) -> StabilityBound:
    """2 E_a(4 pi_A max{1, rho} kappa^2 C t_n^a) (|u^0|_1^2 + max_k sum_j P ||f^{j-nu}||^2).

    ``f_norms`` holds ||f^{j-nu}|| for j = 1..N. The step restriction
    tau <= (4 pi_A Gamma(2-a) kappa^2 C)^(-1/a) is reported, not enforced.
    """
    N = len(p_rows)
    rho = float(mesh.ratios.max()) if rho is None and mesh.N > 1 else (1.0 if rho is None else rho)
    g = global_consistency_accumulate(p_rows, np.asarray(f_norms, dtype=float)[:N], power=2)
    forcing = v0_h1**2 + np.maximum.accumulate(g)
    lam = 4.0 * pi_a * max(1.0, rho) * kappa**2 * c_omega
    t = mesh.times[1 : N + 1]
    factors = np.array([bound_factor(alpha, lam * tn**alpha) for tn in t])
    with np.errstate(invalid="ignore"):
        bound = np.where(forcing == 0.0, 0.0, factors * forcing)
    denom = 4.0 * pi_a * math.gamma(2.0 - alpha) * kappa**2 * c_omega
    threshold = math.inf if denom == 0 else denom ** (-1.0 / alpha)
    return StabilityBound(bound, bool(mesh.tau_max <= threshold), threshold)


class GronwallHypothesisError(ArithmeticError):
    pass


@dataclass
class GronwallInstance:
    """Data of the improved discrete Groenwall inequality.

    ``v`` has entries v^0..v^N; ``xi``, ``eta`` have entries for n = 1..N;
    ``lam[l]`` is lambda_l. ``rows``/``p_rows`` are the kernels of the scheme.
    """

    lam: np.ndarray
    Lambda: float
    xi: np.ndarray
    eta: np.ndarray
    v: np.ndarray
    rows: Sequence[KernelRow]
    p_rows: Sequence[ComplementaryRow]
    mesh: TimeMesh
    rho: float
    pi_a: float
    form: str = "difference"

    def __post_init__(self):
        N = len(self.rows)
        self.lam = np.asarray(self.lam, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.eta = np.asarray(self.eta, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.v.shape != (N + 1,) or self.xi.shape != (N,) or self.eta.shape != (N,):
            raise ValueError("sequence lengths do not match the number of kernel rows")
        if len(self.p_rows) != N:
            raise ValueError("need one complementary row per kernel row")
        for name in ("lam", "xi", "eta", "v"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be non-negative")
        if self.Lambda < self.lam.sum() * (1 - 1e-14):
            raise ValueError("Lambda must dominate the sum of lambda_l")
        if self.form not in ("difference", "summed"):
            raise ValueError("form must be 'difference' or 'summed'")

    @property
    def alpha(self) -> float:
        return self.rows[0].alpha

    @property
    def nu(self) -> float:
        return self.rows[0].nu


@dataclass
class GronwallResult:
    hypothesis_lhs: np.ndarray
    hypothesis_rhs: np.ndarray
    conclusion_rhs: np.ndarray
    margin: np.ndarray  # conclusion rhs - v^n
    restriction_ok: bool

    @property
    def hypothesis_ok(self) -> bool:
        tol = 1e-12 * np.maximum(np.abs(self.hypothesis_lhs), np.abs(self.hypothesis_rhs))
        return bool(np.all(self.hypothesis_lhs <= self.hypothesis_rhs + tol))

    @property
    def worst_hypothesis(self) -> int:
        """Step n (1-based) with the smallest hypothesis slack."""
        return int(np.argmin(self.hypothesis_rhs - self.hypothesis_lhs)) + 1

    @property
    def ok(self) -> bool:
        return bool(np.all(self.margin >= 0))


def gronwall_check(inst: GronwallInstance, *, strict: bool = False) -> GronwallResult:
    """Evaluate the hypothesis and the conclusion

        v^n <= 2 E_a(2 max{1,rho} pi_A Lambda t_n^a)
               (v^0 + max_k sum_j P xi^j + sqrt(pi_A Gamma(1-a)) max_k t_k^{a/2} eta^k).

    ``strict`` raises :class:`GronwallHypothesisError` naming the step and
    both sides when the hypothesis fails; otherwise the failure is only
    visible through ``hypothesis_ok``.
    """
    N = len(inst.rows)
    nu, alpha = inst.nu, inst.alpha
    v = inst.v
    v_off = (1.0 - nu) * v[1:] + nu * v[:-1]  # v^{n-nu}, n = 1..N
    lam_term = np.array([np.dot(inst.lam[: n][::-1], v_off[:n] ** 2) for n in range(1, N + 1)])
    if inst.form == "difference":
        d2 = np.diff(v**2)
        lhs = np.array([np.dot(inst.rows[n - 1].coeffs[::-1], d2[:n]) for n in range(1, N + 1)])
        rhs = lam_term + v_off * inst.xi + inst.eta**2
    else:
        lhs = v[1:] ** 2
        rhs = (
            v[0] ** 2
            + global_consistency_accumulate(inst.p_rows, lam_term)
            + global_consistency_accumulate(inst.p_rows, v_off * inst.xi)
            + global_consistency_accumulate(inst.p_rows, inst.eta**2)
        )
    t = inst.mesh.times[1 : N + 1]
    sum_xi = np.maximum.accumulate(global_consistency_accumulate(inst.p_rows, inst.xi))
    eta_star = math.sqrt(inst.pi_a * math.gamma(1.0 - alpha)) * np.maximum.accumulate(t ** (alpha / 2.0) * inst.eta)
    z = 2.0 * max(1.0, inst.rho) * inst.pi_a * inst.Lambda
    factors = np.array([bound_factor(alpha, z * tn**alpha) for tn in t])
    inner = v[0] + sum_xi + eta_star
    with np.errstate(invalid="ignore"):
        concl = np.where(inner == 0.0, 0.0, factors * inner)
    denom = 2.0 * inst.pi_a * math.gamma(2.0 - alpha) * inst.Lambda
    threshold = math.inf if denom == 0 else denom ** (-1.0 / alpha)
    res = GronwallResult(lhs, rhs, concl, concl - v[1:], bool(inst.mesh.tau_max <= threshold))
    if strict and not res.hypothesis_ok:
        n = res.worst_hypothesis
        raise GronwallHypothesisError(
            f"hypothesis fails at n={n}: left side {lhs[n - 1]:.6e} > right side {rhs[n - 1]:.6e}"
        )
    return res


def harvest_l1_error_sequences(problem: ProblemSpec, mesh: TimeMesh, grid: SpaceGrid, alpha: float):
    """Instrumented L1 run on a problem with exact solution: returns
    (rows, v, xi, eta) with v^n = |u(t_n) - u_h^n|_1, xi^n = 2|Upsilon_h^n[u]|_1
    and eta^n = ||(L - L_h) u(t_n)||.

    The grid truncation R_s is recovered from the discrete equation the exact
    solution leaves behind: D_tau u + L_h u - c u - f = -Upsilon + (L_h - L)u.
    """
    if problem.exact is None or problem.exact_caputo is None:
        raise ValueError("the harvest needs the exact solution and its Caputo derivative")
    config = SchemeConfig("l1", alpha, "full")
    hist = solve(config, problem, mesh, grid, check=False)
    rows = kernel_rows("l1", mesh, alpha)
    x = grid.nodes
    t = mesh.times
    U = np.array([problem.exact(x, float(tn)) for tn in t])
    mu_half = half_point_values(grid, problem.mu)
    c_nodes = np.broadcast_to(problem.c(x), x.shape)
    v = np.array([h1_seminorm(grid, mu_half, hist.level(n) - U[n]) for n in range(mesh.N + 1)])
    xi = np.empty(mesh.N)
    eta = np.empty(mesh.N)
    for n in range(1, mesh.N + 1):
        A = rows[n - 1].coeffs[::-1]
        disc = A @ np.diff(U[: n + 1], axis=0)
        ups = problem.exact_caputo(x, float(t[n])) - disc
        ups[0] = ups[-1] = 0.0
        xi[n - 1] = 2.0 * h1_seminorm(grid, mu_half, ups)
        # L u = f + c u - Caputo u at interior nodes
        Lu = problem.source(grid.interior, float(t[n])) + c_nodes[1:-1] * U[n, 1:-1] - problem.exact_caputo(grid.interior, float(t[n]))
        eta[n - 1] = l2_norm(grid, Lu - apply_Lh(grid, mu_half, U[n]))
    return rows, v, xi, eta


# ---------------------------------------------- local consistency bounds


def _quad(fun, a, b):
    val, err = integrate.quad(fun, a, b, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def consistency_bound_check_l1(mesh: TimeMesh, alpha: float, v: Callable, v2: Callable, caputo: Callable, rows=None) -> np.ndarray:
    """A_0 G^n + sum_{k<n} (A_{n-k-1} - A_{n-k}) G^k - |Upsilon^n[v]| for each n,
    with G^k = 2 int_{t_{k-1}}^{t_k} (t - t_{k-1}) |v''(t)| dt by adaptive
    quadrature. Nonnegative entries confirm the local bound."""
    rows = kernel_rows("l1", mesh, alpha) if rows is None else rows
    t = mesh.times
    G = np.array([2.0 * _quad(lambda s, a=t[k - 1]: (s - a) * abs(v2(s)), t[k - 1], t[k]) for k in range(1, mesh.N + 1)])
    ups = local_consistency(rows, mesh, 0.0, v, caputo)
    out = np.empty(len(rows))
    for row in rows:
        n = row.n
        A = row.coeffs
        k = np.arange(1, n)
        bound = A[0] * G[n - 1] + float(np.dot(A[n - k - 1] - A[n - k], G[k - 1]))
        out[n - 1] = bound - abs(ups[n - 1])
    return out


def consistency_bound_check_alikhanov(mesh: TimeMesh, alpha: float, v: Callable, v3: Callable, caputo: Callable, rows=None) -> np.ndarray:
    """Alikhanov counterpart with G_loc and G_his built from |v'''|."""
    rows = kernel_rows("fraccn", mesh, alpha) if rows is None else rows
    t = mesh.times
    N = mesh.N
    f3 = lambda s: abs(v3(s))  # noqa: E731

    def sq_from(a, b):
        return _quad(lambda s: (s - a) ** 2 * f3(s), a, b)

    G_loc = np.empty(N)
    G_his = np.zeros(N)
    for k in range(1, N + 1):
        a, b = t[k - 1], t[k]
        mid = 0.5 * (a + b)
        G_loc[k - 1] = 1.5 * sq_from(a, mid) + 1.5 * (b - a) * _quad(lambda s: (b - s) * f3(s), mid, b)
        if k < N:
            c = t[k + 1]
            G_his[k - 1] = 2.5 * sq_from(a, b) + 2.5 * _quad(lambda s: (c - s) ** 2 * f3(s), b, c)
    ups = local_consistency(rows, mesh, alpha / 2.0, v, caputo)
    out = np.empty(len(rows))
    for row in rows:
        n = row.n
        A = row.coeffs
        k = np.arange(1, n)
        bound = A[0] * G_loc[n - 1] + float(np.dot(A[n - k - 1] - A[n - k], G_his[k - 1]))
        out[n - 1] = bound - abs(ups[n - 1])
    return out
