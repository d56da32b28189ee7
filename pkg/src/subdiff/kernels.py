r"""Discrete Caputo kernels (L1 and Alikhanov), complementary kernels and
the checks on them.

Index conventions: ``KernelRow.coeffs[j]`` is :math:`A^{(n,\nu)}_j`, so the
history cell k (1 <= k <= n) pairs with ``coeffs[n - k]``. The same holds for
``ComplementaryRow.coeffs``. All integrals are evaluated from exact
antiderivatives in terms of omega_{2-alpha} and omega_{3-alpha}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .mesh import TimeMesh
from .special import omega

__all__ = [
    "KernelError",
    "KernelRow",
    "ComplementaryRow",
    "AssumptionReport",
    "scheme_offset",
    "l1_kernel_row",
    "alikhanov_a_coeffs",
    "alikhanov_b_coeffs",
    "alikhanov_kernel_row",
    "kernel_row",
    "kernel_rows",
    "kernel_matrix",
    "complementary_row",
    "complementary_rows",
    "verify_complementary_identity",
    "identity_deviation_all",
    "verify_p_bound",
    "verify_kernel_assumptions",
    "apply_discrete_caputo",
    "local_consistency",
    "l1_lemma_margins",
]

SCHEMES = ("l1", "fraccn")
# switch to the odd-moment series for b when half-cell / distance is below this
_B_SERIES_RATIO = 0.25


class KernelError(ValueError):
    pass


@dataclass(frozen=True)
class KernelRow:
    n: int
    nu: float
    alpha: float
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (self.n,):
            raise KernelError(f"row {self.n} must hold {self.n} coefficients")


@dataclass(frozen=True)
class ComplementaryRow:
    n: int
    coeffs: np.ndarray


def scheme_offset(scheme: str, alpha: float) -> float:
    scheme = scheme.lower()
    if scheme == "l1":
        return 0.0
    if scheme in ("fraccn", "alikhanov"):
        return alpha / 2.0
    raise KernelError(f"unknown scheme {scheme!r}")


def _check(mesh: TimeMesh, alpha: float, n: int) -> None:
    if not 0.0 < alpha < 1.0:
        raise KernelError(f"alpha must lie in (0, 1), got {alpha!r}")
    if not 1 <= n <= mesh.N:
        raise IndexError(f"step index {n} outside 1..{mesh.N}")


def _omega_step(beta: float, x_near, tau):
    """omega_beta(x_near + tau) - omega_beta(x_near) without cancellation:
    x^(b-1) expm1((b-1) log1p(tau/x)) / Gamma(b). Tiny cells far from the
    evaluation point would otherwise lose all digits."""
    x = np.asarray(x_near, dtype=float)
    tau = np.asarray(tau, dtype=float)
    out = np.empty(np.broadcast(x, tau).shape)
    x, tau = np.broadcast_arrays(x, tau)
    pos = x > 0
    xp = x[pos]
    out[pos] = omega(beta, xp) * np.expm1((beta - 1.0) * np.log1p(tau[pos] / xp))
    out[~pos] = omega(beta, tau[~pos])
    return out


def _offset_gaps(mesh: TimeMesh, n: int, theta: float, k) -> np.ndarray:
    """t_{n-theta} - t_k as (t_n - t_k) - theta tau_n; the first difference is
    exact for nearby points, so short distances keep their relative accuracy."""
    t = mesh.times
    return (t[n] - t[k]) - theta * mesh.tau(n)


def l1_kernel_row(mesh: TimeMesh, alpha: float, n: int) -> KernelRow:
    _check(mesh, alpha, n)
    t = mesh.times[: n + 1]
    tau = mesh.steps[:n]
    by_k = _omega_step(2.0 - alpha, t[n] - t[1:], tau) / tau
    return KernelRow(n, 0.0, alpha, by_k[::-1].copy())


def alikhanov_a_coeffs(mesh: TimeMesh, alpha: float, n: int) -> np.ndarray:
    """a^(n)_j for j = 0..n-1 (j = n - k).

    The history entries divide by the cell width tau_k: the formula integrates
    the derivative of the interpolant, whose leading term is grad v^k / tau_k.
    """
    _check(mesh, alpha, n)
    theta = alpha / 2.0
    tau_n = mesh.tau(n)
    out = np.empty(n)
    out[0] = omega(2.0 - alpha, (1.0 - theta) * tau_n) / tau_n
    if n > 1:
        tau = mesh.steps[: n - 1]
        by_k = _omega_step(2.0 - alpha, _offset_gaps(mesh, n, theta, np.arange(1, n)), tau) / tau
        out[1:] = by_k[::-1]
    return out


def _b_integral(x_far, x_near, tau, alpha):
    r"""\int (s - t_{k-1/2}) omega_{1-a}(t_{n-theta} - s) ds over one cell.

    ``x_far``/``x_near`` are t_{n-theta} - t_{k-1} and t_{n-theta} - t_k.
    Closed form: integral of omega_{2-a} minus its trapezoid rule. Far cells
    use the odd-moment Taylor series about the cell midpoint instead, which
    avoids the cancellation in the closed form.
    """
    half = 0.5 * tau
    mid = x_near + half
    out = np.empty_like(tau)
    series = half / mid <= _B_SERIES_RATIO
    direct = ~series
    if np.any(direct):
        xf, xn, tk = x_far[direct], x_near[direct], tau[direct]
        out[direct] = (
            omega(3.0 - alpha, xf) - omega(3.0 - alpha, xn)
            - 0.5 * tk * (omega(2.0 - alpha, xf) + omega(2.0 - alpha, xn))
        )
    if np.any(series):
        m, h = mid[series], half[series]
        # g^(j)(m) h^(j+2) / j! = omega_{1-a}(m) m^2 coef_j r^(j+2), r = h/m,
        # coef_j = prod_{i<=j} (1-a-i)/i; scaled so tiny m cannot overflow
        r = h / m
        # odd j only: r^3 * poly(r^2); |coef_j| <= 1, so r_max^(j+2) sets the length
        n_odd = min(30, int(math.ceil(math.log(1e-18) / (2.0 * math.log(float(r.max()))))) + 1)
        coef, odd = 1.0, []
        for j in range(1, 2 * n_odd):
            coef *= (1.0 - alpha - j) / j
            if j % 2:
                odd.append(-2.0 * coef / (j + 2))
        acc = r**3 * np.polynomial.polynomial.polyval(r * r, odd)
        out[series] = acc * omega(1.0 - alpha, m) * m * m
    return out


def alikhanov_b_coeffs(mesh: TimeMesh, alpha: float, n: int) -> np.ndarray:
    """b^(n)_j for j = 1..n-1 (j = n - k), returned in a length-n array whose
    entry 0 is unused and set to zero."""
    _check(mesh, alpha, n)
    out = np.zeros(n)
    if n < 2:
        return out
    theta = alpha / 2.0
    tau = mesh.steps
    k = np.arange(1, n)  # history cells 1..n-1
    tau_k = tau[k - 1]
    integral = _b_integral(_offset_gaps(mesh, n, theta, k - 1), _offset_gaps(mesh, n, theta, k), tau_k, alpha)
    by_k = 2.0 / (tau_k * (tau_k + tau[k])) * integral
    out[1:] = by_k[::-1]
    return out


def alikhanov_kernel_row(mesh: TimeMesh, alpha: float, n: int) -> KernelRow:
    a = alikhanov_a_coeffs(mesh, alpha, n)
    A = a.copy()
    if n >= 2:
        b = alikhanov_b_coeffs(mesh, alpha, n)
        # j = n - k for k = n..2 pairs with rho_{k-1} b_{j+1}
        j = np.arange(n - 1)
        rho = mesh.ratios[n - j - 2]
        A[:-1] += rho * b[1:]
        A[1:] -= b[1:]
    return KernelRow(n, alpha / 2.0, alpha, A)


def kernel_row(scheme: str, mesh: TimeMesh, alpha: float, n: int) -> KernelRow:
    if scheme_offset(scheme, alpha) == 0.0:
        return l1_kernel_row(mesh, alpha, n)
    return alikhanov_kernel_row(mesh, alpha, n)


def kernel_rows(scheme: str, mesh: TimeMesh, alpha: float, upto: Optional[int] = None) -> list:
    upto = mesh.N if upto is None else upto
    return [kernel_row(scheme, mesh, alpha, n) for n in range(1, upto + 1)]


def kernel_matrix(rows: Sequence[KernelRow]) -> np.ndarray:
    """Lower-triangular table K[n-1, k-1] = A^(n)_{n-k}."""
    N = len(rows)
    K = np.zeros((N, N))
    for row in rows:
        K[row.n - 1, : row.n] = row.coeffs[::-1]
    return K


def _check_rows(rows: Sequence[KernelRow]) -> None:
    for i, row in enumerate(rows, start=1):
        if row.n != i:
            raise KernelError(f"kernel rows must be consecutive from 1; got n={row.n} at {i}")
        if not row.coeffs[0] > 0:
            raise KernelError(f"A_0 of row {row.n} is not positive ({row.coeffs[0]!r}); corrupt kernels")


def complementary_row(rows: Sequence[KernelRow]) -> ComplementaryRow:
    """P^(n)_j for the last row n = len(rows), by the descending-j recursion."""
    _check_rows(rows)
    n = len(rows)
    P = np.zeros(n)  # P[n-k]
    P[0] = 1.0 / rows[-1].coeffs[0]
    for j in range(n - 1, 0, -1):
        ks = np.arange(j + 1, n + 1)
        diffs = np.array([rows[k - 1].coeffs[k - j - 1] - rows[k - 1].coeffs[k - j] for k in ks])
        P[n - j] = np.dot(diffs, P[n - ks]) / rows[j - 1].coeffs[0]
    return ComplementaryRow(n, P)


def complementary_rows(rows: Sequence[KernelRow]) -> list:
    """All complementary rows 1..N at once.

    Same recursion as :func:`complementary_row`, run column by column (fixed
    j, all n >= j) so each step is one matrix-vector product.
    """
    _check_rows(rows)
    N = len(rows)
    K = kernel_matrix(rows)
    a0 = np.array([row.coeffs[0] for row in rows])
    # D[k-1, j-1] = A^(k)_{k-j-1} - A^(k)_{k-j} for j < k
    D = np.zeros((N, N))
    D[:, :-1] = K[:, 1:] - K[:, :-1]
    D = np.tril(D, -1)
    Q = np.zeros((N, N))  # Q[n-1, k-1] = P^(n)_{n-k}
    for j in range(N, 0, -1):
        Q[j - 1, j - 1] = 1.0 / a0[j - 1]
        if j < N:
            Q[j:, j - 1] = Q[j:, j:] @ D[j:, j - 1] / a0[j - 1]
    return [ComplementaryRow(n, Q[n - 1, :n][::-1].copy()) for n in range(1, N + 1)]


def verify_complementary_identity(p_row: ComplementaryRow, rows: Sequence[KernelRow]) -> float:
    """max_k |sum_{j=k}^n P^(n)_{n-j} A^(j)_{j-k} - 1| for the row n of ``p_row``."""
    n = p_row.n
    if len(rows) < n or p_row.coeffs.shape != (n,):
        raise KernelError("complementary row and kernel rows are inconsistent")
    dev = 0.0
    for k in range(1, n + 1):
        s = math.fsum(p_row.coeffs[n - j] * rows[j - 1].coeffs[j - k] for j in range(k, n + 1))
        dev = max(dev, abs(s - 1.0))
    return dev


def identity_deviation_all(p_rows: Sequence[ComplementaryRow], rows: Sequence[KernelRow]) -> float:
    """Identity deviation over every 1 <= k <= n <= N, via dense products."""
    N = len(rows)
    if len(p_rows) != N:
        raise KernelError("need one complementary row per kernel row")
    Q = np.zeros((N, N))
    for p in p_rows:
        Q[p.n - 1, : p.n] = p.coeffs[::-1]
    S = Q @ kernel_matrix(rows)
    mask = np.tril(np.ones((N, N), dtype=bool))
    return float(np.max(np.abs(S[mask] - 1.0)))


def verify_p_bound(
    p_rows: Sequence[ComplementaryRow], mesh: TimeMesh, alpha: float, m: int, pi_a: float
) -> float:
    """min_n [pi_A omega_{1+m a}(t_n) - sum_j P^(n)_{n-j} omega_{1+m a-a}(t_j)]."""
    if m not in (0, 1):
        raise ValueError("m must be 0 or 1")
    t = mesh.times
    w = omega(1.0 + m * alpha - alpha, t[1:])
    margin = math.inf
    for p in p_rows:
        n = p.n
        lhs = float(np.dot(p.coeffs[::-1], w[:n]))
        margin = min(margin, pi_a * omega(1.0 + m * alpha, t[n]) - lhs)
    return margin


@dataclass
class AssumptionReport:
    a1_monotone_ok: bool
    a1_first_coef_ok: bool
    a1_monotone_margin: float
    a1_first_coef_margin: float
    a2_pi_a: float
    l1_difference_margin: Optional[float] = None
    thm41_margins: Optional[dict] = None
    worst_location: Optional[dict] = None

    @property
    def ok(self) -> bool:
        ok = self.a1_monotone_ok and self.a1_first_coef_ok
        if self.thm41_margins is not None:
            ok = ok and all(v > 0 for v in self.thm41_margins.values())
        if self.l1_difference_margin is not None:
            ok = ok and self.l1_difference_margin > 0
        return ok

    def as_dict(self) -> dict:
        return {
            "a1_monotone_ok": self.a1_monotone_ok,
            "a1_first_coef_ok": self.a1_first_coef_ok,
            "a1_monotone_margin": self.a1_monotone_margin,
            "a1_first_coef_margin": self.a1_first_coef_margin,
            "a2_pi_a": self.a2_pi_a,
            "l1_difference_margin": self.l1_difference_margin,
            "thm41_margins": self.thm41_margins,
            "worst_location": self.worst_location,
        }


def _cell_moment_integral(x_far, x_near, tau, alpha):
    r"""\int_{t_{k-1}}^{t_k} (t_k - s) omega_{-a}(t_{n-theta} - s) ds (negative)."""
    return tau * omega(1.0 - alpha, x_far) - _omega_step(2.0 - alpha, x_near, tau)


def l1_lemma_margins(mesh: TimeMesh, alpha: float, rows: Sequence[KernelRow]):
    """Per-row minimum of A_{n-k-1} - A_{n-k} - (1/2) int d omega_{1-a}(t_n - s),
    together with the location (n, k) of the overall minimum."""
    t = mesh.times
    best, where = math.inf, None
    for row in rows:
        n = row.n
        if n < 2:
            continue
        k = np.arange(1, n)
        A = row.coeffs
        diff = A[n - k - 1] - A[n - k]
        rhs = -0.5 * _omega_step(1.0 - alpha, t[n] - t[k], mesh.steps[k - 1])
        marg = diff - rhs
        i = int(np.argmin(marg))
        if marg[i] < best:
            best, where = float(marg[i]), (n, int(k[i]))
    return best, where


def verify_kernel_assumptions(rows: Sequence[KernelRow], mesh: TimeMesh, nu: float) -> AssumptionReport:
    """Check A1 and A2 (empirical pi_A) on the given rows; for L1 also the
    kernel-difference lower bound, for the Alikhanov rows (nu = alpha/2) the
    three kernel properties (positivity/monotonicity with its lower bound,
    the first-difference inequality, and the 4/11 and 24/11 bounds).

    Failures are reported, never raised.
    """
    alpha = rows[0].alpha
    t = mesh.times
    tau = mesh.steps
    mono_margin = math.inf
    first_margin = math.inf
    pi_a = 0.0
    where = {}
    theta = alpha / 2.0
    alik = nu != 0.0
    m_I = m_Ipos = m_II = m_IIIa = m_IIIb = m_IIIc = math.inf
    for row in rows:
        n = row.n
        A = row.coeffs
        pos = float(A[-1])
        if pos < mono_margin:
            mono_margin, where["a1_monotone"] = pos, (n, 1)
        if n >= 2:
            d = A[:-1] - A[1:]
            i = int(np.argmin(d))
            if d[i] < mono_margin:
                mono_margin, where["a1_monotone"] = float(d[i]), (n, n - i - 1)
            fc = (1.0 - 2.0 * nu) * A[0] - (1.0 - nu) * A[1]
            if fc < first_margin:
                first_margin, where["a1_first_coef"] = float(fc), (n, n)
        # A2: the L1 kernel is exactly the integral mean in the lower bound
        k = np.arange(1, n + 1)
        l1 = (_omega_step(2.0 - alpha, t[n] - t[1 : n + 1], tau[:n]) / tau[:n])[::-1]  # indexed by n - k
        ratio = l1 / A
        i = int(np.argmax(ratio))
        if ratio[i] > pi_a:
            pi_a, where["a2_pi_a"] = float(ratio[i]), (n, n - i)
        if not alik:
            continue
        # (III): A_{n-k} < A_0 <= 24/11 * l1-mean at the last cell; A >= 4/11 * l1
        c = 24.0 / 11.0 * l1[0] - A[0]
        if c < m_IIIb:
            m_IIIb, where["III_upper"] = float(c), (n, n)
        c = float(np.min(A - 4.0 / 11.0 * l1))
        if c < m_IIIc:
            m_IIIc, where["III_lower"] = c, (n, None)
        if n < 2:
            continue
        c = float(np.min(A[0] - A[1:]))
        if c < m_IIIa:
            m_IIIa, where["III_bounded"] = c, (n, None)
        c = (A[0] - A[1]) - theta * (2.0 * A[0] - A[1])
        if c < m_II:
            m_II, where["II"] = float(c), (n, n)
        # (I) for cells k = 1..n-1
        kk = np.arange(1, n)
        b = alikhanov_b_coeffs(mesh, alpha, n)
        tau_k = tau[kk - 1]
        rho_k = mesh.ratios[kk - 1]
        J = _cell_moment_integral(_offset_gaps(mesh, n, theta, kk - 1), _offset_gaps(mesh, n, theta, kk), tau_k, alpha)
        middle = (1.0 + rho_k) * b[n - kk] - J / (5.0 * tau_k)
        lhs = A[n - kk - 1] - A[n - kk]
        c1 = lhs - middle
        i = int(np.argmin(c1))
        if c1[i] < m_I:
            m_I, where["I"] = float(c1[i]), (n, int(kk[i]))
        i = int(np.argmin(middle))
        if middle[i] < m_Ipos:
            m_Ipos, where["I_positive"] = float(middle[i]), (n, int(kk[i]))

    report = AssumptionReport(
        a1_monotone_ok=bool(mono_margin > 0 if len(rows) else True),
        a1_first_coef_ok=bool(first_margin >= 0),
        a1_monotone_margin=float(mono_margin),
        a1_first_coef_margin=float(first_margin),
        a2_pi_a=float(pi_a),
        worst_location=where,
    )
    # monotone check is ">= with strict positivity"; zero differences are allowed
    report.a1_monotone_ok = bool(_monotone_ok(rows))
    if alik:
        report.thm41_margins = {
            "I": m_I,
            "I_positive": m_Ipos,
            "II": m_II,
            "III_bounded": m_IIIa,
            "III_upper": m_IIIb,
            "III_lower": m_IIIc,
        }
    else:
        report.l1_difference_margin, where["l1_difference"] = l1_lemma_margins(mesh, alpha, rows)
    return report


def _monotone_ok(rows: Sequence[KernelRow]) -> bool:
    for row in rows:
        A = row.coeffs
        if not np.all(A > 0):
            return False
        if row.n >= 2 and not np.all(A[:-1] >= A[1:]):
            return False
    return True


def apply_discrete_caputo(rows: Sequence[KernelRow], history) -> float:
    """sum_{k=1}^n A^(n)_{n-k} (v^k - v^{k-1}) with n = len(history) - 1.

    ``rows`` may be the full list of rows (row n is picked) or the single row n.
    """
    v = np.asarray(history, dtype=float)
    n = v.shape[0] - 1
    row = rows if isinstance(rows, KernelRow) else rows[n - 1]
    if row.n != n:
        raise KernelError(f"history of length {n + 1} needs row {n}, got row {row.n}")
    return np.tensordot(row.coeffs[::-1], np.diff(v, axis=0), axes=1)


def local_consistency(
    rows: Sequence[KernelRow],
    mesh: TimeMesh,
    nu: float,
    v: Callable,
    caputo: Optional[Callable],
) -> np.ndarray:
    """Upsilon^{n-nu}[v] = (exact Caputo of v)(t_{n-nu}) - discrete value, n = 1..N."""
    if caputo is None:
        raise KernelError("local consistency needs the exact Caputo derivative of v")
    vals = np.asarray(v(mesh.times), dtype=float)
    out = np.empty(len(rows))
    for row in rows:
        n = row.n
        disc = float(np.dot(row.coeffs[::-1], np.diff(vals[: n + 1])))
        out[n - 1] = caputo(mesh.offset_time(n, nu)) - disc
    return out
