"""Scalar special functions: Riemann-Liouville weights, log-gamma and the
one-parameter Mittag-Leffler function."""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "SeriesDivergenceError",
    "gamma_sign",
    "log_gamma",
    "omega",
    "mittag_leffler",
]

ML_MAX_TERMS = 10_000
ML_RTOL = 1e-16
# largest log-magnitude a single series term may reach before overflow
_LOG_FLOAT_MAX = math.log(np.finfo(float).max)


class SeriesDivergenceError(ArithmeticError):
    """The Mittag-Leffler series did not converge within the term cap,
    or its terms overflow double precision."""


def log_gamma(x: float) -> float:
    """Natural logarithm of Gamma(x) for x > 0."""
    x = float(x)
    if not x > 0.0:
        raise ValueError(f"log_gamma requires x > 0, got {x!r}")
    return math.lgamma(x)


def gamma_sign(beta: float) -> float:
    """Sign of Gamma(beta); raises at the poles 0, -1, -2, ..."""
    if beta > 0:
        return 1.0
    if float(beta).is_integer():
        raise ValueError(f"Gamma has a pole at beta={beta!r}")
    return -1.0 if math.ceil(-beta) % 2 else 1.0


def omega(beta: float, t):
    r"""Riemann-Liouville weight :math:`\omega_\beta(t) = t^{\beta-1}/\Gamma(\beta)`.

    Accepts a scalar or an array ``t``. Evaluated in log form so that small
    ``t`` with ``beta < 1`` does not overflow an intermediate power.
    ``t = 0`` is allowed only for ``beta >= 1`` (value 0, or 1 when beta = 1).
    """
    sign = gamma_sign(beta)
    lg = math.lgamma(beta)
    scalar = np.ndim(t) == 0
    t = np.asarray(t, dtype=float)
    tmin = t.min() if t.size else 1.0
    if not tmin >= 0:  # also catches NaN
        raise ValueError("omega requires t >= 0")
    if tmin > 0:
        out = sign * np.exp((beta - 1.0) * np.log(t) - lg)
    else:
        if beta < 1:
            raise ValueError(f"omega_{beta}(0) is singular")
        zero = t == 0
        out = sign * np.exp((beta - 1.0) * np.log(np.where(zero, 1.0, t)) - lg)
        out = np.where(zero, 1.0 if beta == 1 else 0.0, out)
    return float(out) if scalar else out


def mittag_leffler(alpha: float, z: float) -> float:
    r"""One-parameter Mittag-Leffler function :math:`E_\alpha(z)`, 0 < alpha <= 1.

    Direct power series summed with :func:`math.fsum`. Intended for z >= 0
    (the bound evaluators); negative arguments are accepted but lose accuracy
    once |z| is large because of cancellation. Accuracy degrades for z beyond
    roughly 700 (alpha = 1); when the terms leave double range, or the series
    does not settle within 10,000 terms, :class:`SeriesDivergenceError` is raised.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    z = float(z)
    if z == 0.0:
        return 1.0
    logz = math.log(abs(z))
    negative = z < 0
    terms = [1.0]
    total = 1.0
    prev_log = 0.0
    for k in range(1, ML_MAX_TERMS):
        log_term = k * logz - math.lgamma(alpha * k + 1.0)
        if log_term > _LOG_FLOAT_MAX:
            raise SeriesDivergenceError(
                f"E_{alpha}({z}) terms overflow double precision at k={k}"
            )
        term = math.exp(log_term)
        if negative and k % 2:
            term = -term
        terms.append(term)
        total += term
        # terms grow until k*alpha ~ z**(1/alpha); only stop on the way down
        if log_term < prev_log and abs(term) < ML_RTOL * abs(total):
            return math.fsum(terms)
        prev_log = log_term
    raise SeriesDivergenceError(
        f"E_{alpha}({z}) did not converge within {ML_MAX_TERMS} terms"
    )
