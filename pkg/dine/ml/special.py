"""
Standard-normal special functions and a stable log-sum-exp
"""

import numpy as np
from scipy import special

from dine.core.exceptions import DomainError

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


def std_normal_cdf(x):
    """Phi(x), computed through the complementary error function"""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("std_normal_cdf requires finite input")
    out = special.ndtr(x)
    return out if out.ndim else float(out)


def std_normal_icdf(p):
    """Phi^-1(p) for p strictly inside (0, 1), refined by one Newton step"""
    p = np.asarray(p, dtype=float)
    if np.any(~np.isfinite(p)) or np.any(p <= 0.0) or np.any(p >= 1.0):
        raise DomainError("std_normal_icdf requires p strictly in (0, 1)")
    x = special.ndtri(p)
    # Newton on Phi(x) - p = 0
    x = x - (special.ndtr(x) - p) / std_normal_pdf(x)
    return x if x.ndim else float(x)


def std_normal_pdf(x):
    x = np.asarray(x, dtype=float)
    return np.exp(std_normal_logpdf(x))


def std_normal_logpdf(x):
    x = np.asarray(x, dtype=float)
    return -0.5 * x * x - LOG_SQRT_2PI


def log_sum_exp(terms) -> float:
    terms = np.asarray(terms, dtype=float).ravel()
    if terms.size == 0:
        raise DomainError("log_sum_exp of an empty vector")
    return float(special.logsumexp(terms))
