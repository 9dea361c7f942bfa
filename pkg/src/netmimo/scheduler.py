"""Time-frequency sharing across bins under a concave network utility.

Each bin k gets a fraction rho_k of the slots and delivers R_k =
rho_k * Rstar_k. Proportional fairness and max-min fairness have closed
forms (equal fractions, respectively inverse-rate weighting); the general
alpha-fairness family is solved numerically by projected gradient ascent
on the simplex.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, NumericalError

_CONVERGENCE = 1e-10
_MAX_ITER = 200_000


@dataclass(frozen=True)
class SchedulePlan:
    """Sharing fractions and resulting bin rates for one utility choice."""

    rho: np.ndarray
    bin_rates: np.ndarray
    utility_value: float
    utility_kind: str
    alpha: float | None = None


def schedule(r_star, utility="pf", alpha=None):
    """Allocate sharing fractions maximizing the chosen utility.

    utility: "pf" (proportional fairness, equal fractions), "maxmin"
    (equalizes every bin rate), or "alpha" (alpha-fairness, solved
    numerically; alpha=1 reduces to PF and large alpha approaches max-min).
    """
    r = np.asarray(r_star, dtype=float)
    if r.ndim != 1 or len(r) == 0:
        raise ConfigurationError("need a non-empty vector of bin rates")
    if np.any(r <= 0):
        raise ConfigurationError("every bin rate must be positive "
                                 "(log utilities are undefined otherwise)")
    k = len(r)
    if utility == "pf":
        rho = np.full(k, 1.0 / k)
    elif utility == "maxmin":
        w = 1.0 / r
        rho = w / w.sum()
    elif utility == "alpha":
        if alpha is None or alpha <= 0:
            raise ConfigurationError("alpha-fairness needs alpha > 0")
        rho = _alpha_fair(r, float(alpha))
    else:
        raise ConfigurationError(f"unknown utility {utility!r}")
    rates = rho * r
    return SchedulePlan(rho=rho, bin_rates=rates,
                        utility_value=_utility_value(rates, utility, alpha),
                        utility_kind=utility, alpha=alpha)


def _utility_value(rates, utility, alpha):
    if utility == "pf" or (utility == "alpha" and alpha == 1.0):
        return float(np.sum(np.log(rates)))
    if utility == "maxmin":
        return float(rates.min())
    return float(np.sum(rates ** (1.0 - alpha)) / (1.0 - alpha))


def _alpha_fair(r, alpha):
    """Projected gradient ascent for sum utility of rho_k * r_k on the simplex."""

    def value(rho):
        rates = rho * r
        if np.any(rates <= 0):
            return -math.inf
        if alpha == 1.0:
            return float(np.sum(np.log(rates)))
        with np.errstate(over="ignore"):  # alpha > 1 near the boundary: -inf
            return float(np.sum(rates ** (1.0 - alpha)) / (1.0 - alpha))

    def gradient(rho):
        rates = rho * r
        if alpha == 1.0:
            return 1.0 / rho
        with np.errstate(over="ignore"):
            return np.minimum(rates ** (-alpha), 1e300) * r

    rho = np.full(len(r), 1.0 / len(r))
    best = value(rho)
    step = 1.0
    for _ in range(_MAX_ITER):
        g = gradient(rho)
        g = g / max(np.abs(g).max(), 1e-300)
        improved = False
        while step > 1e-16:
            cand = _project_simplex(rho + step * g)
            cand_val = value(cand)
            if cand_val > best:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        gain = cand_val - best
        rho, best = cand, cand_val
        step = min(step * 2.0, 1.0)
        if gain < _CONVERGENCE:
            break
    else:
        raise NumericalError("alpha-fair scheduler failed to converge")
    return rho


def _project_simplex(v):
    """Euclidean projection onto {x >= 0, sum x = 1}."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    cond = u - css / idx > 0
    rho = idx[cond][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def system_throughput(plan, bandwidth_hz=20e6):
    """Cluster throughput in bit/s: summed bin rates times the bandwidth."""
    return float(plan.bin_rates.sum() * bandwidth_hz)


def per_user_rates(plan, populations):
    """Average per-user rate of each bin: R_k split over its m*U population."""
    pops = np.asarray(populations, dtype=float)
    if np.any(pops <= 0):
        raise ConfigurationError("bin populations must be positive")
    return plan.bin_rates / pops
