"""Conditional capture-count distributions and inclusion probabilities.

Two families for the count D given covariates z = (1, x, y): a binomial
model with K occasions and success probability logistic in beta'z, and a
Poisson model with rate exp(beta'z).  Either family can carry a
one-inflation parameter omega that moves mass from the positive counts
onto exactly one capture.  The inclusion probability phi(z) is the chance
that an individual is captured at least once and has complete covariates,
i.e. the pi-weighted tail sum of the count distribution.

All pmf evaluations go through log space (log-gamma for the binomial
coefficients and factorials) and exponentiate last, so Poisson tails and
extreme linear predictors do not overflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, log_expit, expit

from .data import CaptureModelSpec
from .exceptions import DegenerateSupportError
from .missingness import pi_matrix

__all__ = [
    "TruncationBounds",
    "truncation_bounds",
    "f_pmf",
    "h_pmf",
    "phi",
    "phi_e",
    "v_f",
    "cond_prob_given_captured",
    "log_pmf_matrix",
    "inflate_pmf_matrix",
    "conditional_mean",
    "poisson_grid",
]

# Poisson sums over k are truncated once the rate exceeds this; below it a
# fixed 1..30 window already captures the mass to ~1e-12.
_RATE_CUTOFF = 16.0
_SMALL_RATE_KMAX = 30


@dataclass(frozen=True)
class TruncationBounds:
    """Summation window [k_min, k_max] for Poisson tail sums."""

    k_min: int
    k_max: int

    def __post_init__(self):
        if not (1 <= self.k_min <= self.k_max):
            raise ValueError("need 1 <= k_min <= k_max")


def truncation_bounds(lambda_star: float) -> TruncationBounds:
    """Summation window for a Poisson rate: fixed (1, 30) for small rates,
    else five standard deviations around the rate."""
    if lambda_star <= 0:
        raise ValueError("lambda_star must be positive")
    if lambda_star <= _RATE_CUTOFF:
        return TruncationBounds(1, _SMALL_RATE_KMAX)
    half = 5.0 * np.sqrt(lambda_star)
    return TruncationBounds(max(1, int(np.floor(lambda_star - half))),
                            int(np.ceil(lambda_star + half)))


def poisson_grid(lam: np.ndarray):
    """Vectorized truncation bounds for an array of Poisson rates.

    Returns (k_min, k_max) integer arrays following the same rule as
    :func:`truncation_bounds`.
    """
    lam = np.asarray(lam, float)
    half = 5.0 * np.sqrt(lam)
    k_min = np.where(lam <= _RATE_CUTOFF, 1,
                     np.maximum(1, np.floor(lam - half))).astype(np.int64)
    k_max = np.where(lam <= _RATE_CUTOFF, _SMALL_RATE_KMAX,
                     np.ceil(lam + half)).astype(np.int64)
    return k_min, k_max


def _linear(z, beta):
    return np.asarray(z, float) @ np.asarray(beta, float)


def log_pmf_matrix(Z: np.ndarray, beta: np.ndarray, spec: CaptureModelSpec,
                   k_hi: int | None = None) -> np.ndarray:
    """Log pmf table log f(k | z_i) for k = 0..k_hi, shape (n, k_hi + 1).

    For the binomial family ``k_hi`` defaults to K and columns beyond K
    (if requested) are -inf.
    """
    Z = np.atleast_2d(np.asarray(Z, float))
    lin = Z @ np.asarray(beta, float)
    if spec.family == "binomial":
        K = spec.n_occasions
        if k_hi is None:
            k_hi = K
        ks = np.arange(k_hi + 1.0)
        kk = np.minimum(ks, K)
        logc = gammaln(K + 1) - gammaln(kk + 1) - gammaln(K - kk + 1)
        table = (logc[None, :]
                 + np.outer(log_expit(lin), kk)
                 + np.outer(log_expit(-lin), K - kk))
        if k_hi > K:
            table[:, K + 1:] = -np.inf
        return table
    lam_log = lin
    if k_hi is None:
        _, kmax = poisson_grid(np.exp(np.clip(lam_log, -700, 700)))
        k_hi = int(kmax.max())
    ks = np.arange(k_hi + 1.0)
    return (np.outer(lam_log, ks) - np.exp(np.clip(lam_log, -700, 700))[:, None]
            - gammaln(ks + 1)[None, :])


def inflate_pmf_matrix(f_mat: np.ndarray, omega: float) -> np.ndarray:
    """Apply one-inflation to a pmf table whose columns are k = 0..k_hi.

    Mass omega*f(k) stays on each positive count and the remainder of the
    positive mass, (1 - omega)*(1 - f(0)), piles onto k = 1; the zero
    class is untouched.
    """
    h = omega * f_mat
    h[:, 0] = f_mat[:, 0]
    h[:, 1] += (1.0 - omega) * (1.0 - f_mat[:, 0])
    return h


def f_pmf(k, z, beta, spec: CaptureModelSpec):
    """Capture-count pmf f(k | z) for scalar or array k."""
    k_arr = np.atleast_1d(np.asarray(k, np.int64))
    if np.any(k_arr < 0):
        raise ValueError("counts must be nonnegative")
    lin = float(_linear(z, beta))
    if spec.family == "binomial":
        K = spec.n_occasions
        inside = np.minimum(k_arr, K)
        logp = (gammaln(K + 1) - gammaln(inside + 1.0) - gammaln(K - inside + 1.0)
                + inside * log_expit(lin) + (K - inside) * log_expit(-lin))
        out = np.where(k_arr > K, 0.0, np.exp(logp))
    else:
        out = np.exp(k_arr * lin - np.exp(min(lin, 700.0)) - gammaln(k_arr + 1.0))
    return out if np.ndim(k) else float(out[0])


def h_pmf(k, z, beta, omega: float, spec: CaptureModelSpec):
    """One-inflated capture-count pmf h(k | z)."""
    k_arr = np.atleast_1d(np.asarray(k, np.int64))
    f = np.atleast_1d(f_pmf(k_arr, z, beta, spec))
    f0 = f_pmf(0, z, beta, spec)
    out = omega * f
    out[k_arr == 0] = f0
    out[k_arr == 1] += (1.0 - omega) * (1.0 - f0)
    return out if np.ndim(k) else float(out[0])


def _phi_rows(Z, beta, eta, spec, omega=1.0):
    Z = np.atleast_2d(np.asarray(Z, float))
    X = Z[:, 1:1 + spec.dim_x]
    if spec.family == "binomial":
        ks = np.arange(1, spec.n_occasions + 1)
        f_mat = np.exp(log_pmf_matrix(Z, beta, spec))
        h_mat = inflate_pmf_matrix(f_mat, omega) if omega != 1.0 else f_mat
        return np.sum(pi_matrix(X, ks, eta) * h_mat[:, 1:], axis=1)
    lam = np.exp(np.clip(Z @ np.asarray(beta, float), -700, 700))
    k_min, k_max = poisson_grid(lam)
    k_hi = int(k_max.max())
    ks = np.arange(k_hi + 1)
    f_mat = np.exp(log_pmf_matrix(Z, beta, spec, k_hi=k_hi))
    h_mat = inflate_pmf_matrix(f_mat, omega) if omega != 1.0 else f_mat
    mask = (ks[None, :] >= np.maximum(k_min, 1)[:, None]) & (ks[None, :] <= k_max[:, None])
    weighted = np.where(mask, h_mat, 0.0)[:, 1:]
    return np.sum(pi_matrix(X, ks[1:], eta) * weighted, axis=1)


def phi(z, beta, eta, spec: CaptureModelSpec):
    """Inclusion probability P(D > 0, R = 1 | Z = z).

    Accepts a single stacked covariate vector or a matrix of rows.
    """
    out = _phi_rows(z, beta, eta, spec)
    return out if np.ndim(z) == 2 else float(out[0])


def phi_e(z, beta, omega, eta, spec: CaptureModelSpec):
    """Inclusion probability under the one-inflated count model."""
    out = _phi_rows(z, beta, eta, spec, omega=omega)
    return out if np.ndim(z) == 2 else float(out[0])


def conditional_mean(Z, beta, spec: CaptureModelSpec):
    """E(D | z): K g(z) for the binomial family, the rate for Poisson."""
    Z = np.atleast_2d(np.asarray(Z, float))
    lin = Z @ np.asarray(beta, float)
    if spec.family == "binomial":
        return spec.n_occasions * expit(lin)
    return np.exp(np.clip(lin, -700, 700))


def v_f(z, beta, spec: CaptureModelSpec):
    """Conditional variance of the capture count given z."""
    lin = float(_linear(z, beta))
    if spec.family == "binomial":
        g = expit(lin)
        return spec.n_occasions * g * (1.0 - g)
    return float(np.exp(min(lin, 700.0)))


def cond_prob_given_captured(k, z, beta, omega, spec: CaptureModelSpec):
    """pmf of D given z and D > 0 under the one-inflated model.

    Raises
    ------
    DegenerateSupportError
        If f(0 | z) = 1 to machine precision, so no positive count is
        possible.
    """
    k_arr = np.atleast_1d(np.asarray(k, np.int64))
    if np.any(k_arr < 1):
        raise ValueError("conditional pmf is defined for k >= 1")
    f0 = f_pmf(0, z, beta, spec)
    denom = 1.0 - f0
    if denom <= np.finfo(float).eps:
        raise DegenerateSupportError("capture distribution is all mass at zero")
    f = np.atleast_1d(f_pmf(k_arr, z, beta, spec))
    out = omega * f / denom
    out[k_arr == 1] += 1.0 - omega
    return out if np.ndim(k) else float(out[0])
