"""Step one: logistic model for the probability that y is observed.

The non-missingness probability given the fully observed covariates x and
the capture count k is logistic in (1, x, k).  Because x and d are always
recorded, the coefficient vector is estimated from all n rows by ordinary
conditional maximum likelihood, independently of the abundance machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .data import CaptureDataset
from .exceptions import (
    DegenerateResponseError,
    SeparationError,
    SingularHessianError,
)

__all__ = ["MissingnessFit", "pi", "pi_matrix", "fit_missingness", "u_matrix",
           "design_matrix", "loglik_pi", "score_pi", "neg_hessian_pi"]

_ETA_SUP_BOUND = 30.0  # iterates beyond this are treated as separation


@dataclass(frozen=True)
class MissingnessFit:
    """Fitted non-missingness model.

    ``info_matrix`` is the unnormalized information sum
    sum_i pi_i (1 - pi_i) v_i v_i' with v_i = (1, x_i, d_i); dividing it by
    a population-size plug-in gives the per-individual information matrix,
    and its inverse estimates the covariance of ``eta_hat`` directly.
    """

    eta_hat: np.ndarray
    info_matrix: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    score_norm: float

    def u_hat(self, n_plug: float) -> np.ndarray:
        """Information matrix normalized by a population-size plug-in."""
        return self.info_matrix / float(n_plug)

    @property
    def eta_cov(self) -> np.ndarray:
        """Estimated covariance of eta_hat (inverse information sum)."""
        return np.linalg.inv(self.info_matrix)

    @property
    def eta_se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.eta_cov))


def pi(x, k, eta) -> float:
    """Non-missingness probability for covariates x and capture count k.

    Saturates cleanly to 0 or 1 for extreme linear predictors.
    """
    v = np.concatenate(([1.0], np.asarray(x, float).ravel(), [float(k)]))
    return float(expit(v @ np.asarray(eta, float)))


def pi_matrix(X, ks, eta) -> np.ndarray:
    """Matrix pi(x_i, k) over rows of X and a grid of counts, shape (n, len(ks))."""
    X = np.atleast_2d(np.asarray(X, float))
    eta = np.asarray(eta, float)
    base = eta[0] + X @ eta[1:-1]
    return expit(base[:, None] + eta[-1] * np.asarray(ks, float)[None, :])


def design_matrix(dataset: CaptureDataset) -> np.ndarray:
    """Step-one design (1, x_i, d_i) over all n rows."""
    return np.column_stack([np.ones(dataset.n), dataset.x,
                            dataset.d.astype(float)])


def loglik_pi(dataset: CaptureDataset, eta) -> float:
    """Conditional log-likelihood of the missingness indicators."""
    V = design_matrix(dataset)
    lin = V @ np.asarray(eta, float)
    r = dataset.r
    return float(np.sum(np.where(r == 1, log_expit(lin), log_expit(-lin))))


def score_pi(dataset: CaptureDataset, eta) -> np.ndarray:
    V = design_matrix(dataset)
    mu = expit(V @ np.asarray(eta, float))
    return V.T @ (dataset.r - mu)


def neg_hessian_pi(dataset: CaptureDataset, eta) -> np.ndarray:
    """Negative Hessian of the step-one log-likelihood.

    Algebraically identical to the unnormalized information sum
    sum_i pi_i (1 - pi_i) v_i v_i' at the same eta.
    """
    V = design_matrix(dataset)
    mu = expit(V @ np.asarray(eta, float))
    return (V * (mu * (1.0 - mu))[:, None]).T @ V


def u_matrix(dataset: CaptureDataset, eta, n_plug: float) -> np.ndarray:
    """Normalized information sum (1/n_plug) sum_i pi_i(1-pi_i) v_i v_i'.

    Every observed row has d > 0, so summing over the sample realizes the
    captured-at-least-once indicator in the population-level expectation;
    the plug-in divisor should therefore be an abundance estimate, not n.
    """
    return neg_hessian_pi(dataset, eta) / float(n_plug)


def fit_missingness(dataset: CaptureDataset, tol: float = 1e-8,
                    max_iter: int = 100) -> MissingnessFit:
    """Fit eta by damped Newton iteration on the conditional likelihood.

    Raises
    ------
    DegenerateResponseError
        If every row has the same missingness indicator.
    SeparationError
        If the iterates diverge (logistic MLE does not exist).
    SingularHessianError
        If the Newton system is rank-deficient.
    """
    r = dataset.r
    if np.all(r == 1) or np.all(r == 0):
        raise DegenerateResponseError(
            "all missingness indicators are equal; eta is not identifiable")
    V = design_matrix(dataset)
    q = V.shape[1]

    def _ll(e):
        lin = V @ e
        return float(np.sum(np.where(r == 1, log_expit(lin), log_expit(-lin))))

    eta = np.zeros(q)
    ll = _ll(eta)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        mu = expit(V @ eta)
        score = V.T @ (r - mu)
        if np.max(np.abs(score)) <= tol:
            converged = True
            break
        H = (V * (mu * (1.0 - mu))[:, None]).T @ V
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError:
            raise SingularHessianError(
                "singular Hessian in the step-one Newton iteration") from None
        # step-halving line search; concave objective, so full steps
        # are accepted away from separation
        scale = 1.0
        for _ in range(40):
            cand = eta + scale * step
            cand_ll = _ll(cand)
            if cand_ll >= ll - 1e-12:
                break
            scale *= 0.5
        eta = eta + scale * step
        ll = cand_ll
        if np.max(np.abs(eta)) > _ETA_SUP_BOUND:
            raise SeparationError(
                "missingness model separation: iterates diverged")
        mu = expit(V @ eta)
        if (mu.min() < 1e-12 or mu.max() > 1.0 - 1e-12) and \
                np.linalg.norm(scale * step) > 1.0:
            raise SeparationError(
                "missingness model separation: fitted probabilities at 0/1")
    score = V.T @ (r - expit(V @ eta))
    info = neg_hessian_pi(dataset, eta)
    return MissingnessFit(
        eta_hat=eta,
        info_matrix=info,
        loglik=_ll(eta),
        converged=converged,
        iterations=it,
        score_norm=float(np.max(np.abs(score))),
    )
