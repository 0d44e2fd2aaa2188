"""Scikit-learn style front end for the two-step abundance fit.

``TwoStepAbundance`` wraps the functional pipeline (missingness fit,
empirical-likelihood maximization, sandwich variance) behind the usual
estimator contract: constructor parameters are stored verbatim,
``fit`` sets trailing-underscore attributes and returns ``self``, and
``get_params``/``set_params``/``clone`` work out of the box.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import CaptureDataset, CaptureModelSpec, validate
from .el import FitOptions, fit_mele
from .inference import (
    abundance_se,
    estimate_variance,
    one_inflation_test,
    parameter_se,
    scaled_ci,
)
from .missingness import fit_missingness

__all__ = ["TwoStepAbundance"]


def _as_dataset(X) -> CaptureDataset:
    if isinstance(X, CaptureDataset):
        return X
    if isinstance(X, pd.DataFrame):
        cols = [str(c) for c in X.columns]
        if "d" not in cols:
            raise ValueError("frame must contain a 'd' column")
        x_cols = [c for c in cols if c.startswith("x:")]
        y_cols = [c for c in cols if c.startswith("y:")]
        if not y_cols:
            raise ValueError("frame must contain at least one 'y:<name>' column")
        r = X["r"].to_numpy(np.int64) if "r" in cols else None
        return CaptureDataset(
            d=X["d"].to_numpy(np.int64),
            x=X[x_cols].to_numpy(float) if x_cols else np.empty((len(X), 0)),
            y=X[y_cols].to_numpy(float),
            r=r,
            x_names=[c[2:] for c in x_cols],
            y_names=[c[2:] for c in y_cols],
        )
    raise TypeError(f"cannot interpret {type(X).__name__} as a capture dataset")


class TwoStepAbundance(BaseEstimator):
    """Two-step semiparametric empirical-likelihood abundance estimator.

    Parameters
    ----------
    family : {"binomial", "poisson"}
        Capture-count model family.
    n_occasions : int, optional
        Number of capture occasions (binomial family only).
    one_inflated : bool, default=False
        Fit the one-inflated count model with an extra parameter omega.
    n_cap_factor : float, default=100.0
        Abundance search cap as a multiple of the number of complete cases.
    compute_variance : bool, default=True
        Estimate the sandwich covariance during ``fit``.

    Attributes
    ----------
    abundance_ : float
        Fitted population size (continuous maximizer).
    beta_ : ndarray
        Capture-model coefficients on (1, x, y).
    alpha_ : float
        Fitted inclusion probability P(D > 0, R = 1).
    omega_ : float or None
        One-inflation parameter (only when ``one_inflated=True``).
    eta_ : ndarray
        Step-one missingness coefficients on (1, x, d).
    se_abundance_ : float
        Standard error of the abundance.
    result_ : ELFit
        Full fit object with weights, multiplier, and diagnostics.

    Examples
    --------
    >>> est = TwoStepAbundance(family="binomial", n_occasions=17)
    >>> est.fit(frame)                         # doctest: +SKIP
    >>> est.abundance_, est.confidence_interval(0.05)   # doctest: +SKIP
    """

    def __init__(self, family="binomial", n_occasions=None, one_inflated=False,
                 n_cap_factor=100.0, compute_variance=True):
        self.family = family
        self.n_occasions = n_occasions
        self.one_inflated = one_inflated
        self.n_cap_factor = n_cap_factor
        self.compute_variance = compute_variance

    # -- sklearn plumbing ---------------------------------------------------

    def _check_is_fitted(self):
        if not hasattr(self, "result_"):
            raise NotFittedError(
                "this TwoStepAbundance instance is not fitted yet")

    def _make_spec(self, dataset: CaptureDataset) -> CaptureModelSpec:
        return CaptureModelSpec(
            family=self.family,
            n_occasions=self.n_occasions,
            one_inflated=self.one_inflated,
            dim_x=dataset.dim_x,
            dim_y=dataset.dim_y,
        )

    # -- estimation -----------------------------------------------------------

    def fit(self, X, y=None):
        """Fit the two-step estimator.

        Parameters
        ----------
        X : CaptureDataset or pandas.DataFrame
            Observations; frames follow the CSV column contract
            (``d``, ``x:<name>``, ``y:<name>``, optional ``r``).
        y : ignored
            Present for scikit-learn API compatibility.

        Returns
        -------
        self
        """
        dataset = _as_dataset(X)
        spec = self._make_spec(dataset)
        if not dataset.validated:
            dataset = validate(dataset, spec)
        self.dataset_ = dataset
        self.spec_ = spec
        self.n_, self.m_ = dataset.n, dataset.m

        self.missingness_ = fit_missingness(dataset)
        self.eta_ = self.missingness_.eta_hat
        self.eta_se_ = self.missingness_.eta_se

        options = FitOptions(n_cap_factor=self.n_cap_factor)
        self.result_ = fit_mele(dataset, spec, self.missingness_, options)
        params = self.result_.params
        self.abundance_ = params.N
        self.beta_ = params.beta
        self.alpha_ = params.alpha
        self.omega_ = params.omega
        self.loglik_ = self.result_.loglik
        self.converged_ = self.result_.converged
        self.weights_ = self.result_.weights.p
        self.xi_ = self.result_.xi.xi

        self.variance_ = None
        if self.compute_variance:
            self.variance_ = estimate_variance(
                self.result_, dataset, spec, self.missingness_)
            self.se_abundance_ = abundance_se(self.result_, self.variance_)
            self.se_parameters_ = parameter_se(self.result_, self.variance_)
            self.scale_ = self.variance_.scale
        return self

    def confidence_interval(self, level_a: float = 0.05):
        """Scaled likelihood-ratio interval for the abundance at level 1-a."""
        self._check_is_fitted()
        variance = self.variance_ or estimate_variance(
            self.result_, self.dataset_, self.spec_, self.missingness_)
        return scaled_ci(self.result_, self.dataset_, self.spec_,
                         self.missingness_, level_a=level_a, variance=variance)

    def score_test(self, n_bootstrap: int = 500, seed: int | None = None):
        """One-inflation score test based on the non-inflated null fit."""
        self._check_is_fitted()
        if self.one_inflated:
            null_spec = replace(self.spec_, one_inflated=False)
            null_fit = fit_mele(self.dataset_, null_spec, self.missingness_,
                                FitOptions(n_cap_factor=self.n_cap_factor))
        else:
            null_fit = self.result_
        return one_inflation_test(self.dataset_, self.spec_,
                                  self.missingness_, null_fit,
                                  B=n_bootstrap, seed=seed)

    def __sklearn_is_fitted__(self):
        return hasattr(self, "result_")
