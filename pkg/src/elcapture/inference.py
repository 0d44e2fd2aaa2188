"""Variance estimation, scaled likelihood-ratio intervals, one-inflation test.

The asymptotic covariance of the fitted parameter vector has a sandwich
form combining the curvature of the profile objective in theta =
(N/N_hat, beta[, omega], alpha), its mixed curvature against the
missingness parameters, and the step-one information matrix.  Curvature
blocks are estimated by central finite differences of the profile
log-likelihood; the likelihood-ratio statistic in N is chi-square
calibrated after dividing by (s_hat - V11_hat) * sigma2_hat, which feeds
the scaled confidence interval.  The one-inflation score test measures
the excess of singleton captures; its null variance comes from a
parametric bootstrap of the fitted model.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit
from scipy.stats import chi2, norm

from .data import CaptureDataset, CaptureModelSpec
from .el import ELFit, ELObjective, ELParams, FitOptions, fit_mele
from .exceptions import (
    BootstrapFailureError,
    ELCaptureError,
    NonNegativeDefiniteError,
    SingularBlockError,
    SingularUError,
    ZeroDenominatorError,
)
from .missingness import MissingnessFit, fit_missingness, pi_matrix
from .models import log_pmf_matrix, conditional_mean

__all__ = [
    "SBlocks",
    "VarianceEstimate",
    "ConfidenceInterval",
    "ScoreTestResult",
    "estimate_S_blocks",
    "sigma_and_scale",
    "estimate_variance",
    "abundance_se",
    "scaled_ci",
    "score_U_s",
    "one_inflation_test",
    "resolve_n_jobs",
]

_FD_STEP = np.finfo(float).eps ** (1.0 / 3.0)  # ~6.06e-6
_V11_REL_TOL = 0.05


def resolve_n_jobs(requested: int | None = None) -> int:
    """Worker count capped by the ELCAPTURE_THREADS environment variable."""
    cap = os.environ.get("ELCAPTURE_THREADS")
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


@dataclass(frozen=True)
class SBlocks:
    """Curvature blocks of the profile objective at the fitted maximum.

    ``S11`` is 1/N_hat times the Hessian in theta; ``S12`` is 1/N_hat
    times the mixed (theta, eta) second derivative.  The first theta
    coordinate is N/N_hat, so its derivatives carry a factor N_hat.
    """

    S11: np.ndarray
    S12: np.ndarray
    V11_analytic: float
    V11_numeric: float
    diagnostics: dict

    @property
    def theta_dim(self) -> int:
        return self.S11.shape[0]


@dataclass(frozen=True)
class VarianceEstimate:
    """Sandwich covariance and the likelihood-ratio scaling quantities."""

    Sigma_hat: np.ndarray
    sigma2: float
    s_hat: float
    V11_hat: float
    scale: float
    method: str = "numerical-hessian"

    @property
    def scale_positive(self) -> bool:
        return self.scale > 0.0


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level_a: float
    unbounded_above: bool = False
    residual_lower: float = 0.0
    residual_upper: float = 0.0

    def contains(self, value: float) -> bool:
        return self.lower <= value and (self.unbounded_above or value <= self.upper)


@dataclass(frozen=True)
class ScoreTestResult:
    """One-inflation score test: statistic, bootstrap variance, p-value."""

    U_s: float
    sigma_s2: float
    statistic: float
    p_value: float
    B: int
    n_failed: int = 0


def _theta_vector(fit: ELFit) -> np.ndarray:
    p = fit.params
    parts = [1.0, *np.asarray(p.beta, float)]
    if p.omega is not None:
        parts.append(p.omega)
    parts.append(p.alpha)
    return np.asarray(parts, float)


def _theta_params(theta: np.ndarray, n_hat: float, inflated: bool) -> ELParams:
    if inflated:
        beta = theta[1:-2]
        omega = float(np.clip(theta[-2], 1e-12, 1.0))
    else:
        beta = theta[1:-1]
        omega = None
    return ELParams(N=float(theta[0]) * n_hat, beta=beta,
                    alpha=float(theta[-1]), omega=omega)


def estimate_S_blocks(fit: ELFit, dataset: CaptureDataset,
                      spec: CaptureModelSpec,
                      eta_fit: MissingnessFit) -> SBlocks:
    """Central-difference curvature blocks at the fitted maximum.

    Per-coordinate steps are max(1, |coordinate|) * eps^(1/3).  The (1,1)
    entry of S11 is replaced by the analytic value -alpha/(1 - alpha)
    when the numerical estimate agrees within 5%; otherwise the numerical
    value is kept and a diagnostic warning is emitted.

    Raises
    ------
    NonNegativeDefiniteError
        If S11 has clearly positive curvature (the point is not a local
        maximum); near-zero eigenvalues are clipped instead and recorded
        in the diagnostics.
    """
    inflated = spec.one_inflated
    n_hat = fit.params.N
    theta0 = _theta_vector(fit)
    q = len(theta0)
    eta0 = np.asarray(eta_fit.eta_hat, float)
    r = len(eta0)
    diagnostics: dict = {}

    base_obj = ELObjective(dataset, spec, eta0)
    obj_cache: dict = {}

    def objective(theta, eta_key=None, eta_vec=None):
        if eta_key is None:
            obj = base_obj
        else:
            obj = obj_cache.get(eta_key)
            if obj is None:
                obj = ELObjective(dataset, spec, eta_vec)
                obj_cache[eta_key] = obj
        params = _theta_params(theta, n_hat, inflated)
        return obj.loglik(params)[0]

    steps = np.maximum(1.0, np.abs(theta0)) * _FD_STEP
    if inflated:
        # keep omega perturbations inside (0, 1]
        room = (1.0 - 1e-9) - theta0[-2]
        if room < steps[-2]:
            steps = steps.copy()
            steps[-2] = max(room, 1e-9)
            diagnostics["omega_step_clipped"] = True

    f0 = objective(theta0)
    H = np.empty((q, q))
    for j in range(q):
        tp = theta0.copy(); tp[j] += steps[j]
        tm = theta0.copy(); tm[j] -= steps[j]
        H[j, j] = (objective(tp) + objective(tm) - 2.0 * f0) / steps[j] ** 2
    for j in range(q):
        for l in range(j + 1, q):
            tpp = theta0.copy(); tpp[j] += steps[j]; tpp[l] += steps[l]
            tmm = theta0.copy(); tmm[j] -= steps[j]; tmm[l] -= steps[l]
            tpm = theta0.copy(); tpm[j] += steps[j]; tpm[l] -= steps[l]
            tmp = theta0.copy(); tmp[j] -= steps[j]; tmp[l] += steps[l]
            H[j, l] = H[l, j] = (
                objective(tpp) + objective(tmm) - objective(tpm) - objective(tmp)
            ) / (4.0 * steps[j] * steps[l])
    S11 = H / n_hat

    eta_steps = np.maximum(1.0, np.abs(eta0)) * _FD_STEP
    M = np.empty((q, r))
    for l in range(r):
        ep = eta0.copy(); ep[l] += eta_steps[l]
        em = eta0.copy(); em[l] -= eta_steps[l]
        for j in range(q):
            tp = theta0.copy(); tp[j] += steps[j]
            tm = theta0.copy(); tm[j] -= steps[j]
            M[j, l] = (
                objective(tp, ("+", l), ep) - objective(tp, ("-", l), em)
                - objective(tm, ("+", l), ep) + objective(tm, ("-", l), em)
            ) / (4.0 * steps[j] * eta_steps[l])
    S12 = M / n_hat

    alpha = fit.params.alpha
    v11_analytic = -alpha / (1.0 - alpha)
    v11_numeric = float(S11[0, 0])
    if abs(v11_numeric - v11_analytic) < _V11_REL_TOL * abs(v11_analytic):
        S11 = S11.copy()
        S11[0, 0] = v11_analytic
        diagnostics["v11_substituted"] = True
    else:
        warnings.warn(
            f"numerical V11 {v11_numeric:.6f} disagrees with analytic "
            f"{v11_analytic:.6f} by more than {_V11_REL_TOL:.0%}",
            RuntimeWarning,
        )
        diagnostics["v11_substituted"] = False
        diagnostics["v11_mismatch"] = True

    S11 = 0.5 * (S11 + S11.T)
    eigvals, eigvecs = np.linalg.eigh(S11)
    if eigvals.max() > 1e-6 * max(1.0, np.abs(eigvals).max()):
        raise NonNegativeDefiniteError(
            "profile Hessian has positive curvature; not a local maximum")
    if eigvals.max() > -1e-10:
        clipped = np.minimum(eigvals, -1e-10)
        S11 = (eigvecs * clipped) @ eigvecs.T
        diagnostics["eigenvalue_clipped"] = True

    return SBlocks(S11=S11, S12=S12, V11_analytic=v11_analytic,
                   V11_numeric=v11_numeric, diagnostics=diagnostics)


def sigma_and_scale(S11: np.ndarray, S12: np.ndarray,
                    U_hat: np.ndarray) -> VarianceEstimate:
    """Sandwich covariance and likelihood-ratio scale from the blocks.

    Sigma = -S11^-1 S12 U^-1 S21 S11^-1 - S11^-1 with S21 = S12', and the
    scale is (s - V11) * sigma2 with s the quadratic form of the first
    row of S11 against the inverse of its trailing block.
    """
    S11 = np.asarray(S11, float)
    S12 = np.asarray(S12, float)
    try:
        S11_inv = np.linalg.inv(S11)
    except np.linalg.LinAlgError:
        raise SingularBlockError("S11 is singular") from None
    try:
        U_inv = np.linalg.inv(np.asarray(U_hat, float))
    except np.linalg.LinAlgError:
        raise SingularUError("step-one information matrix is singular") from None
    B = S11_inv @ S12
    Sigma = -B @ U_inv @ B.T - S11_inv
    sigma2 = float(Sigma[0, 0])
    if sigma2 <= 0.0:
        raise SingularBlockError("nonpositive abundance variance estimate")
    try:
        s_hat = float(S11[0, 1:] @ np.linalg.solve(S11[1:, 1:], S11[1:, 0]))
    except np.linalg.LinAlgError:
        raise SingularBlockError("trailing block of S11 is singular") from None
    v11 = float(S11[0, 0])
    return VarianceEstimate(Sigma_hat=Sigma, sigma2=sigma2, s_hat=s_hat,
                            V11_hat=v11, scale=(s_hat - v11) * sigma2)


def estimate_variance(fit: ELFit, dataset: CaptureDataset,
                      spec: CaptureModelSpec,
                      eta_fit: MissingnessFit) -> VarianceEstimate:
    """Blocks plus step-one information combined into the sandwich."""
    blocks = estimate_S_blocks(fit, dataset, spec, eta_fit)
    u_hat = eta_fit.u_hat(fit.params.N)
    return sigma_and_scale(blocks.S11, blocks.S12, u_hat)


def abundance_se(fit: ELFit, variance: VarianceEstimate) -> float:
    """Standard error of the abundance: sqrt(N_hat * sigma2)."""
    return float(np.sqrt(fit.params.N * variance.sigma2))


def parameter_se(fit: ELFit, variance: VarianceEstimate) -> np.ndarray:
    """Standard errors of (beta[, omega], alpha) from the sandwich."""
    diag = np.diag(variance.Sigma_hat)[1:]
    return np.sqrt(np.maximum(diag, 0.0) / fit.params.N)


class _RatioCurve:
    """Likelihood-ratio curve in N with warm-started inner maximizations."""

    def __init__(self, fit: ELFit, dataset: CaptureDataset,
                 spec: CaptureModelSpec, eta_fit):
        self.obj = ELObjective(dataset, spec, eta_fit)
        self.fit = fit
        p = fit.params
        self._start = (np.asarray(p.beta, float), p.alpha,
                       min(p.omega if p.omega is not None else 1.0, 1.0 - 1e-9))
        self._options = FitOptions(use_zero_start=False, use_zt_start=False,
                                   gtol=1e-6, polish=True)

    def ratio(self, N: float) -> float:
        best = self.obj.maximize([self._start], n_fixed=float(N),
                                 n_cap=self.fit.n_cap, options=self._options)
        self._start = (best["beta"], best["alpha"],
                       best["omega"] if best["omega"] is not None else 1.0 - 1e-9)
        return max(2.0 * (self.fit.loglik - best["value"]), 0.0)


def scaled_ci(fit: ELFit, dataset: CaptureDataset, spec: CaptureModelSpec,
              eta_fit: MissingnessFit, level_a: float = 0.05,
              variance: VarianceEstimate | None = None) -> ConfidenceInterval:
    """Scaled likelihood-ratio confidence interval for the abundance.

    Endpoints solve R(N) / scale = chi2_1(1 - a) by bracket expansion
    from the fitted abundance followed by root refinement; the lower
    bracket is clipped at m and a missing upper root below the abundance
    cap is reported as an interval unbounded above.
    """
    if not 0.0 < level_a < 1.0:
        raise ValueError("level_a must lie in (0, 1)")
    if variance is None:
        variance = estimate_variance(fit, dataset, spec, eta_fit)
    if variance.scale <= 0.0:
        raise SingularBlockError("likelihood-ratio scale is not positive")
    q_target = float(chi2.ppf(1.0 - level_a, df=1))
    curve = _RatioCurve(fit, dataset, spec, eta_fit)
    scale = variance.scale

    def g(N: float) -> float:
        return curve.ratio(N) / scale - q_target

    n_hat = fit.params.N
    m = float(dataset.m)
    se = abundance_se(fit, variance)
    step0 = max(se, 0.05 * n_hat, 2.0)

    def refine(lo, hi, glo, ghi):
        root = brentq(g, lo, hi, xtol=1e-7 * max(1.0, n_hat), rtol=4e-16)
        resid = g(root)
        for _ in range(60):
            if abs(resid) <= 1e-6:
                break
            if np.sign(resid) == np.sign(glo):
                lo = root
            else:
                hi = root
            root = 0.5 * (lo + hi)
            resid = g(root)
        return root, resid

    # lower endpoint
    lo_hi = n_hat
    step = step0
    lower, res_lo = m, 0.0
    found = False
    for _ in range(200):
        cand = max(lo_hi - step, m)
        val = g(cand)
        if val > 0.0:
            lower, res_lo = refine(cand, lo_hi, val, -q_target)
            found = True
            break
        if cand <= m:
            lower, res_lo = m, val
            break
        lo_hi = cand
        step *= 1.8
    if not found and lower > m:
        raise ELCaptureError("lower endpoint search failed")

    # upper endpoint
    hi_lo = n_hat
    step = step0
    upper, res_hi = np.inf, 0.0
    unbounded = True
    for _ in range(200):
        cand = hi_lo + step
        if cand >= fit.n_cap:
            val = g(fit.n_cap)
            if val > 0.0:
                upper, res_hi = refine(hi_lo, fit.n_cap, -q_target, val)
                unbounded = False
            break
        val = g(cand)
        if val > 0.0:
            upper, res_hi = refine(hi_lo, cand, -q_target, val)
            unbounded = False
            break
        hi_lo = cand
        step *= 1.8
    return ConfidenceInterval(lower=float(lower), upper=float(upper),
                              level_a=level_a, unbounded_above=unbounded,
                              residual_lower=float(res_lo),
                              residual_upper=float(res_hi))


def score_U_s(beta, eta, dataset: CaptureDataset,
              spec: CaptureModelSpec) -> float:
    """Score-type statistic for excess singleton captures.

    Sums pi(x_i, 1) / phi(z_i) - 1(d_i = 1) / f(1 | z_i) over complete
    cases; its expectation is zero exactly when there is no inflation.

    Raises
    ------
    ZeroDenominatorError
        If f(1 | z_i) vanishes for some complete case.
    """
    eta = np.asarray(getattr(eta, "eta_hat", eta), float)
    spec_null = replace(spec, one_inflated=False)
    obj = ELObjective(dataset, spec_null, eta)
    mdl = obj._model_eval(np.asarray(beta, float), None)
    if mdl is None:
        raise ZeroDenominatorError("capture rate out of range")
    phi = mdl["phi"]
    Z = obj.Z
    f1 = np.exp(log_pmf_matrix(Z, beta, spec_null, k_hi=1))[:, 1]
    if np.any(f1 <= 0.0):
        raise ZeroDenominatorError("f(1 | z) vanishes for a complete case")
    pi1 = pi_matrix(obj.X, np.asarray([1]), eta)[:, 0]
    ones = (obj.d_obs == 1).astype(float)
    return float(np.sum(pi1 / phi - ones / f1))


def _draw_bootstrap_dataset(rng, pool_z, pool_g, cum_p, n_sim, eta, spec,
                            dim_x):
    """One parametric-bootstrap dataset from the fitted null model."""
    idx = np.searchsorted(cum_p, rng.random(n_sim), side="right")
    idx = np.minimum(idx, len(cum_p) - 1)
    if spec.family == "binomial":
        d = rng.binomial(spec.n_occasions, pool_g[idx])
    else:
        d = rng.poisson(pool_g[idx])
    keep = d > 0
    idx, d = idx[keep], d[keep]
    z = pool_z[idx]
    x = z[:, 1:1 + dim_x]
    probs = expit(eta[0] + x @ eta[1:-1] + eta[-1] * d)
    r = (rng.random(len(d)) < probs).astype(np.int64)
    y = z[:, 1 + dim_x:].copy()
    y[r == 0] = np.nan
    order = np.argsort(1 - r, kind="stable")
    return CaptureDataset(d=d[order], x=x[order], y=y[order], r=r[order],
                          validated=True)


def one_inflation_test(dataset: CaptureDataset, spec: CaptureModelSpec,
                       eta_fit: MissingnessFit, fit_null: ELFit,
                       B: int = 500, seed: int | None = None,
                       n_jobs: int | None = None) -> ScoreTestResult:
    """Left-tailed test of no one-inflation against an excess of ones.

    The null variance of the normalized score is estimated by a
    parametric bootstrap: datasets are simulated from the fitted null
    (covariates drawn from the EL-weighted empirical distribution, counts
    from the fitted capture model, missingness from the fitted logistic),
    the two-step fit is repeated, and the normalized scores' sample
    variance is taken.

    Raises
    ------
    BootstrapFailureError
        If more than 20% of bootstrap replicates fail to converge.
    """
    if B < 2:
        raise ValueError("need at least 2 bootstrap replicates")
    spec_null = replace(spec, one_inflated=False)
    eta0 = np.asarray(eta_fit.eta_hat, float)
    u_obs = score_U_s(fit_null.params.beta, eta0, dataset, spec_null)

    pool_z = ELObjective(dataset, spec_null, eta0).Z
    pool_lin = pool_z @ np.asarray(fit_null.params.beta, float)
    if spec.family == "binomial":
        pool_g = expit(pool_lin)
    else:
        pool_g = np.exp(np.clip(pool_lin, -700, 50))
    cum_p = np.cumsum(fit_null.weights.p)
    cum_p[-1] = 1.0
    n_sim = int(round(fit_null.params.N))
    warm = FitOptions.fast(fit_null.params)

    def replicate(b):
        rng = np.random.Generator(np.random.Philox(
            np.random.SeedSequence(entropy=seed, spawn_key=(b,))))
        ds_b = _draw_bootstrap_dataset(rng, pool_z, pool_g, cum_p, n_sim,
                                       eta0, spec_null, spec.dim_x)
        if ds_b.m < 2 or ds_b.m == ds_b.n:
            return None
        try:
            eta_b = fit_missingness(ds_b)
            fit_b = fit_mele(ds_b, spec_null, eta_b, warm)
            u_b = score_U_s(fit_b.params.beta, eta_b.eta_hat, ds_b, spec_null)
        except ELCaptureError:
            return None
        return u_b / np.sqrt(fit_b.params.N)

    n_jobs = resolve_n_jobs(n_jobs)
    if n_jobs > 1:
        from joblib import Parallel, delayed
        draws = Parallel(n_jobs=n_jobs)(delayed(replicate)(b) for b in range(B))
    else:
        draws = [replicate(b) for b in range(B)]
    values = np.asarray([v for v in draws if v is not None], float)
    n_failed = B - len(values)
    if n_failed > 0.2 * B:
        raise BootstrapFailureError(
            f"{n_failed}/{B} bootstrap replicates failed to converge")
    sigma_s2 = float(np.var(values, ddof=1))
    statistic = u_obs / np.sqrt(fit_null.params.N * sigma_s2)
    return ScoreTestResult(U_s=u_obs, sigma_s2=sigma_s2, statistic=statistic,
                           p_value=float(norm.cdf(statistic)), B=B,
                           n_failed=n_failed)
