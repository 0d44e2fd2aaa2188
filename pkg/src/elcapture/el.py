"""Semiparametric empirical-likelihood engine.

The profile log-likelihood of (N, beta, alpha) combines a binomial term
for the number of complete cases, the capture-count likelihood of the
observed counts, and an empirical-likelihood penalty enforcing the moment
constraint sum_i p_i {phi(z_i) - alpha} = 0 through its Lagrange
multiplier xi.  Maximization is nested: for fixed (beta, alpha) the
abundance N has a one-dimensional strictly decreasing stationarity
equation in digamma functions, so N is profiled out analytically and a
quasi-Newton search runs over (beta, alpha[, omega]) with alpha and omega
on the logit scale.  Fixing N instead of profiling it yields the profile
likelihood-ratio curve in N.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize
from scipy.special import digamma, expit, gammaln, log_expit

from .data import CaptureDataset, CaptureModelSpec
from .exceptions import (
    InfeasibleParametersError,
    NoInteriorRootError,
    NonConvergenceError,
)
from .missingness import MissingnessFit, pi_matrix
from .models import poisson_grid

__all__ = [
    "ELParams",
    "XiSolution",
    "ELWeights",
    "FitOptions",
    "ELFit",
    "solve_xi",
    "el_weights",
    "profile_loglik",
    "fit_mele",
    "el_ratio",
    "ELObjective",
]

_XI_TOL = 1e-12
_PENALTY = 1e10
_LOGIT_ALPHA_BOUND = 30.0
_LOGIT_OMEGA_BOUND = 20.72  # omega within 1e-9 of {0, 1}
_BETA_BOUND = 60.0
_POISSON_RATE_CAP = 2000.0


def _logit(p: float) -> float:
    p = min(max(p, 1e-13), 1.0 - 1e-13)
    return float(np.log(p / (1.0 - p)))


def _eta_vec(eta) -> np.ndarray:
    if isinstance(eta, MissingnessFit):
        return eta.eta_hat
    return np.asarray(eta, float)


@dataclass(frozen=True)
class ELParams:
    """Parameter point (N, beta, alpha[, omega]) of the profile likelihood."""

    N: float
    beta: np.ndarray
    alpha: float
    omega: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.omega is not None and not 0.0 < self.omega <= 1.0:
            raise ValueError("omega must lie in (0, 1]")
        object.__setattr__(self, "beta", np.asarray(self.beta, float))


@dataclass(frozen=True)
class XiSolution:
    """Root of the Lagrange-multiplier equation with its residual and bracket."""

    xi: float
    residual: float
    bracket: tuple
    iterations: int = 0


@dataclass(frozen=True)
class ELWeights:
    """Empirical-likelihood masses on the complete-case covariate points."""

    p: np.ndarray


def solve_xi(phis, alpha: float, tol: float = _XI_TOL,
             max_iter: int = 300, x0: float = 0.0) -> XiSolution:
    """Solve sum_i (phi_i - alpha) / {1 + xi (phi_i - alpha)} = 0 for xi.

    The left side is strictly decreasing on the open bracket whose
    endpoints make some factor 1 + xi(phi_i - alpha) vanish, so the root
    is unique whenever alpha lies strictly between min and max phi.
    Safeguarded Newton: steps leaving the current sign-change bracket fall
    back to bisection.  ``x0`` is an optional starting guess (ignored if
    outside the bracket).

    Raises
    ------
    NoInteriorRootError
        If all deviations phi_i - alpha share one sign.
    """
    d = np.asarray(phis, float) - alpha
    dmax = float(d.max())
    dmin = float(d.min())
    if max(abs(dmax), abs(dmin)) < 1e-13:
        return XiSolution(0.0, 0.0, (-np.inf, np.inf), 0)
    if dmax <= 0.0 or dmin >= 0.0:
        raise NoInteriorRootError(
            "alpha lies outside the span of the inclusion probabilities")
    lo = -1.0 / dmax
    hi = -1.0 / dmin
    xi = x0 if lo < x0 < hi else 0.0
    res = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        w = 1.0 / (1.0 + xi * d)
        dw = d * w
        res = float(dw.sum())
        if abs(res) <= tol:
            break
        if res > 0.0:
            lo = xi
        else:
            hi = xi
        slope = -float(dw @ dw)
        cand = xi - res / slope
        if not lo < cand < hi:
            cand = 0.5 * (lo + hi)
        xi = cand
    return XiSolution(xi, res, (-1.0 / dmax, -1.0 / dmin), it)


def el_weights(phis, alpha: float, xi: float | XiSolution) -> ELWeights:
    """EL masses p_i = (1/m) / [1 + xi (phi_i - alpha)]."""
    xi_val = xi.xi if isinstance(xi, XiSolution) else float(xi)
    d = np.asarray(phis, float) - alpha
    denom = 1.0 + xi_val * d
    if np.any(denom <= 0.0):
        raise InfeasibleParametersError("nonpositive EL weight denominator")
    return ELWeights(p=1.0 / (len(d) * denom))


@dataclass(frozen=True)
class FitOptions:
    """Tuning knobs for the profile maximization."""

    use_zero_start: bool = True
    use_zt_start: bool = True
    warm: ELParams | None = None
    omega_start: float = 0.9
    n_cap_factor: float = 100.0
    gtol: float = 1e-6
    maxiter: int = 300
    omega_boundary_tol: float = 1e-6
    record_path: bool = False
    polish: bool = True

    @classmethod
    def fast(cls, warm: ELParams, gtol: float = 1e-4) -> "FitOptions":
        """Single warm start without polishing; for bootstrap refits."""
        return cls(use_zero_start=False, use_zt_start=False, warm=warm,
                   gtol=gtol, maxiter=150, polish=False)


@dataclass(frozen=True)
class ELFit:
    """Converged maximizer of the profile empirical log-likelihood."""

    params: ELParams
    xi: XiSolution
    weights: ELWeights
    loglik: float
    eta: np.ndarray
    converged: bool
    n_cap: float
    trace: dict = field(default_factory=dict)

    @property
    def cap_hit(self) -> bool:
        return bool(self.trace.get("cap_hit", False))

    @property
    def boundary_omega(self) -> bool:
        return bool(self.trace.get("boundary_omega", False))


class ELObjective:
    """Vectorized evaluation of the profile log-likelihood and its gradient.

    Precomputes the complete-case covariate matrix and the table of
    non-missingness probabilities over the count grid (eta stays fixed
    within one objective), so each evaluation at (beta, alpha[, omega])
    costs a handful of dense matrix operations.
    """

    def __init__(self, dataset: CaptureDataset, spec: CaptureModelSpec, eta):
        if not dataset.validated:
            raise ValueError("dataset must be validated before fitting")
        self.spec = spec
        self.eta = _eta_vec(eta)
        self.m = dataset.m
        self.n = dataset.n
        self.Z = dataset.z_complete
        self.d_obs = np.asarray(dataset.d[: self.m], np.int64)
        self.X = self.Z[:, 1:1 + spec.dim_x]
        self.p_beta = self.Z.shape[1]
        self.n_free = self.p_beta + 1 + (1 if spec.one_inflated else 0)
        if spec.family == "binomial":
            K = spec.n_occasions
            ks = np.arange(K + 1.0)
            self._logbinom = gammaln(K + 1) - gammaln(ks + 1) - gammaln(K - ks + 1)
            self._ks = ks
            self._pi_tab = pi_matrix(self.X, np.arange(1, K + 1), self.eta)
        else:
            self._pi_cols = np.empty((self.m, 0))
        self._lam_cap = _POISSON_RATE_CAP
        self._xi_hint = 0.0
        self._rows = np.arange(self.m)

    # -- pmf tables ------------------------------------------------------

    def _pi_upto(self, k_hi: int) -> np.ndarray:
        cached = self._pi_cols.shape[1]
        if k_hi > cached:
            new = pi_matrix(self.X, np.arange(cached + 1, k_hi + 1), self.eta)
            self._pi_cols = np.hstack([self._pi_cols, new])
        return self._pi_cols[:, :k_hi]

    def _model_eval(self, beta, omega):
        """pmf-level quantities at (beta, omega); None if the rate explodes.

        Gradient pieces are per-row scalars: every beta-derivative of the
        pmf and of phi is that scalar times z_i.  The one-inflation point
        mass on k = 1 is handled as a correction to the plain-model sums,
        so no inflated pmf table is materialized.
        """
        spec = self.spec
        lin = self.Z @ beta
        if spec.family == "binomial":
            K = spec.n_occasions
            # k log g + (K - k) log(1 - g) = k lin + K log(1 - g)
            logf = (self._logbinom[None, :] + lin[:, None] * self._ks
                    + (K * log_expit(-lin))[:, None])
            f = np.exp(logf)
            c = K * expit(lin)
            pi_tab = self._pi_tab
            win = None
            ks1 = self._ks[1:]
        else:
            lam = np.exp(np.clip(lin, -700.0, 700.0))
            if lam.max() > self._lam_cap:
                return None
            k_min, k_max = poisson_grid(lam)
            k_hi = int(max(k_max.max(), self.d_obs.max()))
            ks = np.arange(k_hi + 1.0)
            logf = lin[:, None] * ks - lam[:, None] - gammaln(ks + 1.0)[None, :]
            f = np.exp(logf)
            c = lam
            pi_tab = self._pi_upto(k_hi)
            ks1 = ks[1:]
            # truncation window for the tail sums; k = 1 always kept so the
            # one-inflation point mass is never dropped
            win = (((ks1[None, :] >= k_min[:, None])
                    & (ks1[None, :] <= k_max[:, None]))
                   | (ks1[None, :] == 1.0))

        rows = self._rows
        d = self.d_obs
        pif = pi_tab * f[:, 1:]
        if win is not None:
            pif *= win
        pif_sum = pif.sum(axis=1)
        s_k = pif @ ks1
        logpmf = logf[rows, d]
        if omega is None or omega == 1.0:
            return dict(phi=pif_sum, sphi_b=s_k - c * pif_sum, sphi_w=None,
                        logpmf=logpmf, dobs_b=d - c, dobs_w=None)

        f0 = f[:, 0]
        pi1 = pi_tab[:, 0]
        spike = (1.0 - omega) * (1.0 - f0)
        phi = omega * pif_sum + pi1 * spike
        # beta-coefficient of the k = 1 cell gains (1 - omega) f0 c over
        # the omega-scaled plain term
        sphi_b = omega * (s_k - c * pif_sum) + pi1 * (1.0 - omega) * f0 * c
        sphi_w = pif_sum - pi1 * (1.0 - f0)
        f_d = f[rows, d]
        is1 = d == 1
        h_d = omega * f_d + np.where(is1, spike, 0.0)
        if np.any(h_d <= 0.0):
            return None
        num_b = omega * f_d * (d - c) + np.where(is1, (1.0 - omega) * f0 * c, 0.0)
        num_w = f_d - np.where(is1, 1.0 - f0, 0.0)
        return dict(
            phi=phi,
            sphi_b=sphi_b,
            sphi_w=sphi_w,
            logpmf=np.log(h_d),
            dobs_b=num_b / h_d,
            dobs_w=num_w / h_d,
        )

    # -- abundance profile -----------------------------------------------

    def profile_abundance(self, alpha: float, n_cap: float):
        """Maximizer over N of the binomial block at fixed alpha.

        Solves digamma(N + 1) - digamma(N - m + 1) = -log(1 - alpha),
        whose left side decreases strictly in N; returns (N, at_cap).
        The Newton slope uses 1/(N + 1/2) - 1/(N - m + 1/2), an accurate
        stand-in for the trigamma difference that avoids slow special
        functions; the bisection safeguard keeps the iteration exact.
        """
        m = self.m
        target = -np.log1p(-alpha)
        if digamma(m + 1.0) - digamma(1.0) <= target:
            return float(m), False
        if digamma(n_cap + 1.0) - digamma(n_cap - m + 1.0) >= target:
            return float(n_cap), True
        lo, hi = float(m), float(n_cap)
        # digamma(N+1) - digamma(N-m+1) ~ log((N+1/2)/(N-m+1/2)) gives the
        # closed-form guess N ~ m/alpha - 1/2
        N = min(max(m / alpha - 0.5, lo + 1e-9), hi - 1e-9)
        for _ in range(100):
            g = float(digamma(N + 1.0) - digamma(N - m + 1.0)) - target
            if abs(g) <= 1e-13:
                break
            if g > 0.0:
                lo = N
            else:
                hi = N
            slope = 1.0 / (N + 0.5) - 1.0 / (N - m + 0.5)
            cand = N - g / slope
            if not lo < cand < hi:
                cand = 0.5 * (lo + hi)
            if abs(cand - N) <= 1e-11 * max(1.0, N):
                N = cand
                break
            N = cand
        return float(N), False

    def _binomial_block(self, N: float, alpha: float) -> float:
        m = self.m
        return float(gammaln(N + 1.0) - gammaln(m + 1.0) - gammaln(N - m + 1.0)
                     + (N - m) * np.log1p(-alpha))

    # -- objective --------------------------------------------------------

    def bounds(self):
        b = [(-_BETA_BOUND, _BETA_BOUND)] * self.p_beta
        b.append((-_LOGIT_ALPHA_BOUND, _LOGIT_ALPHA_BOUND))
        if self.spec.one_inflated:
            b.append((-_LOGIT_OMEGA_BOUND, _LOGIT_OMEGA_BOUND))
        return b

    def _unpack(self, t):
        beta = t[: self.p_beta]
        alpha = float(expit(t[self.p_beta]))
        omega = float(expit(t[self.p_beta + 1])) if self.spec.one_inflated else None
        return beta, alpha, omega

    def neg_loglik_grad(self, t, n_fixed=None, n_cap=None):
        """Negative profile log-likelihood and gradient in the optimizer
        coordinates (beta, logit alpha[, logit omega]).

        Infeasible points (alpha outside the phi span, exploding Poisson
        rates, zero pmf at an observed count) return a large penalty with
        a slope steering alpha back toward feasibility.
        """
        beta, alpha, omega = self._unpack(t)
        g = np.zeros_like(t)
        mdl = self._model_eval(beta, omega)
        if mdl is None:
            return _PENALTY, g
        phi = mdl["phi"]
        lo, hi = float(phi.min()), float(phi.max())
        if not lo < alpha < hi:
            viol = (lo - alpha) if alpha <= lo else (alpha - hi)
            sgn = -1.0 if alpha <= lo else 1.0
            g[self.p_beta] = _PENALTY * sgn * alpha * (1.0 - alpha)
            return _PENALTY * (1.0 + viol), g
        try:
            xi_sol = solve_xi(phi, alpha, x0=self._xi_hint)
        except NoInteriorRootError:
            return _PENALTY, g
        xi = xi_sol.xi
        self._xi_hint = xi
        dlt = phi - alpha
        w = 1.0 / (1.0 + xi * dlt)

        if n_fixed is None:
            N, _ = self.profile_abundance(alpha, n_cap)
        else:
            N = float(n_fixed)
        value = (self._binomial_block(N, alpha) + float(np.sum(mdl["logpmf"]))
                 - float(np.sum(np.log1p(xi * dlt))))
        if not np.isfinite(value):
            return _PENALTY, g

        coef = mdl["dobs_b"] - xi * w * mdl["sphi_b"]
        g[: self.p_beta] = self.Z.T @ coef
        d_alpha = -(N - self.m) / (1.0 - alpha) + xi * float(np.sum(w))
        g[self.p_beta] = d_alpha * alpha * (1.0 - alpha)
        if self.spec.one_inflated:
            d_omega = float(np.sum(mdl["dobs_w"])) - xi * float(
                np.sum(w * mdl["sphi_w"]))
            g[self.p_beta + 1] = d_omega * omega * (1.0 - omega)
        return -value, -g

    def loglik(self, params: ELParams):
        """Profile log-likelihood at an explicit parameter point.

        Returns (value, xi solution, phi vector).  Raises
        InfeasibleParametersError when the EL constraint set is empty.
        """
        if params.N < self.m:
            raise ValueError(f"N = {params.N} is below the number of "
                             f"complete cases m = {self.m}")
        omega = params.omega if self.spec.one_inflated else None
        mdl = self._model_eval(np.asarray(params.beta, float), omega)
        if mdl is None:
            raise InfeasibleParametersError("capture rate out of range")
        phi = mdl["phi"]
        try:
            xi_sol = solve_xi(phi, params.alpha)
        except NoInteriorRootError as exc:
            raise InfeasibleParametersError(str(exc)) from exc
        dlt = phi - params.alpha
        value = (self._binomial_block(params.N, params.alpha)
                 + float(np.sum(mdl["logpmf"]))
                 - float(np.sum(np.log1p(xi_sol.xi * dlt))))
        return value, xi_sol, phi

    def phi_at(self, params: ELParams):
        omega = params.omega if self.spec.one_inflated else None
        mdl = self._model_eval(np.asarray(params.beta, float), omega)
        if mdl is None:
            raise InfeasibleParametersError("capture rate out of range")
        return mdl["phi"]

    # -- maximization ------------------------------------------------------

    def zero_truncated_start(self) -> np.ndarray:
        """Warm start for beta: MLE of the zero-truncated count regression."""
        Z, d = self.Z, self.d_obs
        spec = self.spec

        def negll(beta):
            lin = np.clip(Z @ beta, -500.0, 500.0)
            if spec.family == "binomial":
                K = spec.n_occasions
                logf = (gammaln(K + 1) - gammaln(d + 1.0) - gammaln(K - d + 1.0)
                        + d * log_expit(lin) + (K - d) * log_expit(-lin))
                c = K * expit(lin)
                logf0 = K * log_expit(-lin)
            else:
                lam = np.exp(lin)
                logf = d * lin - lam - gammaln(d + 1.0)
                c = lam
                logf0 = -lam
            f0 = np.exp(logf0)
            val = np.sum(logf - np.log1p(-f0))
            coef = (d - c) - c * f0 / (1.0 - f0)
            return -val, -(Z.T @ coef)

        res = minimize(negll, np.zeros(self.p_beta), jac=True, method="BFGS",
                       options=dict(maxiter=200, gtol=1e-8))
        return res.x

    def maximize(self, starts, n_fixed=None, n_cap=None, options=None):
        """Run the quasi-Newton search from each start; keep the best.

        Ties on the objective (within 1e-8) break toward the smaller
        fitted abundance.
        """
        options = options or FitOptions()
        bounds = self.bounds()
        best = None
        traces = []
        for idx, (beta0, alpha0, omega0) in enumerate(starts):
            t0 = np.concatenate([
                np.asarray(beta0, float),
                [_logit(alpha0)],
                [_logit(omega0)] if self.spec.one_inflated else [],
            ])
            path = []
            cb = None
            if options.record_path:
                cb = lambda tk: path.append(
                    -self.neg_loglik_grad(tk, n_fixed, n_cap)[0])
            res = minimize(
                self.neg_loglik_grad, t0, args=(n_fixed, n_cap), jac=True,
                method="L-BFGS-B", bounds=bounds, callback=cb,
                options=dict(maxiter=options.maxiter, ftol=1e-14,
                             gtol=0.1 * options.gtol, maxls=60),
            )
            t_fin, f_fin, g_fin = res.x, res.fun, res.jac
            gnorm = self._projected_grad_norm(t_fin, g_fin, bounds)
            if options.polish and gnorm > options.gtol:
                t_fin, f_fin, g_fin = self._newton_polish(
                    t_fin, f_fin, g_fin, n_fixed, n_cap, bounds, options.gtol)
                gnorm = self._projected_grad_norm(t_fin, g_fin, bounds)
            beta, alpha, omega = self._unpack(t_fin)
            if n_fixed is None:
                N, at_cap = self.profile_abundance(alpha, n_cap)
            else:
                N, at_cap = float(n_fixed), False
            value = -f_fin
            cand = dict(value=value, N=N, beta=beta, alpha=alpha, omega=omega,
                        at_cap=at_cap, grad_norm=gnorm, nit=res.nit,
                        nfev=res.nfev, start=idx, path=path)
            traces.append(dict(start=idx, value=value, nit=res.nit,
                               grad_norm=gnorm))
            if best is None or value > best["value"] + 1e-8 or (
                    abs(value - best["value"]) <= 1e-8 and N < best["N"]):
                best = cand
        best["all_starts"] = traces
        return best

    def _newton_polish(self, t, f, g, n_fixed, n_cap, bounds, gtol,
                       max_steps: int = 5):
        """Damped Newton steps on the L-BFGS-B endpoint.

        The quasi-Newton search stalls once function changes reach machine
        precision; a couple of exact Newton steps (Hessian by central
        differences of the analytic gradient) push the gradient sup-norm
        to the stationarity tolerance.
        """
        k = len(t)
        for _ in range(max_steps):
            if self._projected_grad_norm(t, g, bounds) <= 0.1 * gtol:
                break
            H = np.empty((k, k))
            for j in range(k):
                h = 1e-6 * max(1.0, abs(t[j]))
                tp = t.copy(); tp[j] += h
                tm = t.copy(); tm[j] -= h
                H[:, j] = (self.neg_loglik_grad(tp, n_fixed, n_cap)[1]
                           - self.neg_loglik_grad(tm, n_fixed, n_cap)[1]) / (2 * h)
            H = 0.5 * (H + H.T)
            try:
                step = np.linalg.solve(H, -np.asarray(g, float))
            except np.linalg.LinAlgError:
                break
            improved = False
            scale = 1.0
            for _ in range(10):
                cand = np.clip(t + scale * step,
                               [b[0] for b in bounds], [b[1] for b in bounds])
                f_c, g_c = self.neg_loglik_grad(cand, n_fixed, n_cap)
                if f_c <= f + 1e-12:
                    t, f, g = cand, f_c, g_c
                    improved = True
                    break
                scale *= 0.5
            if not improved:
                break
        return t, f, g

    @staticmethod
    def _projected_grad_norm(t, grad, bounds):
        g = np.array(grad, float)
        for j, (lo, hi) in enumerate(bounds):
            if t[j] <= lo + 1e-12 and g[j] > 0:
                g[j] = 0.0
            if t[j] >= hi - 1e-12 and g[j] < 0:
                g[j] = 0.0
        return float(np.max(np.abs(g)))


def profile_loglik(params: ELParams, dataset: CaptureDataset,
                   spec: CaptureModelSpec, eta) -> float:
    """Profile empirical log-likelihood at (N, beta, alpha[, omega]).

    The additive step-one term sum_i log pi(x_i, d_i) is a constant once
    eta is fixed and is omitted, matching the maximized objective.
    """
    obj = ELObjective(dataset, spec, eta)
    value, _, _ = obj.loglik(params)
    return value


def _build_starts(obj: ELObjective, options: FitOptions):
    starts = []

    def alpha_for(beta):
        mdl = obj._model_eval(np.asarray(beta, float),
                              options.omega_start if obj.spec.one_inflated else None)
        if mdl is None:
            return 0.5
        phi = mdl["phi"]
        a = float(np.mean(phi))
        lo, hi = float(phi.min()), float(phi.max())
        if not lo < a < hi:
            a = 0.5 * (lo + hi)
        return min(max(a, 1e-8), 1.0 - 1e-8)

    if options.warm is not None:
        w = options.warm
        starts.append((np.asarray(w.beta, float), float(w.alpha),
                       min(w.omega if w.omega is not None else 1.0, 1.0 - 1e-9)))
    if options.use_zt_start:
        beta_zt = obj.zero_truncated_start()
        starts.append((beta_zt, alpha_for(beta_zt), options.omega_start))
    if options.use_zero_start:
        beta0 = np.zeros(obj.p_beta)
        starts.append((beta0, alpha_for(beta0), options.omega_start))
    if not starts:
        raise ValueError("no optimizer starts configured")
    return starts


def fit_mele(dataset: CaptureDataset, spec: CaptureModelSpec, eta,
             options: FitOptions | None = None) -> ELFit:
    """Two-step maximum empirical-likelihood fit.

    Step one (eta) must already be fitted; its estimate enters through the
    inclusion probabilities.  Returns the maximizer with EL weights,
    Lagrange multiplier, and optimizer diagnostics.

    Raises
    ------
    NonConvergenceError
        If no start reaches the stationarity tolerance.
    """
    options = options or FitOptions()
    obj = ELObjective(dataset, spec, eta)
    n_cap = options.n_cap_factor * obj.m
    best = obj.maximize(_build_starts(obj, options), n_fixed=None,
                        n_cap=n_cap, options=options)
    omega = best["omega"]
    boundary_omega = bool(
        spec.one_inflated and omega is not None
        and omega > 1.0 - options.omega_boundary_tol)
    params = ELParams(N=best["N"], beta=best["beta"], alpha=best["alpha"],
                      omega=omega)
    value, xi_sol, phi = obj.loglik(params)
    weights = el_weights(phi, params.alpha, xi_sol)
    converged = best["grad_norm"] <= options.gtol and not best["at_cap"]
    if not converged and best["grad_norm"] > 1e-2:
        raise NonConvergenceError(
            f"profile maximization stalled (grad norm {best['grad_norm']:.2e})")
    trace = dict(
        grad_norm=best["grad_norm"],
        nit=best["nit"],
        nfev=best["nfev"],
        start_used=best["start"],
        all_starts=best["all_starts"],
        cap_hit=best["at_cap"],
        boundary_omega=boundary_omega,
        path=best["path"],
        stationarity_xi=xi_sol.xi - (params.N - obj.m) / (obj.m * (1.0 - params.alpha)),
    )
    return ELFit(params=params, xi=xi_sol, weights=weights, loglik=value,
                 eta=_eta_vec(eta), converged=converged, n_cap=n_cap,
                 trace=trace)


def el_ratio(N: float, dataset: CaptureDataset, spec: CaptureModelSpec,
             eta, fit: ELFit, options: FitOptions | None = None) -> float:
    """Profile likelihood-ratio value 2{l(fit) - max_{beta,alpha} l(N, .)}.

    The inner maximization is warm-started from the fitted parameters.
    """
    if N < dataset.m:
        raise ValueError(f"N = {N} is below m = {dataset.m}")
    options = options or FitOptions()
    obj = ELObjective(dataset, spec, eta)
    starts = [(fit.params.beta,
               fit.params.alpha,
               min(fit.params.omega or 1.0, 1.0 - 1e-9))]
    best = obj.maximize(starts, n_fixed=float(N), n_cap=fit.n_cap,
                        options=options)
    if best["grad_norm"] > 1e-2:
        beta_zt = obj.zero_truncated_start()
        retry = obj.maximize([(beta_zt, fit.params.alpha,
                               min(fit.params.omega or 1.0, 1.0 - 1e-9))],
                             n_fixed=float(N), n_cap=fit.n_cap, options=options)
        if retry["value"] > best["value"]:
            best = retry
        if best["grad_norm"] > 1e-2:
            raise NonConvergenceError("constrained profile maximization stalled")
    ratio = 2.0 * (fit.loglik - best["value"])
    if ratio < -1e-6:
        raise NonConvergenceError(
            f"profile value at N = {N} exceeds the fitted maximum by "
            f"{-ratio / 2:.3e}; the fit was not a global maximizer")
    return max(ratio, 0.0)
