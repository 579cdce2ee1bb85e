"""Gaussian-process regression with profiled-variance maximum likelihood.

The model is y ~ N(0, sigma2 * (C(ell) + g * I)) where C is the unit-variance
correlation matrix of a stationary kernel and eta = sigma2 * g is the noise
variance.  Profiling the scale gives sigma2_hat = y' (C + gI)^{-1} y / N in
closed form, so the likelihood is maximized over (log ell, log g) only, with
analytic gradients, an L-BFGS-B line search inside box bounds, and a handful
of random restarts.

Everything downstream (posterior mean, the noiseless prediction error
``posterior_var``, and its square root ``power_function``) is computed in
correlation scale from one Cholesky factorization, with a small jitter ladder
as a fallback for numerically semidefinite matrices.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.linalg import LinAlgError, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import pdist
from sklearn.base import BaseEstimator, RegressorMixin

from ._validate import as_points, as_vector
from .kernels import DUPLICATE_TOL, GaussianKernel

__all__ = ["GPRegressor"]

# jitter ladder tried on the correlation-scale matrix when Cholesky fails
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)


def _chol_ladder(A):
    """Lower Cholesky factor of A + jitter*I for the first workable jitter."""
    n = A.shape[0]
    for jitter in JITTER_LADDER:
        try:
            M = A if jitter == 0.0 else A + jitter * np.eye(n)
            return cholesky(M, lower=True), jitter
        except LinAlgError:
            continue
    raise LinAlgError(
        "correlation matrix is not positive definite even with jitter 1e-6; "
        "check for near-duplicate design points or increase the nugget"
    )


class GPRegressor(RegressorMixin, BaseEstimator):
    """Gaussian-process regressor with an optional profiled-likelihood fit.

    Parameters
    ----------
    kernel : kernel object, optional
        Template kernel carrying the family, smoothness and starting
        hyperparameters.  Defaults to a unit Gaussian kernel.
    g : float, default 1e-10
        Relative nugget; the noise variance is eta = sigma2 * g.  Used as the
        fixed value when ``fit_nugget`` is False and as the starting value
        otherwise.
    fit_nugget : bool, default False
        Estimate g by maximum likelihood along with the lengthscales.
    optimize : bool, default True
        If False, keep the template hyperparameters and only factorize.
    n_starts : int, default 5
        Number of optimizer starts: the template values plus random draws
        inside the bounds.
    lengthscale_bounds : (low, high), optional
        Box bounds for every lengthscale.  Defaults to (1e-3 * B, 10 * B)
        where B is half the widest coordinate span of the training inputs.
    g_bounds : (low, high), default (1e-12, 1.0)
        Box bounds for the relative nugget.
    random_state : int or numpy Generator, optional
        Seeds the random restarts.
    max_iter : int, default 100
        L-BFGS-B iteration cap per start.
    """

    def __init__(
        self,
        kernel=None,
        g=1e-10,
        fit_nugget=False,
        optimize=True,
        n_starts=5,
        lengthscale_bounds=None,
        g_bounds=(1e-12, 1.0),
        random_state=None,
        max_iter=100,
    ):
        self.kernel = kernel
        self.g = g
        self.fit_nugget = fit_nugget
        self.optimize = optimize
        self.n_starts = n_starts
        self.lengthscale_bounds = lengthscale_bounds
        self.g_bounds = g_bounds
        self.random_state = random_state
        self.max_iter = max_iter

    # ------------------------------------------------------------------
    def _template(self):
        return self.kernel if self.kernel is not None else GaussianKernel(sigma2=1.0, lengthscale=1.0)

    def _objective(self, theta, kernel, y, cache, n_ell, fit_nugget, fixed_g):
        """Negative profiled log-likelihood and gradient in log parameters."""
        ells = np.exp(theta[:n_ell])
        g = float(np.exp(theta[n_ell])) if fit_nugget else fixed_g
        k = kernel.with_lengthscales(ells)
        C, grads = k.correlation_with_grads(None, cache=cache)
        n = C.shape[0]
        Kc = C + g * np.eye(n)
        L, jitter = _chol_ladder(Kc)
        alpha = solve_triangular(L, y, lower=True)
        alpha = solve_triangular(L.T, alpha, lower=False)
        s2 = max(float(y @ alpha) / n, 1e-300)
        logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
        f = 0.5 * n * np.log(s2) + 0.5 * logdet
        # gradient: -(1/(2 s2)) a' dK a + (1/2) tr(K^{-1} dK), log-scaled
        Kinv = solve_triangular(L, np.eye(n), lower=True)
        Kinv = Kinv.T @ Kinv
        grad = np.empty(theta.size)
        for j in range(n_ell):
            dC = grads[j] * ells[j]  # d/d(log ell_j)
            grad[j] = -0.5 * (alpha @ (dC @ alpha)) / s2 + 0.5 * float(np.sum(Kinv * dC))
        if fit_nugget:
            grad[n_ell] = -0.5 * g * float(alpha @ alpha) / s2 + 0.5 * g * float(np.trace(Kinv))
        return float(f), grad, s2

    def nll_and_grad(self, theta, X, y):
        """Profiled negative log-likelihood and gradient at log parameters.

        ``theta`` stacks log lengthscales and, when ``fit_nugget`` is set,
        log g as the last entry.  Exposed for gradient diagnostics.
        """
        X = as_points(X)
        y = as_vector(y, n=X.shape[0])
        kernel = self._template()
        cache = kernel.distance_cache(X)
        n_ell = len(kernel.lengthscales)
        theta = np.asarray(theta, dtype=float)
        expected = n_ell + (1 if self.fit_nugget else 0)
        if theta.size != expected:
            raise ValueError(f"theta must have length {expected}")
        f, grad, _ = self._objective(theta, kernel, y, cache, n_ell, self.fit_nugget, float(self.g))
        return f, grad

    # ------------------------------------------------------------------
    def fit(self, X, y):
        """Fit hyperparameters (optionally) and cache the factorization."""
        X = as_points(X)
        y = as_vector(y, n=X.shape[0])
        if X.shape[0] > 1 and float(np.min(pdist(X, "chebyshev"))) < DUPLICATE_TOL:
            raise ValueError("duplicate design points (closer than 1e-12 in sup norm)")
        kernel = self._template()
        self.X_ = X
        self.y_ = y
        self.convergence_ok_ = True

        if self.optimize and X.shape[0] >= 2:
            self._fit_mle(kernel, X, y)
        else:
            self.kernel_ = kernel
            self.sigma2_ = float(kernel.sigma2)
            self.g_ = float(self.g)
        self._factorize()
        return self

    def _fit_mle(self, kernel, X, y):
        n_ell = len(kernel.lengthscales)
        lo, hi = self.lengthscale_bounds if self.lengthscale_bounds is not None else (None, None)
        if lo is None:
            span = np.max(X, axis=0) - np.min(X, axis=0)
            B = max(float(np.max(span)) / 2.0, 1e-8)
            lo, hi = 1e-3 * B, 10.0 * B
        g_lo, g_hi = self.g_bounds
        bounds = [(np.log(lo), np.log(hi))] * n_ell
        if self.fit_nugget:
            bounds.append((np.log(g_lo), np.log(g_hi)))
        cache = kernel.distance_cache(X)
        fixed_g = float(np.clip(self.g, g_lo, g_hi)) if not self.fit_nugget else float(self.g)

        start0 = np.log(np.clip(np.asarray(kernel.lengthscales, dtype=float), lo, hi))
        if self.fit_nugget:
            start0 = np.append(start0, np.log(np.clip(self.g, g_lo, g_hi)))
        rng = np.random.default_rng(self.random_state)
        starts = [start0]
        for _ in range(max(int(self.n_starts) - 1, 0)):
            s = np.array([rng.uniform(a, b) for a, b in bounds])
            starts.append(s)

        def fun(theta):
            f, grad, _ = self._objective(theta, kernel, y, cache, n_ell, self.fit_nugget, fixed_g)
            return f, grad

        best = None
        for s in starts:
            try:
                res = minimize(
                    fun, s, jac=True, method="L-BFGS-B", bounds=bounds,
                    options={"maxiter": self.max_iter},
                )
            except LinAlgError:
                continue
            if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun):
                continue
            if best is None or res.fun < best.fun:
                best = res
        if best is None:
            warnings.warn("likelihood optimization failed for every start; keeping template values")
            self.convergence_ok_ = False
            theta = start0
        else:
            theta = best.x
        _, _, s2 = self._objective(theta, kernel, y, cache, n_ell, self.fit_nugget, fixed_g)
        ells = np.exp(theta[:n_ell])
        self.g_ = float(np.exp(theta[n_ell])) if self.fit_nugget else fixed_g
        self.sigma2_ = float(s2)
        self.kernel_ = kernel.with_lengthscales(ells).with_sigma2(self.sigma2_)

    def _factorize(self):
        C = self.kernel_.correlation(self.X_)
        Kc = C + self.g_ * np.eye(self.X_.shape[0])
        self.chol_, self.jitter_used_ = _chol_ladder(Kc)
        a = solve_triangular(self.chol_, self.y_, lower=True)
        self.alpha_ = solve_triangular(self.chol_.T, a, lower=False)
        self.eta_ = self.sigma2_ * self.g_

    def refit_data(self, X, y):
        """Refactorize on new data keeping the fitted hyperparameters.

        When the model was likelihood-fitted, the profiled scale is
        re-estimated in closed form on the new data.
        """
        if not hasattr(self, "kernel_"):
            raise RuntimeError("refit_data requires a fitted model")
        X = as_points(X, dim=self.X_.shape[1])
        y = as_vector(y, n=X.shape[0])
        if X.shape[0] > 1 and float(np.min(pdist(X, "chebyshev"))) < DUPLICATE_TOL:
            raise ValueError("duplicate design points (closer than 1e-12 in sup norm)")
        self.X_ = X
        self.y_ = y
        self._factorize()
        if self.optimize:
            s2 = max(float(y @ self.alpha_) / X.shape[0], 1e-300)
            self.sigma2_ = s2
            self.kernel_ = self.kernel_.with_sigma2(s2)
            self.eta_ = self.sigma2_ * self.g_
        return self

    # ------------------------------------------------------------------
    def _cross_correlation(self, T):
        T = as_points(T, dim=self.X_.shape[1], name="T")
        return self.kernel_.correlation(T, self.X_)

    def predict(self, X, return_std=False):
        """Posterior mean (and optionally the noiseless prediction sd)."""
        c = self._cross_correlation(X)
        mean = c @ self.alpha_
        if not return_std:
            return mean
        return mean, np.sqrt(self.posterior_var(X))

    def posterior_var(self, X):
        """Noiseless prediction error k(x,x) - k_x' (K + eta I)^{-1} k_x."""
        c = self._cross_correlation(X)
        V = solve_triangular(self.chol_, c.T, lower=True)
        var = self.sigma2_ * (1.0 - np.einsum("ij,ij->j", V, V))
        floor = -1e-10 * self.sigma2_
        if np.any(var < floor):
            raise FloatingPointError(
                f"posterior variance fell below the round-off floor {floor:.3e}"
            )
        return np.maximum(var, 0.0)

    def power_function(self, X):
        """Square root of the noiseless prediction error."""
        return np.sqrt(self.posterior_var(X))

    def log_marginal_likelihood(self):
        """Full data log-likelihood at the fitted parameters."""
        n = self.X_.shape[0]
        logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol_)))) + n * np.log(self.sigma2_)
        quad = float(self.y_ @ self.alpha_) / self.sigma2_
        return -0.5 * (logdet + quad + n * np.log(2.0 * np.pi))
