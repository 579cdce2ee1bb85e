"""Stationary covariance kernels and their spectral densities.

Three families are provided: the squared-exponential (Gaussian) kernel, the
isotropic Matern kernel, and a separable product of one-dimensional Matern
kernels with one lengthscale per input dimension.  All kernels expose

* ``pointwise(x, y)`` -- a single covariance value,
* ``__call__(X, Y=None)`` -- a dense covariance matrix,
* ``correlation(X, Y=None)`` -- the unit-variance version of the above,
* ``spectral_density(omega)`` -- the spectral density under the convention
  ``S(w) = \\int k(h) exp(-i w.h) dh``, so that
  ``k(0) = (2 pi)^-d \\int S(w) dw``,
* ``correlation_with_grads(X)`` -- the correlation matrix together with its
  derivatives with respect to each lengthscale (used by the MLE).

Kernel objects are immutable; ``with_lengthscales`` returns an updated copy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import pi, sqrt

import numpy as np
from scipy.spatial.distance import cdist, pdist
from scipy.special import gammaln, kv

from ._validate import as_point, as_points, check_nonnegative, check_positive

__all__ = [
    "GaussianKernel",
    "MaternKernel",
    "ProductMaternKernel",
    "kernel_matrix",
    "make_kernel",
]

# two design points closer than this (sup-norm) are treated as duplicates
DUPLICATE_TOL = 1e-12


def _matern_corr_1arg(z, nu):
    """Matern correlation as a function of z = sqrt(2 nu) r / ell >= 0."""
    z = np.asarray(z, dtype=float)
    if nu == 0.5:
        return np.exp(-z)
    if nu == 1.5:
        return (1.0 + z) * np.exp(-z)
    if nu == 2.5:
        return (1.0 + z + z * z / 3.0) * np.exp(-z)
    out = np.empty_like(z)
    zero = z == 0.0
    zs = z[~zero]
    log_pref = (1.0 - nu) * np.log(2.0) - gammaln(nu)
    out[~zero] = np.exp(log_pref + nu * np.log(zs)) * kv(nu, zs)
    out[zero] = 1.0
    return out


def _matern_corr_dell(z, nu, ell):
    """d/d(ell) of the Matern correlation, again in terms of z >= 0.

    Uses d/dz [z^nu K_nu(z)] = -z^nu K_{nu-1}(z) together with
    dz/d(ell) = -z / ell.
    """
    z = np.asarray(z, dtype=float)
    if nu == 0.5:
        return z * np.exp(-z) / ell
    if nu == 1.5:
        return z * z * np.exp(-z) / ell
    if nu == 2.5:
        return (z * z / 3.0) * (1.0 + z) * np.exp(-z) / ell
    out = np.zeros_like(z)
    pos = z > 0.0
    zs = z[pos]
    log_pref = (1.0 - nu) * np.log(2.0) - gammaln(nu)
    out[pos] = np.exp(log_pref + (nu + 1.0) * np.log(zs)) * kv(nu - 1.0, zs) / ell
    return out


def _matern_sd_1d(w_sq, ell, nu):
    """One-dimensional Matern spectral density with unit variance."""
    a = 2.0 * nu / (ell * ell)
    log_pref = np.log(2.0) + 0.5 * np.log(pi) + gammaln(nu + 0.5) - gammaln(nu) + nu * np.log(a)
    return np.exp(log_pref - (nu + 0.5) * np.log(a + w_sq))


@dataclass(frozen=True)
class GaussianKernel:
    """Squared-exponential kernel sigma2 * exp(-|x - y|^2 / (2 ell^2))."""

    sigma2: float
    lengthscale: float

    def __post_init__(self):
        check_positive(self.sigma2, "sigma2")
        check_positive(self.lengthscale, "lengthscale")

    # -- parameters ---------------------------------------------------------
    @property
    def lengthscales(self):
        return (self.lengthscale,)

    def with_lengthscales(self, values):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != 1:
            raise ValueError("GaussianKernel has a single lengthscale")
        return replace(self, lengthscale=float(values[0]))

    def with_sigma2(self, sigma2):
        return replace(self, sigma2=float(sigma2))

    # -- evaluation ---------------------------------------------------------
    def pointwise(self, x, y):
        x = as_point(x, name="x")
        y = as_point(y, dim=x.shape[0], name="y")
        r2 = float(np.sum((x - y) ** 2))
        return self.sigma2 * float(np.exp(-r2 / (2.0 * self.lengthscale**2)))

    def correlation(self, X, Y=None):
        X = as_points(X)
        r2 = cdist(X, X if Y is None else as_points(Y, dim=X.shape[1]), "sqeuclidean")
        return np.exp(-r2 / (2.0 * self.lengthscale**2))

    def __call__(self, X, Y=None):
        return self.sigma2 * self.correlation(X, Y)

    def distance_cache(self, X):
        X = as_points(X)
        return cdist(X, X, "sqeuclidean")

    def correlation_with_grads(self, X, cache=None):
        r2 = self.distance_cache(X) if cache is None else cache
        ell = self.lengthscale
        C = np.exp(-r2 / (2.0 * ell * ell))
        return C, [C * r2 / ell**3]

    def at_lag(self, U):
        """Stationary evaluation k(u) at an array of lag vectors (..., d)."""
        U = np.asarray(U, dtype=float)
        r2 = np.sum(U * U, axis=-1)
        return self.sigma2 * np.exp(-r2 / (2.0 * self.lengthscale**2))

    def spectral_density(self, omega):
        omega = np.atleast_2d(np.asarray(omega, dtype=float))
        d = omega.shape[-1]
        ell = self.lengthscale
        w2 = np.sum(omega * omega, axis=-1)
        val = self.sigma2 * (2.0 * pi) ** (d / 2.0) * ell**d * np.exp(-ell * ell * w2 / 2.0)
        return val[0] if val.size == 1 else val


@dataclass(frozen=True)
class MaternKernel:
    """Isotropic Matern kernel with smoothness nu > 0."""

    sigma2: float
    lengthscale: float
    nu: float

    def __post_init__(self):
        check_positive(self.sigma2, "sigma2")
        check_positive(self.lengthscale, "lengthscale")
        check_positive(self.nu, "nu")

    @property
    def lengthscales(self):
        return (self.lengthscale,)

    def with_lengthscales(self, values):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != 1:
            raise ValueError("MaternKernel has a single lengthscale")
        return replace(self, lengthscale=float(values[0]))

    def with_sigma2(self, sigma2):
        return replace(self, sigma2=float(sigma2))

    def _z(self, r):
        return sqrt(2.0 * self.nu) * np.asarray(r, dtype=float) / self.lengthscale

    def pointwise(self, x, y):
        x = as_point(x, name="x")
        y = as_point(y, dim=x.shape[0], name="y")
        r = float(np.linalg.norm(x - y))
        if r == 0.0:
            return self.sigma2
        return self.sigma2 * float(_matern_corr_1arg(self._z(r), self.nu))

    def correlation(self, X, Y=None):
        X = as_points(X)
        r = cdist(X, X if Y is None else as_points(Y, dim=X.shape[1]))
        return _matern_corr_1arg(self._z(r), self.nu)

    def __call__(self, X, Y=None):
        return self.sigma2 * self.correlation(X, Y)

    def distance_cache(self, X):
        X = as_points(X)
        return cdist(X, X)

    def correlation_with_grads(self, X, cache=None):
        r = self.distance_cache(X) if cache is None else cache
        z = self._z(r)
        C = _matern_corr_1arg(z, self.nu)
        return C, [_matern_corr_dell(z, self.nu, self.lengthscale)]

    def at_lag(self, U):
        """Stationary evaluation k(u) at an array of lag vectors (..., d)."""
        U = np.asarray(U, dtype=float)
        r = np.sqrt(np.sum(U * U, axis=-1))
        return self.sigma2 * _matern_corr_1arg(self._z(r), self.nu)

    def spectral_density(self, omega):
        omega = np.atleast_2d(np.asarray(omega, dtype=float))
        d = omega.shape[-1]
        nu, ell = self.nu, self.lengthscale
        a = 2.0 * nu / (ell * ell)
        w2 = np.sum(omega * omega, axis=-1)
        log_pref = (
            d * np.log(2.0)
            + (d / 2.0) * np.log(pi)
            + gammaln(nu + d / 2.0)
            - gammaln(nu)
            + nu * np.log(a)
        )
        val = self.sigma2 * np.exp(log_pref - (nu + d / 2.0) * np.log(a + w2))
        return val[0] if val.size == 1 else val


@dataclass(frozen=True)
class ProductMaternKernel:
    """Separable product of 1-D Matern kernels, one lengthscale per dimension."""

    sigma2: float
    lengthscales: tuple
    nu: float

    def __post_init__(self):
        check_positive(self.sigma2, "sigma2")
        check_positive(self.nu, "nu")
        ells = tuple(float(v) for v in np.atleast_1d(np.asarray(self.lengthscales, dtype=float)))
        if not ells:
            raise ValueError("lengthscales must be non-empty")
        for v in ells:
            check_positive(v, "lengthscale")
        object.__setattr__(self, "lengthscales", ells)

    @property
    def dim(self):
        return len(self.lengthscales)

    def with_lengthscales(self, values):
        values = np.asarray(values, dtype=float).reshape(-1)
        if values.size != self.dim:
            raise ValueError(f"expected {self.dim} lengthscales, got {values.size}")
        return replace(self, lengthscales=tuple(float(v) for v in values))

    def with_sigma2(self, sigma2):
        return replace(self, sigma2=float(sigma2))

    def pointwise(self, x, y):
        x = as_point(x, dim=self.dim, name="x")
        y = as_point(y, dim=self.dim, name="y")
        val = self.sigma2
        for ell, dx in zip(self.lengthscales, np.abs(x - y)):
            val *= float(_matern_corr_1arg(sqrt(2.0 * self.nu) * dx / ell, self.nu))
        return val

    def correlation(self, X, Y=None):
        X = as_points(X, dim=self.dim)
        Y = X if Y is None else as_points(Y, dim=self.dim)
        C = np.ones((X.shape[0], Y.shape[0]))
        for k, ell in enumerate(self.lengthscales):
            dx = np.abs(X[:, k, None] - Y[None, :, k])
            C *= _matern_corr_1arg(sqrt(2.0 * self.nu) * dx / ell, self.nu)
        return C

    def __call__(self, X, Y=None):
        return self.sigma2 * self.correlation(X, Y)

    def distance_cache(self, X):
        X = as_points(X, dim=self.dim)
        return np.abs(X[:, None, :] - X[None, :, :])

    def correlation_with_grads(self, X, cache=None):
        dx = self.distance_cache(X) if cache is None else cache
        parts, dparts = [], []
        for k, ell in enumerate(self.lengthscales):
            z = sqrt(2.0 * self.nu) * dx[..., k] / ell
            parts.append(_matern_corr_1arg(z, self.nu))
            dparts.append(_matern_corr_dell(z, self.nu, ell))
        C = np.ones_like(parts[0])
        for p in parts:
            C *= p
        grads = []
        for k in range(self.dim):
            g = dparts[k].copy()
            for j, p in enumerate(parts):
                if j != k:
                    g *= p
            grads.append(g)
        return C, grads

    def spectral_density(self, omega):
        omega = np.atleast_2d(np.asarray(omega, dtype=float))
        if omega.shape[-1] != self.dim:
            raise ValueError(f"omega must have dimension {self.dim}")
        val = np.full(omega.shape[0], self.sigma2)
        for k, ell in enumerate(self.lengthscales):
            val *= _matern_sd_1d(omega[:, k] ** 2, ell, self.nu)
        return val[0] if val.size == 1 else val

    def at_lag(self, U):
        """Stationary evaluation k(u) at an array of lag vectors (..., d)."""
        U = np.asarray(U, dtype=float)
        if U.shape[-1] != self.dim:
            raise ValueError(f"lags must have dimension {self.dim}")
        val = np.full(U.shape[:-1], self.sigma2)
        for k, ell in enumerate(self.lengthscales):
            z = np.sqrt(2.0 * self.nu) * np.abs(U[..., k]) / ell
            val = val * _matern_corr_1arg(z, self.nu)
        return val


def kernel_matrix(kernel, X, eta):
    """Dense covariance matrix k(X, X) + eta * I with duplicate detection.

    Raises ``ValueError`` when two rows of ``X`` coincide to within 1e-12 in
    the sup norm, since the resulting matrix would be numerically singular at
    eta = 0.
    """
    X = as_points(X)
    eta = check_nonnegative(eta, "eta")
    if X.shape[0] > 1:
        if float(np.min(pdist(X, "chebyshev"))) < DUPLICATE_TOL:
            raise ValueError("duplicate design points (closer than 1e-12 in sup norm)")
    K = kernel(X)
    if eta > 0.0:
        K = K + eta * np.eye(X.shape[0])
    return K


def make_kernel(family, sigma2, lengthscale, nu=None):
    """Construct a kernel from a plain-config description."""
    family = str(family).lower()
    if family == "gaussian":
        return GaussianKernel(sigma2=float(sigma2), lengthscale=float(lengthscale))
    if family == "matern":
        if nu is None:
            raise ValueError("matern kernel requires nu")
        return MaternKernel(sigma2=float(sigma2), lengthscale=float(lengthscale), nu=float(nu))
    if family == "matern_product":
        if nu is None:
            raise ValueError("matern_product kernel requires nu")
        ells = tuple(float(v) for v in np.atleast_1d(np.asarray(lengthscale, dtype=float)))
        return ProductMaternKernel(sigma2=float(sigma2), lengthscales=ells, nu=float(nu))
    raise ValueError(f"unknown kernel family {family!r}")
