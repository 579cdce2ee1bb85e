"""Uniform error bounds for the sine-basis kernel approximation.

Splitting khat_m - k into an aliasing part (khat_infinity - k, the price of
periodizing the kernel onto the box) and a truncation part
(khat_m - khat_infinity, the discarded spectral tail) gives closed-form
uniform bounds for the Gaussian and isotropic Matern families.  This module
provides those bounds plus float64-safe *measured* counterparts:

* truncation error is summed directly over the extra index block
  [m_big]^d \\ [m]^d, so values far below machine epsilon relative to the
  kernel scale remain resolvable (no large-minus-large cancellation);
* aliasing error uses the method-of-images identity

      khat_inf(x, t) = sum_{eps in {0,1}^d} (-1)^{|eps|}
                       sum_{n in Z^d} k(u_eps + 4 L n),
      u_eps,k = x_k - t_k  (eps_k = 0)  or  x_k + t_k + 2 L  (eps_k = 1),

  which follows from Poisson summation over the frequency lattice; dropping
  the identity term (eps = 0, n = 0) yields khat_inf - k as a short sum of
  individually tiny kernel values.
"""

from __future__ import annotations

from itertools import product
from math import exp, gamma, log, pi, sqrt

import numpy as np
from scipy.special import kv

from ._validate import check_positive
from .kernels import GaussianKernel, MaternKernel

__all__ = [
    "beta_factor",
    "gaussian_truncation_bound",
    "gaussian_aliasing_bound",
    "matern_truncation_bound",
    "matern_aliasing_bound",
    "admissibility_error",
    "truncation_bound",
    "aliasing_bound",
    "measured_truncation_error",
    "measured_aliasing_error",
    "images_kernel_error",
]


# ---------------------------------------------------------------------------
# closed-form bounds
# ---------------------------------------------------------------------------


def beta_factor(d, nu):
    """Dimension recursion entering the Matern truncation bound."""
    if int(d) != d or d < 1:
        raise ValueError("d must be a positive integer")
    check_positive(nu, "nu")
    b = 1.0 / (2.0 * nu)
    for dd in range(2, int(d) + 1):
        b *= 4.0 + 2.0 / (2.0 * nu + dd - 1.0)
    return b


def gaussian_truncation_bound(sigma2, ell, d, m, L):
    """Uniform bound on |khat_m - khat_inf| for the Gaussian kernel.

    Requires L > ell * sqrt(pi / 2).
    """
    if L <= ell * sqrt(pi / 2.0):
        raise ValueError("truncation bound requires L > ell * sqrt(pi/2)")
    pref = 4.0 * sqrt(2.0) / (pi**1.5 * ell) * 3.0 ** (d - 1) * d * sigma2
    return pref * (L / m) * exp(-(pi**2) * ell**2 * m**2 / (8.0 * L**2))


def gaussian_aliasing_bound(sigma2, ell, d, L, B):
    """Uniform bound on |khat_inf - k| over the box (-B, B)^d, Gaussian kernel."""
    if L < B:
        raise ValueError("aliasing bound requires L >= B")
    pref = sigma2 * (2.0**d + 2.0 * d - 1.0) * (3.0 + sqrt(2.0 * pi) * ell / (4.0 * L)) ** d
    return pref * exp(-2.0 * (L - B) ** 2 / ell**2)


def matern_min_half_width(ell, nu, d, B):
    """Smallest admissible box half-width for the Matern bounds."""
    return max(0.5 * (B + sqrt(2.0 * d * nu) * ell), (sqrt(d) * ell / (2.0 * sqrt(2.0 * nu))) * log(3.0))


def matern_truncation_bound(sigma2, ell, nu, d, m, L):
    """Uniform bound on |khat_m - khat_inf| for the isotropic Matern kernel."""
    pref = (
        sigma2
        * 2.0 ** (2.0 * nu + d + 1.0)
        * d
        * (gamma(nu + d / 2.0) / gamma(nu))
        * pi ** (-(2.0 * nu + d / 2.0))
        * (2.0 * nu / ell**2) ** nu
        * beta_factor(d, nu)
    )
    return pref * (L / m) ** (2.0 * nu)


def matern_aliasing_bound(sigma2, ell, nu, d, L, B):
    """Uniform bound on |khat_inf - k| over (-B, B)^d, isotropic Matern kernel."""
    if L <= matern_min_half_width(ell, nu, d, B):
        raise ValueError("aliasing bound requires an admissible box half-width")
    pref = sigma2 * (d + 2.0**d - 1.0) * (2.0 ** (d + nu + 2.0) / gamma(nu)) * nu**nu * kv(nu, 4.0 * nu)
    return float(pref * exp(2.0 * nu + sqrt(2.0 * nu) * B / (sqrt(d) * ell) - sqrt(2.0 * nu) * L / (sqrt(d) * ell)))


def admissibility_error(kernel, d, m, L, B):
    """Return a human-readable reason (m, L) is inadmissible, or None if fine."""
    if m < 1:
        return f"m = {m} must be a positive integer"
    if L < B:
        return f"L = {L} violates L >= B = {B}"
    if isinstance(kernel, GaussianKernel):
        lim = kernel.lengthscale * sqrt(pi / 2.0)
        if L <= lim:
            return f"L = {L} violates L > ell*sqrt(pi/2) = {lim:.6g} (Gaussian truncation)"
        return None
    if isinstance(kernel, MaternKernel):
        lim = matern_min_half_width(kernel.lengthscale, kernel.nu, d, B)
        if L <= lim:
            return f"L = {L} violates the Matern admissibility threshold {lim:.6g}"
        return None
    return f"no uniform bounds available for kernel type {type(kernel).__name__}"


def truncation_bound(kernel, d, m, L):
    """Dispatch the truncation bound on the kernel family."""
    if isinstance(kernel, GaussianKernel):
        return gaussian_truncation_bound(kernel.sigma2, kernel.lengthscale, d, m, L)
    if isinstance(kernel, MaternKernel):
        return matern_truncation_bound(kernel.sigma2, kernel.lengthscale, kernel.nu, d, m, L)
    raise ValueError(f"no truncation bound for kernel type {type(kernel).__name__}")


def aliasing_bound(kernel, d, L, B):
    """Dispatch the aliasing bound on the kernel family."""
    if isinstance(kernel, GaussianKernel):
        return gaussian_aliasing_bound(kernel.sigma2, kernel.lengthscale, d, L, B)
    if isinstance(kernel, MaternKernel):
        return matern_aliasing_bound(kernel.sigma2, kernel.lengthscale, kernel.nu, d, L, B)
    raise ValueError(f"no aliasing bound for kernel type {type(kernel).__name__}")


# ---------------------------------------------------------------------------
# measured errors
# ---------------------------------------------------------------------------


def _grid_points(d, B, per_dim):
    """Product grid strictly inside (-B, B)^d used for sup-norm estimates."""
    g = np.linspace(-B, B, per_dim) * (1.0 - 1e-9)
    if d == 1:
        return g.reshape(-1, 1)
    axes = np.meshgrid(*[g] * d, indexing="ij")
    return np.stack([a.reshape(-1) for a in axes], axis=1)


def measured_truncation_error(kernel, d, m, m_big, L, B, grid_per_dim=None):
    """sup over grid pairs of |khat_{m_big} - khat_m|, summed tail-first.

    The difference of the two truncated kernels is exactly the sum over the
    index block [m_big]^d \\ [m]^d, evaluated here block by block so no
    cancellation against the O(sigma2) head occurs.
    """
    if m_big <= m:
        raise ValueError("m_big must exceed m")
    if grid_per_dim is None:
        grid_per_dim = {1: 41, 2: 13}.get(d, 7)
    pts = _grid_points(d, B, grid_per_dim)
    j = np.arange(1, m_big + 1)
    w1 = pi * j / (2.0 * L)
    # per-dimension sine tables (n, m_big)
    sines = [np.sin(np.outer(pts[:, k] + L, w1)) / sqrt(L) for k in range(d)]
    total = np.zeros((pts.shape[0], pts.shape[0]))
    # disjoint blocks: dims < k take indices <= m, dim k takes (m, m_big],
    # dims > k take the full range [1, m_big]
    for k in range(d):
        ranges = []
        for kk in range(d):
            if kk < k:
                ranges.append(np.arange(0, m))
            elif kk == k:
                ranges.append(np.arange(m, m_big))
            else:
                ranges.append(np.arange(0, m_big))
        mesh = np.meshgrid(*ranges, indexing="ij")
        idx = np.stack([g.reshape(-1) for g in mesh], axis=1)  # (Mblk, d) 0-based
        freq = w1[idx]
        W = np.atleast_1d(kernel.spectral_density(freq))
        Phi = np.ones((pts.shape[0], idx.shape[0]))
        for kk in range(d):
            Phi *= sines[kk][:, idx[:, kk]]
        total += (Phi * W) @ Phi.T
    return float(np.max(np.abs(total)))


def images_kernel_error(kernel, d, L, X, T, n_images=6):
    """khat_inf(X, T) - k(X, T) via the method-of-images identity."""
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    diff = X[:, None, :] - T[None, :, :]
    ssum = X[:, None, :] + T[None, :, :] + 2.0 * L
    out = np.zeros((X.shape[0], T.shape[0]))
    shifts = range(-n_images, n_images + 1)
    for eps in product((0, 1), repeat=d):
        sgn = (-1.0) ** sum(eps)
        base = np.stack([ssum[..., k] if e else diff[..., k] for k, e in enumerate(eps)], axis=-1)
        for n in product(shifts, repeat=d):
            if not any(eps) and not any(n):
                continue  # identity term: subtracted k itself
            lag = base + 4.0 * L * np.asarray(n, dtype=float)
            out += sgn * kernel.at_lag(lag)
    return out


def measured_aliasing_error(kernel, d, L, B, grid_per_dim=None, n_images=6):
    """sup over grid pairs of |khat_inf - k| computed term-by-term."""
    if grid_per_dim is None:
        grid_per_dim = {1: 41, 2: 11}.get(d, 5)
    pts = _grid_points(d, B, grid_per_dim)
    E = images_kernel_error(kernel, d, L, pts, pts, n_images=n_images)
    return float(np.max(np.abs(E)))
