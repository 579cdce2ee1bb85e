"""Reduced-rank kernel approximation on a box via a Laplacian sine basis.

The basis functions on the box (-L, L)^d are

    phi_j(x) = L^{-d/2} * prod_k sin(pi j_k (x_k + L) / (2 L)),   j in {1..m}^d,

the Dirichlet-Laplacian eigenfunctions.  Weighting phi_j by the kernel's
spectral density at the lattice frequency pi*j/(2L) gives a rank-m^d
approximation of the kernel,

    khat_m(x, y) = sum_j S(pi j / (2 L)) phi_j(x) phi_j(y),

which converges to k as m and L grow.  The flattened basis order is row-major
lexicographic over (j_1, ..., j_d), i.e. j_d varies fastest.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from math import ceil, log

import numpy as np

from ._validate import as_point, as_points, check_positive

__all__ = ["SineBasis", "default_params", "kron_apply"]


@dataclass(frozen=True)
class SineBasis:
    """Tensor sine basis with ``m`` frequencies per dimension on (-L, L)^d."""

    m: int
    L: float
    d: int

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m!r}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError(f"d must be a positive integer, got {self.d!r}")
        check_positive(self.L, "L")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "L", float(self.L))

    @property
    def size(self):
        """Total number of basis functions M = m^d."""
        return self.m**self.d

    @cached_property
    def index_table(self):
        """(M, d) array of 1-based multi-indices in row-major order."""
        grids = np.meshgrid(*[np.arange(1, self.m + 1)] * self.d, indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    @cached_property
    def frequencies(self):
        """(M, d) array of lattice frequencies pi*j/(2L)."""
        return np.pi * self.index_table / (2.0 * self.L)

    # -- pointwise ----------------------------------------------------------
    def eigenfunction(self, j, x):
        """Evaluate phi_j at a single point x strictly inside the box."""
        j = np.asarray(j)
        if j.shape != (self.d,):
            raise ValueError(f"j must have shape ({self.d},)")
        if np.any(j < 1) or np.any(j > self.m) or not np.issubdtype(j.dtype, np.integer):
            raise ValueError(f"multi-index entries must be integers in [1, {self.m}]")
        x = as_point(x, dim=self.d, name="x")
        if np.any(np.abs(x) >= self.L):
            raise ValueError(f"x must lie strictly inside (-{self.L}, {self.L})^d")
        val = self.L ** (-self.d / 2.0)
        for jk, xk in zip(j, x):
            val *= np.sin(np.pi * jk * (xk + self.L) / (2.0 * self.L))
        return float(val)

    # -- vectorized ---------------------------------------------------------
    def design_matrix(self, X):
        """(N, M) matrix of basis values at the rows of X."""
        X = as_points(X, dim=self.d)
        if np.any(np.abs(X) >= self.L):
            raise ValueError(f"points must lie strictly inside (-{self.L}, {self.L})^d")
        j = np.arange(1, self.m + 1)
        Phi = None
        for k in range(self.d):
            Sk = np.sin(np.pi * np.outer(X[:, k] + self.L, j) / (2.0 * self.L))
            if Phi is None:
                Phi = Sk
            else:
                Phi = (Phi[:, :, None] * Sk[:, None, :]).reshape(X.shape[0], -1)
        return self.L ** (-self.d / 2.0) * Phi

    def spectral_weights(self, kernel):
        """(M,) vector of spectral-density weights at the lattice frequencies."""
        return np.atleast_1d(kernel.spectral_density(self.frequencies))

    def approx_kernel(self, kernel, X, Y=None):
        """Truncated kernel matrix khat_m(X, Y)."""
        W = self.spectral_weights(kernel)
        Phi_X = self.design_matrix(X)
        Phi_Y = Phi_X if Y is None else self.design_matrix(Y)
        return (Phi_X * W) @ Phi_Y.T

    def gram_1d(self, half_width):
        """Closed-form (m, m) Gram matrix int_{-B}^{B} phi_p phi_q dx (d=1 blocks).

        Valid for 0 < B <= L; equals the identity at B = L by orthonormality.
        """
        B = float(half_width)
        L = self.L
        if not 0.0 < B <= L:
            raise ValueError(f"half_width must satisfy 0 < B <= L = {L}")
        p = np.arange(1, self.m + 1, dtype=float)
        P, Q = np.meshgrid(p, p, indexing="ij")
        diff, summ = P - Q, P + Q

        def off(s):
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.sin(np.pi * diff * s / (2 * L)) / diff - np.sin(np.pi * summ * s / (2 * L)) / summ
            return out / np.pi

        G = off(L + B) - off(L - B)
        diag = B / L - (np.sin(np.pi * p * (L + B) / L) - np.sin(np.pi * p * (L - B) / L)) / (2 * np.pi * p)
        G[np.diag_indices(self.m)] = diag
        return G


def kron_apply(g1, v, d):
    """Apply the d-fold Kronecker power of ``g1`` to flattened vectors.

    ``v`` has shape (..., m^d) with indices flattened in row-major
    lexicographic order; the result is (g1 (x) ... (x) g1) @ v computed one
    tensor mode at a time in O(d * m * m^d) per vector.
    """
    g1 = np.asarray(g1, dtype=float)
    m = g1.shape[0]
    if g1.shape != (m, m):
        raise ValueError("g1 must be square")
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != m**d:
        raise ValueError(f"last axis must have length m^d = {m ** d}")
    batch = v.shape[:-1]
    T = v.reshape(batch + (m,) * d)
    nb = len(batch)
    for axis in range(nb, nb + d):
        T = np.moveaxis(np.tensordot(g1, T, axes=(1, axis)), 0, axis)
    return T.reshape(batch + (m**d,))


def default_params(N, d, half_width, ell_ref):
    """Data-size-driven choice of the truncation level m and box half-width L.

    m = ceil(20 d + 0.1 (B / ell) ln N) frequencies per dimension and
    L = B + 0.5 (ell / B) ln N, so the box margin and resolution grow slowly
    with the number of design points relative to the lengthscale.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N!r}")
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d!r}")
    B = check_positive(half_width, "half_width")
    ell = check_positive(ell_ref, "ell_ref")
    m = ceil(20 * d + 0.1 * (B / ell) * log(N))
    L = B + 0.5 * (ell / B) * log(N)
    return max(int(m), 1), float(L)
