"""Integrated mean-squared-error acquisition and feasibility machinery.

Two interchangeable evaluators of the variance-reduction acquisition

    imse(t) = (1 / (P^2(t) + eta)) * integral over (-B, B)^d of
              [k(x, t) - k_N(x)^T (K_N + eta I)^{-1} k_N(t)]^2 dx,

i.e. the integrated posterior-variance reduction obtained by adding the
candidate ``t`` to the design.  ``imse_quadrature`` integrates the squared
residual numerically with the exact kernel and serves as the reference;
``hsgp_imse`` evaluates the sine-basis closed form

    h(t)^T W G_d W h(t) / (P^2(t) + eta),
    h(t) = phi(t) - Phi^T (K_N + eta I)^{-1} k_N(t),

whose cost per candidate is O((N + d m) M) instead of a d-dimensional
quadrature.  The module also provides the fill-distance / separation /
feasibility helpers used by the gamma-stabilized sequential loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import cho_solve
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from ._validate import as_points, check_positive
from .hsgp import SineBasis, kron_apply

__all__ = [
    "AcquisitionContext",
    "FeasibilityState",
    "legendre_rule",
    "imse_quadrature",
    "hsgp_imse",
    "fill_distance",
    "separation_distance",
    "is_feasible",
]

# Fill-distance evaluation grids per dimension (points per axis).
FILL_GRID_PER_DIM = {1: 256, 2: 128}


def legendre_rule(d, half_width, nodes_per_dim):
    """Tensor-product Gauss-Legendre rule on the box (-half_width, half_width)^d.

    Returns ``(nodes, weights)`` with ``nodes`` of shape
    ``(nodes_per_dim**d, d)`` and ``weights`` summing to ``(2*half_width)**d``.
    """
    b = check_positive(half_width, "half_width")
    nodes_per_dim = int(nodes_per_dim)
    if nodes_per_dim < 1:
        raise ValueError(f"nodes_per_dim must be >= 1, got {nodes_per_dim}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    x, w = leggauss(nodes_per_dim)
    x = b * x
    w = b * w
    if d == 1:
        return x.reshape(-1, 1), w
    axes = np.meshgrid(*([x] * d), indexing="ij")
    nodes = np.stack([a.reshape(-1) for a in axes], axis=1)
    weights = w
    for _ in range(d - 1):
        weights = np.multiply.outer(weights, w).reshape(-1)
    return nodes, weights


def _check_fitted(model):
    if not hasattr(model, "chol_"):
        raise ValueError("model must be a fitted GPRegressor (call fit first)")


def _solve_and_denominator(model, T):
    """Correlation-scale solve A = (C + g I)^{-1} c_N(T) and acquisition denominator.

    The denominator is (P^2(t) + eta) / sigma^2 = 1 - c_N(t)^T A + g; the
    power-function term is clamped at zero so round-off cannot push the
    denominator below the nugget floor.
    """
    c_xt = model.kernel_.correlation(model.X_, T)
    a = cho_solve((model.chol_, True), c_xt)
    denom = 1.0 - np.einsum("ij,ij->j", c_xt, a) + model.g_
    denom = np.maximum(denom, model.g_)
    # Both terms are O(1), so anything at round-off scale means the candidate
    # coincides with a design point while the nugget is (effectively) zero.
    if np.any(denom <= 1e-12):
        raise ValueError(
            "degenerate candidate: posterior variance and nugget are both zero"
        )
    return a, denom


def imse_quadrature(model, T, half_width, nodes_per_dim=64):
    """Reference IMSE acquisition via tensor Gauss-Legendre quadrature.

    Parameters
    ----------
    model : fitted GPRegressor
    T : array of candidate points, shape (n_candidates, d)
    half_width : float
        Half-width B of the integration box (-B, B)^d.
    nodes_per_dim : int, default 64
        Gauss-Legendre nodes per axis; the tensor rule has
        ``nodes_per_dim**d`` nodes, so keep d small.

    Returns
    -------
    ndarray of shape (n_candidates,) with nonnegative acquisition values.
    """
    _check_fitted(model)
    if int(nodes_per_dim) < 8:
        raise ValueError(f"nodes_per_dim must be >= 8, got {nodes_per_dim}")
    d = model.X_.shape[1]
    T = as_points(T, dim=d, name="T")
    nodes, w = legendre_rule(d, half_width, nodes_per_dim)
    a, denom = _solve_and_denominator(model, T)
    c_nodes_x = model.kernel_.correlation(nodes, model.X_)
    c_nodes_t = model.kernel_.correlation(nodes, T)
    resid = c_nodes_t - c_nodes_x @ a
    return model.sigma2_ * (w @ resid**2) / denom


@dataclass(frozen=True)
class AcquisitionContext:
    """Candidate-independent precomputation for the closed-form acquisition.

    Bundles the basis design matrix at the training sites, the spectral
    weights of the fitted kernel, and the one-dimensional Gram matrix of the
    basis on the integration box.  The context is only valid for the model it
    was built from: rebuild it whenever the design set or the fitted
    hyperparameters change.
    """

    basis: SineBasis
    phi: np.ndarray
    weights: np.ndarray
    gram1: np.ndarray
    half_width: float
    n_train: int

    @classmethod
    def build(cls, model, basis, half_width):
        _check_fitted(model)
        if basis.d != model.X_.shape[1]:
            raise ValueError(
                f"basis dimension {basis.d} does not match the design dimension "
                f"{model.X_.shape[1]}"
            )
        b = check_positive(half_width, "half_width")
        return cls(
            basis=basis,
            phi=basis.design_matrix(model.X_),
            weights=basis.spectral_weights(model.kernel_),
            gram1=basis.gram_1d(b),
            half_width=b,
            n_train=model.X_.shape[0],
        )


def hsgp_imse(ctx, model, T):
    """Closed-form IMSE acquisition in the sine basis.

    Evaluates h^T W G_d W h / (P^2 + eta) for a whole candidate batch, with
    G_d applied as d mode-wise products of the one-dimensional Gram matrix
    (never materialized).  Nonnegative because W G_d W is positive
    semi-definite.
    """
    _check_fitted(model)
    if ctx.n_train != model.X_.shape[0] or ctx.phi.shape[0] != model.X_.shape[0]:
        raise ValueError(
            "stale AcquisitionContext: rebuild it for the current design set"
        )
    T = as_points(T, dim=model.X_.shape[1], name="T")
    a, denom = _solve_and_denominator(model, T)
    phi_t = ctx.basis.design_matrix(T)
    h = phi_t.T - ctx.phi.T @ a
    u = ctx.weights[:, None] * h
    gu = kron_apply(ctx.gram1, u.T, ctx.basis.d)
    numer = np.einsum("ij,ij->i", u.T, gu)
    np.maximum(numer, 0.0, out=numer)
    return numer / (model.sigma2_ * denom)


def fill_distance(X, half_width, grid_per_dim=None):
    """Grid estimate of the fill distance sup_x min_k ||x - x_k|| over the box.

    The supremum is taken over a uniform grid with ``grid_per_dim`` points per
    axis (defaults: 256 in 1-D, 128 per axis in 2-D), so the estimate is a
    lower bound of the true fill distance with bias of order the grid spacing.
    """
    X = as_points(X, name="X")
    if X.shape[0] < 1:
        raise ValueError("fill_distance requires at least one design point")
    b = check_positive(half_width, "half_width")
    d = X.shape[1]
    if grid_per_dim is None:
        grid_per_dim = FILL_GRID_PER_DIM.get(d, 64)
    grid_per_dim = int(grid_per_dim)
    if grid_per_dim < 2:
        raise ValueError(f"grid_per_dim must be >= 2, got {grid_per_dim}")
    axis = np.linspace(-b, b, grid_per_dim)
    if d == 1:
        grid = axis.reshape(-1, 1)
    else:
        mesh = np.meshgrid(*([axis] * d), indexing="ij")
        grid = np.stack([a.reshape(-1) for a in mesh], axis=1)
    dist, _ = cKDTree(X).query(grid)
    return float(dist.max())


def separation_distance(X):
    """Half the minimum pairwise Euclidean distance of the design."""
    X = as_points(X, name="X")
    if X.shape[0] < 2:
        raise ValueError("separation_distance requires at least two points")
    return 0.5 * float(pdist(X).min())


def is_feasible(T, X, gamma, fill, half_width):
    """Feasibility mask for the gamma-stabilized acquisition domain.

    A candidate is feasible when it lies strictly inside the open box
    (-half_width, half_width)^d and its distance to the current design is at
    least ``gamma * fill`` (closed inequality).

    Returns a boolean array of shape (n_candidates,).
    """
    X = as_points(X, name="X")
    if X.shape[0] < 1:
        raise ValueError("is_feasible requires a nonempty design")
    T = as_points(T, dim=X.shape[1], name="T")
    gamma = float(gamma)
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    fill = check_positive(fill, "fill")
    b = check_positive(half_width, "half_width")
    inside = np.all(np.abs(T) < b, axis=1)
    dist, _ = cKDTree(X).query(T)
    return inside & (dist >= gamma * fill)


@dataclass(frozen=True)
class FeasibilityState:
    """Separation-constraint state of one design iteration.

    Bundles the stabilizing fraction ``gamma`` with the current fill distance
    (``fill``) and separation distance (``separation``, nan for a singleton
    design); candidates must keep distance >= gamma * fill from the design.
    """

    gamma: float
    fill: float
    separation: float
    half_width: float

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        check_positive(self.fill, "fill")
        check_positive(self.half_width, "half_width")
        if self.separation < 0.0:  # nan (N = 1) passes
            raise ValueError(f"separation must be nonnegative, got {self.separation}")

    @classmethod
    def from_design(cls, X, half_width, gamma=0.5, grid_per_dim=None):
        X = as_points(X, name="X")
        fill = fill_distance(X, half_width, grid_per_dim)
        sep = separation_distance(X) if X.shape[0] >= 2 else float("nan")
        return cls(
            gamma=float(gamma),
            fill=fill,
            separation=sep,
            half_width=float(half_width),
        )

    @property
    def ratio(self):
        """Quasi-uniformity ratio h_N / q_N."""
        return self.fill / self.separation

    def mask(self, T, X):
        """Feasibility of candidates ``T`` against the design ``X``."""
        return is_feasible(T, X, self.gamma, self.fill, self.half_width)
