import numpy as np
import pytest
from scipy.stats import qmc

from hsgpdesign.acquisition import (
    AcquisitionContext,
    fill_distance,
    hsgp_imse,
    imse_quadrature,
    is_feasible,
    legendre_rule,
    separation_distance,
)
from hsgpdesign.gp import GPRegressor
from hsgpdesign.hsgp import SineBasis
from hsgpdesign.kernels import GaussianKernel, MaternKernel, ProductMaternKernel

B = 1.0


def _fit(kernel, X, y, g):
    return GPRegressor(kernel=kernel, g=g, optimize=False).fit(X, y)


def _lhs(n, d, rng):
    return qmc.LatinHypercube(d=d, seed=rng).random(n) * 2.0 - 1.0


# ---------------------------------------------------------------------------
# quadrature reference
# ---------------------------------------------------------------------------


def test_legendre_rule_integrates_polynomials_exactly():
    nodes, w = legendre_rule(1, B, 16)
    assert w.sum() == pytest.approx(2.0 * B, rel=1e-13)
    assert w @ nodes[:, 0] ** 4 == pytest.approx(2.0 / 5.0, rel=1e-13)
    nodes, w = legendre_rule(2, 0.7, 12)
    assert w.sum() == pytest.approx((2 * 0.7) ** 2, rel=1e-13)
    got = w @ (nodes[:, 0] ** 2 * nodes[:, 1] ** 4)
    want = (2 * 0.7**3 / 3.0) * (2 * 0.7**5 / 5.0)
    assert got == pytest.approx(want, rel=1e-13)


def test_quadrature_matches_added_point_variance_reduction():
    """Independent oracle: imse(t) equals the drop in integrated posterior
    variance when t is appended to the design (block-inverse identity)."""
    for kernel, d, n, g in (
        (MaternKernel(sigma2=2.0, lengthscale=0.3, nu=1.5), 1, 12, 1e-4),
        (GaussianKernel(sigma2=1.3, lengthscale=0.5), 2, 10, 1e-3),
    ):
        rng = np.random.default_rng(7 + d)
        X = rng.uniform(-B, B, size=(n, d))
        y = rng.normal(size=n)
        model = _fit(kernel, X, y, g)
        T = rng.uniform(-B, B, size=(6, d))
        nodes, w = legendre_rule(d, B, 64)
        base = w @ model.posterior_var(nodes)
        want = np.empty(len(T))
        for i, t in enumerate(T):
            aug = _fit(kernel, np.vstack([X, t]), np.append(y, 0.0), g)
            want[i] = base - w @ aug.posterior_var(nodes)
        got = imse_quadrature(model, T, B, nodes_per_dim=64)
        assert np.max(np.abs(got - want) / np.abs(want)) < 1e-9


def test_quadrature_nonnegative_and_vanishes_at_design_points():
    rng = np.random.default_rng(3)
    X = _lhs(15, 1, rng)
    y = rng.normal(size=15)
    model = _fit(MaternKernel(sigma2=1.0, lengthscale=0.3, nu=2.5), X, y, 1e-10)
    grid = np.linspace(-0.99, 0.99, 61).reshape(-1, 1)
    vals = imse_quadrature(model, grid, B)
    assert np.all(vals >= 0.0)
    at_design = imse_quadrature(model, X, B)
    assert np.max(at_design) < 1e-6 * vals.max()


def test_quadrature_node_doubling_self_consistency():
    """With the noiseless nugget the integrand has a kink at every design
    point, so Gauss-Legendre converges only algebraically; the doubling test
    is run at node counts where the rule is converged (the 64 -> 128 change
    at this setting is ~8e-2)."""
    rng = np.random.default_rng(11)
    X = _lhs(20, 1, rng)
    y = np.sin(3 * X[:, 0])
    model = _fit(MaternKernel(sigma2=2.0, lengthscale=0.3, nu=1.5), X, y, 1e-10)
    T = np.linspace(-0.97, 0.97, 33).reshape(-1, 1)
    coarse = imse_quadrature(model, T, B, nodes_per_dim=2048)
    fine = imse_quadrature(model, T, B, nodes_per_dim=4096)
    assert np.max(np.abs(coarse - fine) / fine) < 1e-6
    crude = imse_quadrature(model, T, B, nodes_per_dim=64)
    assert np.all(crude > 0)
    assert np.max(np.abs(crude / fine - 1.0)) < 0.5


def test_quadrature_rejects_too_few_nodes_and_unfitted_model():
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(5, 1))
    model = _fit(GaussianKernel(sigma2=1.0, lengthscale=0.5), X, np.ones(5), 1e-6)
    with pytest.raises(ValueError, match="nodes_per_dim"):
        imse_quadrature(model, X, B, nodes_per_dim=4)
    with pytest.raises(ValueError, match="fitted"):
        imse_quadrature(GPRegressor(), X, B)


# ---------------------------------------------------------------------------
# closed form vs quadrature
# ---------------------------------------------------------------------------


def test_hsgp_discrepancy_shrinks_as_basis_tightens():
    """Against a node-converged reference, enlarging (m, L) must drive the
    closed form toward the exact acquisition for every kernel family."""
    cases = [
        (GaussianKernel(1.5, 0.3), 1, 14, 7, [(24, 1.3), (48, 1.6), (96, 1.9)], 2048, 2e-3),
        (MaternKernel(1.5, 0.3, 1.5), 1, 14, 7, [(24, 1.3), (48, 1.6), (96, 1.9)], 2048, 2e-3),
        (MaternKernel(1.5, 0.3, 2.5), 1, 14, 7, [(24, 1.3), (48, 1.6), (96, 1.9)], 2048, 2e-3),
        (GaussianKernel(1.5, 0.3), 2, 25, 8, [(30, 1.3), (60, 1.6), (90, 1.9)], 256, 1e-2),
        (MaternKernel(1.5, 0.3, 1.5), 2, 25, 8, [(30, 1.3), (60, 1.6), (90, 1.9)], 256, 1e-2),
        (
            ProductMaternKernel(1.5, (0.3, 0.45), 2.5),
            2,
            25,
            8,
            [(30, 1.3), (60, 1.6), (90, 1.9)],
            256,
            1e-2,
        ),
    ]
    for kernel, d, n, seed, levels, ref_nodes, final_tol in cases:
        rng = np.random.default_rng(seed)
        X = _lhs(n, d, rng)
        y = np.cos(2 * X).sum(axis=1)
        model = _fit(kernel, X, y, 1e-6)
        T = _lhs(40, d, rng)
        ref = imse_quadrature(model, T, B, nodes_per_dim=ref_nodes)
        errs = []
        for m, L in levels:
            ctx = AcquisitionContext.build(model, SineBasis(m=m, L=L, d=d), B)
            errs.append(np.max(np.abs(hsgp_imse(ctx, model, T) - ref)) / ref.max())
        assert errs[0] > errs[1] > errs[2], (type(kernel).__name__, d, errs)
        assert errs[2] < final_tol, (type(kernel).__name__, d, errs)


def test_hsgp_matches_quadrature_gaussian_2d():
    rng = np.random.default_rng(3)
    X = _lhs(25, 2, rng)
    y = np.cos(2 * X).sum(axis=1)
    model = _fit(GaussianKernel(sigma2=1.5, lengthscale=0.3), X, y, 1e-6)
    T = _lhs(40, 2, rng)
    ref = imse_quadrature(model, T, B, nodes_per_dim=64)
    ctx = AcquisitionContext.build(model, SineBasis(m=42, L=1.483, d=2), B)
    got = hsgp_imse(ctx, model, T)
    assert np.max(np.abs(got - ref)) / ref.max() < 1e-2


def test_hsgp_kronecker_path_matches_dense_gram():
    rng = np.random.default_rng(5)
    X = _lhs(12, 2, rng)
    y = rng.normal(size=12)
    model = _fit(MaternKernel(sigma2=1.2, lengthscale=0.4, nu=1.5), X, y, 1e-6)
    basis = SineBasis(m=5, L=1.4, d=2)
    ctx = AcquisitionContext.build(model, basis, B)
    T = _lhs(9, 2, rng)
    got = hsgp_imse(ctx, model, T)

    from scipy.linalg import cho_solve

    g_dense = np.kron(ctx.gram1, ctx.gram1)
    c_xt = model.kernel_.correlation(model.X_, T)
    a = cho_solve((model.chol_, True), c_xt)
    denom = 1.0 - np.einsum("ij,ij->j", c_xt, a) + model.g_
    h = basis.design_matrix(T).T - ctx.phi.T @ a
    u = ctx.weights[:, None] * h
    want = np.einsum("ij,ij->j", u, g_dense @ u) / (model.sigma2_ * denom)
    assert np.max(np.abs(got - want) / want) < 1e-12


def test_hsgp_quadratic_form_is_nonnegative_for_random_vectors():
    from hsgpdesign.hsgp import kron_apply

    basis = SineBasis(m=6, L=1.3, d=2)
    kernel = MaternKernel(sigma2=1.0, lengthscale=0.4, nu=2.5)
    w = basis.spectral_weights(kernel)
    g1 = basis.gram_1d(B)
    rng = np.random.default_rng(9)
    for _ in range(25):
        h = rng.normal(size=basis.size)
        u = w * h
        val = u @ kron_apply(g1, u, 2)
        assert val >= -1e-12 * (u @ u)


def test_degenerate_denominator_raises_without_nugget():
    X = np.linspace(-0.8, 0.8, 5).reshape(-1, 1)
    y = np.zeros(5)
    model = _fit(MaternKernel(sigma2=1.0, lengthscale=0.5, nu=1.5), X, y, 0.0)
    with pytest.raises(ValueError, match="degenerate"):
        imse_quadrature(model, X[2:3], B)
    off = imse_quadrature(model, np.array([[0.13]]), B)
    assert off[0] > 0


def test_nugget_floors_denominator_at_design_points():
    rng = np.random.default_rng(2)
    X = _lhs(10, 1, rng)
    y = rng.normal(size=10)
    model = _fit(MaternKernel(sigma2=2.0, lengthscale=0.4, nu=1.5), X, y, 1e-10)
    ctx = AcquisitionContext.build(model, SineBasis(m=48, L=1.5, d=1), B)
    vq = imse_quadrature(model, X, B)
    vh = hsgp_imse(ctx, model, X)
    assert np.all(np.isfinite(vq)) and np.all(vq >= 0)
    assert np.all(np.isfinite(vh)) and np.all(vh >= 0)


def test_context_validation():
    rng = np.random.default_rng(4)
    X = _lhs(8, 1, rng)
    model = _fit(GaussianKernel(sigma2=1.0, lengthscale=0.5), X, np.ones(8), 1e-6)
    with pytest.raises(ValueError, match="dimension"):
        AcquisitionContext.build(model, SineBasis(m=8, L=1.3, d=2), B)
    ctx = AcquisitionContext.build(model, SineBasis(m=8, L=1.3, d=1), B)
    other = _fit(GaussianKernel(sigma2=1.0, lengthscale=0.5), _lhs(9, 1, rng), np.ones(9), 1e-6)
    with pytest.raises(ValueError, match="stale"):
        hsgp_imse(ctx, other, X)


# ---------------------------------------------------------------------------
# fill distance, separation, feasibility
# ---------------------------------------------------------------------------


def test_fill_distance_single_point_at_origin():
    assert fill_distance(np.array([[0.0]]), B) == pytest.approx(1.0, abs=1e-12)


def test_fill_distance_equispaced_midpoints():
    n = 10
    s = 2.0 / n
    X = (-1.0 + s * (np.arange(n) + 0.5)).reshape(-1, 1)
    got = fill_distance(X, B)
    assert got == pytest.approx(s / 2.0, abs=0.01)
    assert got <= s / 2.0 + 1e-12  # grid estimate is a lower bound


def test_fill_distance_never_increases_under_augmentation():
    rng = np.random.default_rng(12)
    for _ in range(10):
        X = rng.uniform(-1, 1, size=(8, 2))
        extra = rng.uniform(-1, 1, size=(4, 2))
        fd0 = fill_distance(X, B)
        fd1 = fill_distance(np.vstack([X, extra]), B)
        assert fd1 <= fd0 + 1e-12


def test_fill_distance_validation():
    with pytest.raises(ValueError):
        fill_distance(np.empty((0, 1)), B)
    with pytest.raises(ValueError, match="grid_per_dim"):
        fill_distance(np.array([[0.0]]), B, grid_per_dim=1)


def test_separation_distance_frozen_and_brute_force():
    assert separation_distance(np.array([[0.0], [1.0]])) == pytest.approx(0.5)
    grid = np.arange(6).reshape(-1, 1) * 0.25
    assert separation_distance(grid) == pytest.approx(0.125)
    rng = np.random.default_rng(21)
    for _ in range(5):
        X = rng.uniform(-1, 1, size=(17, 2))
        best = np.inf
        for i in range(17):
            for j in range(i + 1, 17):
                best = min(best, float(np.linalg.norm(X[i] - X[j])))
        assert separation_distance(X) == pytest.approx(0.5 * best, rel=1e-12)
    with pytest.raises(ValueError, match="two points"):
        separation_distance(np.array([[0.3]]))


def test_is_feasible_geometry():
    X = np.array([[0.0]])
    fill = 0.5
    # threshold is gamma * fill = 0.25, attained exactly -> feasible (closed)
    T = np.array([[0.25], [0.2], [0.0], [1.0], [0.9]])
    got = is_feasible(T, X, 0.5, fill, B)
    assert got.tolist() == [True, False, False, False, True]


def test_is_feasible_saturated_design_has_no_feasible_candidate():
    rng = np.random.default_rng(6)
    X = rng.uniform(-1, 1, size=(40, 2))
    fill = fill_distance(X, B)
    mask = is_feasible(X, X, 0.5, fill, B)
    assert not mask.any()


def test_is_feasible_validation():
    X = np.array([[0.0]])
    with pytest.raises(ValueError, match="gamma"):
        is_feasible(X, X, 1.0, 0.5, B)
    with pytest.raises(ValueError, match="fill"):
        is_feasible(X, X, 0.5, 0.0, B)
    with pytest.raises(ValueError):
        is_feasible(X, np.empty((0, 1)), 0.5, 0.5, B)


def test_power_function_positive_on_feasible_set_and_decays_with_refinement():
    kernel = MaternKernel(sigma2=1.0, lengthscale=0.3, nu=1.5)
    grid = np.linspace(-0.999, 0.999, 512).reshape(-1, 1)
    previous = np.inf
    for n in (8, 16, 32):
        s = 2.0 / n
        X = (-1.0 + s * (np.arange(n) + 0.5)).reshape(-1, 1)
        y = np.sin(2 * X[:, 0])
        model = _fit(kernel, X, y, 1e-10)
        fill = fill_distance(X, B)
        mask = is_feasible(grid, X, 0.5, fill, B)
        assert mask.any()
        floor = model.posterior_var(grid[mask]).min()
        assert floor > 0.0
        assert floor < previous
        previous = floor
