"""Benchmark functions, accuracy metrics, and the replicate experiment harness.

Four frozen test functions on (-1, 1)^d — a Matern-5/2 random-field
interpolant, a four-mode Gaussian-density surface, a 100-bump Laplace mixture,
and a chirped cosine sum — plus the RMSE / mean-posterior-variance metrics and
``run_experiment``, which replays sequential-design methods over replicates on
identical initial data and exports per-iteration records with pointwise
min-max envelopes.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import clone

from . import __version__
from ._validate import as_points
from .acquisition import AcquisitionContext, hsgp_imse, imse_quadrature
from .design import ACQUISITION_MODES, DesignConfig, lhs_sample, run_sequential
from .gp import GPRegressor
from .hsgp import SineBasis
from .kernels import MaternKernel, make_kernel

__all__ = [
    "BENCHMARK_IDS",
    "BenchmarkFn",
    "ExperimentSuite",
    "ExperimentRecord",
    "make_benchmark",
    "make_test_grid",
    "evaluate_metrics",
    "fidelity_profile",
    "run_experiment",
    "records_from_runs_csv",
]

BENCHMARK_IDS = ("f1", "f2", "f3", "f4")
HALF_WIDTH = 1.0
TEST_GRID_PER_DIM = {1: 512, 2: 101}


def make_test_grid(d, n_per_dim=None):
    """Uniform midpoint grid strictly inside (-1, 1)^d (512 in 1-D, 101^2 in 2-D)."""
    if n_per_dim is None:
        if d not in TEST_GRID_PER_DIM:
            raise ValueError(f"no default test grid for d={d}; pass n_per_dim")
        n_per_dim = TEST_GRID_PER_DIM[d]
    n = int(n_per_dim)
    axis = -HALF_WIDTH + (2.0 * HALF_WIDTH / n) * (np.arange(n) + 0.5)
    if d == 1:
        return axis.reshape(-1, 1)
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack([a.reshape(-1) for a in mesh], axis=1)


@dataclass(frozen=True)
class BenchmarkFn:
    """Deterministic benchmark on (-1, 1)^d with all random draws frozen."""

    fid: str
    d: int
    noise_sd: float = 0.0
    params: dict = field(default_factory=dict, repr=False, compare=False)

    def __call__(self, X):
        X = as_points(X, dim=self.d, name="X")
        if self.fid == "f1":
            corr = self.params["kernel"].correlation(X, self.params["X"])
            return corr @ self.params["alpha"]
        if self.fid == "f2":
            rho2 = 0.01
            coef = 1.0 / (2.0 * np.pi * rho2)
            out = np.zeros(X.shape[0])
            for sign, mu in (
                (1.0, (0.5, 0.5)),
                (1.0, (-0.5, -0.5)),
                (-1.0, (0.5, -0.5)),
                (-1.0, (-0.5, 0.5)),
            ):
                sq = ((X - np.asarray(mu)) ** 2).sum(axis=1)
                out += sign * coef * np.exp(-sq / (2.0 * rho2))
            return out
        if self.fid == "f3":
            dist = cdist(X, self.params["centers"])
            return np.exp(-dist / self.params["widths"]) @ self.params["amplitudes"]
        z = 10.0 * np.pi * X / (1.0 + X + 5.0 * X**2)
        return np.cos(z).sum(axis=1)

    def noisy_oracle(self, rng):
        """Data-generating closure y = f(x) + N(0, noise_sd^2)."""

        def oracle(X):
            y = self(X)
            if self.noise_sd > 0.0:
                y = y + self.noise_sd * rng.normal(size=y.shape)
            return y

        return oracle


def make_benchmark(fid, d, seed=0, noise_sd=0.0):
    """Construct a frozen benchmark function; f2 is defined in d=2 only."""
    if fid not in BENCHMARK_IDS:
        raise ValueError(f"fid must be one of {BENCHMARK_IDS}, got {fid!r}")
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d!r}")
    d = int(d)
    if fid == "f2" and d != 2:
        raise ValueError("f2 is a two-dimensional benchmark")
    if noise_sd < 0.0:
        raise ValueError(f"noise_sd must be nonnegative, got {noise_sd}")
    params = {}
    rng = np.random.default_rng(seed)
    if fid == "f1":
        n = 200 * d
        kernel = MaternKernel(sigma2=1.0, lengthscale=0.1, nu=2.5)
        X = lhs_sample(n, d, HALF_WIDTH, rng)
        C = kernel.correlation(X)
        w, V = np.linalg.eigh(C)
        y = V @ (np.sqrt(np.clip(w, 0.0, None)) * rng.standard_normal(n))
        alpha = np.linalg.solve(C + 1e-13 * np.eye(n), y)
        params = {"kernel": kernel, "X": X, "y": y, "alpha": alpha}
    elif fid == "f3":
        params = {
            "amplitudes": rng.uniform(-1.0, 1.0, size=100),
            "centers": rng.uniform(-1.0, 1.0, size=(100, d)),
            "widths": rng.uniform(0.01, 1.0, size=100),
        }
    return BenchmarkFn(fid=fid, d=d, noise_sd=float(noise_sd), params=params)


def evaluate_metrics(model, bench, test_grid):
    """Test-grid RMSE of the posterior mean and mean posterior variance."""
    grid = as_points(test_grid, dim=bench.d, name="test_grid")
    err = model.predict(grid) - bench(grid)
    rmse = float(np.sqrt(np.mean(err**2)))
    mean_post_var = float(np.mean(model.posterior_var(grid)))
    return rmse, mean_post_var


def fidelity_profile(model, basis, T, half_width=HALF_WIDTH, nodes_per_dim=64, path=None):
    """Exact vs closed-form acquisition on a candidate grid, as CSV columns.

    Returns ``(exact, approx)`` and optionally writes rows
    ``t1[,t2],imse_exact,imse_hsgp``.
    """
    T = as_points(T, dim=model.X_.shape[1], name="T")
    exact = imse_quadrature(model, T, half_width, nodes_per_dim=nodes_per_dim)
    ctx = AcquisitionContext.build(model, basis, half_width)
    approx = hsgp_imse(ctx, model, T)
    if path is not None:
        cols = [f"t{k + 1}" for k in range(T.shape[1])] + ["imse_exact", "imse_hsgp"]
        lines = [",".join(cols)]
        for row, e, a in zip(T, exact, approx):
            lines.append(",".join([repr(float(v)) for v in row] + [repr(float(e)), repr(float(a))]))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return exact, approx


@dataclass(frozen=True)
class ExperimentSuite:
    """One benchmark/kernel experiment: methods compared on shared initial data.

    ``metrics_every`` thins the per-iteration metric evaluation (the final
    iteration is always included); ``fit_nugget=None`` means the nugget is
    estimated exactly when the oracle is noisy.
    """

    benchmark: str
    d: int
    kernel: str = "matern"
    nu: float = 1.5
    initial_count: int = 100
    steps: int = 400
    noise_sd: float = 0.0
    methods: tuple = ("hsgp", "lhs")
    gamma: float = 0.5
    candidate_count: int | None = None
    refit_every: int = 1
    schedule: str = "auto"
    m: int | None = None
    L: float | None = None
    metrics_every: int = 1
    lengthscale_init: float = 0.2
    lengthscale_bounds: tuple | None = None
    n_starts: int = 3
    fit_nugget: bool | None = None
    g: float | None = None
    bench_seed: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.benchmark not in BENCHMARK_IDS:
            raise ValueError(f"benchmark must be one of {BENCHMARK_IDS}, got {self.benchmark!r}")
        if self.initial_count < 2:
            raise ValueError(f"initial_count must be >= 2, got {self.initial_count}")
        bad = [m for m in self.methods if m not in ACQUISITION_MODES]
        if not self.methods or bad:
            raise ValueError(f"methods must be drawn from {ACQUISITION_MODES}, got {self.methods!r}")
        if self.metrics_every < 1:
            raise ValueError(f"metrics_every must be >= 1, got {self.metrics_every}")
        self.design_config(self.methods[0], 0)  # validates the shared loop settings

    def estimator(self):
        ell = self.lengthscale_init
        if self.kernel == "matern_product":
            ell = (ell,) * self.d
        fit_nugget = self.fit_nugget if self.fit_nugget is not None else self.noise_sd > 0
        g = self.g if self.g is not None else (0.01 if fit_nugget else 1e-10)
        return GPRegressor(
            kernel=make_kernel(self.kernel, 1.0, ell, self.nu),
            g=g,
            fit_nugget=fit_nugget,
            optimize=True,
            n_starts=self.n_starts,
            lengthscale_bounds=self.lengthscale_bounds,
            random_state=0,
        )

    def design_config(self, method, run_seed):
        return DesignConfig(
            steps=self.steps,
            gamma=self.gamma,
            candidate_count=self.candidate_count,
            refit_every=self.refit_every,
            acquisition_mode=method,
            rng_seed=run_seed,
            schedule=self.schedule,
            m=self.m,
            L=self.L,
        )

    def metric_iterations(self, n_records):
        """Record indices at which metrics are evaluated."""
        if n_records == 0:
            return np.empty(0, dtype=int)
        idx = np.arange(self.metrics_every - 1, n_records, self.metrics_every)
        if idx.size == 0 or idx[-1] != n_records - 1:
            idx = np.append(idx, n_records - 1)
        return idx


@dataclass(frozen=True)
class ExperimentRecord:
    """Metric trajectories of one (method, replicate) run."""

    method: str
    replicate: int
    iterations: tuple
    rmse: tuple
    mean_post_var: tuple
    cum_seconds: tuple
    ok: bool = True


def _metrics_along(hist, suite, bench, grid, proto):
    """Refit on the grown data at each metric index and score on the grid."""
    idx = suite.metric_iterations(len(hist.records))
    n0 = hist.n_initial
    rmse, pv = [], []
    for i in idx:
        model = clone(proto).fit(hist.X[: n0 + i + 1], hist.y[: n0 + i + 1])
        r, v = evaluate_metrics(model, bench, grid)
        rmse.append(r)
        pv.append(v)
    return idx, np.asarray(rmse), np.asarray(pv)


def _run_replicate(suite, replicates, r):
    """Run every suite method for replicate ``r`` on shared initial data.

    Rebuilds the benchmark and re-derives the replicate's seed stream from
    the suite itself, so results do not depend on which worker runs it.
    """
    bench = make_benchmark(suite.benchmark, suite.d, suite.bench_seed, suite.noise_sd)
    grid = make_test_grid(suite.d)
    proto = suite.estimator()
    child = np.random.SeedSequence(suite.rng_seed).spawn(int(replicates))[r]
    seeds = child.spawn(2 + len(suite.methods))
    rng_data = np.random.default_rng(seeds[0])
    X0 = lhs_sample(suite.initial_count, suite.d, HALF_WIDTH, rng_data)
    y0 = bench(X0)
    if suite.noise_sd > 0.0:
        y0 = y0 + suite.noise_sd * rng_data.normal(size=y0.shape)
    run_seed = int(seeds[1].generate_state(1)[0])
    records = []
    for mi, method in enumerate(suite.methods):
        oracle = bench.noisy_oracle(np.random.default_rng(seeds[2 + mi]))
        try:
            hist = run_sequential(
                X0, y0, oracle, suite.design_config(method, run_seed), proto
            )
            idx, rmse, pv = _metrics_along(hist, suite, bench, grid, proto)
            cum = np.cumsum([rec.seconds for rec in hist.records])
            records.append(
                ExperimentRecord(
                    method=method,
                    replicate=r,
                    iterations=tuple(int(i) for i in idx),
                    rmse=tuple(float(v) for v in rmse),
                    mean_post_var=tuple(float(v) for v in pv),
                    cum_seconds=tuple(float(cum[i]) for i in idx),
                )
            )
        except Exception:
            records.append(
                ExperimentRecord(
                    method=method, replicate=r,
                    iterations=(), rmse=(), mean_post_var=(), cum_seconds=(),
                    ok=False,
                )
            )
    return records


def run_experiment(suite, replicates, out_dir=None, n_jobs=1, manifest_extra=None):
    """Run every suite method over seeded replicates and summarize envelopes.

    Each replicate draws one set of initial data shared by all methods; a
    failed run is recorded with ``ok=False`` without aborting the suite.
    Replicates are independent and run on ``n_jobs`` processes (seeding is
    per replicate, so the output is identical for any job count). Returns
    ``(records, summary_rows)``; with ``out_dir`` set, writes
    ``manifest.json`` (first, optionally merged with ``manifest_extra``),
    ``runs.csv`` and ``summary.csv``.
    """
    if int(replicates) != replicates or replicates < 1:
        raise ValueError(f"replicates must be a positive integer, got {replicates!r}")
    replicates = int(replicates)
    if int(n_jobs) != n_jobs or n_jobs < 1:
        raise ValueError(f"n_jobs must be a positive integer, got {n_jobs!r}")
    out = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        manifest = {
            "suite": asdict(suite),
            "replicates": replicates,
            "version": __version__,
        }
        if manifest_extra:
            manifest.update(manifest_extra)
        (out / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    if n_jobs == 1:
        batches = [_run_replicate(suite, replicates, r) for r in range(replicates)]
    else:
        with ProcessPoolExecutor(max_workers=int(n_jobs)) as pool:
            batches = list(
                pool.map(_run_replicate, [suite] * replicates,
                         [replicates] * replicates, range(replicates))
            )
    records = [rec for batch in batches for rec in batch]
    summary = summarize_records(records)
    if out is not None:
        (out / "runs.csv").write_text(runs_csv_text(records), encoding="utf-8")
        (out / "summary.csv").write_text(summary_csv_text(summary), encoding="utf-8")
    return records, summary


def summarize_records(records):
    """Pointwise min / mean / max envelopes per method across replicates."""
    rows = []
    for method in dict.fromkeys(rec.method for rec in records):
        good = [r for r in records if r.method == method and r.ok and r.iterations]
        if not good:
            continue
        n = min(len(r.iterations) for r in good)
        iters = good[0].iterations[:n]
        rmse = np.array([r.rmse[:n] for r in good])
        pv = np.array([r.mean_post_var[:n] for r in good])
        sec = np.array([r.cum_seconds[:n] for r in good])
        for j in range(n):
            rows.append(
                {
                    "method": method,
                    "iter": int(iters[j]),
                    "rmse_min": float(rmse[:, j].min()),
                    "rmse_mean": float(rmse[:, j].mean()),
                    "rmse_max": float(rmse[:, j].max()),
                    "post_var_min": float(pv[:, j].min()),
                    "post_var_mean": float(pv[:, j].mean()),
                    "post_var_max": float(pv[:, j].max()),
                    "seconds_min": float(sec[:, j].min()),
                    "seconds_mean": float(sec[:, j].mean()),
                    "seconds_max": float(sec[:, j].max()),
                }
            )
    return rows


_RUNS_HEADER = "method,replicate,iter,rmse,mean_post_var,cum_seconds,ok"


def runs_csv_text(records):
    """Per-iteration rows of every run, losslessly reparsable.

    A failed run contributes a single sentinel row with ``iter=-1`` and
    ``ok=0`` so the failure survives in the exported artifact.
    """
    lines = [_RUNS_HEADER]
    for rec in records:
        if not rec.ok:
            lines.append(f"{rec.method},{rec.replicate},-1,nan,nan,nan,0")
            continue
        for i, r, v, s in zip(rec.iterations, rec.rmse, rec.mean_post_var, rec.cum_seconds):
            lines.append(f"{rec.method},{rec.replicate},{i},{r!r},{v!r},{s!r},1")
    return "\n".join(lines) + "\n"


def records_from_runs_csv(text):
    """Rebuild ExperimentRecord objects from ``runs.csv`` content."""
    lines = [ln for ln in text.strip().split("\n") if ln]
    if not lines or lines[0] != _RUNS_HEADER:
        raise ValueError("unrecognized runs.csv header")
    grouped = {}
    for ln in lines[1:]:
        method, rep, it, rmse, pv, sec, ok = ln.split(",")
        grouped.setdefault((method, int(rep), ok == "1"), []).append(
            (int(it), float(rmse), float(pv), float(sec))
        )
    records = []
    for (method, rep, ok), rows in grouped.items():
        if not ok:
            records.append(
                ExperimentRecord(
                    method=method, replicate=rep,
                    iterations=(), rmse=(), mean_post_var=(), cum_seconds=(),
                    ok=False,
                )
            )
            continue
        records.append(
            ExperimentRecord(
                method=method,
                replicate=rep,
                iterations=tuple(r[0] for r in rows),
                rmse=tuple(r[1] for r in rows),
                mean_post_var=tuple(r[2] for r in rows),
                cum_seconds=tuple(r[3] for r in rows),
            )
        )
    return records


def summary_csv_text(summary_rows):
    cols = [
        "method", "iter",
        "rmse_min", "rmse_mean", "rmse_max",
        "post_var_min", "post_var_mean", "post_var_max",
        "seconds_min", "seconds_mean", "seconds_max",
    ]
    lines = [",".join(cols)]
    for row in summary_rows:
        lines.append(
            ",".join(
                [row["method"], str(row["iter"])]
                + [repr(row[c]) for c in cols[2:]]
            )
        )
    return "\n".join(lines) + "\n"
