"""Sequential experimental design driven by the IMSE acquisition.

``run_sequential`` executes the fit -> select -> observe -> append loop with
the separation constraint dist(t, X) >= gamma * h_N enforced at every
selection, using either the sine-basis closed form or the exact quadrature
acquisition, plus a Latin-hypercube baseline that adds pre-drawn space-filling
points (no acquisition) for timing and accuracy comparisons.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.stats import qmc
from sklearn.base import clone

from ._validate import as_points, as_vector, check_in_open_box, check_positive
from .acquisition import (
    AcquisitionContext,
    FeasibilityState,
    fill_distance,
    hsgp_imse,
    imse_quadrature,
    is_feasible,
    separation_distance,
)
from .gp import GPRegressor
from .hsgp import SineBasis, default_params

__all__ = [
    "ACQUISITION_MODES",
    "SCHEDULES",
    "DesignConfig",
    "IterationRecord",
    "RunHistory",
    "NoFeasibleCandidateError",
    "lhs_sample",
    "select_next",
    "run_sequential",
]

ACQUISITION_MODES = ("hsgp", "quadrature", "lhs")
SCHEDULES = ("auto", "fixed")


class NoFeasibleCandidateError(RuntimeError):
    """Every candidate violates the separation constraint (or lies outside)."""


def lhs_sample(n, d, half_width, rng):
    """Latin-hypercube sample of ``n`` points in (-half_width, half_width)^d.

    One point per axis-aligned stratum of width 2*half_width/n per dimension,
    deterministic for a seeded generator.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n!r}")
    if int(d) != d or d < 1:
        raise ValueError(f"d must be a positive integer, got {d!r}")
    b = check_positive(half_width, "half_width")
    u = qmc.LatinHypercube(d=int(d), seed=rng).random(int(n))
    return (2.0 * u - 1.0) * b


@dataclass(frozen=True)
class DesignConfig:
    """Settings of one sequential run.

    ``candidate_count=None`` means the per-iteration candidate set defaults to
    max(512, 50 d).  ``schedule="auto"`` recomputes the basis size (m, L) from
    the current data size and fitted lengthscale at every refit;
    ``schedule="fixed"`` uses the given ``m`` and ``L`` throughout.
    """

    steps: int
    gamma: float = 0.5
    candidate_count: int | None = None
    refit_every: int = 1
    acquisition_mode: str = "hsgp"
    rng_seed: int = 0
    schedule: str = "auto"
    m: int | None = None
    L: float | None = None

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.candidate_count is not None and self.candidate_count < 16:
            raise ValueError(
                f"candidate_count must be >= 16, got {self.candidate_count}"
            )
        if int(self.refit_every) != self.refit_every or self.refit_every < 1:
            raise ValueError(
                f"refit_every must be a positive integer, got {self.refit_every!r}"
            )
        if self.acquisition_mode not in ACQUISITION_MODES:
            raise ValueError(
                f"acquisition_mode must be one of {ACQUISITION_MODES}, "
                f"got {self.acquisition_mode!r}"
            )
        if self.schedule not in SCHEDULES:
            raise ValueError(f"schedule must be one of {SCHEDULES}, got {self.schedule!r}")
        if self.m is not None and self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")
        if self.L is not None:
            check_positive(self.L, "L")
        if (
            self.acquisition_mode == "hsgp"
            and self.schedule == "fixed"
            and (self.m is None or self.L is None)
        ):
            raise ValueError("schedule='fixed' requires both m and L")

    def resolved_candidate_count(self, d):
        if self.candidate_count is not None:
            return int(self.candidate_count)
        return max(512, 50 * int(d))


@dataclass(frozen=True)
class IterationRecord:
    """One accepted point with the model state it was selected under."""

    iteration: int
    x: np.ndarray
    acq_value: float
    sigma2: float
    lengthscales: tuple
    g: float
    fill: float
    separation: float
    gamma_used: float
    seconds: float


@dataclass
class RunHistory:
    """Outcome of a sequential run: records, augmented data and final model.

    ``exhausted`` flags a run stopped early because no feasible candidate
    remained even after halving gamma once; otherwise ``len(records)`` equals
    the configured number of steps.  ``fill`` values are non-increasing
    because every iteration only adds points.
    """

    config: DesignConfig
    records: list
    X: np.ndarray
    y: np.ndarray
    model: GPRegressor
    n_initial: int
    exhausted: bool = False

    @property
    def selected(self):
        """Points added by the run, in acceptance order."""
        return self.X[self.n_initial :]

    def to_csv(self, path=None, include_seconds=True):
        """Render per-iteration records as CSV text (optionally write it).

        All floats use shortest round-trip repr, so the text is
        byte-reproducible for identical runs; ``include_seconds=False`` drops
        the wall-clock column, which is the only nondeterministic one.
        """
        d = self.X.shape[1]
        n_ell = len(self.records[0].lengthscales) if self.records else d
        cols = ["iter"]
        cols += [f"x{k + 1}" for k in range(d)]
        cols += ["acq_value", "sigma2_hat"]
        if n_ell == 1:
            cols += ["ell_hat"]
        else:
            cols += [f"ell_hat{k + 1}" for k in range(n_ell)]
        cols += ["g_hat", "h_N", "q_N", "gamma"]
        if include_seconds:
            cols += ["seconds"]
        lines = [",".join(cols)]
        for rec in self.records:
            row = [str(rec.iteration)]
            row += [repr(float(v)) for v in rec.x]
            row += [repr(float(rec.acq_value)), repr(float(rec.sigma2))]
            row += [repr(float(v)) for v in rec.lengthscales]
            row += [
                repr(float(rec.g)),
                repr(float(rec.fill)),
                repr(float(rec.separation)),
                repr(float(rec.gamma_used)),
            ]
            if include_seconds:
                row += [repr(float(rec.seconds))]
            lines.append(",".join(row))
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text


def select_next(model, candidates, feas, mode="hsgp", ctx=None, nodes_per_dim=64):
    """Feasible candidate maximizing the acquisition.

    Returns ``(point, value, index)`` where ``index`` refers to the candidate
    array; exact ties resolve to the smallest index.  Raises
    :class:`NoFeasibleCandidateError` when the feasible set is empty.
    """
    candidates = as_points(candidates, dim=model.X_.shape[1], name="candidates")
    if mode not in ("hsgp", "quadrature"):
        raise ValueError(f"mode must be 'hsgp' or 'quadrature', got {mode!r}")
    mask = is_feasible(candidates, model.X_, feas.gamma, feas.fill, feas.half_width)
    if not np.any(mask):
        raise NoFeasibleCandidateError(
            "no candidate clears dist >= gamma * h_N inside the domain"
        )
    idx = np.flatnonzero(mask)
    if mode == "hsgp":
        if ctx is None:
            raise ValueError("mode='hsgp' requires an AcquisitionContext")
        values = hsgp_imse(ctx, model, candidates[idx])
    else:
        values = imse_quadrature(
            model, candidates[idx], feas.half_width, nodes_per_dim=nodes_per_dim
        )
    best = int(np.argmax(values))
    return candidates[idx[best]].copy(), float(values[best]), int(idx[best])


def _basis_for(cfg, model, n, d, half_width):
    if cfg.schedule == "fixed":
        return SineBasis(m=int(cfg.m), L=float(cfg.L), d=d)
    # resolution is limited by the shortest fitted lengthscale
    ell = float(min(model.kernel_.lengthscales))
    m, L = default_params(n, d, half_width, ell)
    return SineBasis(m=m, L=L, d=d)


def run_sequential(X0, y0, oracle_fn, cfg, estimator=None, half_width=1.0):
    """Run ``cfg.steps`` iterations of fit -> select -> observe -> append.

    ``oracle_fn`` maps a (k, d) array of points to k responses and is treated
    as the data-generating mechanism (add observation noise inside it if
    wanted).  Per-iteration ``seconds`` cover the fit and the selection but
    exclude the oracle evaluation.  On feasibility exhaustion gamma is halved
    once for the remainder of the run; a second exhaustion stops the run with
    ``exhausted=True`` and fewer records than ``steps``.
    """
    b = check_positive(half_width, "half_width")
    X = as_points(X0, name="X0")
    y = as_vector(y0, n=X.shape[0], name="y0")
    check_in_open_box(X, b, name="X0")
    d = X.shape[1]
    proto = estimator if estimator is not None else GPRegressor()
    n_cand = cfg.resolved_candidate_count(d)
    children = np.random.SeedSequence(cfg.rng_seed).spawn(cfg.steps + 1)
    baseline = None
    if cfg.acquisition_mode == "lhs":
        baseline = lhs_sample(cfg.steps, d, b, np.random.default_rng(children[-1]))

    gamma = cfg.gamma
    gamma_halved = False
    exhausted = False
    records = []
    model = None
    for i in range(cfg.steps):
        t0 = time.perf_counter()
        try:
            if model is None or i % cfg.refit_every == 0:
                model = clone(proto).fit(X, y)
            else:
                model.refit_data(X, y)
            fill = fill_distance(X, b)
            sep = separation_distance(X) if X.shape[0] >= 2 else float("nan")
            if cfg.acquisition_mode == "lhs":
                x_new = baseline[i].copy()
                value = float("nan")
            else:
                candidates = lhs_sample(n_cand, d, b, np.random.default_rng(children[i]))
                ctx = None
                if cfg.acquisition_mode == "hsgp":
                    ctx = AcquisitionContext.build(
                        model, _basis_for(cfg, model, X.shape[0], d, b), b
                    )
                feas = FeasibilityState(
                    gamma=gamma, fill=fill, separation=sep, half_width=b
                )
                try:
                    x_new, value, _ = select_next(
                        model, candidates, feas, mode=cfg.acquisition_mode, ctx=ctx
                    )
                except NoFeasibleCandidateError:
                    if gamma_halved:
                        exhausted = True
                        break
                    gamma = 0.5 * gamma
                    gamma_halved = True
                    feas = replace(feas, gamma=gamma)
                    try:
                        x_new, value, _ = select_next(
                            model, candidates, feas, mode=cfg.acquisition_mode, ctx=ctx
                        )
                    except NoFeasibleCandidateError:
                        exhausted = True
                        break
            seconds = time.perf_counter() - t0
            y_new = float(np.asarray(oracle_fn(x_new[None, :]), dtype=float).reshape(-1)[0])
            if not np.isfinite(y_new):
                raise ValueError(f"oracle returned a non-finite response {y_new!r}")
        except NoFeasibleCandidateError:  # pragma: no cover - handled above
            raise
        except Exception as exc:
            raise RuntimeError(f"sequential iteration {i} failed: {exc}") from exc
        X = np.vstack([X, x_new[None, :]])
        y = np.append(y, y_new)
        records.append(
            IterationRecord(
                iteration=i,
                x=x_new,
                acq_value=value,
                sigma2=float(model.sigma2_),
                lengthscales=tuple(float(v) for v in model.kernel_.lengthscales),
                g=float(model.g_),
                fill=fill,
                separation=sep,
                gamma_used=gamma,
                seconds=seconds,
            )
        )
    final = clone(proto).fit(X, y)
    return RunHistory(
        config=cfg,
        records=records,
        X=X,
        y=y,
        model=final,
        n_initial=as_points(X0).shape[0],
        exhausted=exhausted,
    )
