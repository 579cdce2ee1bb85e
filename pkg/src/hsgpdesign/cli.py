"""Command-line front door: fidelity checks, bound validation, experiment suites.

Three subcommands, all driven by flat ``key = value`` config files:

``fidelity``
    Compares the closed-form sine-basis acquisition against the
    Gauss-Legendre reference on a candidate grid, writes ``profiles.csv``,
    and succeeds iff the max scale-relative discrepancy stays below the
    threshold.

``validate-bounds``
    Sweeps a grid of (m, L) resolutions, writes measured sup-grid kernel
    errors next to the closed-form truncation/aliasing bounds in
    ``bounds.csv``, and succeeds iff every measurement sits below its bound.

``run``
    Dispatches to the replicate experiment harness (``bench.run_experiment``)
    and succeeds iff every replicate completed.

Config values are typed per command and unknown keys are rejected, so a
config that parses is a config that reproduces.  Every command writes
``manifest.json`` (command name, resolved config, seed, output directory,
version) before computing anything; the echoed config is sufficient to
replay the run.

All randomness flows from the single top-level ``seed`` (config key,
overridable with ``--seed``).  Streams are split with numpy's
counter-based ``SeedSequence`` spawning: ``fidelity`` uses the seed for its
training design directly, and ``run`` gives replicate ``r`` the ``r``-th
spawned child, inside which the initial-design, loop, and per-method noise
streams occupy fixed child positions.

Exit codes: 0 success, 1 quantitative failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .bench import ExperimentSuite, fidelity_profile, make_test_grid, run_experiment
from .bounds import (
    admissibility_error,
    aliasing_bound,
    measured_aliasing_error,
    measured_truncation_error,
    truncation_bound,
)
from .design import lhs_sample
from .gp import GPRegressor
from .hsgp import SineBasis
from .kernels import make_kernel

__all__ = [
    "ConfigError",
    "main",
    "cmd_fidelity",
    "cmd_validate_bounds",
    "cmd_run",
    "parse_config",
    "resolve_config",
]

HALF_WIDTH = 1.0


class ConfigError(Exception):
    """Malformed or inconsistent configuration (maps to exit code 2)."""


# ---------------------------------------------------------------------------
# config file handling
# ---------------------------------------------------------------------------


def parse_config(text):
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line.strip()!r}")
        key, value = (part.strip() for part in body.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {line.strip()!r}")
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def _parse_bool(s):
    if s.lower() in ("true", "false"):
        return s.lower() == "true"
    raise ValueError(f"expected true or false, got {s!r}")


def _parse_floats(s):
    return tuple(float(v) for v in s.split(","))


def _parse_ints(s):
    return tuple(int(v) for v in s.split(","))


def _parse_strs(s):
    return tuple(v.strip() for v in s.split(","))


@dataclass(frozen=True)
class Field:
    parse: object
    required: bool = False
    default: object = None


_FIDELITY_SCHEMA = {
    "kernel": Field(str, required=True),
    "sigma2": Field(float, default=1.0),
    "lengthscale": Field(_parse_floats, required=True),
    "nu": Field(float),
    "d": Field(int, required=True),
    "n_train": Field(int, required=True),
    "m": Field(int, required=True),
    "L": Field(float, required=True),
    "grid_per_dim": Field(int, required=True),
    "g": Field(float, default=1e-10),
    "nodes_per_dim": Field(int, default=64),
    "threshold": Field(float, default=1e-2),
    "seed": Field(int, default=0),
}

_BOUNDS_SCHEMA = {
    "kernel": Field(str, required=True),
    "sigma2": Field(float, default=1.0),
    "lengthscale": Field(float, required=True),
    "nu": Field(float),
    "d": Field(int, required=True),
    "B": Field(float, default=1.0),
    "m_grid": Field(_parse_ints, required=True),
    "L_grid": Field(_parse_floats, required=True),
    "grid_per_dim": Field(int),
    "m_big_factor": Field(int, default=4),
    "seed": Field(int, default=0),
}

_RUN_SCHEMA = {
    "benchmark": Field(str, required=True),
    "d": Field(int, required=True),
    "kernel": Field(str, default="matern"),
    "nu": Field(float, default=1.5),
    "initial_count": Field(int, required=True),
    "steps": Field(int, required=True),
    "noise_sd": Field(float, default=0.0),
    "methods": Field(_parse_strs, default=("hsgp", "lhs")),
    "gamma": Field(float, default=0.5),
    "candidate_count": Field(int),
    "refit_every": Field(int, default=1),
    "schedule": Field(str, default="auto"),
    "m": Field(int),
    "L": Field(float),
    "metrics_every": Field(int, default=1),
    "lengthscale_init": Field(float, default=0.2),
    "lengthscale_bounds": Field(_parse_floats),
    "n_starts": Field(int, default=3),
    "fit_nugget": Field(_parse_bool),
    "g": Field(float),
    "bench_seed": Field(int, default=0),
    "replicates": Field(int, required=True),
    "seed": Field(int, default=0),
}


def resolve_config(raw, schema):
    """Type-check a parsed config against a command schema."""
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    resolved = {}
    for key, spec in schema.items():
        if key not in raw:
            if spec.required:
                raise ConfigError(f"missing required config key: {key}")
            resolved[key] = spec.default
            continue
        try:
            resolved[key] = spec.parse(raw[key])
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {exc}") from exc
    return resolved


def _load_config(path, schema, seed_override=None):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    resolved = resolve_config(parse_config(text), schema)
    if seed_override is not None:
        resolved["seed"] = int(seed_override)
    if resolved.get("seed", 0) < 0 or resolved.get("bench_seed", 0) < 0:
        raise ConfigError("seeds must be non-negative integers")
    return resolved


def _jsonable(value):
    if isinstance(value, tuple):
        return list(value)
    return value


def _write_manifest(out_dir, command, config):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": {k: _jsonable(v) for k, v in config.items()},
        "seed": config.get("seed", 0),
        "out": str(out),
        "version": __version__,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return out


def _build_kernel(cfg, product_ok=True):
    family = cfg["kernel"]
    ell = cfg["lengthscale"]
    if isinstance(ell, tuple):
        ell = ell if len(ell) > 1 else ell[0]
    if isinstance(ell, tuple) and family != "matern_product":
        raise ConfigError("per-dimension lengthscales require kernel = matern_product")
    if family == "matern_product" and not product_ok:
        raise ConfigError(f"kernel {family!r} is not supported by this command")
    if family in ("matern", "matern_product") and cfg["nu"] is None:
        raise ConfigError("matern kernels require the nu config key")
    try:
        return make_kernel(family, cfg["sigma2"], ell, cfg["nu"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_fidelity(config_path, out_dir, seed=None, threshold=None):
    """Exact-vs-closed-form acquisition profiles; exit 0 iff within threshold."""
    cfg = _load_config(config_path, _FIDELITY_SCHEMA, seed)
    if threshold is not None:
        cfg["threshold"] = float(threshold)
    if cfg["d"] not in (1, 2):
        raise ConfigError(f"d must be 1 or 2, got {cfg['d']}")
    for key in ("n_train", "m", "grid_per_dim"):
        if cfg[key] < 1:
            raise ConfigError(f"{key} must be a positive integer, got {cfg[key]}")
    kernel = _build_kernel(cfg)
    out = _write_manifest(out_dir, "fidelity", cfg)
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]))
    X = lhs_sample(cfg["n_train"], cfg["d"], HALF_WIDTH, rng)
    # the acquisition depends on the design and kernel only, not the responses
    model = GPRegressor(kernel=kernel, g=cfg["g"], optimize=False).fit(
        X, np.zeros(cfg["n_train"])
    )
    basis = SineBasis(cfg["m"], cfg["L"], cfg["d"])
    T = make_test_grid(cfg["d"], cfg["grid_per_dim"])
    exact, approx = fidelity_profile(
        model, basis, T,
        half_width=HALF_WIDTH,
        nodes_per_dim=cfg["nodes_per_dim"],
        path=out / "profiles.csv",
    )
    max_rel = float(np.max(np.abs(approx - exact)) / max(np.max(exact), 1e-300))
    print(f"max relative acquisition discrepancy: {max_rel:.6e} (threshold {cfg['threshold']:g})")
    return 0 if max_rel < cfg["threshold"] else 1


def cmd_validate_bounds(config_path, out_dir, seed=None):
    """Measured sup-grid kernel errors against the closed-form bounds."""
    cfg = _load_config(config_path, _BOUNDS_SCHEMA, seed)
    if cfg["kernel"] not in ("gaussian", "matern"):
        raise ConfigError("validate-bounds supports gaussian and matern kernels")
    if cfg["m_big_factor"] < 2:
        raise ConfigError(f"m_big_factor must be >= 2, got {cfg['m_big_factor']}")
    kernel = _build_kernel(cfg, product_ok=False)
    d, B = cfg["d"], cfg["B"]
    pairs = list(product(cfg["m_grid"], cfg["L_grid"]))
    for m, L in pairs:
        reason = admissibility_error(kernel, d, m, L, B)
        if reason is not None:
            raise ConfigError(f"inadmissible (m={m}, L={L}): {reason}")
    out = _write_manifest(out_dir, "validate-bounds", cfg)
    lines = [
        "m,L,truncation_measured,truncation_bound,aliasing_measured,aliasing_bound"
    ]
    violations = 0
    for m, L in pairs:
        t_meas = measured_truncation_error(
            kernel, d, m, cfg["m_big_factor"] * m, L, B, grid_per_dim=cfg["grid_per_dim"]
        )
        t_bound = truncation_bound(kernel, d, m, L)
        a_meas = measured_aliasing_error(kernel, d, L, B, grid_per_dim=cfg["grid_per_dim"])
        a_bound = aliasing_bound(kernel, d, L, B)
        lines.append(
            f"{m},{float(L)!r},{float(t_meas)!r},{float(t_bound)!r},"
            f"{float(a_meas)!r},{float(a_bound)!r}"
        )
        if t_meas > t_bound or a_meas > a_bound:
            violations += 1
            print(
                f"bound violated at m={m}, L={L}: "
                f"truncation {t_meas:.3e} vs {t_bound:.3e}, "
                f"aliasing {a_meas:.3e} vs {a_bound:.3e}"
            )
    (out / "bounds.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"checked {len(pairs)} (m, L) pairs: {violations} violation(s)")
    return 0 if violations == 0 else 1


def cmd_run(config_path, out_dir, seed=None, jobs=1):
    """Replicate experiment suite; exit 0 iff every replicate completed."""
    cfg = _load_config(config_path, _RUN_SCHEMA, seed)
    if int(jobs) != jobs or jobs < 1:
        raise ConfigError(f"--jobs must be a positive integer, got {jobs}")
    suite_kwargs = {
        k: v for k, v in cfg.items() if k not in ("replicates", "seed")
    }
    try:
        suite = ExperimentSuite(rng_seed=cfg["seed"], **suite_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    records, _ = run_experiment(
        suite,
        cfg["replicates"],
        out_dir=out_dir,
        n_jobs=jobs,
        manifest_extra={
            "command": "run",
            "config": {k: _jsonable(v) for k, v in cfg.items()},
            "seed": cfg["seed"],
            "out": str(Path(out_dir)),
            "jobs": int(jobs),
        },
    )
    failed = [(r.method, r.replicate) for r in records if not r.ok]
    for method, rep in failed:
        print(f"replicate {rep} failed for method {method}")
    print(f"{len(records) - len(failed)}/{len(records)} runs completed")
    return 0 if not failed else 1


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="hsgpdesign",
        description="Sequential design with reduced-rank IMSE acquisitions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p_fid = sub.add_parser("fidelity", help="exact-vs-closed-form acquisition check")
    common(p_fid)
    p_fid.add_argument(
        "--threshold", type=float, default=None, help="override the config threshold"
    )

    p_bounds = sub.add_parser("validate-bounds", help="kernel error-bound envelopes")
    common(p_bounds)

    p_run = sub.add_parser("run", help="replicate experiment suite")
    common(p_run)
    p_run.add_argument("--jobs", type=int, default=1, help="replicate fan-out (default 1)")
    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "fidelity":
            return cmd_fidelity(args.config, args.out, args.seed, args.threshold)
        if args.command == "validate-bounds":
            return cmd_validate_bounds(args.config, args.out, args.seed)
        return cmd_run(args.config, args.out, args.seed, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
