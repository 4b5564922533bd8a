"""Batch experiment runner: flat key=value configs, deterministic outputs.

Usage:
    bregquant SUBCOMMAND --config PATH [--seed N] [--workers N] [--out DIR]

Subcommands: divergence-eval, quantize, zador-verify, identity-check,
firewall-check, pierce-check.  All randomness derives from (seed, task
index), so a fixed (config, worker count) reproduces identical output bytes.
Exit codes: 2 for config errors, 3 for numeric failures.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import divergence as dv
from . import geometry as geo
from . import measures as ms
from . import quantize as qt
from . import zador as zd

SUBCOMMANDS = ("divergence-eval", "quantize", "zador-verify", "identity-check",
               "firewall-check", "pierce-check")
WORKERS_ENV = "BREGQUANT_WORKERS"

_INT_RE = re.compile(r"^[+-]?\d+$")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Config parsing / emission (flat key = value, one nesting level for matrices)
# ---------------------------------------------------------------------------

def _parse_scalar(tok: str):
    tok = tok.strip()
    if _INT_RE.match(tok):
        return int(tok)
    try:
        return float(tok)
    except ValueError:
        pass
    if tok in ("true", "false"):
        return tok == "true"
    return tok


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith("[["):
        if not raw.endswith("]]"):
            raise ConfigError(f"malformed matrix literal: {raw}")
        rows = re.findall(r"\[([^\[\]]*)\]", raw)
        return [[_parse_scalar(t) for t in row.split(",")] for row in rows]
    if "," in raw:
        return [_parse_scalar(t) for t in raw.split(",")]
    return _parse_scalar(raw)


def _emit_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        if value and isinstance(value[0], (list, tuple)):
            return "[" + ",".join("[" + ",".join(_emit_value(v) for v in row) + "]"
                                  for row in value) + "]"
        return ",".join(_emit_value(v) for v in value)
    return str(value)


def parse_config(text: str) -> dict:
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value': {line!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in cfg:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        cfg[key] = _parse_value(raw)
    return cfg


def emit_config(cfg: dict) -> str:
    return "".join(f"{k} = {_emit_value(cfg[k])}\n" for k in sorted(cfg))


def _as_list(value):
    return list(value) if isinstance(value, (list, tuple)) else [value]


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

_DIV_PARAM_KEYS = ("a", "rho", "lam", "f", "d", "S", "eps")


def build_divergence(cfg: dict):
    name = cfg.get("divergence")
    if name is None:
        raise ConfigError("config lacks 'divergence'")
    params = {}
    for key in _DIV_PARAM_KEYS:
        if key in cfg:
            params[key] = np.array(cfg[key], dtype=float) if key == "S" else cfg[key]
    eps = params.pop("eps", None)
    spec = dv.builtin(name, **params)
    if eps is not None:
        spec = dv.regularize(spec, float(eps))
    return spec


def build_distribution(cfg: dict) -> ms.DistributionSpec:
    name = cfg.get("dist")
    if name is None:
        raise ConfigError("config lacks 'dist'")
    if name == "uniform-box":
        return ms.uniform_box(_as_list(cfg.get("lo", 0.0)), _as_list(cfg.get("hi", 1.0)))
    if name == "triangular":
        return ms.triangular()
    if name == "gaussian-truncated":
        return ms.gaussian_truncated(_as_list(cfg.get("lo", -3.0)),
                                     _as_list(cfg.get("hi", 3.0)),
                                     mean=cfg.get("mean", 0.0),
                                     sigma=cfg.get("sigma", 1.0))
    if name == "empirical":
        if "csv" not in cfg:
            raise ConfigError("empirical dist needs 'csv = PATH'")
        return ms.empirical_from_csv(cfg["csv"])
    raise ConfigError(f"unknown dist {cfg['dist']!r}")


def _write_json(path: Path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_lines(path: Path, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _run_divergence_eval(cfg, out: Path, seed: int) -> None:
    spec = build_divergence(cfg)
    xi = np.array(_as_list(cfg["xi"]), dtype=float)
    x = np.array(_as_list(cfg["x"]), dtype=float)
    result = {
        "divergence": spec.name,
        "xi": xi.tolist(),
        "x": x.tolist(),
        "phi": float(dv.eval_phi(spec, xi, x)),
        "phi_quadrature": float(dv.eval_phi_quadrature(spec, xi, x,
                                                       nodes=int(cfg.get("nodes", 32)))),
    }
    _write_json(out / "eval.json", result)


def _run_quantize(cfg, out: Path, seed: int) -> None:
    spec = build_divergence(cfg)
    dist = build_distribution(cfg)
    n = int(cfg.get("n", 4))
    r = float(cfg.get("r", 2))
    restarts = int(cfg.get("restarts", 5))
    mode = cfg.get("mode", "mc")
    if mode == "exact-1d":
        result = qt.train(dist, n, r, spec, restarts=restarts, seed=seed)
        est = qt.distortion(result.codebook, dist, r, spec, mode="exact-1d")
    else:
        pts = ms.sample(dist, int(cfg.get("n_train", 100_000)),
                        ms.derive_rng(seed, 1).integers(2 ** 31))
        result = qt.train(pts, n, r, spec, restarts=restarts, seed=seed)
        est = qt.distortion(result.codebook, dist, r, spec, mode="mc",
                            n_samples=int(cfg.get("n_mc", 200_000)),
                            seed=ms.derive_rng(seed, 2).integers(2 ** 31))
    result.codebook.to_csv(out / "codebook.csv")
    result.codebook.save_json(out / "codebook.json",
                              distortion=est.value, e_r=est.e_r,
                              iterations=result.iterations,
                              converged=result.converged)


def _run_zador_verify(cfg, out: Path, seed: int) -> None:
    spec = build_divergence(cfg)
    dist = build_distribution(cfg)
    r = float(cfg.get("r", 2))
    levels = [int(v) for v in _as_list(cfg.get("levels", [8, 16, 32, 64]))]
    theoretical = zd.zador_constant(spec, dist, r) if dist.density is not None else None
    exp = zd.rate_experiment(
        spec, dist, r, levels,
        restarts=int(cfg.get("restarts", 5)), seed=seed,
        mode=cfg.get("mode", "exact-1d"),
        n_train=int(cfg.get("n_train", 120_000)),
        n_mc=int(cfg.get("n_mc", 1_000_000)),
        theoretical=theoretical)
    _write_lines(out / "rates.csv", exp.csv_rows())
    summary = exp.summary_dict()
    if theoretical is not None and theoretical.warnings:
        summary["warnings"] = list(theoretical.warnings)
        print("warning: " + "; ".join(theoretical.warnings), file=sys.stderr)
    _write_json(out / "summary.json", summary)


def _run_identity_check(cfg, out: Path, seed: int) -> None:
    d = int(cfg.get("d", 2))
    n_samples = int(cfg.get("n_samples", 100_000))
    rng = ms.derive_rng(seed, 9)
    if "S" in cfg:
        S = np.array(cfg["S"], dtype=float)
    else:
        base = rng.standard_normal((d, d))
        S = base @ base.T + d * np.eye(d)
    cb = qt.Codebook(points=rng.random((int(cfg.get("n", 8)), d)),
                     divergence="mahalanobis", r=float(cfg.get("r", 2)))
    samples = rng.random((n_samples, d))
    transform = zd.mahalanobis_transform_check(S, cb, samples)
    A, B = float(cfg.get("A", 0.0)), float(cfg.get("B", 2.0))
    dilation = zd.dilation_check(S, A, B, cb, samples)
    _write_json(out / "identity.json", {
        "S": S.tolist(),
        "transform_max_rel_residual": transform.max_rel_residual,
        "transform_argmin_mismatches": transform.argmin_mismatches,
        "dilation_A": A,
        "dilation_B": B,
        "dilation_max_rel_residual": dilation.max_rel_residual,
        "dilation_argmin_mismatches": dilation.argmin_mismatches,
        "n_samples": n_samples,
    })


def _run_firewall_check(cfg, out: Path, seed: int) -> None:
    spec = build_divergence(cfg)
    cell = geo.cube(_as_list(cfg.get("cell_center", [0.5] * spec.domain.dimension)),
                    float(cfg.get("cell_half", 0.125)))
    varpi = float(cfg.get("varpi", 0.05))
    outer = (np.array(_as_list(cfg.get("outer_lo", 0.0)), dtype=float),
             np.array(_as_list(cfg.get("outer_hi", 1.0)), dtype=float))
    kwargs = dict(n_interior=int(cfg.get("n_interior", 10_000)),
                  n_boundary=int(cfg.get("n_boundary", 1_000)),
                  n_bulk=int(cfg.get("n_bulk", 4_000)), seed=seed)
    rho = cfg.get("rho", "auto")
    if rho == "auto":
        net, report = geo.auto_rho_firewall(cell, varpi, spec, outer, **kwargs)
    else:
        net = geo.boundary_net(geo.shrink_cube(cell, varpi), float(rho))
        report = geo.verify_firewall(net, cell, varpi, spec, outer, **kwargs)
    _write_json(out / "firewall.json", {
        "violations": report.violations,
        "worst_margin": report.worst_margin,
        "rho_used": report.rho_used,
        "nu": report.nu,
        "n_interior": report.n_interior,
        "n_exterior": report.n_exterior,
    })


def _run_pierce_check(cfg, out: Path, seed: int) -> None:
    spec = build_divergence(cfg)
    dist = build_distribution(cfg)
    levels = [int(v) for v in _as_list(cfg.get("levels", [8, 16, 32, 64, 128, 256]))]
    report = zd.pierce_check(dist, float(cfg.get("r", 2)), float(cfg.get("delta", 1.0)),
                             levels, spec, mode=cfg.get("mode", "mc"),
                             restarts=int(cfg.get("restarts", 3)), seed=seed,
                             n_train=int(cfg.get("n_train", 60_000)),
                             n_mc=int(cfg.get("n_mc", 200_000)))
    rows = ["n,e_rn,b_n"]
    rows += [f"{n},{e:.17g},{b:.17g}"
             for n, e, b in zip(report.levels, report.e_values, report.b_values)]
    _write_lines(out / "pierce.csv", rows)
    _write_json(out / "pierce.json", {
        "sigma": report.sigma.value,
        "sigma_divergent_flag": report.sigma.divergent,
        "bounded": report.bounded,
        "max_b": max(report.b_values),
        "median_b": float(np.median(report.b_values)),
    })


_HANDLERS = {
    "divergence-eval": _run_divergence_eval,
    "quantize": _run_quantize,
    "zador-verify": _run_zador_verify,
    "identity-check": _run_identity_check,
    "firewall-check": _run_firewall_check,
    "pierce-check": _run_pierce_check,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bregquant",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--out", default=None)
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(Path(args.config).read_text())
        if "subcommand" in cfg and cfg["subcommand"] != args.subcommand:
            raise ConfigError(f"config is for {cfg['subcommand']!r}, "
                              f"invoked as {args.subcommand!r}")
    except (OSError, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    if args.workers is not None:
        workers = args.workers
    else:
        workers = int(os.environ.get(WORKERS_ENV, cfg.get("workers", 1)))
    _ = workers            # accepted for the interface; execution is sequential
    out = Path(args.out if args.out is not None else cfg.get("out", "."))
    out.mkdir(parents=True, exist_ok=True)

    try:
        _HANDLERS[args.subcommand](cfg, out, seed)
    except (ConfigError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
