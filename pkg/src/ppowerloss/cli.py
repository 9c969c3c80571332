"""Command-line front end.

Every command resolves its configuration (JSON file plus flag overrides)
before touching the output directory, writes its tables into a staging
directory and moves them into place together with manifest.json only after
the whole computation succeeded.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 invariant violation.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, parse_list
from .edgeworth import check_B2
from .errors import ConfigError, InvariantViolation, ModelError, QuadratureError
from .experiments import (STATISTIC_KINDS, TEST_KINDS, edgeworth_validation, exact_edgeworth_distance,
                          paired_power_loss, power_table, records_csv, size_table)
from .inference import alternative_quantities, score_threshold_second, score_threshold_third
from .intensity import validate_envelopes
from .moments import check_B1, check_D3, core_quantities, power_loss_limit
from .sampler import GENERATOR, GENERATOR_VERSION, SeedSpec, realization_csv, sample

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_INVARIANT = 0, 2, 3, 4
CSV_SCHEMA_VERSION = "1"


def _json_dump(obj) -> str:
    def default(o):
        if isinstance(o, (np.floating, np.integer)):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, tuple):
            return list(o)
        raise TypeError(f"not JSON serializable: {type(o)}")

    return json.dumps(obj, indent=2, sort_keys=True, default=default, allow_nan=True) + "\n"


# ------------------------------------------------------------------ commands
def _diagnostic_n_list(cfg: RunConfig) -> list:
    if len(cfg.n_list) >= 3:
        return list(cfg.n_list)
    n = cfg.n_list[0]
    return [n, 4.0 * n, 16.0 * n]


def cmd_quantities(cfg: RunConfig) -> dict:
    """Fisher information, cumulants, J_n, thresholds and regularity diagnostics."""
    model = cfg.model_at()
    core = core_quantities(model, tol=cfg.quad_tol)
    us = [u for u in cfg.u if u > 0]
    b1 = check_B1(model, _diagnostic_n_list(cfg), tol=cfg.quad_tol)
    d3 = check_D3(model, _diagnostic_n_list(cfg), tol=cfg.quad_tol)
    b2 = check_B2(model, tol=cfg.quad_tol)
    out = {
        "n": model.n,
        "fisher_information": core.fisher,
        "phi_n": core.phi_n,
        "eps_n": core.eps_n,
        "gamma3": core.gamma3,
        "gamma4": core.gamma4,
        "j_n": core.j_n,
        "loss_scale": core.loss_limit_scale,
        "alpha": cfg.alpha,
        "threshold_second": score_threshold_second(cfg.alpha, core),
        "threshold_third": score_threshold_third(cfg.alpha, core),
        "r_u": [{"u": u, "r": power_loss_limit(model, u, cfg.alpha, core)} for u in us],
        "b_n_u": [{"u": u, "b_n": alternative_quantities(model, u, cfg.alpha, core=core, tol=cfg.quad_tol).b_n}
                  for u in us],
        "B1": {"n_list": b1.n_list, "constants": {str(k): v for k, v in b1.constants.items()},
               "slopes": {str(k): v for k, v in b1.slopes.items()}},
        "B2": {"inf_value": b2.inf_value, "bound": b2.bound, "ok": b2.ok, "t_at_inf": b2.t_at_inf,
               "c0": b2.c0},
        "D3": {"n_list": d3.n_list, "bounded": d3.bounded, "growth": d3.growth},
    }
    return {"quantities.json": _json_dump(out)}


def cmd_sample(cfg: RunConfig) -> dict:
    """Write reps realizations of the process as CSV files."""
    model = cfg.model_at()
    theta = float(cfg.options.get("theta", model.theta0))
    files = {}
    width = max(1, len(str(cfg.reps - 1)))
    for i in range(cfg.reps):
        real = sample(model, theta, SeedSpec(cfg.master_seed, i))
        files[f"realization_{i:0{width}d}.csv"] = realization_csv(real)
    return files


def cmd_size(cfg: RunConfig) -> dict:
    """Monte Carlo size of the score test under theta0."""
    model = cfg.model_at()
    kinds = cfg.options.get("thresholds", ["score2", "score3"])
    rows = size_table(model, [cfg.alpha], kinds, cfg.reps, SeedSpec(cfg.master_seed), cfg.threads)
    return {"size.csv": records_csv(rows)}


def cmd_power(cfg: RunConfig) -> dict:
    """Monte Carlo power of the score and Neyman-Pearson tests at each u."""
    model = cfg.model_at()
    kinds = cfg.options.get("tests", list(TEST_KINDS))
    rows = []
    for u in cfg.u:
        use = [k for k in kinds if u > 0 or not k.startswith("np")]
        rows.extend(power_table(model, u, cfg.alpha, use, cfg.reps, SeedSpec(cfg.master_seed), cfg.threads))
    return {"power.csv": records_csv(rows)}


def cmd_power_loss(cfg: RunConfig) -> dict:
    """Paired power-loss estimates over the n list."""
    model = cfg.model_at()
    rows = []
    for u in cfg.u:
        rows.extend(paired_power_loss(model, u, cfg.alpha, cfg.n_list, cfg.reps, SeedSpec(cfg.master_seed),
                                      cfg.threads))
    return {"power_loss.csv": records_csv(rows)}


def cmd_edgeworth_check(cfg: RunConfig) -> dict:
    """Sup-distance between empirical CDFs and their Edgeworth expansions."""
    model = cfg.model_at()
    kinds = cfg.options.get("statistics", list(STATISTIC_KINDS))
    u = next((v for v in cfg.u if v > 0), 1.0)
    rows = [edgeworth_validation(model, u, kind, cfg.reps, SeedSpec(cfg.master_seed), workers=cfg.threads)
            for kind in kinds]
    files = {"edgeworth.csv": records_csv(rows)}
    if model.family == "homogeneous":
        dist, y = exact_edgeworth_distance(model)
        files["edgeworth_exact.json"] = _json_dump({"sup_distance": dist, "y_at_sup": y})
    return files


def cmd_validate_conditions(cfg: RunConfig) -> dict:
    """Envelope, cumulant-order, characteristic-function and growth checks."""
    model = cfg.model_at()
    env = validate_envelopes(model)
    n_list = _diagnostic_n_list(cfg)
    b1 = check_B1(model, n_list, tol=cfg.quad_tol)
    b2 = check_B2(model, tol=cfg.quad_tol)
    d3 = check_D3(model, n_list, tol=cfg.quad_tol)
    out = {
        "envelopes": {"ok": env.ok, "worst_violation": env.worst_violation},
        "B1": {"n_list": b1.n_list, "constants": {str(k): v for k, v in b1.constants.items()},
               "slopes": {str(k): v for k, v in b1.slopes.items()}},
        "B2": {"inf_value": b2.inf_value, "bound": b2.bound, "ok": b2.ok, "t_at_inf": b2.t_at_inf, "c0": b2.c0},
        "D3": {"n_list": d3.n_list, "bounded": d3.bounded, "growth": d3.growth,
               "ratios": d3.ratios},
    }
    return {"conditions.json": _json_dump(out)}


COMMANDS = {
    "quantities": cmd_quantities,
    "sample": cmd_sample,
    "size": cmd_size,
    "power": cmd_power,
    "power-loss": cmd_power_loss,
    "edgeworth-check": cmd_edgeworth_check,
    "validate-conditions": cmd_validate_conditions,
}


# ------------------------------------------------------------------ plumbing
def _sha256(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _manifest(command: str, cfg: RunConfig, files: dict, elapsed: float) -> str:
    resolved = cfg.to_json()
    config_text = json.dumps(resolved, sort_keys=True, default=list)
    return _json_dump({
        "command": command,
        "config": resolved,
        "config_sha256": _sha256(config_text),
        "master_seed": cfg.master_seed,
        "code_version": __version__,
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "generator": GENERATOR,
        "generator_version": GENERATOR_VERSION,
        "files": {name: _sha256(text) for name, text in sorted(files.items())},
        "timings": {"elapsed_seconds": elapsed},
    })


def _publish(files: dict, manifest: str, out_dir: Path):
    """Write everything to a staging directory, then move it into out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".staging-", dir=out_dir))
    try:
        for name, text in files.items():
            (staging / name).write_text(text)
        (staging / "manifest.json").write_text(manifest)
        for path in staging.iterdir():
            path.replace(out_dir / path.name)
    finally:
        shutil.rmtree(staging, ignore_errors=True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
    common.add_argument("--reps", type=int, help="Monte Carlo replications")
    common.add_argument("--n", help="window length(s), comma-separated")
    common.add_argument("--u", help="local alternative(s), comma-separated")
    common.add_argument("--alpha", type=float, help="test level")
    common.add_argument("--out", help="output directory")
    common.add_argument("--quad-tol", type=float, help="relative quadrature tolerance")
    common.add_argument("--threads", type=int, help="worker processes for Monte Carlo")
    parser = argparse.ArgumentParser(prog="ppowerloss", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=(func.__doc__ or name).splitlines()[0])
    return parser


def _overrides(args) -> dict:
    out = {"master_seed": args.seed, "reps": args.reps, "alpha": args.alpha, "output_dir": args.out,
           "quad_tol": args.quad_tol, "threads": args.threads}
    if args.n is not None:
        out["n"] = parse_list(args.n, "n")
    if args.u is not None:
        out["u"] = parse_list(args.u, "u")
    return out


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = load_config(args.config, _overrides(args))
    except (ConfigError, ModelError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    start = time.perf_counter()
    try:
        files = COMMANDS[args.command](cfg)
    except (ConfigError, ModelError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (QuadratureError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    elapsed = time.perf_counter() - start
    _publish(files, _manifest(args.command, cfg, files, elapsed), Path(cfg.output_dir))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
