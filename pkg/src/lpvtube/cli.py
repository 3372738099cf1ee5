"""Command-line entry point.

Subcommands::

    lpvtube synthesize --config cfg.yaml --out artifact.json
    lpvtube simulate   --config cfg.yaml --artifact artifact.json --out run.csv
    lpvtube validate   --artifact artifact.json -n 10000
    lpvtube metrics    --csv run.csv

Exit codes: 0 success, 1 infeasible problem or constraint/invariance
violation, 2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from .artifact import ArtifactError, load_artifact, save_artifact
from .config import ConfigError, load_config
from .synthesis import (RpiError, SynthesisError, closed_loop_vertices, compute_rpi,
                        lyapunov_decrease, synthesize_gains, validate_invariance)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


class UsageError(Exception):
    """Bad arguments, unreadable inputs or unwritable outputs (exit 2)."""


def _say(args, *msg):
    if not args.quiet:
        print(*msg, file=sys.stderr)


def _emit(obj):
    print(json.dumps(obj, indent=1, default=_jsonable))


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"not serializable: {type(v)}")


def _clean(v):
    # JSON has no nan/inf
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _check_out(path) -> Path:
    path = Path(path)
    if not path.parent.exists():
        raise UsageError(f"output directory {path.parent} does not exist")
    if path.is_dir():
        raise UsageError(f"output path {path} is a directory")
    return path


def _check_in(path, what) -> Path:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{what} {path} not found")
    return path


def _config(args):
    if args.config is not None:
        _check_in(args.config, "config file")
    try:
        return load_config(args.config)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def _overrides(cfg, args):
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "steps", None) is not None:
        if args.steps < 0:
            raise UsageError("--steps must be non-negative")
        changes["steps"] = args.steps
    if getattr(args, "delta_mode", None) is not None:
        changes["delta_mode"] = args.delta_mode
    if getattr(args, "tighten_w", None) is not None:
        changes["tighten_w"] = args.tighten_w == "on"
    if getattr(args, "disturbance", None) is not None:
        changes["disturbance"] = args.disturbance
    if getattr(args, "delta_unc", None) is not None:
        if args.delta_unc < 0:
            raise UsageError("--delta-unc must be non-negative")
        changes["mpc"] = dataclasses.replace(cfg.mpc, delta_unc=args.delta_unc)
    try:
        return cfg.replace(**changes) if changes else cfg
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def _artifact(args, model):
    path = _check_in(args.artifact, "artifact")
    try:
        return load_artifact(path, model, with_metadata=True)
    except ArtifactError as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# subcommands

def cmd_synthesize(args) -> int:
    cfg = _config(args)
    out = _check_out(args.out)
    model = cfg.lateral_model()
    syn = cfg.synthesis
    t0 = time.perf_counter()
    try:
        _say(args, "solving the gain-scheduling LMI ...")
        gains = synthesize_gains(model, syn.Q_syn * np.eye(model.nx), syn.R_syn)
        t1 = time.perf_counter()
        _say(args, f"  margin {gains.lmi_margin:.3e} ({t1 - t0:.1f} s)")
        _say(args, "computing the robust invariant set ...")
        S = compute_rpi(model, gains, max_iter=syn.max_iter)
    except SynthesisError as exc:
        print(f"error: synthesis failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except RpiError as exc:
        print(f"error: invariant set computation failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    t2 = time.perf_counter()
    rho = [float(max(abs(np.linalg.eigvals(A)))) for A in closed_loop_vertices(model, gains)]
    diag = {
        "lmi_seconds": round(t1 - t0, 3),
        "rpi_seconds": round(t2 - t1, 3),
        "spectral_radii": rho,
        "lyapunov_decrease_max": float(lyapunov_decrease(model, gains).max()),
        "n_vertices": S.n_vertices,
        "n_facets": S.H.n_rows,
        "Q_syn": syn.Q_syn,
        "R_syn": syn.R_syn,
    }
    save_artifact(out, model, gains, S, diag)
    _say(args, f"  {S.n_vertices} vertices, {S.H.n_rows} facets after "
               f"{S.iterations_used} iterations ({t2 - t1:.1f} s)")
    _emit({"artifact": str(out), **diag})
    return EXIT_OK


def _run_one(cfg, gains, S, model, out, args):
    from .simulation import compute_metrics, run_scenario

    def progress(k, row):
        if not args.quiet and (k + 1) % 10 == 0:
            print(f"  step {k + 1}/{cfg.steps}  e_y {row['e_y']:+.3f}  v {row['v']:.2f}",
                  file=sys.stderr)

    log = run_scenario(cfg, gains, S, model, progress=progress)
    log.to_csv(out)
    if len(log) == 0:
        return {"csv": str(out), "steps": 0}, True
    met = compute_metrics(log, model)
    ok = met["infeasible_steps"] == 0 and met["constraint_violations"] == 0
    return {"csv": str(out), "seed": cfg.seed, **{k: _clean(v) for k, v in met.items()}}, ok


def cmd_simulate(args) -> int:
    cfg = _overrides(_config(args), args)
    out = _check_out(args.out)
    model = cfg.lateral_model()
    gains, S, _ = _artifact(args, model)
    if args.seeds < 1:
        raise UsageError("--seeds must be at least 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    results, all_ok = [], True
    if args.seeds == 1:
        _say(args, f"simulating seed {cfg.seed}, {cfg.steps} steps -> {out}")
        res, ok = _run_one(cfg, gains, S, model, out, args)
        results.append(res)
        all_ok &= ok
    else:
        from .simulation import compute_metrics, run_batch
        seeds = range(cfg.seed, cfg.seed + args.seeds)
        _say(args, f"simulating {args.seeds} seeds with {args.jobs} worker(s)")
        for seed, log in zip(seeds, run_batch(cfg, gains, S, seeds, model, jobs=args.jobs)):
            path = out.with_name(f"{out.stem}_seed{seed}{out.suffix}")
            log.to_csv(path)
            met = compute_metrics(log, model) if len(log) else {}
            ok = not met or (met["infeasible_steps"] == 0 and met["constraint_violations"] == 0)
            results.append({"csv": str(path), "seed": seed,
                            **{k: _clean(v) for k, v in met.items()}})
            all_ok &= ok
    _emit(results[0] if len(results) == 1 else results)
    return EXIT_OK if all_ok else EXIT_FAIL


def cmd_validate(args) -> int:
    if args.n < 0:
        raise UsageError("-n must be non-negative")
    cfg = _config(args)
    model = cfg.lateral_model()
    gains, S, _ = _artifact(args, model)
    if args.n == 0:
        _emit({"samples": 0, "violations": 0, "passed": True})
        return EXIT_OK
    rep = validate_invariance(S, model, gains, n_samples=args.n, seed=args.seed)
    _emit({"samples": rep.n_samples, "violations": rep.violations,
           "worst_margin": rep.worst_margin, "vertex_worst_margin": rep.vertex_worst_margin,
           "passed": rep.passed, "counterexamples": rep.counterexamples})
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_metrics(args) -> int:
    from .simulation import compute_metrics, read_csv
    path = _check_in(args.csv, "log file")
    cfg = _config(args)
    try:
        log = read_csv(path)
    except (OSError, StopIteration, KeyError, ValueError) as exc:
        raise UsageError(f"cannot read log {path}: {exc}") from exc
    if len(log) == 0:
        raise UsageError(f"log {path} has no rows")
    try:
        met = compute_metrics(log, cfg.lateral_model())
    except KeyError as exc:
        raise UsageError(f"log {path} misses column {exc}") from exc
    _emit({k: _clean(v) for k, v in met.items()})
    ok = met["infeasible_steps"] == 0 and met["constraint_violations"] == 0
    return EXIT_OK if ok else EXIT_FAIL


# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lpvtube", description="Tube LPV-MPC lane keeping: synthesis and simulation")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="YAML configuration (default: shipped defaults)")
        sp.add_argument("--quiet", action="store_true", help="no progress output")

    s = sub.add_parser("synthesize", help="offline gain and invariant set synthesis")
    common(s)
    s.add_argument("--out", required=True, help="artifact file to write")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("simulate", help="closed-loop simulation, writes a CSV log")
    common(s)
    s.add_argument("--artifact", required=True)
    s.add_argument("--out", required=True, help="CSV file to write")
    s.add_argument("--seed", type=int)
    s.add_argument("--seeds", type=int, default=1,
                   help="run this many consecutive seeds (one CSV each)")
    s.add_argument("--jobs", type=int, default=1, help="worker processes for --seeds")
    s.add_argument("--steps", type=int)
    s.add_argument("--delta-mode", choices=("relative", "additive"))
    s.add_argument("--delta-unc", type=float, help="scheduling uncertainty (0 freezes p)")
    s.add_argument("--tighten-w", choices=("on", "off"))
    s.add_argument("--disturbance", choices=("uniform", "vertex", "off"))
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("validate", help="Monte-Carlo invariance check of an artifact")
    common(s)
    s.add_argument("--artifact", required=True)
    s.add_argument("-n", type=int, default=10000, help="number of samples (0 skips)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("metrics", help="summary metrics of a CSV log")
    common(s)
    s.add_argument("--csv", required=True)
    s.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
