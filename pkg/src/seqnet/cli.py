"""Command-line entry point: ``seqnet <command> --config cfg.json``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import math
import platform
import sys
import time
import warnings
from importlib import metadata
from pathlib import Path

import numpy as np

from . import analytics
from .config import ConfigError, canonical_json, config_digest, load_config_file, parse_config, resolve_seed
from .consensus_weights import default_t0, validate_condition1
from .montecarlo import ExperimentConfig, rows_to_csv, rows_to_json, run_experiment
from .topology import delay_matrix

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

# Published network and model settings; thresholds, trials and seed are run choices.
RECIPES = {
    "fig-12-2": {
        "topology": {"kind": "ring", "n": 12, "m": 2},
        "model": {"family": "gaussian", "mu": 0.3},
        "detectors": ["cs", "sd", {"detector": "ca", "q": 1}, "local"],
        "b_values": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        "t0": 10,
    },
    "fig-20-2": {
        "topology": {"kind": "ring", "n": 20, "m": 2},
        "model": {"family": "gaussian", "mu": 0.3},
        "detectors": ["cs", "sd", {"detector": "ca", "q": 1}, {"detector": "ca", "q": 2}, "local"],
        "b_values": [0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4],
    },
    "fig-26-2": {
        "topology": {"kind": "ring", "n": 26, "m": 2},
        "model": {"family": "laplace", "mu": 0.2},
        "detectors": ["cs", "sd", {"detector": "ca", "q": 1}, {"detector": "ca", "q": 2},
                      {"detector": "ca", "q": 3}, "local"],
        "b_values": [0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
    },
}


def package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def _effective_raw(raw: dict, args) -> dict:
    """Config as actually run: CLI overrides folded in, seed made explicit."""
    eff = copy.deepcopy(raw)
    eff["seed"] = resolve_seed(raw, getattr(args, "seed", None))
    if getattr(args, "trials", None) is not None:
        eff["trials"] = args.trials
    return eff


def _load(args) -> tuple[dict, ExperimentConfig]:
    if getattr(args, "recipe", None):
        raw = copy.deepcopy(RECIPES[args.recipe])
    else:
        if not args.config:
            raise ConfigError("--config", "a config file is required")
        raw = load_config_file(args.config)
    eff = _effective_raw(raw, args)
    return eff, parse_config(eff)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, eff: dict, cfg: ExperimentConfig, started: float,
                    outputs: list[Path]) -> dict:
    manifest = {
        "command": command,
        "config_digest": config_digest(eff),
        "config": json.loads(canonical_json(eff)),
        "seed": cfg.master_seed,
        "trials": cfg.trials,
        "version": package_version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "started_unix": started,
        "finished_unix": time.time(),
        "outputs": [{"path": str(p), "sha256": _sha256(p)} for p in outputs],
    }
    manifest["wall_seconds"] = manifest["finished_unix"] - started
    path = out.with_name(out.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def _emit(text: str, out: str | None) -> Path | None:
    if out is None:
        sys.stdout.write(text)
        return None
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


def _reference_columns(cfg: ExperimentConfig, rows) -> list[dict]:
    """Closed-form companions for each simulated row."""
    k = cfg.n_sensors
    d1 = float(np.sum(cfg.models.klds(1)))
    weights = None
    if any(d.name == "ca" for d in cfg.detectors) and k > 1:
        weights = cfg.weight_matrix()
    extra = []
    for r in rows:
        b_sum = r.b * k if cfg.threshold_units == "average" else r.b
        rec = {
            "ref_exp_neg_kb": math.exp(-b_sum),
            "ref_cs_et1": b_sum / d1,
            "ref_prior_alpha_bound": None,
            "ref_ca_et1_center": None,
        }
        if r.detector == "ca" and weights is not None and 0.0 < weights.sigma2 < 1.0:
            rec["ref_ca_et1_center"] = b_sum / d1
            if r.q == 1 and cfg.models.is_homogeneous:
                bound = analytics.sahu_alpha_bound(k, weights.sigma2, b_sum / k, cfg.models.klds(1))
                rec["ref_prior_alpha_bound"] = min(1.0, bound)
        extra.append(rec)
    return extra


def _run_and_write(command: str, args, eff: dict, cfg: ExperimentConfig) -> int:
    started = time.time()
    result = run_experiment(cfg, workers=args.workers)
    extra = _reference_columns(cfg, result.rows)
    csv_text = rows_to_csv(result.rows, extra)
    path = _emit(csv_text, args.out)
    if path is not None:
        json_path = path.with_suffix(".json")
        json_path.write_text(rows_to_json(result.rows, extra) + "\n")
        manifest = _write_manifest(path, command, eff, cfg, started, [path, json_path])
        print(f"wrote {path} ({len(result.rows)} rows), digest {manifest['config_digest'][:12]}",
              file=sys.stderr)
    for r in result.rows:
        if "all-censored" in r.flags:
            print(f"warning: {r.detector} sensor {r.sensor} never stopped within max_steps", file=sys.stderr)
    return EXIT_OK


def cmd_validate_weights(args) -> int:
    eff, cfg = _load(args)
    k = cfg.n_sensors
    report = {
        "n_sensors": k,
        "degrees": [int(d) for d in cfg.topology.degrees],
    }
    ok = True
    if k > 1:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            wm = cfg.weight_matrix()
        spectral = validate_condition1(wm.w)
        report.update(spectral.to_dict())
        report["delta"] = wm.delta
        report["warnings"] = list(report.get("warnings", [])) + [str(c.message) for c in caught]
        ok = spectral.condition1_ok
        print(f"sigma2 = {spectral.sigma2:.4f}", file=sys.stderr)
    margins = [m.condition2_log_margin(k) for m in cfg.models.models]
    report["condition2_log_margin"] = margins if not cfg.models.is_homogeneous else margins[0]
    report["condition2_ok"] = bool(all(math.isfinite(m) for m in margins))
    report["ok"] = bool(ok and report["condition2_ok"])
    _emit(json.dumps(report, indent=2, default=float) + "\n", args.out)
    if not report["ok"]:
        print("weight matrix fails the consensus convergence condition", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_sweep(args) -> int:
    eff, cfg = _load(args)
    return _run_and_write("sweep", args, eff, cfg)


def cmd_reproduce(args) -> int:
    eff, cfg = _load(args)
    return _run_and_write(f"reproduce {args.recipe}", args, eff, cfg)


def _ca_q(cfg: ExperimentConfig) -> int:
    qs = [d.q for d in cfg.detectors if d.name == "ca"]
    return qs[0] if qs else 1


def _constants(cfg: ExperimentConfig, q: int) -> list[analytics.RefinedConstants]:
    wm = cfg.weight_matrix()
    t0 = cfg.t0 if cfg.t0 is not None else default_t0(wm.sigma2, q)
    sensors = [cfg.sensor] if cfg.sensor is not None else range(cfg.n_sensors)
    return [analytics.refined_constants(wm, q, t0, cfg.models, s, cfg.mc_samples, seed=cfg.master_seed)
            for s in sensors]


def cmd_constants(args) -> int:
    eff, cfg = _load(args)
    q = _ca_q(cfg)
    consts = _constants(cfg, q)
    out = {"q": q, "constants": [c.to_dict() for c in consts]}
    if cfg.targets is not None:
        targets = analytics.ErrorTargets(*cfg.targets)
        out["thresholds"] = [
            {"sensor": c.sensor, **vars(analytics.ca_thresholds(targets, c, cfg.n_sensors))} for c in consts
        ]
    _emit(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def cmd_operating_point(args) -> int:
    """Simulate each detector at the thresholds its theory assigns to the error targets."""
    eff, cfg = _load(args)
    if cfg.targets is None:
        raise ConfigError("targets", "operating-point needs targets {alpha, beta}")
    targets = analytics.ErrorTargets(*cfg.targets)
    k = cfg.n_sensors
    started = time.time()
    rows, extra = [], []
    for det in cfg.detectors:
        if det.name == "ca":
            sensor = cfg.sensor if cfg.sensor is not None else 0
            sub = ExperimentConfig(**{**cfg.__dict__, "sensor": sensor})
            c = _constants(sub, det.q)[0]
            th_avg = analytics.ca_thresholds(targets, c, k)
        else:
            th_avg = analytics.simple_thresholds(targets).scaled(1.0 / k)
        one = ExperimentConfig(**{**cfg.__dict__, "detectors": (det,), "thresholds": (th_avg,),
                                  "threshold_units": "average"})
        res = run_experiment(one, workers=args.workers)
        rows.extend(res.rows)
        extra.extend({"target_alpha": targets.alpha, "target_beta": targets.beta} for _ in res.rows)
    path = _emit(rows_to_csv(rows, extra), args.out)
    if path is not None:
        json_path = path.with_suffix(".json")
        json_path.write_text(rows_to_json(rows, extra) + "\n")
        _write_manifest(path, "operating-point", eff, cfg, started, [path, json_path])
    return EXIT_OK


def cmd_predict(args) -> int:
    eff, cfg = _load(args)
    k = cfg.n_sensors
    nu = delay_matrix(cfg.topology)
    wm = cfg.weight_matrix() if k > 1 else None
    out = []
    for th in cfg.thresholds:
        th_avg = th if cfg.threshold_units == "average" else th.scaled(1.0 / k)
        for q in sorted({d.q for d in cfg.detectors if d.name == "ca"} or {1}):
            if wm is None:
                out.append({"a": th_avg.a, "b": th_avg.b, "q": q})
                continue
            out.append(analytics.predictions(cfg.topology, cfg.models, wm, th_avg, q, nu))
    if cfg.targets is not None:
        targets = analytics.ErrorTargets(*cfg.targets)
        et1, et0 = analytics.centralized_asymptotic_et(cfg.models, targets)
        out.append({"targets": list(cfg.targets), "cs_et1": et1, "cs_et0": et0,
                    "local_et1": [analytics.local_asymptotic_et(cfg.topology, cfg.models, targets, j)[0]
                                  for j in range(k)]})
    _emit(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seqnet", description="Distributed sequential test simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {package_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, simulate=False):
        if config:
            p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--out", help="output path (stdout when omitted)")
        p.add_argument("--seed", type=int, help="master seed (overrides config and SEQNET_SEED)")
        if simulate:
            p.add_argument("--trials", type=int, help="Monte Carlo trials per cell")
            p.add_argument("--workers", type=int, default=1, help="worker processes")

    handlers = {
        "validate-weights": (cmd_validate_weights, "check the weight matrix and model moments", False),
        "sweep": (cmd_sweep, "simulate every configured threshold and detector", True),
        "operating-point": (cmd_operating_point, "simulate at thresholds derived from error targets", True),
        "constants": (cmd_constants, "estimate refined consensus error constants", False),
        "predict": (cmd_predict, "closed-form predictions", False),
    }
    for name, (fn, help_text, simulate) in handlers.items():
        p = sub.add_parser(name, help=help_text)
        common(p, simulate=simulate)
        p.set_defaults(func=fn)
    p = sub.add_parser("reproduce", help="run a built-in figure recipe")
    p.add_argument("recipe", choices=sorted(RECIPES))
    common(p, config=False, simulate=True)
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "trials", None) is not None and args.trials < 1:
        print("error: --trials must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surface any failure as a runtime error code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
