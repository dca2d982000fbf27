"""Experiment runner: single runs, sweeps, dataset campaigns, calibration.

Exit codes are a stable contract: 0 success, 1 usage or config error,
2 runtime failure. The TRACE_SIM_SEED environment variable overrides the
config file's rng_seed (an explicit --seed flag still wins).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import core, datagen, messaging, metrics

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

DEFAULT_TARGET_CONTACTS = 5.61
DEFAULT_CONTACT_TOLERANCE = 0.5
MAX_BISECTION_STEPS = 40
MAX_SCALE = 512.0


class _Parser(argparse.ArgumentParser):
    """Argparse with usage errors mapped onto exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _parse_seed_list(text):
    """Accept '0,1,5' or a range '0..11' (inclusive)."""
    if ".." in text:
        lo, hi = text.split("..")
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x.strip()]


def _load_config(args) -> core.SimConfig:
    cfg = core.load_config(args.config)
    env_seed = os.environ.get("TRACE_SIM_SEED")
    if env_seed is not None:
        cfg = cfg.replace(rng_seed=int(env_seed))
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(rng_seed=args.seed)
    if getattr(args, "policy", None):
        cfg = cfg.replace(policy=args.policy)
    if getattr(args, "predictor", None):
        cfg = cfg.replace(predictor=args.predictor)
    return cfg.validate()


def _sweep_worker(cfg_dict: dict) -> dict:
    """Run one sweep point and return its metrics row; never raises."""
    cfg = core.SimConfig.from_mapping(cfg_dict)
    try:
        trace = core.run(cfg)
        return metrics.metrics_row(trace, cfg.rng_seed)
    except Exception as exc:  # flagged row; the sweep continues
        return {
            "config_hash": metrics.config_hash(cfg.to_dict()),
            "seed": cfg.rng_seed,
            "policy": cfg.policy,
            "adoption": cfg.adoption_rate,
            "mobility_scale": cfg.global_mobility_scale,
            "contacts": "nan", "r": "nan", "cumulative_cases": 0,
            "false_quarantine": "nan",
            "status": f"error: {type(exc).__name__}: {exc}",
        }


def _run_sweep(cfg_points, jobs: int):
    cfg_dicts = [c.to_dict() for c in cfg_points]
    if jobs > 1 and len(cfg_dicts) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_worker, cfg_dicts))
    return [_sweep_worker(d) for d in cfg_dicts]


def _fast(cfg: core.SimConfig) -> core.SimConfig:
    """Metrics-only variant: skip the heavy per-agent recording."""
    return cfg.replace(record_observables=False, record_estimates=False,
                       record_encounter_log=False)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trace = core.run(cfg)
    trace.write(out / "trace.jsonl", out / "events.jsonl")
    row = metrics.metrics_row(trace, cfg.rng_seed)
    metrics.write_metrics_csv(out / "metrics.csv", [row])
    print(f"run {trace.run_id}: {len(trace.events)} cases, "
          f"contacts {row['contacts']}, R {row['r']}, "
          f"false quarantine {row['false_quarantine']}")
    print(f"wrote {out / 'trace.jsonl'}, {out / 'events.jsonl'}, {out / 'metrics.csv'}")
    return EXIT_OK


def cmd_pareto(args) -> int:
    cfg = _fast(_load_config(args))
    scales = args.scales
    seeds = args.seeds
    policies = args.policies.split(",") if args.policies else list(core.POLICIES)
    points = [cfg.replace(global_mobility_scale=sc, rng_seed=sd, policy=pol)
              for sc in scales for sd in seeds for pol in policies]
    rows = _run_sweep(points, args.jobs)
    metrics.write_metrics_csv(args.out, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def cmd_adoption(args) -> int:
    cfg = _fast(_load_config(args))
    adoptions = []
    for a in args.adoptions:
        if a in adoptions:
            print(f"warning: duplicate adoption {a} ignored", file=sys.stderr)
            continue
        adoptions.append(a)
    bad = [a for a in adoptions if not 0.0 <= a <= cfg.smartphone_rate]
    if bad:
        print(f"error: adoption rates {bad} outside [0, smartphone_rate="
              f"{cfg.smartphone_rate}]", file=sys.stderr)
        return EXIT_USAGE
    policies = args.policies.split(",") if args.policies else ["bct", "heuristic", "pct"]
    points = [cfg.replace(adoption_rate=a, rng_seed=sd, policy=pol)
              for a in adoptions for sd in args.seeds for pol in policies]
    rows = _run_sweep(points, args.jobs)
    metrics.write_metrics_csv(args.out, rows)
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


def cmd_datagen(args) -> int:
    base = _load_config(args)
    if base.policy == "no_tracing":
        base = base.replace(policy="pct", predictor="noisy_oracle")
    base = base.replace(record_observables=True)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(base.rng_seed)
    runs, rows = [], []
    for i in range(args.n_runs):
        cfg = datagen.sample_dr_config(base, rng)
        cfg = cfg.replace(rng_seed=int(rng.integers(0, 2**31)))
        entry = {"index": i, "seed": cfg.rng_seed,
                 "config_hash": metrics.config_hash(cfg.to_dict()),
                 "config": cfg.to_dict()}
        try:
            trace = core.run(cfg)
            records_file = f"{trace.run_id}.records.jsonl"
            n_records = datagen.export_training_records(trace, out / records_file)
            entry.update(run_id=trace.run_id, records_file=records_file,
                         n_records=n_records, status="ok")
            rows.append(metrics.metrics_row(trace, cfg.rng_seed))
            print(f"run {i + 1}/{args.n_runs}: {trace.run_id} "
                  f"({n_records} records)")
        except Exception as exc:
            entry.update(status=f"error: {type(exc).__name__}: {exc}")
            print(f"run {i + 1}/{args.n_runs} failed: {exc}", file=sys.stderr)
        runs.append(entry)
    ok_ids = [e["run_id"] for e in runs if e["status"] == "ok"]
    if len(ok_ids) >= 2:
        train, valid = datagen.make_split(ok_ids, seed=base.rng_seed)
    else:  # too few runs to split; keep the manifest useful anyway
        train, valid = ok_ids, []
    split = {"train": train, "valid": valid}
    (out / "split.json").write_text(json.dumps(split, indent=2, sort_keys=True))
    manifest = {
        "schema_version": datagen.RECORD_SCHEMA_VERSION,
        "master_seed": base.rng_seed,
        "base_config_hash": metrics.config_hash(base.to_dict()),
        "runs": runs,
        "split": split,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    metrics.write_metrics_csv(out / "metrics.csv", rows)
    print(f"wrote manifest for {len(ok_ids)}/{args.n_runs} runs to {out}")
    return EXIT_OK if ok_ids else EXIT_RUNTIME


def _nt_point(cfg: core.SimConfig, scale: float, seeds) -> tuple[float, float]:
    """Mean (contacts, R) for the no-tracing baseline at one scale."""
    contacts, rs = [], []
    for seed in seeds:
        trace = core.run(cfg.replace(global_mobility_scale=scale, rng_seed=seed))
        c, r = metrics.pareto_point(trace)
        contacts.append(c)
        rs.append(r)
    finite = [r for r in rs if not math.isnan(r)]
    return float(np.mean(contacts)), float(np.mean(finite)) if finite else math.nan


def calibrate(cfg: core.SimConfig, target_contacts: float, seeds,
              tolerance: float = DEFAULT_CONTACT_TOLERANCE, log=print) -> dict:
    """Find the mobility scale hitting the target contacts, then thresholds.

    Bisection over global_mobility_scale drives the no-tracing mean
    effective contacts to within the tolerance of the target; risk
    thresholds are then calibrated on the positive predictions emitted by
    a noisy-oracle run at the found scale.

    Raises RuntimeError when the search cannot bracket the target, with
    the achieved contact range in the message.
    """
    nt = _fast(cfg).replace(policy="no_tracing")
    lo, c_lo = 0.0, 0.0
    hi = 1.0
    c_hi, r_hi = _nt_point(nt, hi, seeds)
    log(f"scale {hi:.4f}: contacts {c_hi:.3f}")
    while c_hi < target_contacts and hi < MAX_SCALE:
        lo, c_lo = hi, c_hi
        hi *= 2.0
        c_hi, r_hi = _nt_point(nt, hi, seeds)
        log(f"scale {hi:.4f}: contacts {c_hi:.3f}")
    if c_hi < target_contacts:
        raise RuntimeError(
            f"calibration failed to bracket target {target_contacts}: achieved "
            f"contacts range [{c_lo:.3f}, {c_hi:.3f}] over scales [{lo}, {hi}]")
    best_scale, best_contacts, best_r = hi, c_hi, r_hi
    for _ in range(MAX_BISECTION_STEPS):
        # refine well inside the tolerance so downstream comparisons run
        # near the target, not at its edge
        if abs(best_contacts - target_contacts) <= 0.2 * tolerance:
            break
        mid = 0.5 * (lo + hi)
        c_mid, r_mid = _nt_point(nt, mid, seeds)
        log(f"scale {mid:.4f}: contacts {c_mid:.3f}")
        if abs(c_mid - target_contacts) < abs(best_contacts - target_contacts):
            best_scale, best_contacts, best_r = mid, c_mid, r_mid
        if c_mid < target_contacts:
            lo = mid
        else:
            hi = mid
    if abs(best_contacts - target_contacts) > tolerance:
        raise RuntimeError(
            f"calibration did not converge: best contacts {best_contacts:.3f} at "
            f"scale {best_scale:.4f}, target {target_contacts} +- {tolerance}")

    traffic_cfg = cfg.replace(policy="pct", predictor="noisy_oracle",
                              global_mobility_scale=best_scale,
                              rng_seed=seeds[0], record_observables=False,
                              record_estimates=True, record_encounter_log=False)
    trace = core.run(traffic_cfg)
    samples = trace.yhat_hist[trace.app_ids].ravel()
    samples = samples[samples > 0.0]
    thresholds = messaging.calibrate_thresholds(samples.astype(np.float64))
    return {
        "mobility_scale": best_scale,
        "achieved_contacts": best_contacts,
        "mean_r": best_r,
        "target_contacts": target_contacts,
        "tolerance": tolerance,
        "seeds": list(seeds),
        "config_hash": metrics.config_hash(cfg.to_dict()),
        "thresholds": [float(t) for t in thresholds],
    }


def cmd_calibrate(args) -> int:
    cfg = _load_config(args)
    seeds = args.seeds if args.seeds else [cfg.rng_seed + i for i in range(8)]
    result = calibrate(cfg, args.target_contacts, seeds, args.tolerance)
    Path(args.out).write_text(json.dumps(result, indent=2, sort_keys=True))
    print(f"calibrated mobility scale {result['mobility_scale']:.4f}: "
          f"contacts {result['achieved_contacts']:.3f} "
          f"(target {args.target_contacts} +- {args.tolerance}), "
          f"mean R {result['mean_r']:.3f} (reference {args.target_r})")
    print(f"wrote {args.out}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="pctsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, seeds_default=None):
        p.add_argument("--config", required=True, help="config file (YAML or JSON)")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="max concurrent runs (default: available parallelism)")
        p.add_argument("--policy", dest="policy", default=None,
                       help="override the config policy")
        p.add_argument("--predictor", dest="predictor", default=None,
                       help="override the config predictor")
        if seeds_default is not None:
            p.add_argument("--seeds", type=_parse_seed_list, default=seeds_default,
                           help="seed list '0,1,2' or range '0..11'")

    p = sub.add_parser("run", help="single run: trace, events, metrics")
    add_common(p)
    p.add_argument("--seed", type=int, default=None, help="override rng_seed")
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("pareto", help="mobility-scale sweep to CSV")
    add_common(p, seeds_default=list(range(12)))
    p.add_argument("--scales", type=_parse_float_list, required=True,
                   help="comma-separated mobility scales")
    p.add_argument("--policies", default=None,
                   help="comma-separated policies (default: all)")
    p.add_argument("--out", default="pareto.csv", help="output CSV path")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("adoption", help="adoption-rate sweep to CSV")
    add_common(p, seeds_default=list(range(12)))
    p.add_argument("--adoptions", type=_parse_float_list, required=True,
                   help="comma-separated adoption rates")
    p.add_argument("--policies", default=None,
                   help="comma-separated policies (default: bct,heuristic,pct)")
    p.add_argument("--out", default="adoption.csv", help="output CSV path")
    p.set_defaults(func=cmd_adoption)

    p = sub.add_parser("datagen", help="domain-randomized dataset campaign")
    add_common(p)
    p.add_argument("--n-runs", type=int, default=6, help="number of runs")
    p.add_argument("--out", default="dataset", help="output directory")
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("calibrate", help="fit mobility scale and risk thresholds")
    add_common(p, seeds_default=None)
    p.add_argument("--seeds", type=_parse_seed_list, default=None,
                   help="seed list (default: 8 seeds from the config seed)")
    p.add_argument("--target-contacts", type=float, default=DEFAULT_TARGET_CONTACTS,
                   help="target mean effective contacts per agent-day")
    p.add_argument("--target-r", type=float, default=1.2,
                   help="reference R reported alongside the result")
    p.add_argument("--tolerance", type=float, default=DEFAULT_CONTACT_TOLERANCE,
                   help="acceptable contacts deviation")
    p.add_argument("--out", default="calibration.json", help="output JSON path")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (core.ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
