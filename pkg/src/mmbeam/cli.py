"""Command-line entry point: sweeps, asymptotic validation and GEE optimization."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiments as ex
from .beamformers import Architecture, InfeasibleError
from .optimize import RatioProgram, alternating_gee_max, dinkelbach_max

SWEEPS = {
    # subcommand: (axis, default fixed dimensions, default values)
    "sweep-nt": ("n_t", dict(n_r=30, p_t_dbw=0.0), [16, 32, 64, 128, 256]),
    "sweep-nr": ("n_r", dict(n_t=50, p_t_dbw=0.0), [4, 8, 16, 32, 64]),
    "sweep-pt": ("p_t", dict(n_t=100, n_r=30), [-30, -25, -20, -15, -10, -5, 0, 5, 10]),
}


def _numbers(text: str) -> list:
    vals = [float(v) for v in text.replace(",", " ").split()]
    return [int(v) if v.is_integer() else v for v in vals]


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON scenario file")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--m", type=int, dest="m_streams", help="streams per user")
    p.add_argument("--k", type=int, dest="k_users", help="number of users")
    p.add_argument("--n-t", type=int, dest="n_t")
    p.add_argument("--n-r", type=int, dest="n_r")
    p.add_argument("--p-t-dbw", type=float, dest="p_t_dbw")
    p.add_argument("--arch", action="append", help="architecture name (repeatable)")
    p.add_argument("--uplink", action="store_true")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--values", type=_numbers, help="comma-separated axis values")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmbeam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (axis, _, _) in SWEEPS.items():
        _common(sub.add_parser(name, help=f"Monte Carlo sweep over {axis}"))
    p = sub.add_parser("validate-asymptotics", help="exact vs large-array formulas on a dimension ladder")
    _common(p)
    p.add_argument("--axis", choices=["n_t", "n_r"], default="n_t")
    p = sub.add_parser("optimize-gee", help="maximize GEE over power, or over power and array sizes")
    _common(p)
    p.add_argument("--mode", choices=["exact", "asymptotic"], default="exact")
    p.add_argument("--p-min-w", type=float, default=1e-3)
    p.add_argument("--p-max-w", type=float, default=10.0)
    p.add_argument("--nt-grid", type=_numbers, default=list(range(8, 257, 8)))
    p.add_argument("--nr-grid", type=_numbers, help="receive sizes to search; default holds n_r fixed")
    return parser


def _config(args, defaults: dict | None = None) -> ex.ScenarioConfig:
    cfg = ex.load_config(args.config)
    if defaults and args.config is None:
        cfg = replace(cfg, **defaults)
    overrides = {
        k: getattr(args, k)
        for k in ("seed", "trials", "m_streams", "k_users", "n_t", "n_r", "p_t_dbw")
        if getattr(args, k) is not None
    }
    if args.arch:
        overrides["architectures"] = tuple(args.arch)
    if args.uplink:
        overrides["uplink"] = True
    return replace(cfg, **overrides) if overrides else cfg


def _cmd_sweep(args) -> int:
    axis, defaults, values = SWEEPS[args.command]
    cfg = _config(args, defaults)
    values = args.values or values
    result = ex.sweep(cfg, axis, values, workers=args.workers)
    stem = args.command.replace("-", "_") + ("_ul" if cfg.uplink else "_dl")
    csv_path = ex.write_sweep_csv(result, args.out / f"{stem}.csv")
    ex.write_sweep_json(result, args.out / f"{stem}.json")
    print(csv_path)
    return 0


def _cmd_validate(args) -> int:
    cfg = _config(args)
    ladder = args.values or [32, 64, 128, 256]
    rows = ex.validate_asymptotics(cfg, ladder, args.axis)
    path = ex.write_validation_csv(rows, cfg, args.out / f"validate_{args.axis}{'_ul' if cfg.uplink else '_dl'}.csv")
    print(path)
    return 0


def _cmd_optimize(args) -> int:
    cfg = _config(args)
    arch = Architecture.parse(args.arch[0] if args.arch else "PZF-FD")
    if cfg.uplink:
        raise SystemExit("optimize-gee supports the downlink only")
    p_range = (args.p_min_w, args.p_max_w)
    if args.mode == "exact":
        num, den = ex.exact_gee_program(cfg, arch)
        trace = dinkelbach_max(RatioProgram(num, den, *p_range))
        doc = dict(
            mode="exact",
            arch=arch.value,
            n_t=cfg.n_t,
            n_r=cfg.n_r,
            p_t_w=trace.p_star_w,
            p_t_dbw=float(10 * np.log10(trace.p_star_w)),
            gee=trace.gee_star,
            iterations=trace.iterations,
            converged=trace.converged,
            multimodal=trace.multimodal,
            lambda_sequence=trace.lambda_sequence,
        )
    else:
        num, den = ex.asymptotic_gee_model(cfg, arch)
        res = alternating_gee_max(num, den, args.nt_grid, args.nr_grid or [cfg.n_r], p_range)
        doc = dict(
            mode="asymptotic",
            arch=arch.value,
            n_t=res.n_t,
            n_r=res.n_r,
            p_t_w=res.p_t_w,
            p_t_dbw=float(10 * np.log10(res.p_t_w)),
            gee=res.gee,
            rounds=res.rounds,
            history=res.history,
        )
    doc.update(seed=cfg.seed, trials=cfg.trials, config_hash=ex.config_hash(cfg))
    path = args.out / f"optimize_gee_{args.mode}.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    print(path)
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    args.out.mkdir(parents=True, exist_ok=True)
    try:
        if args.command in SWEEPS:
            return _cmd_sweep(args)
        if args.command == "validate-asymptotics":
            return _cmd_validate(args)
        return _cmd_optimize(args)
    except (ValueError, InfeasibleError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
