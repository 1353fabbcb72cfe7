"""Command-line front end: ``slipctl {run,limit-cycle,return-map,robustness,validate}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, RunConfig, parse_config
from .experiments import (
    NonConvergence,
    find_limit_cycle,
    return_map_jacobian,
    robustness_sweep,
)
from .sim import GaitExecutor, GaitFailure

log = logging.getLogger("slipctl")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SIM = 2
EXIT_VALIDATION = 3

CSV_HEADER = "time_s,phase,x_m,y_m,vx_m_s,vy_m_s,r_m,theta_rad,u1,u2,e2_1,e2_2,H_J"


def fmt(v) -> str:
    """Locale-independent cell: 17 significant digits, empty for missing values."""
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    return "%.17g" % v


def _comment_block(cfg: RunConfig) -> str:
    lines = [f"# seed: {cfg.seed}"] + ["# " + ln for ln in cfg.echo().splitlines()]
    return "\n".join(lines) + "\n"


def _header_record(cfg: RunConfig, kind: str) -> dict:
    return {"kind": kind, "seed": cfg.seed, "config": cfg.values}


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, allow_nan=True)


def write_trajectory_csv(path: Path, rows, cfg: RunConfig) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(_comment_block(cfg))
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_table_csv(path: Path, header: Sequence[str], rows, cfg: RunConfig) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(_comment_block(cfg))
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def write_report(path: Path, cfg: RunConfig, kind: str, body: dict) -> None:
    rec = _header_record(cfg, kind)
    rec["result"] = body
    path.write_text(json.dumps(rec, sort_keys=True, indent=2) + "\n", encoding="utf-8")


# -- commands ------------------------------------------------------------------


def cmd_run(cfg: RunConfig, out: Path) -> int:
    glog = GaitExecutor(cfg.gait).run_gait(cfg.initial, cfg.n_steps)
    write_trajectory_csv(out / cfg.trajectory_csv, glog.samples, cfg)
    with open(out / cfg.summary_file, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(_dump_json(_header_record(cfg, "gait")) + "\n")
        for rec in glog.records:
            fh.write(_dump_json({"kind": "step", **dataclasses.asdict(rec)}) + "\n")
        tail = {
            "kind": "end",
            "steps_completed": len(glog.records),
            "final_apex": dataclasses.asdict(glog.final_apex) if glog.final_apex else None,
            "failure": glog.failure,
            "failure_step": glog.failure_step,
        }
        fh.write(_dump_json(tail) + "\n")
    if glog.failure is not None:
        print(f"gait failure at step {glog.failure_step}: {glog.failure}", file=sys.stderr)
        return EXIT_SIM
    print(f"{len(glog.records)} steps written to {out}")
    return EXIT_OK


def cmd_limit_cycle(cfg: RunConfig, out: Path) -> int:
    lc = find_limit_cycle(cfg.gait, start=(cfg.initial.y, cfg.initial.vx))
    body = {
        "fixed_point": {"y_m": lc.fixed_point[0], "vx_m_s": lc.fixed_point[1]},
        "iterations": lc.iterations,
        "apex_bias_m": lc.apex_bias,
    }
    write_report(out / "limit_cycle.json", cfg, "limit-cycle", body)
    rows = [(i, y, vx) for i, (y, vx) in enumerate(lc.history)]
    write_table_csv(out / "limit_cycle.csv", ("cycle", "apex_y_m", "apex_vx_m_s"), rows, cfg)
    print(f"fixed point y={lc.fixed_point[0]:.12g} vx={lc.fixed_point[1]:.12g} after {lc.iterations} cycles")
    return EXIT_OK


def cmd_return_map(cfg: RunConfig, out: Path) -> int:
    lc = find_limit_cycle(cfg.gait, start=(cfg.initial.y, cfg.initial.vx))
    jac = return_map_jacobian(lc.fixed_point, cfg.gait, cfg.jacobian_delta)
    body = {
        "fixed_point": list(lc.fixed_point),
        "delta": jac.delta,
        "jacobian": jac.matrix.tolist(),
        "eigenvalues_re": jac.eigenvalues.real.tolist(),
        "eigenvalues_im": jac.eigenvalues.imag.tolist(),
        "eigenvalue_magnitudes": jac.magnitudes.tolist(),
        "stable": jac.stable,
    }
    write_report(out / "return_map.json", cfg, "return-map", body)
    rows = [(i, j, jac.matrix[i, j]) for i in range(2) for j in range(2)]
    write_table_csv(out / "return_map.csv", ("row", "col", "value"), rows, cfg)
    print("eigenvalue magnitudes: " + ", ".join(f"{m:.6g}" for m in jac.magnitudes))
    return EXIT_OK


def cmd_robustness(cfg: RunConfig, out: Path) -> int:
    seeds = [cfg.seed + i for i in range(cfg.n_seeds)]
    rep = robustness_sweep(cfg.noise_levels, cfg.n_seeds, cfg.n_steps, cfg.gait, cfg.initial, seeds)
    write_report(out / "robustness.json", cfg, "robustness", rep.to_dict())
    header = (
        "level",
        "runs",
        "success_rate",
        "max_e2_liftoff",
        "max_e2_touchdown",
        "worst_e2_ratio",
        "containment_violations",
        "max_apex_deviation",
    )
    rows = [
        (s.level, s.runs, s.success_rate, s.max_e2_liftoff, s.max_e2_touchdown,
         s.worst_e2_ratio, s.containment_violations, s.max_apex_deviation)
        for s in rep.stats
    ]
    write_table_csv(out / "robustness.csv", header, rows, cfg)
    for s in rep.stats:
        print(
            f"level {s.level:.3g}: success {s.success_rate:.3f}, "
            f"worst liftoff/touchdown e2 {s.worst_e2_ratio:.3g}, violations {s.containment_violations}"
        )
    return EXIT_OK


def cmd_validate(cfg: RunConfig, out: Optional[Path]) -> int:
    from .validation import run_checks

    results = run_checks(cfg)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    if out is not None:
        body = {r.name: {"passed": r.passed, "detail": r.detail} for r in results}
        write_report(out / "validate.json", cfg, "validate", body)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VALIDATION


COMMANDS = {
    "run": cmd_run,
    "limit-cycle": cmd_limit_cycle,
    "return-map": cmd_return_map,
    "robustness": cmd_robustness,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="slipctl", description="SLIP hopper tracking-control simulator")
    ap.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, type=Path, help="flat YAML run config")
        sp.add_argument("--out", type=Path, default=None, help="output directory (default: cwd)")
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument("--steps", type=int, default=None, help="override n_steps")
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)

    try:
        cfg = parse_config(args.config).with_overrides(seed=args.seed, n_steps=args.steps)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = args.out
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    elif args.command != "validate":
        out = Path.cwd()

    try:
        return COMMANDS[args.command](cfg, out)
    except GaitFailure as exc:
        print(f"simulation failure: {exc}", file=sys.stderr)
        return EXIT_SIM
    except NonConvergence as exc:
        print(f"simulation failure: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
