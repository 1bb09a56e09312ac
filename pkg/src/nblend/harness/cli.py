"""Command line entry point: ``nblend run | sampler-audit | report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from nblend.harness.config import ConfigError


def _cmd_run(args) -> int:
    from nblend.harness.runner import run_config

    result = run_config(args.config, out_dir=args.out, jobs=args.jobs, seed=args.seed)
    for cell in result.cells:
        acc = ", ".join(f"{a} {v[0]:.3f}->{v[1]:.3f}" for a, v in cell.accuracies.items())
        print(f"{cell.dataset:>12} {cell.model:>14}  {acc}  "
              f"pcd {cell.distortion.pcd:.3f} cvd {cell.distortion.cvd:.3f} "
              f"label_loss {cell.distortion.label_loss_rate:.3f}")
    for u in result.errors:
        print(f"cell failed: {u.dataset}/{u.model} repeat {u.repeat}: {u.error}", file=sys.stderr)
    print(f"wrote {len(result.files)} files to {result.out_dir}")
    return 0


def _cmd_audit(args) -> int:
    from nblend.harness.audit import sampler_audit
    from nblend.harness.config import load_audit

    cfg = load_audit(args.config)
    if args.seed is not None:
        cfg = cfg.model_copy(update={"seed": args.seed})
    doc = sampler_audit(cfg)
    out = Path(args.out) if args.out else Path("sampler_audit.json")
    if out.suffix != ".json":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "sampler_audit.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(doc, indent=1) + "\n")
    for key, val in doc["summary"].items():
        print(f"{key:>28}: {val}")
    print(f"{'verdict':>28}: {'PASS' if doc['ok'] else 'FAIL'} ({out})")
    return 0 if doc["ok"] else 1


def _cmd_report(args) -> int:
    from nblend.harness.report import report

    try:
        print(report(args.results, args.out))
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nblend", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p.add_argument("--seed", type=int, help="override the master seed")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--out", help="output directory (default: config's output_dir)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sampler-audit", help="audit the neighbor samplers")
    p.add_argument("config")
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; audits run serially")
    p.add_argument("--out", help="JSON file or directory")
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("report", help="heatmaps and correlation from finished runs")
    p.add_argument("results")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error at {path}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
