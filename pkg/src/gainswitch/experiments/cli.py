"""Command line: ``gainswitch run|sweep|validate``.

Exit codes: 0 success with all assertions holding, 1 an assertion
failed, 2 the configuration is invalid.
"""
from __future__ import annotations

import argparse
import logging
import sys

import yaml

from ..errors import ConfigError
from .config import PRESETS, validate_config
from .runner import EXIT_ASSERT, EXIT_CONFIG, EXIT_OK, run_experiment, sweep

log = logging.getLogger("gainswitch")


def _parse_set(items):
    out = {}
    for item in items or []:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError("bad --set", [f"--set {item}: expected path=value"])
        out[key.strip()] = yaml.safe_load(raw)
    return out


def _parse_values(text):
    if text is None or text.strip() == "":
        return []
    return [yaml.safe_load(v) for v in text.split(",")]


def _common(p, preset_required=False):
    p.add_argument("--preset", choices=sorted(PRESETS), required=preset_required)
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--pulses", type=int, help="number of pulses")
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", metavar="PATH=VALUE", help="override one parameter, repeatable")


def build_parser():
    ap = argparse.ArgumentParser(prog="gainswitch", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("run", help="run a preset (sweep presets run their sweep)"))
    sp = sub.add_parser("sweep", help="run a parameter sweep")
    _common(sp)
    sp.add_argument("--param", help="dotted parameter path, e.g. ase.total_power")
    sp.add_argument("--values", help="comma-separated values")
    sp.add_argument("--workers", type=int)
    vp = sub.add_parser("validate", help="resolve a config and print it")
    vp.add_argument("--config")
    vp.add_argument("--preset", choices=sorted(PRESETS))
    vp.add_argument("--set", action="append", metavar="PATH=VALUE")
    return ap


def _load(args):
    extra = _parse_set(args.set)
    cfg = validate_config(args.config, preset=args.preset, extra=extra)
    top = {}
    if getattr(args, "seed", None) is not None:
        top["seed"] = args.seed
    if getattr(args, "pulses", None) is not None:
        top["n_pulses"] = args.pulses
    if getattr(args, "out", None) is not None:
        top["output_dir"] = args.out
    if top:
        cfg = cfg.with_values(**top)
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return cfg


def _report_sweep(res):
    for v, m in zip(res.values, res.manifests):
        state = "ok" if m.passed else ("error: " + m.error if m.error else "failed: " + ", ".join(m.failed_assertions))
        print(f"{res.param}={v}: {state}")
    if res.trend is not None:
        print(f"trend {res.trend['name']}: {'ok' if res.trend['passed'] else 'failed'} {res.trend['series']}")
    if res.summary_path:
        print(f"summary: {res.summary_path}")
    return res.exit_status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        if args.command == "validate":
            sys.stdout.write(cfg.to_yaml())
            return EXIT_OK
        if args.command == "sweep":
            return _report_sweep(sweep(cfg, args.param, _parse_values(args.values) if args.values is not None
                                       else None, workers=args.workers))
        if cfg.sweep["param"] is not None:
            return _report_sweep(sweep(cfg))
        m = run_experiment(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        for issue in e.issues:
            print(f"  {issue}", file=sys.stderr)
        return EXIT_CONFIG
    for a in m.assertions:
        print(f"{'PASS' if a['passed'] else 'FAIL'} {a['name']}: {a['value']} {a['op']} {a['limit']}")
    print(f"report: {m.output_dir}/report.json  hash {m.report_hash[:16]}")
    return EXIT_OK if m.passed else EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
