"""Command line: repufed run|ablate|sweep|drl --config PATH [--seed N] [--out DIR]."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import load_config
from .drl.nets import save_mlp
from .errors import ValidationError
from .experiments import (ABLATION_COLUMNS, CURVE_COLUMNS, SWEEP_COLUMNS, VARIANTS, SweepSpec, ablate, baselines,
                          drl_train, parse_values, run_scenario, sweep, sweep_metadata, write_csv, write_json, write_run)

log = logging.getLogger("repufed")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="repufed", description="Reputation-aware asynchronous federated learning simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="scenario TOML file")
        sp.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        sp.add_argument("--out", default=None, help="output directory (default: config 'out')")

    common(sub.add_parser("run", help="run every slot of one scenario"))
    a = sub.add_parser("ablate", help="compare variants on a shared seed")
    common(a)
    a.add_argument("--variants", default=",".join(VARIANTS), help=f"comma list from {','.join(VARIANTS)}")
    s = sub.add_parser("sweep", help="one run per value x repeat")
    common(s)
    s.add_argument("--param", required=True, help="dotted path such as dp.epsilon")
    s.add_argument("--values", required=True, help="comma list or lo:hi:step")
    s.add_argument("--repeats", type=int, default=1)
    s.add_argument("--band", type=float, default=None, help="allowed relative ADE spread, reported in metadata")
    d = sub.add_parser("drl", help="train the vehicle selector standalone")
    common(d)
    d.add_argument("--algo", choices=("ppo", "dqn"), default="ppo")
    return p


def _configure_logging() -> None:
    level = os.environ.get("REPUFED_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 2
    try:
        cfg = load_config(args.config, args.seed)
        out = Path(args.out if args.out is not None else cfg.out)
        if args.command == "run":
            _, reports, summary = run_scenario(cfg)
            write_run(out, reports, summary)
            print(f"ade={summary['ade']:.4f} fde={summary['fde']:.4f} rmse={summary['rmse']:.4f} -> {out}")
        elif args.command == "ablate":
            variants = [v.strip() for v in args.variants.split(",") if v.strip()]
            rows = ablate(cfg, variants)
            write_csv(out / "ablation.csv", rows, ABLATION_COLUMNS)
            for r in rows:
                print(f"{r['variant']:>7} ade={r['ade']:.4f}")
        elif args.command == "sweep":
            spec = SweepSpec(args.param, parse_values(args.values), args.repeats)
            rows, _ = sweep(cfg, spec)
            write_csv(out / "sweep.csv", rows, SWEEP_COLUMNS)
            write_json(out / "sweep_meta.json", sweep_metadata(spec, rows, args.band))
            print(f"{len(rows)} rows -> {out / 'sweep.csv'}")
        else:
            res, rows, env = drl_train(cfg, args.algo)
            write_csv(out / f"curve_{args.algo}.csv", rows, CURVE_COLUMNS)
            save_mlp(res.policy, out / f"policy_{args.algo}.json")
            ref = baselines(env, cfg.seed)
            tail = rows[-min(100, len(rows)):]
            ref["final_mean"] = sum(r["reward"] for r in tail) / len(tail)
            write_json(out / f"drl_{args.algo}.json", ref)
            print(f"{args.algo} final-100 mean {ref['final_mean']:.3f} (greedy {ref['greedy']:.3f}, random {ref['random']:.3f})")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
