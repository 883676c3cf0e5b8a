"""Command line interface.

Verbs: ``run <config>``, ``verify <config>`` (invariant suite only),
``ladder <config>``, ``report <dir>``.  Exit codes: 0 all pass,
1 criterion failure, 2 configuration error, 3 numerical blow-up.
"""

from __future__ import annotations

import argparse
import glob
import os
import sys
import time

from ..errors import BlowUpError, ConfigurationError
from .config import parse_config
from .io import load_summary, write_summary
from .report import build_ladder_report
from .runner import run, run_ladder, verify


def _add_common(p):
    p.add_argument("config", help="path to the run configuration file")
    p.add_argument("--out", dest="out_dir", default=None, help="output directory")
    p.add_argument("--stride", type=int, default=None, help="sample every N steps")
    p.add_argument("--quiet", action="store_true", default=None)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mcflow", description=__doc__)
    sub = ap.add_subparsers(dest="verb", required=True)
    p_run = sub.add_parser("run", help="execute a configured run")
    _add_common(p_run)
    p_run.add_argument("--resume", default=None, help="checkpoint file to resume from")
    p_ver = sub.add_parser("verify", help="invariant suite only, no evolution")
    _add_common(p_ver)
    p_lad = sub.add_parser("ladder", help="run every rung of the configured ladder")
    _add_common(p_lad)
    p_rep = sub.add_parser("report", help="aggregate rung summaries in a directory")
    p_rep.add_argument("dir", help="directory containing rung_*/summary.json")
    p_rep.add_argument("--quiet", action="store_true", default=False)
    return ap


def _overrides(args) -> dict:
    return {
        k: getattr(args, k)
        for k in ("out_dir", "stride", "quiet", "checkpoint_every")
        if getattr(args, k, None) is not None
    }


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    echo = (lambda *_a, **_k: None) if getattr(args, "quiet", False) else print
    try:
        if args.verb == "report":
            paths = sorted(glob.glob(os.path.join(args.dir, "rung_*", "summary.json")))
            if not paths:
                raise ConfigurationError(f"no rung summaries under {args.dir}")
            report = build_ladder_report([load_summary(p) for p in paths])
            write_summary(os.path.join(args.dir, "ladder_report.json"), report)
            for line in report["table"]:
                echo(line)
            echo(f"ladder pass: {report['pass']}")
            return 0 if report["pass"] else 1

        cfg = parse_config(args.config).with_overrides(**_overrides(args))
        t0 = time.time()
        if args.verb == "run":
            result = run(cfg, resume_path=args.resume, echo=echo)
        elif args.verb == "verify":
            result = verify(cfg, echo=echo)
        else:
            result = run_ladder(cfg, echo=echo)
        echo(f"wall clock: {time.time() - t0:.1f}s")
        return 0 if result["pass"] else 1
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except BlowUpError as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
