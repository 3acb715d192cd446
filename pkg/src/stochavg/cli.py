"""Command-line front end.

Exit codes: 0 success, 1 failed verdicts in ``verify``, 2 invalid input or
configuration, 3 runtime failure such as a population overflow.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path as FsPath

from . import __version__, acceptance, io, stats
from .config import ExperimentConfig
from .errors import InvalidParameter, StochavgError
from .experiments import oracle, run as run_experiment

EXIT_OK, EXIT_FAILED, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


def _write_artifacts(artifacts: dict[str, bytes], out_dir: FsPath) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, data in artifacts.items():
        (out_dir / name).write_bytes(data)
        print(out_dir / name)


def _run_config(args, allowed: tuple[str, ...]) -> int:
    cfg = ExperimentConfig.load(args.config)
    if cfg.experiment not in allowed:
        raise InvalidParameter(f"experiment: '{cfg.experiment}' is not handled by this subcommand "
                               f"(expected {', '.join(allowed)})")
    _write_artifacts(run_experiment(cfg, workers=args.workers), FsPath(args.out_dir))
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _run_config(args, ("walker", "brwre", "sde"))


def cmd_check_generators(args) -> int:
    return _run_config(args, ("generator-check",))


def cmd_averaging_report(args) -> int:
    return _run_config(args, ("averaging-report",))


def cmd_oracle(args) -> int:
    if args.config and "=" in args.config:
        args.param.insert(0, args.config)
        args.config = None
    if args.config:
        return _run_config(args, ("oracle",))
    if not args.name:
        raise InvalidParameter("oracle: give a config file or --name with parameters")
    params = {}
    for item in args.param:
        key, sep, val = item.partition("=")
        if not sep:
            raise InvalidParameter(f"oracle.{item}: parameters are key=value")
        try:
            params[key] = float(val)
        except ValueError:
            raise InvalidParameter(f"oracle.{key}: not a number: {val!r}") from None
    cfg = ExperimentConfig.from_dict({"experiment": "oracle", "seed": 0,
                                      "model": {"oracle": {"name": args.name, **params}}})
    rec = oracle(cfg)
    sys.stdout.write(io.dumps({"oracle": rec["oracle"], "parameters": rec["parameters"], "value": rec["value"]}))
    return EXIT_OK


def cmd_compare(args) -> int:
    a, _ = io.read_ensemble_csv(args.a)
    b, _ = io.read_ensemble_csv(args.b)
    tests = tuple(t.strip() for t in args.tests.split(",") if t.strip())
    for t in tests:
        if t not in ("mean", "variance", "ks"):
            raise InvalidParameter(f"tests: unknown test {t!r}")
    times = [float(t) for t in args.times.split(",")] if args.times else None
    verdicts = stats.compare_ensembles(a, b, tests, times=times)
    text = io.dumps({"a": str(args.a), "b": str(args.b), "verdicts": verdicts,
                     "all_passed": all(v["passed"] for v in verdicts)})
    if args.out:
        FsPath(args.out).write_text(text, encoding="utf-8", newline="\n")
        print(args.out)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    ids = [int(k) for k in args.only.split(",")] if args.only else None
    if ids:
        bad = [k for k in ids if k not in acceptance.CRITERIA]
        if bad:
            raise InvalidParameter(f"only: unknown criteria {bad}")
    echo = (lambda s: print(s, file=sys.stderr)) if not args.quiet else None
    if args.fresh_seeds:
        rep = acceptance.fresh_seed_rates(args.master_seed, args.fresh_seeds, ids, args.workers, echo)
        text = io.dumps(rep)
        failed = False
    else:
        results = acceptance.run_suite(ids, args.workers, echo)
        text = io.dumps({"version": __version__, "criteria": [r.to_dict() for r in results],
                         "all_passed": all(r.passed for r in results)})
        failed = not all(r.passed for r in results)
    if args.out:
        FsPath(args.out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)
    return EXIT_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stochavg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, func, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("config", help="experiment configuration (JSON)")
        sp.add_argument("--out-dir", default=".", help="directory for artifacts (default: current)")
        sp.add_argument("--workers", type=int, default=None,
                        help="worker threads; results do not depend on it (default: STOCHAVG_WORKERS or 1)")
        sp.set_defaults(func=func)
        return sp

    with_config("simulate", cmd_simulate, "simulate a walker, BRWRE or SDE ensemble")
    with_config("check-generators", cmd_check_generators, "exact generator diagnostics along n")
    with_config("averaging-report", cmd_averaging_report, "estimate the averaging hypotheses along n")

    sp = sub.add_parser("oracle", help="evaluate a closed-form oracle")
    sp.add_argument("config", nargs="?", help="oracle configuration (JSON)")
    sp.add_argument("--name", choices=("variance", "integral_variance", "max_bound"))
    sp.add_argument("param", nargs="*", default=[], metavar="key=value")
    sp.add_argument("--out-dir", default=".")
    sp.add_argument("--workers", type=int, default=None)
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("compare", help="compare two ensemble CSVs")
    sp.add_argument("a")
    sp.add_argument("b")
    sp.add_argument("--tests", default="mean,variance,ks")
    sp.add_argument("--times", default=None, help="comma-separated grid times (default: all)")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("verify", help="run the acceptance suite")
    sp.add_argument("suite", choices=("acceptance",))
    sp.add_argument("--only", default=None, help="comma-separated criterion ids")
    sp.add_argument("--workers", type=int, default=None)
    sp.add_argument("--out", default=None, help="write the JSON verdicts here instead of stdout")
    sp.add_argument("--fresh-seeds", type=int, default=0, metavar="K",
                    help="rerun stochastic criteria under K derived seeds and report pass rates")
    sp.add_argument("--master-seed", type=int, default=2024)
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidParameter, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (StochavgError, RuntimeError, OSError, MemoryError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
