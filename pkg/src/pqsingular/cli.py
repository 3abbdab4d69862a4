"""Command line entry point: ``pqsingular run|sweep|refine``.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 invariant violation.
"""

import argparse
from concurrent.futures import ProcessPoolExecutor
import logging
import os
import sys

from .config import ConfigError, parse_config, schema_help
from .diagnostics import ConfigurationError
from .elliptic import InvariantViolation, SolverError
from .experiments import ExperimentFailure, refinement_study, run_experiment, run_id, write_csv
from .params import ParameterError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4

log = logging.getLogger("pqsingular")


def _load(path, overrides):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, overrides)


def _guarded(fn):
    try:
        fn()
    except (ConfigError, ConfigurationError, ParameterError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (SolverError, ExperimentFailure, FloatingPointError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_run(args):
    def go():
        cfg = _load(args.config, args.set)
        meta = run_experiment(cfg, args.out)
        print(f"run {meta['run_id']} ({meta['experiment']}) -> {args.out or cfg['output']['dir'] or 'runs/' + meta['run_id']}")
    return _guarded(go)


def _sweep_one(job):
    text, overrides, root = job
    cfg = parse_config(text, overrides)
    out = os.path.join(root, run_id(cfg))
    try:
        run_experiment(cfg, out)
        return run_id(cfg), overrides[-1], "ok"
    except (SolverError, ExperimentFailure, FloatingPointError) as exc:
        return run_id(cfg), overrides[-1], f"solver failure: {exc}"
    except InvariantViolation as exc:
        return run_id(cfg), overrides[-1], f"invariant violation: {exc}"


def _cmd_sweep(args):
    status = {"code": EXIT_OK}

    def go():
        base = _load(args.config, args.set)
        values = [v.strip() for v in args.values.split(",") if v.strip()]
        if not values:
            raise ConfigError("--values: need at least one value")
        jobs = [(base.serialize(), [f"{args.param}={v}"], args.out) for v in values]
        for _, ov, _ in jobs:          # validate every point before launching
            parse_config(jobs[0][0], ov)
        os.makedirs(args.out, exist_ok=True)
        if args.workers > 1:
            with ProcessPoolExecutor(max_workers=args.workers) as pool:
                results = list(pool.map(_sweep_one, jobs))
        else:
            results = [_sweep_one(j) for j in jobs]
        write_csv(os.path.join(args.out, "sweep.csv"), ["run_id", "override", "status"], results)
        for rid, ov, st in results:
            print(f"{rid} {ov}: {st}")
            if st != "ok":
                status["code"] = EXIT_INVARIANT if st.startswith("invariant") else EXIT_SOLVER
    code = _guarded(go)
    return code or status["code"]


def _cmd_refine(args):
    def go():
        cfg = _load(args.config, args.set)
        rows = refinement_study(cfg, args.levels, axis=args.axis)
        out = args.out or cfg["output"]["dir"] or os.path.join("runs", run_id(cfg))
        os.makedirs(out, exist_ok=True)
        write_csv(os.path.join(out, f"refine_{args.axis}.csv"), ["level", "h", "error", "order"],
                  [(r["level"], r["h"], r["error"], r["order"]) for r in rows])
        for r in rows:
            print(f"level {r['level']}: h={r['h']:.4g} error={r['error']:.6g} order={r['order']:.3f}")
    return _guarded(go)


def build_parser():
    p = argparse.ArgumentParser(
        prog="pqsingular", formatter_class=argparse.RawDescriptionHelpFormatter,
        description="Singular (p,q)-Laplacian experiments.",
        epilog="Configuration keys:\n" + schema_help())
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="INI config file")
        sp.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override a config key (repeatable)")
        sp.add_argument("--out", default=None, help="output directory")

    r = sub.add_parser("run", help="run one experiment")
    common(r)
    r.set_defaults(func=_cmd_run)
    s = sub.add_parser("sweep", help="run one experiment per value of a parameter")
    common(s)
    s.add_argument("--param", required=True, metavar="SECTION.KEY")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=_cmd_sweep)
    f = sub.add_parser("refine", help="refinement study with observed orders")
    common(f)
    f.add_argument("--levels", type=int, default=3)
    f.add_argument("--axis", choices=("space", "time"), default="space")
    f.set_defaults(func=_cmd_refine)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "out", None) is None and args.command == "sweep":
        args.out = "sweeps"
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
