"""Command line entry point.

    interpcert evaluate --spec run.json --out reports/run [--seed 0 1 2] [--jobs 4]
    interpcert report --in reports/run
    interpcert compare --in reports/a --in reports/b [--alpha 0.05]

Exit codes: 0 success, 2 invalid spec or input, 3 some procedures failed,
4 I/O failure.
"""
import argparse
import json
import logging
import sys

from .errors import CertificationError, ContextMismatchError, SpecValidationError
from .report import (
    compare,
    execute,
    load_certificates,
    load_run_spec,
    read_report,
    render_compare,
    render_table,
    write_report,
)

EXIT_OK, EXIT_SPEC, EXIT_PARTIAL, EXIT_IO = 0, 2, 3, 4

log = logging.getLogger("interpcert")


def _evaluate(args):
    spec = load_run_spec(args.spec, seeds=args.seed)
    report = execute(spec, jobs=args.jobs)
    out = write_report(report, args.out)
    sys.stdout.write(render_table(report))
    log.info("wrote %s", out)
    return EXIT_PARTIAL if report.failures else EXIT_OK


def _report(args):
    sys.stdout.write(render_table(read_report(args.inp)))
    return EXIT_OK


def _compare(args):
    certs = load_certificates(args.inp)
    if not certs:
        log.error("no certificates found under %s", args.inp)
        return EXIT_SPEC
    sys.stdout.write(render_compare(compare(certs, args.alpha)))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="interpcert", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="run every procedure in a run spec and write a report")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, nargs="+", help="override the run spec's seeds")
    p.add_argument("--jobs", type=int, default=1, help="concurrent pipelines (default 1)")
    p.set_defaults(func=_evaluate)

    p = sub.add_parser("report", help="print the table of an existing report")
    p.add_argument("--in", dest="inp", required=True)
    p.set_defaults(func=_report)

    p = sub.add_parser("compare", help="dominance edges and alpha-equivalence classes")
    p.add_argument("--in", dest="inp", required=True, action="append",
                   help="report directory, directory of certificates, or certificate file")
    p.add_argument("--alpha", type=float, default=0.0)
    p.set_defaults(func=_compare)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SpecValidationError as exc:
        for path, msg in exc.problems:
            print(f"spec error: {path}: {msg}", file=sys.stderr)
        return EXIT_SPEC
    except (ContextMismatchError, json.JSONDecodeError, KeyError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_SPEC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CertificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
