"""Command-line entry point: ``stomoyal <command> NAME... --input doc.json``.

Exit codes: 0 success, 1 verification failure, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .document import DocumentError, ProblemDocument, parse_document
from .functionals import AtlasError, MissingVariableError
from .kernels import KernelError, MetricProfile
from .moments import DegreeCapError, expectation_exact, sobolev_norm_exact_p2
from .montecarlo import (
    DEFAULT_CHUNK,
    estimate_moment,
    estimate_sobolev_norm,
    realize_samples,
    z_score,
)
from .rationals import format_rational
from .star import c_r, check_bracket_axioms, check_star_axioms, moyal_product, poisson_bracket

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

COMMANDS = {
    "star": 2,
    "bracket": 2,
    "cr": 2,
    "norm": 1,
    "expect": 1,
    "verify": 3,
}


class UsageError(Exception):
    code = "E_USAGE"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stomoyal", description="Stochastic Moyal product and Malliavin Sobolev norms "
                                             "on polynomial functionals.")
    p.add_argument("command", choices=sorted(COMMANDS), help="operation to run")
    p.add_argument("names", nargs="*", help="functional names (or inline expressions)")
    p.add_argument("--input", "-i", required=True, help="problem document (JSON or block syntax); '-' for stdin")
    p.add_argument("--order", help="hbar truncation order N or 'auto'")
    p.add_argument("--metric", choices=["flat", "phase", "phase_space"], help="override the document metric")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--r", type=int, default=None, help="derivative order for cr/norm")
    p.add_argument("--p", type=float, default=2.0, help="Sobolev exponent for norm")
    p.add_argument("--samples", type=int, default=None, help="Monte Carlo sample count")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--chunk", type=int, default=DEFAULT_CHUNK)
    p.add_argument("--workers", type=int, default=1)
    return p


def _read_input(path: str) -> bytes:
    if path == "-":
        return sys.stdin.buffer.read()
    try:
        with open(path, "rb") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _order(arg: str | None, doc: ProblemDocument):
    value = arg if arg is not None else doc.hbar_order
    if value == "auto":
        return "auto"
    try:
        value = int(value)
    except (TypeError, ValueError):
        raise UsageError(f"--order must be a nonnegative integer or 'auto', got {value!r}") from None
    if value < 0:
        raise UsageError(f"--order must be nonnegative, got {value}")
    return value


def _r(args, default: int | None = None) -> int:
    if args.r is None:
        if default is None:
            raise UsageError(f"'{args.command}' requires --r")
        return default
    if args.r < 0:
        raise UsageError(f"--r must be nonnegative, got {args.r}")
    return args.r


def _batch(args, doc):
    if args.samples is None:
        return None
    if args.samples < 1 or args.chunk < 1 or args.seed < 0 or args.workers < 1:
        raise UsageError("--samples, --chunk and --workers must be positive and --seed nonnegative")
    return realize_samples(doc.atlas, args.samples, args.seed, args.chunk, args.workers)


def _mc_json(args, doc) -> dict:
    return {"samples": args.samples, "seed": args.seed, "chunk": args.chunk, "m": doc.grid_m}


def run_command(doc: ProblemDocument, args) -> tuple[int, str]:
    """Dispatch one command; returns ``(exit status, rendered output)``."""
    needed = COMMANDS[args.command]
    if len(args.names) != needed:
        raise UsageError(f"'{args.command}' takes {needed} functional name(s), got {len(args.names)}")
    metric = MetricProfile.parse(args.metric) if args.metric else doc.metric_profile
    funs = [doc.functional(n) for n in args.names]
    names = list(args.names)
    as_json = args.format == "json"
    status = EXIT_OK

    if args.command == "star":
        series = moyal_product(funs[0], funs[1], _order(args.order, doc), metric)
        out = {"command": "star", "left": names[0], "right": names[1], "metric": metric.name,
               "text": series.to_text(), **series.to_json()}
        text = series.to_text()
    elif args.command == "bracket":
        b = poisson_bracket(funs[0], funs[1], metric)
        out = {"command": "bracket", "left": names[0], "right": names[1], "metric": metric.name,
               "text": b.to_text(), "result": b.to_json()}
        text = b.to_text()
    elif args.command == "cr":
        r = _r(args)
        c = c_r(funs[0], funs[1], r, metric)
        out = {"command": "cr", "left": names[0], "right": names[1], "r": r, "metric": metric.name,
               "text": c.to_text(), "result": c.to_json()}
        text = c.to_text()
    elif args.command == "expect":
        exact = expectation_exact(funs[0])
        out = {"command": "expect", "functional": names[0], "exact": format_rational(exact)}
        text = f"E[{names[0]}] = {format_rational(exact)}"
        batch = _batch(args, doc)
        if batch is not None:
            est = estimate_moment(funs[0], batch, args.workers)
            z = z_score(est.mean, est.stderr, float(exact))
            out["monte_carlo"] = {**_mc_json(args, doc), "estimate": est.mean, "stderr": est.stderr, "z": z}
            text += f"\nmonte carlo: {est.mean!r} +/- {est.stderr!r} (z = {z:.3f})"
    elif args.command == "norm":
        r = _r(args, default=1)
        p = args.p
        if not p > 0:
            raise UsageError(f"--p must be positive, got {p}")
        label = f"||{names[0]}||_{{{r},{p:g}}}"
        out = {"command": "norm", "functional": names[0], "r": r, "p": p}
        lines = []
        if p == 2:
            nrm = sobolev_norm_exact_p2(funs[0], r)
            out["exact_squared"] = format_rational(nrm.squared)
            out["exact"] = nrm.value
            lines.append(f"{label}^2 = {format_rational(nrm.squared)}")
            lines.append(f"{label} = {nrm.value!r}")
        batch = _batch(args, doc)
        if batch is None and p != 2:
            raise UsageError("norm with p != 2 has no exact form; pass --samples (and optionally --seed, --chunk)")
        if batch is not None:
            est = estimate_sobolev_norm(funs[0], r, p, batch, args.workers)
            mc = {**_mc_json(args, doc), "estimate": est.estimate, "stderr": est.stderr}
            line = f"monte carlo: {est.estimate!r} +/- {est.stderr!r}"
            if p == 2:
                mc["z"] = z_score(est.estimate, est.stderr, out["exact"])
                line += f" (z = {mc['z']:.3f})"
            out["monte_carlo"] = mc
            lines.append(line)
        text = "\n".join(lines)
    else:  # verify
        order = _order(args.order, doc)
        if order == "auto":
            order = sum(max(f.degree(), 0) for f in funs)
        star_report = check_star_axioms(funs[0], funs[1], funs[2], order, metric)
        bracket_report = check_bracket_axioms(funs[0], funs[1], funs[2], metric)
        ok = star_report.all_passed and bracket_report.all_passed
        status = EXIT_OK if ok else EXIT_FAIL
        out = {"command": "verify", "functionals": names, "metric": metric.name, "order": order,
               "all_passed": ok, "reports": [star_report.to_json(), bracket_report.to_json()]}
        text = "\n".join([f"verify {' '.join(names)}", star_report.to_text(), bracket_report.to_text(),
                          "PASS" if ok else "FAIL"])

    if as_json:
        return status, json.dumps(out, indent=2, sort_keys=False) + "\n"
    return status, text + "\n"


def _diagnostic(code: str, message: str, fmt: str, line=None, column=None) -> str:
    if fmt == "json":
        return json.dumps({"error": {"code": code, "message": message, "line": line, "column": column}}) + "\n"
    where = ""
    if line is not None:
        where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
    elif column is not None:
        where = f" (column {column})"
    return f"error[{code}]{where}: {message}\n"


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--format", default="text")
    fmt = pre.parse_known_args(argv)[0].format
    try:
        args = build_parser().parse_args(argv)
        doc = parse_document(_read_input(args.input))
        status, output = run_command(doc, args)
    except UsageError as exc:
        sys.stderr.write(_diagnostic(UsageError.code, str(exc), fmt))
        return EXIT_USAGE
    except DocumentError as exc:
        sys.stderr.write(_diagnostic(exc.code, exc.message, fmt, exc.line, exc.column))
        return EXIT_USAGE
    except DegreeCapError as exc:
        sys.stderr.write(_diagnostic("E_DEGREE_CAP", str(exc), fmt))
        return EXIT_USAGE
    except MissingVariableError as exc:
        sys.stderr.write(_diagnostic("E_UNRESOLVED", str(exc), fmt))
        return EXIT_USAGE
    except (AtlasError, KernelError, ValueError) as exc:
        sys.stderr.write(_diagnostic("E_ENGINE", str(exc), fmt))
        return EXIT_USAGE
    sys.stdout.write(output)
    return status


if __name__ == "__main__":
    sys.exit(main())
