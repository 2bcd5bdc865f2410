"""Command line interface.

Exit codes: 0 positive or certified, 1 not positive (witness written),
2 inaccurate, 3 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

EXIT_POSITIVE, EXIT_NOT_POSITIVE, EXIT_INACCURATE, EXIT_USAGE = 0, 1, 2, 3

log = logging.getLogger("ncpsatz")


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror or exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _parse(path: str, kind: str, builder):
    data = _load_json(path)
    try:
        return builder(data)
    except KeyError as exc:
        raise InputError(f"{path}: missing field {exc.args[0]!r} in {kind}") from None
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: invalid {kind}: {exc}") from None


def _is_group(path: str) -> bool:
    return "factors" in _load_json(path)


def _load_poly(path):
    from .ncpoly import NCPoly

    return _parse(path, "polynomial", NCPoly.from_json)


def _load_group_poly(path):
    from .groupfree import GroupPoly

    return _parse(path, "group polynomial", GroupPoly.from_json)


def _load_pencil(path):
    from .pencil import LinearPencil

    return _parse(path, "pencil", LinearPencil.from_json)


def _degree(value):
    if value is None or value == "auto":
        return None
    try:
        k = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError("degree must be 'auto' or a nonnegative integer") from None
    if k < 0:
        raise argparse.ArgumentTypeError("degree must be nonnegative")
    return k


def _options(args):
    from .sdp import SdpOptions

    tol = args.tol
    return SdpOptions(tol_feas=tol, tol_gap=tol, tol_inf=tol)


def _write(payload: dict, out):
    text = json.dumps(payload, indent=1, sort_keys=True)
    if out is None or out == "-":
        print(text)
    else:
        with open(out, "w") as fh:
            fh.write(text + "\n")


def _export(problem, out):
    from .sdp import export_sdpa, realify

    if not problem.is_real:
        problem = realify(problem).problem
    if out is None:
        raise InputError("--out is required to write an SDPA file")
    export_sdpa(problem, out)


def _nc_problem(args):
    from .certify.membership import make_problem

    if args.pencil is None:
        raise InputError("--pencil is required for a free polynomial")
    p = _load_poly(args.poly)
    L = _load_pencil(args.pencil)
    try:
        return make_problem(p, L, args.degree)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_certify(args) -> int:
    from .certify.gns import check_positive_nc
    from .certify.membership import assemble_membership_sdp

    mp = _nc_problem(args)
    if args.solver == "sdpa-file":
        _export(assemble_membership_sdp(mp).problem, args.out)
        return EXIT_POSITIVE
    v = check_positive_nc(mp.p, mp.L, mp.d, _options(args), tol_cert=args.tol_cert, seed=args.seed)
    if v.status == "Positive":
        _write(v.certificate.to_json(), args.out)
        return EXIT_POSITIVE
    if v.status == "NotPositive":
        _write(v.witness.to_json(), args.out)
        return EXIT_NOT_POSITIVE
    _write({"format": 1, "kind": "inaccurate", "message": v.message}, args.out)
    return EXIT_INACCURATE


def _verdict_code(v) -> int:
    return {"Positive": EXIT_POSITIVE, "NotPositive": EXIT_NOT_POSITIVE}.get(v.status, EXIT_INACCURATE)


def cmd_factorize(args) -> int:
    from .fejer import check_positive, povm_sdp

    p = _load_group_poly(args.poly)
    try:
        if args.solver == "sdpa-file":
            _export(povm_sdp(p, args.degree).problem, args.out)
            return EXIT_POSITIVE
        v = check_positive(p, args.degree, _options(args), tol_cert=args.tol_cert, n_samples=args.samples,
                           seed=args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    _write(v.factorization.to_json() if v.positive else v.to_json(), args.out)
    return _verdict_code(v)


def cmd_witness(args) -> int:
    if _is_group(args.poly):
        from .fejer import group_witness

        p = _load_group_poly(args.poly)
        try:
            v = group_witness(p, args.degree, _options(args), seed=args.seed)
        except ValueError as exc:
            raise InputError(str(exc)) from None
        _write(v.to_json(), args.out)
        return _verdict_code(v)
    from .certify.gns import find_witness

    mp = _nc_problem(args)
    s = find_witness(mp, _options(args), seed=args.seed)
    if s.status == "NotPositive":
        _write(s.witness.to_json(), args.out)
        return EXIT_NOT_POSITIVE
    _write({"format": 1, "kind": s.status.lower(), "lower_bound": s.lower_bound, "message": s.message}, args.out)
    return EXIT_POSITIVE if s.status == "Positive" else EXIT_INACCURATE


def cmd_extract_check(args) -> int:
    from .fock import build_fock_tuple, extract_coefficients, extraction_matrix
    from .ncpoly import evaluate, random_poly

    rng = np.random.default_rng(args.seed)
    f = build_fock_tuple(args.g, args.depth)
    em = extraction_matrix(f)
    worst = 0.0
    for _ in range(args.samples):
        q = random_poly(rng, args.g, args.depth, nu=args.nu)
        back = extract_coefficients(evaluate(q, f.A), f, args.nu, em)
        worst = max(worst, (back - q).max_abs())
    ok = worst <= args.tol_roundtrip
    _write({"format": 1, "kind": "extract-check", "g": args.g, "depth": args.depth, "dim": f.dim,
            "samples": args.samples, "max_error": worst, "condition": em.cond, "ok": ok}, args.out)
    return EXIT_POSITIVE if ok else EXIT_INACCURATE


def cmd_export_sdpa(args) -> int:
    from .certify.membership import assemble_membership_sdp

    if _is_group(args.poly):
        from .fejer import povm_sdp

        p = _load_group_poly(args.poly)
        try:
            problem = povm_sdp(p, args.degree).problem
        except ValueError as exc:
            raise InputError(str(exc)) from None
    else:
        problem = assemble_membership_sdp(_nc_problem(args)).problem
    _export(problem, args.out)
    return EXIT_POSITIVE


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ncpsatz", description="Positivity certificates for noncommutative polynomials.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, pencil: bool):
        p.add_argument("--poly", required=True, help="polynomial JSON file")
        if pencil:
            p.add_argument("--pencil", help="pencil JSON file")
        p.add_argument("--degree", type=_degree, default=None, help="'auto' or an integer")
        p.add_argument("--tol", type=float, default=1e-8, help="solver tolerance")
        p.add_argument("--tol-cert", type=float, default=1e-6, help="certificate residual tolerance")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=None, help="output file (stdout if omitted)")

    p = sub.add_parser("certify", help="certify positivity on a free spectrahedron")
    common(p, True)
    p.add_argument("--solver", choices=("internal", "sdpa-file"), default="internal")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("factorize", help="factor a group polynomial as a sum of squares")
    common(p, False)
    p.add_argument("--solver", choices=("internal", "sdpa-file"), default="internal")
    p.add_argument("--samples", type=int, default=100, help="unitary samples for verification")
    p.set_defaults(func=cmd_factorize)

    p = sub.add_parser("witness", help="search for a point where the polynomial is not positive")
    common(p, True)
    p.set_defaults(func=cmd_witness)

    p = sub.add_parser("extract-check", help="coefficient extraction round-trip self-test")
    p.add_argument("--g", type=int, required=True)
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--nu", type=int, default=1)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--tol-roundtrip", type=float, default=1e-9)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_extract_check)

    p = sub.add_parser("export-sdpa", help="write the membership SDP in SDPA sparse format")
    common(p, True)
    p.set_defaults(func=cmd_export_sdpa)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
