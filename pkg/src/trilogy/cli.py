"""Command-line interface: ``trilogy <group> <command> [options]``.

Exit status is 0 on success, 1 when a verification fails and 2 on bad input.
Errors are written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from importlib.resources import files
from pathlib import Path

import numpy as np

from . import heisenberg as heis
from . import intertwiner as itw
from . import opcalc
from . import qdilog
from .triangulation import (
    LabeledTriangulation,
    MappingClassLoop,
    PathNotFound,
    TriangulationError,
    exchange_matrix,
    find_path,
    flip,
    random_loop,
    verify_loop,
)

FIXTURE_ENV = "TRILOGY_FIXTURES"

# flags whose values may start with "-" (ranges, complex numbers)
_VALUE_FLAGS = {"--x", "--y", "--z", "--q"}


class UsageError(Exception):
    pass


class VerificationFailed(Exception):
    def __init__(self, payload):
        super().__init__("verification failed")
        self.payload = payload


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- input helpers -------------------------------------------------------------------------


def _fixture_dirs() -> list[Path]:
    dirs = []
    if os.environ.get(FIXTURE_ENV):
        dirs.append(Path(os.environ[FIXTURE_ENV]))
    dirs.append(Path(str(files("trilogy") / "fixtures")))
    return dirs


def resolve_input(name: str) -> Path:
    p = Path(name)
    if p.is_file():
        return p
    for d in _fixture_dirs():
        for cand in (d / name, d / f"{name}.json"):
            if cand.is_file():
                return cand
    raise FileNotFoundError(f"no such file or bundled fixture: {name}")


def load_json(name: str):
    with open(resolve_input(name)) as fh:
        return json.load(fh)


def load_triangulation(name: str) -> LabeledTriangulation:
    return LabeledTriangulation.from_json(load_json(name))


def parse_range(text: str) -> tuple[float, float]:
    try:
        a, b = text.split("..")
        return float(a), float(b)
    except ValueError:
        raise UsageError(f"expected a range like -3..3, got {text!r}") from None


def _params(args) -> qdilog.QDParams:
    return qdilog.QDParams(args.lam, args.hbar)


def _grid(args, d: int) -> opcalc.Grid:
    return opcalc.Grid(d, args.grid, args.domain)


def _cplx(z: complex) -> dict:
    return {"re": float(np.real(z)), "im": float(np.imag(z))}


def _emit(obj, fmt: str = "json"):
    if fmt == "csv" and isinstance(obj, str):
        sys.stdout.write(obj)
    else:
        sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- surface ---------------------------------------------------------------------------------


def cmd_surface_info(args):
    T = load_triangulation(args.file)
    E = exchange_matrix(T)
    _emit(
        {
            "genus": T.signature.genus,
            "punctures": T.signature.punctures,
            "arcs": len(T.arcs),
            "triangles": [list(t) for t in T.triangles],
            "corner_cycles": [[list(c) for c in cyc] for cyc in T.corner_cycles],
            "legal_flips": T.legal_flips(),
            "valences": E.valences.tolist(),
        }
    )


def cmd_surface_flip(args):
    _emit(flip(load_triangulation(args.file), args.arc).to_json())


def cmd_surface_eps(args):
    E = exchange_matrix(load_triangulation(args.file))
    if args.format == "csv":
        _emit("".join(",".join(str(int(v)) for v in row) + "\n" for row in E.eps), "csv")
    else:
        _emit({"eps": E.eps.tolist(), "valences": E.valences.tolist()})


def cmd_surface_path(args):
    A, B = load_triangulation(args.file), load_triangulation(args.target)
    w = find_path(A, B, args.max_depth)
    _emit(w.to_json())


# -- qd ----------------------------------------------------------------------------------------


def cmd_qd_eval(args):
    f = args.function
    if f == "psi":
        val = qdilog.psi_q(complex(args.q), complex(args.z))
    elif f == "phi":
        val = qdilog.phi_hbar(args.hbar, complex(args.z), method=args.method)
    elif f == "phi-ihbar":
        val = qdilog.phi_ihbar(args.sign, args.hbar, complex(args.z))
    else:
        val = qdilog.F_kernel(_params(args), float(args.x), float(args.y))
    _emit({"function": f, "value": _cplx(complex(val)), "abs": float(abs(val))})


def cmd_qd_table(args):
    x0, x1 = parse_range(args.x)
    y0, y1 = parse_range(args.y)
    xs, ys = np.linspace(x0, x1, args.steps), np.linspace(y0, y1, args.steps)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    F = qdilog.F_kernel_array(_params(args), X, Y)
    if args.format == "csv":
        lines = ["x,y,re,im,abs"]
        for x, y, v in zip(X.ravel(), Y.ravel(), F.ravel()):
            lines.append(f"{x:.17g},{y:.17g},{v.real:.17g},{v.imag:.17g},{abs(v):.17g}")
        _emit("\n".join(lines) + "\n", "csv")
    else:
        _emit(
            {
                "lambda": args.lam,
                "hbar": args.hbar,
                "rows": [{"x": float(x), "y": float(y), "value": _cplx(v), "abs": float(abs(v))} for x, y, v in zip(X.ravel(), Y.ravel(), F.ravel())],
            }
        )


# -- heis ---------------------------------------------------------------------------------------


def _operators(args):
    E = exchange_matrix(load_triangulation(args.file))
    if args.model == "reducible":
        return E, None, heis.reducible_solution(E)
    ech = heis.echelon_reduce(E.valences)
    return E, ech, heis.irreducible_solution(E, ech)


def cmd_heis_irrep(args):
    E, ech, ops = _operators(args)
    out = heis.operators_to_json(ops)
    if ech is not None:
        out["pivots"] = list(ech.pivots)
        out["reduced"] = [[heis.frac_str(v) for v in row] for row in ech.reduced]
    _emit(out)


def cmd_heis_check(args):
    E, _, ops = _operators(args)
    rel = heis.heisenberg_violations(ops, E)
    con = heis.constraint_violations(ops, E.valences)
    out = {"model": args.model, "heisenberg_violations": rel, "constraint_violations": con, "passed": not rel and not con}
    if not out["passed"]:
        raise VerificationFailed(out)
    _emit(out)


# -- check ---------------------------------------------------------------------------------------


def _states(args, grid, boosts):
    return opcalc.test_states(grid, count=args.states, seed=args.seed, boosts=boosts)


def _pentagon(args, run, d: int, boosts):
    if args.refine:
        reports = opcalc.refinement_study(lambda g: run(g, _states(args, g, boosts)), d)
        ok = opcalc.strictly_decreasing(reports)
        if args.format == "csv":
            _emit(opcalc.refinement_csv(reports), "csv")
            if not ok:
                raise VerificationFailed(None)
            return
        out = {"reports": [r.to_json() for r in reports], "strictly_decreasing": ok}
    else:
        g = _grid(args, d)
        rep = run(g, _states(args, g, boosts))
        ok = rep.max_residual <= args.tol
        out = dict(rep.to_json(), tolerance=args.tol, passed=ok)
    if not ok:
        raise VerificationFailed(out)
    _emit(out)


def cmd_check_phi(args):
    _pentagon(args, lambda g, st: opcalc.verify_phi_pentagon(args.hbar, g, st), 1, opcalc.PHI_BOOSTS)


def cmd_check_f(args):
    params = _params(args)
    _pentagon(args, lambda g, st: opcalc.verify_F_pentagon(params, g, st), 2, opcalc.F_BOOSTS)


def cmd_check_relations(args):
    T = load_triangulation(args.file)
    rep = itw.verify_relation_suite(T, _params(args), _grid(args, 2), tol=args.tol)
    out = rep.to_json()
    if not rep.passed:
        raise VerificationFailed(out)
    _emit(out)


# -- mcg -----------------------------------------------------------------------------------------


def _loop(args) -> MappingClassLoop:
    data = load_json(args.file)
    if "word" in data:
        return MappingClassLoop.from_json(data)
    if args.random is None:
        raise UsageError("input is a surface; pass --random LENGTH to draw a loop on it")
    T = LabeledTriangulation.from_json(data)
    return random_loop(T, args.random, np.random.default_rng(args.seed))


def cmd_mcg_verify(args):
    loop = _loop(args)
    ok = verify_loop(loop)
    out = {"loop": loop.to_json(), "valid": ok}
    if not ok:
        raise VerificationFailed(out)
    _emit(out)


def cmd_mcg_rho(args):
    loop = _loop(args)
    _emit(itw.rho(loop, _params(args)).to_json())


# -- parser ----------------------------------------------------------------------------------------


def _add_qd(p, lam_required=True):
    p.add_argument("--lambda", dest="lam", type=int, choices=(-1, 0, 1), required=lam_required)
    p.add_argument("--hbar", type=float, default=0.7)


def _add_grid(p, N=1024, L=12.0):
    p.add_argument("--grid", type=int, default=N, help="points per axis (power of two)")
    p.add_argument("--domain", type=float, default=L, help="half-width L of [-L, L)")
    p.add_argument("--states", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=1e-3)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="trilogy", description=__doc__.splitlines()[0])
    top = ap.add_subparsers(dest="group", required=True, parser_class=_Parser)

    surf = top.add_parser("surface").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    p = surf.add_parser("info")
    p.add_argument("file")
    p.set_defaults(func=cmd_surface_info)
    p = surf.add_parser("flip")
    p.add_argument("file")
    p.add_argument("--arc", type=int, required=True)
    p.set_defaults(func=cmd_surface_flip)
    p = surf.add_parser("eps")
    p.add_argument("file")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_surface_eps)
    p = surf.add_parser("path")
    p.add_argument("file")
    p.add_argument("target")
    p.add_argument("--max-depth", type=int, default=8)
    p.set_defaults(func=cmd_surface_path)

    qd = top.add_parser("qd").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    p = qd.add_parser("eval")
    p.add_argument("--function", choices=("psi", "phi", "phi-ihbar", "F"), default="F")
    p.add_argument("--q", default="0.5")
    p.add_argument("--z", default="0")
    p.add_argument("--sign", type=int, choices=(-1, 1), default=1)
    p.add_argument("--method", choices=("line", "contour"), default="line")
    p.add_argument("--x", default="0")
    p.add_argument("--y", default="0")
    _add_qd(p, lam_required=False)
    p.set_defaults(func=cmd_qd_eval, lam=0)
    p = qd.add_parser("table")
    _add_qd(p)
    p.add_argument("--x", default="-3..3")
    p.add_argument("--y", default="-3..3")
    p.add_argument("--steps", type=int, default=21)
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.set_defaults(func=cmd_qd_table)

    hz = top.add_parser("heis").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    for name, fn in (("irrep", cmd_heis_irrep), ("check", cmd_heis_check)):
        p = hz.add_parser(name)
        p.add_argument("file")
        p.add_argument("--model", choices=("irreducible", "reducible"), default="irreducible")
        p.set_defaults(func=fn)

    ck = top.add_parser("check").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    p = ck.add_parser("phi-pentagon")
    p.add_argument("--hbar", type=float, default=0.7)
    _add_grid(p)
    p.add_argument("--refine", action="store_true", help="run the 512/1024/2048 ladder at fixed spacing")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_check_phi)
    p = ck.add_parser("f-pentagon")
    _add_qd(p)
    _add_grid(p)
    p.add_argument("--refine", action="store_true", help="run the 512/1024/2048 ladder at fixed spacing")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.set_defaults(func=cmd_check_f)
    p = ck.add_parser("relations")
    p.add_argument("file")
    _add_qd(p)
    _add_grid(p, N=512)
    p.set_defaults(func=cmd_check_relations)

    mc = top.add_parser("mcg").add_subparsers(dest="cmd", required=True, parser_class=_Parser)
    for name, fn in (("verify", cmd_mcg_verify), ("rho", cmd_mcg_rho)):
        p = mc.add_parser(name)
        p.add_argument("file", help="loop JSON, or a surface together with --random")
        p.add_argument("--random", type=int, metavar="LENGTH")
        p.add_argument("--seed", type=int, default=0)
        if name == "rho":
            _add_qd(p)
        p.set_defaults(func=fn)
    return ap


def _join_values(argv: list[str]) -> list[str]:
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in _VALUE_FLAGS and i + 1 < len(argv):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
        else:
            out.append(a)
            i += 1
    return out


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv: list[str] | None = None) -> int:
    argv = _join_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
    except VerificationFailed as exc:
        if exc.payload is not None:
            _emit(exc.payload)
        return _fail("VerificationFailed", "a check exceeded its tolerance or an exact identity failed", 1)
    except UsageError as exc:
        return _fail("UsageError", str(exc), 2)
    except (TriangulationError, PathNotFound, heis.RankDeficient, qdilog.PoleHit, qdilog.NonConvergent, opcalc.SupportOverflow, opcalc.AliasRisk) as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
