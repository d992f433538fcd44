"""Command line front end.

    spiderchain <validate|analyze|km-check|factorize|darboux|simulate> --input input.json --out dir/

Every command writes ``report.json`` (plus data files) into ``--out`` and
prints the report to stdout.  Exit codes: 0 success, 1 check failure,
2 validation error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .chain_model import SpiderParams, validate
from .errors import NotStochastic, SpiderChainError, ValidationError, Violation
from .factorization import darboux_potential, thresholds, ul_factorize, verify_product
from .km_spectral import gram, km_block
from .oracle import compare, distribution_row, power_block, simulate, state_label
from .quadrature import gauss_rule
from .spider_rw import (
    RWParams,
    rw_atoms,
    rw_classify,
    rw_darboux,
    rw_density,
    rw_thresholds,
    support,
)
from .stieltjes import convergents

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_INVALID = 2
EXIT_IO = 3

DEFAULTS = {
    "nodes": 512,
    "levels": 100,
    "seed": 0,
    "paths": 1_000_000,
    "steps": 5,
    "workers": 1,
    "max_level": 3,
    "max_steps": 12,
    "gram_degree": 8,
    "samples": 200,
}
DEFAULT_TOL = {
    "validate": 1e-12,
    "analyze": 1e-12,
    "km-check": 1e-8,
    "factorize": 1e-12,
    "darboux": 1e-8,
    "simulate": 0.005,
}


class InputError(Exception):
    def __init__(self, kind: str, detail: str):
        self.kind = kind
        super().__init__(detail)


def matrix_json(M) -> dict:
    M = np.asarray(M)
    if np.iscomplexobj(M):
        data = [[float(v.real), float(v.imag)] for v in M.ravel()]
    else:
        data = [float(v) for v in M.ravel()]
    return {"rows": int(M.shape[0]), "cols": int(M.shape[1]), "data": data}


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Fraction):
        return float(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(payload) -> str:
    return json.dumps(payload, indent=2, default=_plain)


def parse_beta(text: str | None, chain):
    if text is None or text == "thresholds":
        return np.array(thresholds(chain).values), "thresholds"
    try:
        values = [float(Fraction(v.strip())) for v in text.split(",")]
    except (ValueError, ZeroDivisionError) as exc:
        raise InputError("BadArgument", f"cannot parse --beta {text!r}") from exc
    return np.array(values), "explicit"


def load_chain_file(path: str) -> SpiderParams:
    p = Path(path)
    if not p.is_file():
        raise InputError("InputNotFound", f"no such file: {path}")
    try:
        data = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError("InputUnreadable", str(exc)) from exc
    try:
        return SpiderParams.from_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError([Violation("ShapeError", "input", f"malformed chain description: {exc!r}")]) from exc


class Run:
    """Shared state of one command invocation."""

    def __init__(self, args):
        self.args = args
        self.out = Path(args.out)
        self.report = {
            "command": args.command,
            "version": __version__,
            "input": args.input,
            "defaults": {**DEFAULTS, "tol": DEFAULT_TOL[args.command]},
            "options": self.options(),
        }

    def options(self) -> dict:
        a = self.args
        return {
            "nodes": a.nodes,
            "levels": a.levels,
            "seed": a.seed,
            "paths": a.paths,
            "steps": a.steps,
            "workers": a.workers,
            "max_level": a.max_level,
            "max_steps": a.max_steps,
            "tol": self.tol,
            "beta": a.beta,
        }

    @property
    def tol(self) -> float:
        return self.args.tol if self.args.tol is not None else DEFAULT_TOL[self.args.command]

    @property
    def rule(self):
        return gauss_rule(self.args.nodes)

    def write_json(self, name: str, payload) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(dumps(payload) + "\n")

    def write_csv(self, name: str, header, rows) -> None:
        self.out.mkdir(parents=True, exist_ok=True)
        with open(self.out / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    def finish(self, status: int) -> int:
        self.report["exit_code"] = status
        try:
            self.write_json("report.json", self.report)
        except OSError as exc:
            print(json.dumps({"error": "OutputUnwritable", "detail": str(exc)}), file=sys.stderr)
            return EXIT_IO
        print(dumps(self.report))
        return status


def _constant(chain):
    return RWParams.from_chain(chain) if chain.is_constant else None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_validate(run: Run, chain) -> int:
    run.report["valid"] = True
    run.report["N"] = chain.N
    run.write_json("chain.json", chain.params.to_dict())
    return EXIT_OK


def cmd_analyze(run: Run, chain) -> int:
    rep = run.report
    L = run.args.levels
    rep["potential_0"] = matrix_json(chain.potential(0))
    run.write_json("chain.json", chain.params.to_dict())
    run.write_json(
        "blocks.json",
        [
            {"level": n, **{k: matrix_json(getattr(chain.blocks(n), k)) for k in "ABC" if getattr(chain.blocks(n), k) is not None}}
            for n in range(L + 1)
        ],
    )
    run.write_json(
        "potentials.json",
        [{"level": n, "diagonal": chain.potential_diagonal(n).tolist()} for n in range(L + 1)],
    )
    conv = {}
    for m in range(1, chain.N + 1):
        st = convergents(chain, m, 2 * L)
        conv[str(m)] = {
            "values": st.values.tolist(),
            "hypothesis_holds": st.hypothesis_holds,
            "first_failure": st.first_failure,
        }
    run.write_json("convergents.json", conv)
    try:
        th = thresholds(chain)
        rep["thresholds"] = {"values": list(th.values), "feasible": th.feasible, "method": "convergents"}
    except SpiderChainError as exc:
        rep["thresholds"] = {"error": type(exc).__name__, "detail": str(exc)}

    params = _constant(chain)
    rep["constant"] = params is not None
    if params is None:
        return EXIT_OK
    lo, hi = support(params)
    rep["support"] = [lo, hi]
    rep["classification"] = rw_classify(params).value
    closed = rw_thresholds(params)
    rep["thresholds_closed_form"] = {"values": list(closed.values), "feasible": closed.feasible, "method": closed.method}
    atoms = rw_atoms(params, strict=False)
    run.write_json(
        "atoms.json",
        [
            {"location": float(atom.location), "coefficient": float(atom.coefficient), "direction": atom.direction.tolist(), "mass": matrix_json(atom.mass)}
            for atom in atoms.atoms
        ],
    )
    rep["atom_locations"] = [float(atom.location) for atom in atoms.atoms]
    K = run.args.samples
    xs = lo + (hi - lo) * (np.arange(K) + 0.5) / K
    N = chain.N
    header = ["x"] + [f"W{i + 1}{j + 1}" for i in range(N) for j in range(N)]
    run.write_csv("density.csv", header, ([float(x)] + rw_density(params, float(x)).ravel().tolist() for x in xs))
    return EXIT_OK


def cmd_km_check(run: Run, chain) -> int:
    args = run.args
    rows = []
    worst = 0.0
    rule = run.rule
    for i in range(args.max_level + 1):
        for j in range(args.max_level + 1):
            for n in range(args.max_steps + 1):
                L = max(i, j) + n + 1
                err = float(np.max(np.abs(km_block(chain, None, i, j, n, rule=rule) - power_block(chain, L, n, i, j))))
                rows.append((i, j, n, L, err))
                worst = max(worst, err)
    run.write_csv("km_check.csv", ["i", "j", "n", "L", "max_abs_error"], rows)
    run.report["max_error"] = worst
    run.report["passed"] = worst < run.tol
    return EXIT_OK if worst < run.tol else EXIT_CHECK


def _factorize(run: Run, chain):
    beta, source = parse_beta(run.args.beta, chain)
    run.report["beta"] = beta.tolist()
    run.report["beta_source"] = source
    try:
        return ul_factorize(chain, beta, L=run.args.levels)
    except NotStochastic as exc:
        run.report["passed"] = False
        run.report["witness"] = exc.as_dict()
        return None


def cmd_factorize(run: Run, chain) -> int:
    pair = _factorize(run, chain)
    if pair is None:
        return EXIT_CHECK
    residual = verify_product(chain, pair, run.args.levels)
    run.report["residual"] = residual
    run.report["frozen_from"] = list(pair.frozen)
    run.report["passed"] = residual < run.tol
    rows = [(m,) + row for m in range(1, chain.N + 1) for row in pair.leg_table(m)]
    run.write_csv("factors.csv", ["leg", "depth", "x", "y", "r", "s"], rows)
    return EXIT_OK if residual < run.tol else EXIT_CHECK


def cmd_darboux(run: Run, chain) -> int:
    pair = _factorize(run, chain)
    if pair is None:
        return EXIT_CHECK
    params = _constant(chain)
    if params is not None:
        dchain = rw_darboux(params, pair.beta[1:], L=run.args.levels)
    else:
        from .factorization import darboux

        dchain = darboux(chain, pair)
    rep = run.report
    t0 = dchain.blocks(0)
    rep["B0"] = matrix_json(t0.B)
    rep["A0"] = matrix_json(t0.A)
    rep["d"] = matrix_json(dchain.extra_transitions())
    rep["potential_0"] = matrix_json(darboux_potential(chain, pair, 0))
    rows = [np.concatenate([t0.B, t0.A], axis=1).sum(axis=1)]
    for n in range(1, run.args.levels):
        t = dchain.blocks(n)
        rows.append((t.C + t.B + t.A).sum(axis=1))
    rep["row_sum_error"] = float(np.max(np.abs(np.concatenate(rows) - 1.0)))
    if dchain.weight is None:
        rep["gram_check"] = None
        return EXIT_OK if rep["row_sum_error"] < 1e-12 else EXIT_CHECK
    zero = [a for a in dchain.weight.atoms if a.location == 0.0]
    rep["mass_at_zero"] = matrix_json(zero[0].mass)
    deg = run.args.gram_degree
    off = diag = 0.0
    for n in range(deg + 1):
        for m in range(deg + 1):
            G = gram(dchain, dchain.weight, n, m, rule=run.rule)
            if n == m:
                diag = max(diag, float(np.max(np.abs(G @ dchain.potential(n) - np.eye(chain.N)))))
            else:
                off = max(off, float(np.max(np.abs(G))))
    rep["gram_check"] = {"degree": deg, "max_offdiagonal": off, "max_norm_error": diag}
    ok = off < run.tol and diag < run.tol and rep["row_sum_error"] < 1e-12
    rep["passed"] = ok
    return EXIT_OK if ok else EXIT_CHECK


def cmd_simulate(run: Run, chain) -> int:
    args = run.args
    start = tuple(int(v) for v in args.start.split(","))
    emp = simulate(chain, start=start, steps=args.steps, paths=args.paths, seed=args.seed, workers=args.workers)
    exact = distribution_row(chain, start, args.steps)
    cmp = compare(emp, exact, chain.N)
    freq = emp.as_vector(chain.N, len(exact))
    N = chain.N
    rows = [
        (k // N, k % N, state_label(N, k // N, k % N), int(round(freq[k] * emp.paths)), freq[k], exact[k], cmp.z_scores[k])
        for k in range(len(exact))
        if exact[k] > 0 or freq[k] > 0
    ]
    run.write_csv("empirical.csv", ["level", "phase", "state", "count", "empirical", "exact", "z"], rows)
    run.report["comparison"] = cmp.as_dict()
    ok = cmp.passes(tv_tol=run.tol)
    run.report["passed"] = ok
    return EXIT_OK if ok else EXIT_CHECK


COMMANDS = {
    "validate": cmd_validate,
    "analyze": cmd_analyze,
    "km-check": cmd_km_check,
    "factorize": cmd_factorize,
    "darboux": cmd_darboux,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spiderchain", description="Spectral analysis of spider birth-death chains.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--input", required=True, help="chain description (JSON)")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--beta", help="comma separated beta_1..beta_N, or 'thresholds'")
    parser.add_argument("--seed", type=int, default=DEFAULTS["seed"])
    parser.add_argument("--nodes", type=int, default=DEFAULTS["nodes"], help="quadrature nodes")
    parser.add_argument("--levels", type=int, default=DEFAULTS["levels"], help="truncation / factorization depth")
    parser.add_argument("--tol", type=float, help="pass/fail tolerance (command specific default)")
    parser.add_argument("--paths", type=int, default=DEFAULTS["paths"])
    parser.add_argument("--steps", type=int, default=DEFAULTS["steps"])
    parser.add_argument("--workers", type=int, default=DEFAULTS["workers"])
    parser.add_argument("--start", default="0,0", help="start state as level,phase")
    parser.add_argument("--max-level", type=int, default=DEFAULTS["max_level"])
    parser.add_argument("--max-steps", type=int, default=DEFAULTS["max_steps"])
    parser.add_argument("--gram-degree", type=int, default=DEFAULTS["gram_degree"])
    parser.add_argument("--samples", type=int, default=DEFAULTS["samples"], help="density samples")
    return parser


def _positive(args) -> list:
    bad = []
    for name in ("nodes", "levels", "paths", "workers", "samples"):
        if getattr(args, name) < 1:
            bad.append(name)
    for name in ("steps", "max_level", "max_steps", "gram_degree"):
        if getattr(args, name) < 0:
            bad.append(name)
    if args.tol is not None and not args.tol > 0:
        bad.append("tol")
    return bad


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    run = Run(args)
    bad = _positive(args)
    if bad:
        run.report["error"] = "BadArgument"
        run.report["detail"] = f"options must be positive: {', '.join(bad)}"
        return run.finish(EXIT_INVALID)
    try:
        chain = validate(load_chain_file(args.input))
    except InputError as exc:
        run.report["error"] = exc.kind
        run.report["detail"] = str(exc)
        run.finish(EXIT_IO)
        return EXIT_IO
    except ValidationError as exc:
        run.report["valid"] = False
        run.report["error"] = "ValidationError"
        run.report["violations"] = [v.as_dict() for v in exc.violations]
        return run.finish(EXIT_INVALID)
    try:
        status = COMMANDS[args.command](run, chain)
    except InputError as exc:
        run.report["error"] = exc.kind
        run.report["detail"] = str(exc)
        return run.finish(EXIT_INVALID)
    except SpiderChainError as exc:
        run.report["error"] = type(exc).__name__
        run.report["detail"] = str(exc)
        run.report["passed"] = False
        return run.finish(EXIT_CHECK)
    return run.finish(status)


if __name__ == "__main__":
    sys.exit(main())
