"""``occnum`` command-line interface.

Exit codes: 0 success, 1 usage or model error, 2 numerical failure (including a
failed ``verify`` check).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analytic, cme, dsl, meanfield, solver, ssa
from .model import BUILTIN_MODELS, ModelError, builtin_model, conserved_totals, default_caps

USAGE_ERROR = 1
NUMERICAL_ERROR = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _ints(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _fmt(x):
    return f"{x:.17g}"


def _model_args(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--model", choices=BUILTIN_MODELS)
    src.add_argument("--file", type=Path, help=".occ model file")
    p.add_argument("--mu", type=float, help="oscillator pumping")
    p.add_argument("--omega", type=float, default=0.0, help="oscillator frequency")
    p.add_argument("--l1", type=float, help="lambda1 (lvm, cannibal)")
    p.add_argument("--l2", type=float, help="lambda2 (lvm, cannibal)")
    p.add_argument("--N", type=int, help="conserved total; restricts to that manifold")
    p.add_argument("--caps", type=_ints, help="per-mode truncation caps, comma separated")
    p.add_argument("--out", type=Path, help="output directory (default: standard output)")


def build_parser():
    parser = _Parser(prog="occnum", description="Master equations for integer-occupation "
                     "open systems with monomial jump operators.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("compile", help="dump generator triplets 'row col rate'")
    _model_args(p)
    p = sub.add_parser("stationary", help="stationary distribution as CSV")
    _model_args(p)
    p = sub.add_parser("evolve", help="transient distribution at time t as CSV")
    _model_args(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--init", type=_ints, required=True, help="initial state, e.g. 2,0")
    p = sub.add_parser("sample", help="Gillespie histogram at time t as CSV")
    _model_args(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--init", type=_ints, required=True)
    p.add_argument("--count", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, help="worker threads (default OCCNUM_THREADS)")
    p = sub.add_parser("moments", help="moments (stationary, or at --t from --init) as JSON")
    _model_args(p)
    p.add_argument("--t", type=float)
    p.add_argument("--init", type=_ints)
    p = sub.add_parser("meanfield", help="mean-field trajectory as CSV")
    _model_args(p)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--init", type=_floats, required=True)
    p.add_argument("--samples", type=int, default=101)
    p = sub.add_parser("verify", help="run the consistency checks and print a PASS/FAIL table")
    _model_args(p)
    p.add_argument("--seed", type=int, default=0)
    p = sub.add_parser("analytic", help="closed-form tables as CSV")
    p.add_argument("--table", choices=("oscillator-moments", "cannibal-ratio"), required=True)
    p.add_argument("--mu", type=_floats, default=[0.01, 1.0, 50.0])
    p.add_argument("--N", type=_ints, default=[2, 10, 50, 100, 200])
    p.add_argument("--kappa", type=_floats, default=[0.5])
    p.add_argument("--out", type=Path)
    return parser


# -- model and lattice resolution ----------------------------------------------

def _params(args):
    name = args.model
    if name == "oscillator":
        if args.mu is None:
            raise UsageError("--mu is required for the oscillator")
        return [args.mu, args.omega]
    if name in ("lvm", "cannibal"):
        if args.l1 is None or args.l2 is None:
            raise UsageError(f"--l1 and --l2 are required for {name}")
        return [args.l1, args.l2]
    return []


def load_spec(args):
    if args.file is not None:
        return dsl.parse_model(args.file.read_text(encoding="utf-8"))
    return builtin_model(args.model, _params(args))


def load_lattice(spec, args):
    if args.N is not None:
        positive = [c for c in conserved_totals(spec) if all(x > 0 for x in c)]
        if not positive:
            raise UsageError("--N given but the model has no positive conserved total")
        return cme.enumerate_states(spec, args.caps, (positive[0], args.N))
    if spec.name in ("lvm_truncated", "cannibal") and args.caps is None:
        raise UsageError(f"--N is required for {spec.name}")
    return cme.enumerate_states(spec, args.caps or default_caps(spec))


def _emit(args, filename, text):
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / filename).write_text(text, encoding="utf-8")


def _warn_truncation(dist):
    mass = dist.boundary_mass()
    if mass > 1e-10:
        print(f"warning: {mass:.3e} probability on the truncation boundary", file=sys.stderr)


# -- commands --------------------------------------------------------------------

def cmd_compile(args):
    spec = load_spec(args)
    gen = cme.build_generator(spec, load_lattice(spec, args))
    _emit(args, "generator.txt", gen.triplets())


def cmd_stationary(args):
    spec = load_spec(args)
    dist = solver.stationary(cme.build_generator(spec, load_lattice(spec, args)))
    _warn_truncation(dist)
    _emit(args, "stationary.csv", dist.to_csv())


def _transient(args, spec):
    lattice = load_lattice(spec, args)
    gen = cme.build_generator(spec, lattice)
    try:
        p0 = solver.DiagonalDistribution.point(lattice, args.init)
    except KeyError:
        raise UsageError(f"initial state {args.init} is not on the lattice") from None
    return solver.evolve(gen, p0, args.t)


def cmd_evolve(args):
    spec = load_spec(args)
    dist = _transient(args, spec)
    _warn_truncation(dist)
    _emit(args, "evolve.csv", dist.to_csv())


def cmd_sample(args):
    spec = load_spec(args)
    emp = ssa.sample_trajectories(spec, args.init, args.t, args.count, args.seed, args.workers)
    _emit(args, "sample.csv", emp.to_csv(spec.n_modes))


def cmd_moments(args):
    spec = load_spec(args)
    if args.t is not None:
        if args.init is None:
            raise UsageError("--init is required with --t")
        dist = _transient(args, spec)
    else:
        dist = solver.stationary(cme.build_generator(spec, load_lattice(spec, args)))
    _warn_truncation(dist)
    _emit(args, "moments.json", solver.moments(dist).to_json() + "\n")


def cmd_meanfield(args):
    spec = load_spec(args)
    traj = meanfield.integrate_meanfield(spec, args.init, args.t, args.samples)
    _emit(args, "meanfield.csv", traj.to_csv())


def cmd_analytic(args):
    lines = [f"# schema_version={solver.SCHEMA_VERSION}"]
    if args.table == "oscillator-moments":
        lines.append("mu,mean_exact,variance_exact,rel_fluct_exact,"
                     "mean_large_mu,variance_large_mu,mean_small_mu,variance_small_mu")
        for mu in args.mu:
            m = analytic.oscillator_moments(mu)
            row = [mu, m.mean, m.variance, m.rel_fluct, m.mean_large_mu, m.var_large_mu,
                   m.mean_small_mu, m.var_small_mu]
            lines.append(",".join(_fmt(x) for x in row))
        name = "oscillator_moments.csv"
    else:
        lines.append("N,kappa,ratio,ratio_direct")
        for kappa in args.kappa:
            for n in args.N:
                row = [_fmt(n), _fmt(kappa), _fmt(analytic.cannibal_ratio(n, kappa)),
                       _fmt(analytic.cannibal_ratio_direct(n, kappa))]
                lines.append(",".join(row))
        name = "cannibal_ratio.csv"
    _emit(args, name, "\n".join(lines) + "\n")


def cmd_verify(args):
    from .verify import run_checks

    spec = load_spec(args)
    lattice = load_lattice(spec, args)
    results = run_checks(spec, lattice, _params(args) if args.file is None else None,
                         seed=args.seed)
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  {'value':>12}  {'tolerance':>10}  result"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {r.value:12.3e}  {r.tolerance:10.1e}  "
                     f"{'PASS' if r.passed else 'FAIL'}")
    _emit(args, "verify.txt", "\n".join(lines) + "\n")
    return 0 if all(r.passed for r in results) else NUMERICAL_ERROR


COMMANDS = {
    "compile": cmd_compile,
    "stationary": cmd_stationary,
    "evolve": cmd_evolve,
    "sample": cmd_sample,
    "moments": cmd_moments,
    "meanfield": cmd_meanfield,
    "verify": cmd_verify,
    "analytic": cmd_analytic,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args) or 0
    except (UsageError, ModelError, cme.LatticeError, ValueError, OSError) as exc:
        print(f"occnum: error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (solver.SolverError, analytic.ConvergenceError, meanfield.BlowUpError,
            ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"occnum: numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


def main():
    sys.exit(run())
