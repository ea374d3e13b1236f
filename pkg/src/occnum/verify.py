"""Consistency checks behind ``occnum verify``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import analytic, cme, dsl, meanfield, solver
from .model import ModelSpec


@dataclass(frozen=True)
class CheckResult:
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)


def _structural(spec, lattice, gen, dist):
    out = []
    scale = max(gen.max_rate, 1.0)
    out.append(CheckResult("generator column sums", float(np.abs(gen.column_sums()).max()) / scale,
                           1e-12))
    q = gen.matrix.tocoo()
    off = q.data[q.row != q.col]
    out.append(CheckResult("negative off-diagonal rates", max(0.0, -float(off.min(initial=0.0))),
                           0.0))
    out.append(CheckResult("stationary residual",
                           solver.stationary_residual(gen, dist) / scale, 1e-10))
    p0 = solver.DiagonalDistribution.point(lattice, lattice.states[lattice.size // 2])
    whole = solver.evolve(gen, p0, 0.5)
    split = solver.evolve(gen, solver.evolve(gen, p0, 0.3), 0.2)
    out.append(CheckResult("evolve mass conservation", abs(whole.p.sum() - 1.0), 1e-12))
    out.append(CheckResult("evolve semigroup (TV)", solver.tv_between(whole, split), 1e-9))
    same = dsl.parse_model(dsl.serialize_model(spec)) == spec
    out.append(CheckResult("dsl round trip", 0.0 if same else 1.0, 0.0))
    return out


def run_checks(
    spec: ModelSpec,
    lattice: cme.TruncatedLattice,
    params: Optional[Sequence[float]] = None,
    seed: int = 0,
) -> list[CheckResult]:
    """Run every check that applies to ``spec`` on ``lattice``.

    Model-specific checks need the built-in parameters in ``params``.
    """
    gen = cme.build_generator(spec, lattice)
    dist = solver.stationary(gen)
    results = _structural(spec, lattice, gen, dist)
    if params is None:
        return results
    name = spec.name
    if name in meanfield.DEFAULT_PARAMS:
        faq_params = params[:2] if name != "oscillator" else (params[0], params[1])
        results.append(CheckResult("faq decomposition residual",
                                   meanfield.faq_residual(name, seed=seed, params=faq_params),
                                   1e-12))
    if name == "oscillator":
        mu = params[0]
        m = solver.moments(dist)
        exact = analytic.oscillator_moments(mu)
        results += [
            CheckResult("gf normalization", abs(solver.gf_eval(dist, [1.0]) - 1.0), 1e-12),
            CheckResult("gf ode residual", solver.gf_ode_residual(dist, mu, [0.0, 0.5, 1.0]),
                        1e-8),
            CheckResult("mean vs series", abs(m.mean[0] / exact.mean - 1), 1e-6),
            CheckResult("variance vs series", abs(m.variance[0] / exact.variance - 1), 1e-6),
        ]
    elif name == "lvm":
        ident = solver.moment_identity_residuals(dist, *params)
        results += [
            CheckResult("moment identity a", abs(ident.r_a), 1e-6),
            CheckResult("moment identity b", abs(ident.r_b), 1e-6),
            CheckResult("n2/(1+n1) vs lam1^2/lam2^2",
                        abs(ident.ratio / ident.ratio_expected - 1), 1e-6),
        ]
    elif name == "lvm_truncated" and lattice.manifold is not None:
        n_total = lattice.manifold[1]
        if n_total >= 1:
            L = analytic.truncated_lvm_generator(n_total)
            # lattice is ordered by increasing n1, the monomial basis by decreasing n1
            q = gen.dense()[::-1, ::-1]
            results.append(CheckResult("generator equals 2 L", float(np.abs(q - 2 * L).max()),
                                       0.0))
        start = solver.DiagonalDistribution.point(lattice, lattice.states[-1])
        late = solver.moments(solver.evolve(gen, start, 20.0))
        results.append(CheckResult("prey extinct at late time", float(late.mean[0]), 1e-6))
    elif name == "cannibal":
        results.append(CheckResult("detailed balance", solver.detailed_balance_residual(gen, dist),
                                   1e-10))
        if lattice.manifold is not None and lattice.manifold[1] >= 1:
            gf = analytic.cannibal_stationary(
                analytic.CannibalParams.from_lambdas(lattice.manifold[1], *params))
            # lattice index i has n1 = i
            a = np.array([gf.A(int(s[0])) for s in lattice.states])
            results.append(CheckResult("stationary vs closed form",
                                       float(np.abs(a - dist.p).max()), 1e-10))
    return results
