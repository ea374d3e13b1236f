"""Exact numerics on a compiled master equation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.csgraph as csgraph
import scipy.sparse.linalg as spla
from scipy import stats

from .cme import SparseGenerator, TruncatedLattice

SCHEMA_VERSION = 1

# Negative entries down to this are rounding noise and get clamped.
NEGATIVE_CLAMP = -1e-12
GTH_MAX = 600  # closed classes up to this size use dense GTH, larger ones sparse LU


class SolverError(RuntimeError):
    """Numerical failure: singular solve, non-convergence, invalid result."""


class ErgodicityError(SolverError):
    """The generator has more than one closed communicating class."""

    def __init__(self, components):
        self.components = components
        sizes = ", ".join(str(len(c)) for c in components)
        super().__init__(
            f"stationary distribution is not unique: {len(components)} closed classes "
            f"(sizes {sizes})"
        )


@dataclass(frozen=True)
class DiagonalDistribution:
    lattice: TruncatedLattice
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        if p.shape != (self.lattice.size,):
            raise ValueError("probability vector does not match lattice size")
        if p.min(initial=0.0) < NEGATIVE_CLAMP:
            raise SolverError(f"probability {p.min():.3e} below clamp threshold")
        if p.min(initial=0.0) < 0:
            p = np.clip(p, 0.0, None)
            p = p / p.sum()
        if abs(p.sum() - 1.0) > 1e-10:
            raise SolverError(f"probabilities sum to {p.sum():.15g}")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    @classmethod
    def point(cls, lattice: TruncatedLattice, state: Sequence[int]) -> "DiagonalDistribution":
        p = np.zeros(lattice.size)
        p[lattice.index(state)] = 1.0
        return cls(lattice, p)

    def prob(self, state: Sequence[int]) -> float:
        try:
            return float(self.p[self.lattice.index(state)])
        except KeyError:
            return 0.0

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {tuple(int(x) for x in s): float(v) for s, v in zip(self.lattice.states, self.p)}

    def boundary_mass(self) -> float:
        """Probability on states touching a box cap; a truncation-quality indicator."""
        if self.lattice.manifold is not None:
            return 0.0
        return float(self.p[self.lattice.on_boundary()].sum())

    def to_csv(self) -> str:
        m = self.lattice.n_modes
        head = ",".join(f"n{i + 1}" for i in range(m))
        lines = [f"# schema_version={SCHEMA_VERSION}", f"{head},probability"]
        for s, v in zip(self.lattice.states, self.p):
            lines.append(",".join(str(int(x)) for x in s) + f",{v:.17g}")
        return "\n".join(lines) + "\n"


def _closed_classes(q: sp.spmatrix) -> list[np.ndarray]:
    adj = (q != 0).astype(np.int8)
    adj.setdiag(0)
    # edge m -> n exists when Q[n, m] > 0, i.e. adjacency is Q transposed
    graph = adj.T.tocsr()
    n_comp, labels = csgraph.connected_components(graph, directed=True, connection="strong")
    leaves = np.ones(n_comp, dtype=bool)
    coo = graph.tocoo()
    cross = labels[coo.row] != labels[coo.col]
    leaves[labels[coo.row[cross]]] = False
    return [np.flatnonzero(labels == c) for c in np.flatnonzero(leaves)]


def _gth(q: np.ndarray) -> np.ndarray:
    """Grassmann-Taksar-Heyman elimination for an irreducible dense generator.

    Subtraction free, so small probabilities keep full relative accuracy.
    """
    n = q.shape[0]
    w = q.T.copy()          # w[i, j] = rate(i -> j)
    np.fill_diagonal(w, 0.0)
    s = np.zeros(n)
    for k in range(n - 1, 0, -1):
        s[k] = w[k, :k].sum()
        w[:k, :k] += np.outer(w[:k, k], w[k, :k]) / s[k]
    x = np.zeros(n)
    x[0] = 1.0
    for k in range(1, n):
        x[k] = x[:k] @ w[:k, k] / s[k]
    return x / x.sum()


def stationary(gen: SparseGenerator) -> DiagonalDistribution:
    """Solve ``Q p = 0``, ``sum p = 1`` on the unique closed class.

    Classes up to ``GTH_MAX`` states use GTH elimination; larger ones use sparse LU
    with one balance row swapped for normalization. Transient states get zero mass.
    """
    q = gen.matrix.tocsr()
    size = gen.dimension
    if size == 1:
        return DiagonalDistribution(gen.lattice, np.ones(1))
    classes = _closed_classes(q)
    if len(classes) > 1:
        raise ErgodicityError(classes)
    if len(classes[0]) <= GTH_MAX:
        p = np.zeros(size)
        keep = np.sort(classes[0])
        p[keep] = _gth(q[keep][:, keep].toarray())
        dist = DiagonalDistribution(gen.lattice, p)
        resid = np.abs(gen.matrix @ dist.p).max()
        if resid > 1e-10 * max(gen.max_rate, 1.0):
            raise SolverError(f"stationary residual {resid:.3e} too large")
        return dist
    a = q.tolil()
    a[size - 1, :] = np.ones(size)
    rhs = np.zeros(size)
    rhs[-1] = 1.0
    try:
        lu = spla.splu(a.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"singular stationary system: {exc}") from exc
    p = lu.solve(rhs)
    # one round of iterative refinement on the replaced-row system
    p = p + lu.solve(rhs - a.tocsr() @ p)
    if not np.all(np.isfinite(p)):
        raise SolverError("non-finite stationary solution")
    dist = DiagonalDistribution(gen.lattice, p / p.sum())
    resid = np.abs(gen.matrix @ dist.p).max()
    if resid > 1e-10 * max(gen.max_rate, 1.0):
        raise SolverError(f"stationary residual {resid:.3e} too large")
    return dist


def stationary_residual(gen: SparseGenerator, dist: DiagonalDistribution) -> float:
    return float(np.abs(gen.matrix @ dist.p).max())


def _poisson_weights(lt: float, tail: float):
    if lt == 0:
        return 0, np.ones(1)
    hi = int(stats.poisson.isf(tail / 2, lt)) + 1
    lo = max(int(stats.poisson.ppf(tail / 2, lt)) - 1, 0)
    k = np.arange(lo, hi + 1)
    return lo, stats.poisson.pmf(k, lt)


def evolve(
    gen: SparseGenerator, p0: DiagonalDistribution, t: float, tail: float = 1e-12
) -> DiagonalDistribution:
    """Transient solution ``exp(Q t) p0`` by uniformization.

    With ``L = max |Q_mm|`` and ``P = I + Q / L``, ``p(t) = sum_k Pois(k; L t) P^k p0``;
    the Poisson series is cut where at most ``tail`` mass is discarded.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if p0.lattice is not gen.lattice and p0.lattice.size != gen.dimension:
        raise ValueError("initial distribution lives on a different lattice")
    rate = float(-gen.matrix.diagonal().min()) if gen.dimension else 0.0
    if t == 0 or rate == 0:
        return DiagonalDistribution(gen.lattice, p0.p.copy())
    lt = rate * t
    lo, w = _poisson_weights(lt, tail)
    step = (sp.identity(gen.dimension, format="csr") + gen.matrix.tocsr() / rate)
    v = p0.p.copy()
    for _ in range(lo):
        v = step @ v
    out = w[0] * v
    for wk in w[1:]:
        v = step @ v
        out += wk * v
    out = np.where((out < 0) & (out > NEGATIVE_CLAMP), 0.0, out)
    total = out.sum()
    if abs(total - 1.0) > 10 * tail + 1e-13:
        raise SolverError(f"uniformization lost mass: {1 - total:.3e}")
    return DiagonalDistribution(gen.lattice, out / total)


@dataclass(frozen=True)
class MomentSet:
    mean: np.ndarray
    second: np.ndarray      # E[n_i n_j]
    variance: np.ndarray
    rel_fluct: np.ndarray   # sqrt(var) / mean, nan where mean == 0

    def to_json(self) -> str:
        def clean(x):
            return [None if (isinstance(v, float) and math.isnan(v)) else v for v in x]

        return json.dumps(
            {
                "schema_version": SCHEMA_VERSION,
                "mean": [float(v) for v in self.mean],
                "second": [[float(v) for v in row] for row in self.second],
                "variance": [float(v) for v in self.variance],
                "rel_fluct": clean([float(v) for v in self.rel_fluct]),
            },
            indent=2,
        )


def moments(dist: DiagonalDistribution) -> MomentSet:
    n = dist.lattice.states.astype(float)
    p = dist.p
    mean = p @ n
    second = (n * p[:, None]).T @ n
    var = np.clip(np.diag(second) - mean ** 2, 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(mean > 0, np.sqrt(var) / np.where(mean > 0, mean, 1.0), np.nan)
    return MomentSet(mean, second, var, rel)


def gf_eval(dist: DiagonalDistribution, u: Sequence[float]) -> float:
    """``G(u) = sum_n p_n prod_i u_i^n_i``."""
    u = np.asarray(u, dtype=float).reshape(-1)
    if u.size != dist.lattice.n_modes:
        raise ValueError("point dimension does not match mode count")
    return float(dist.p @ np.prod(u[None, :] ** dist.lattice.states, axis=1))


def gf_derivatives(dist: DiagonalDistribution, u: float) -> tuple[float, float, float]:
    """``(G, G', G'')`` of a one-mode distribution as exact factorial-weighted sums."""
    if dist.lattice.n_modes != 1:
        raise ValueError("single-mode distribution required")
    n = dist.lattice.states[:, 0].astype(float)
    p = dist.p
    g = p @ np.power(u, n)
    d1 = np.where(n >= 1, n * np.power(u, np.maximum(n - 1, 0)), 0.0)
    d2 = np.where(n >= 2, n * (n - 1) * np.power(u, np.maximum(n - 2, 0)), 0.0)
    return float(g), float(p @ d1), float(p @ d2)


def gf_ode_residual(dist: DiagonalDistribution, mu: float, u_points: Sequence[float]) -> float:
    """Max of ``|(1+u) G'' - mu u G' - mu G|`` over ``u_points`` (oscillator stationary GF)."""
    worst = 0.0
    for u in u_points:
        g, d1, d2 = gf_derivatives(dist, u)
        worst = max(worst, abs((1 + u) * d2 - mu * u * d1 - mu * g))
    return worst


@dataclass(frozen=True)
class MomentIdentities:
    r_a: float
    r_b: float
    ratio: float            # n2 / (1 + n1)
    ratio_expected: float   # lam1^2 / lam2^2 (nan if lam2 == 0)


def moment_identity_residuals(
    dist: DiagonalDistribution, lam1: float, lam2: float
) -> MomentIdentities:
    """Residuals of the two stationary LVM moment relations.

    ``r_a = lam1^2 (1 + <n1>) - <n1> - <n1 n2>`` and
    ``r_b = -lam2^2 <n2> + <n1> + <n1 n2>``.
    """
    if dist.lattice.n_modes != 2:
        raise ValueError("two-mode distribution required")
    m = moments(dist)
    n1, n2 = m.mean
    cross = m.second[0, 1]
    l1s, l2s = lam1 ** 2, lam2 ** 2
    ra = l1s * (1 + n1) - n1 - cross
    rb = -l2s * n2 + n1 + cross
    expected = l1s / l2s if l2s > 0 else math.nan
    return MomentIdentities(float(ra), float(rb), float(n2 / (1 + n1)), expected)


def detailed_balance_residual(gen: SparseGenerator, dist: DiagonalDistribution) -> float:
    """Max relative violation of ``p_m Q[n,m] = p_n Q[m,n]`` over all connected pairs."""
    q = gen.matrix.tocoo()
    off = q.row != q.col
    r, c, v = q.row[off], q.col[off], q.data[off]
    qt = gen.matrix.tocsr()
    back = np.asarray(qt[c, r]).ravel()
    flow = dist.p[c] * v
    rev = dist.p[r] * back
    scale = np.maximum(np.maximum(flow, rev), 1e-300)
    return float(np.max(np.abs(flow - rev) / scale)) if len(flow) else 0.0


def tv_between(a: DiagonalDistribution, b: DiagonalDistribution) -> float:
    da, db = a.as_dict(), b.as_dict()
    return 0.5 * sum(abs(da.get(k, 0.0) - db.get(k, 0.0)) for k in set(da) | set(db))
