"""Compile a model into a classical master equation on a truncated lattice.

Generator convention: ``dp/dt = Q @ p`` with ``Q[n, m] = rate(m -> n)`` for
``n != m`` and ``Q[m, m] = -sum of kept outgoing rates``, so every column sums
to zero.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .model import JumpOperator, ModelSpec


def _falling(n, p):
    out = np.ones_like(n, dtype=float)
    for i in range(p):
        out = out * (n - i)
    return out


def _rising(n, q):
    out = np.ones_like(n, dtype=float)
    for i in range(1, q + 1):
        out = out * (n + i)
    return out


def jump_rate(op: JumpOperator, state: Sequence[int]) -> float:
    """Rate ``2 lam^2 prod_j f_j(n_j)`` of jump ``op`` out of ``state``.

    ``f_j`` is the falling factorial ``n(n-1)...(n-p+1)`` for ``destroy^p`` and the
    rising factorial ``(n+1)...(n+q)`` for ``create^q``.
    """
    rates = jump_rates(op, np.asarray(state, dtype=np.int64)[None, :])
    return float(rates[0])


def jump_rates(op: JumpOperator, states: np.ndarray) -> np.ndarray:
    """Vectorized :func:`jump_rate` over an ``(S, M)`` integer array."""
    states = np.asarray(states)
    destroy, create = op.powers(states.shape[1])
    out = np.full(states.shape[0], 2.0 * op.coefficient ** 2)
    for j in range(states.shape[1]):
        n = states[:, j].astype(float)
        if destroy[j]:
            out *= _falling(n, destroy[j])
        if create[j]:
            out *= _rising(n, create[j])
    # falling factorial goes negative below vacuum only if n < 0, which is invalid anyway
    return np.where(out > 0, out, 0.0)


def displacement(op: JumpOperator, n_modes: int) -> np.ndarray:
    destroy, create = op.powers(n_modes)
    return np.array(create, dtype=np.int64) - np.array(destroy, dtype=np.int64)


def drift_exact(spec: ModelSpec, state: Sequence[int]) -> np.ndarray:
    """Exact conditional mean velocity ``sum_a rate_a(n) d_a``."""
    out = np.zeros(spec.n_modes)
    for op in spec.jumps:
        out += jump_rate(op, state) * displacement(op, spec.n_modes)
    return out


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class TruncatedLattice:
    """Lexicographically ordered integer states inside a box, optionally on a manifold.

    ``manifold`` is ``(c, total)``: only states with ``c . n == total`` are kept.
    """

    caps: tuple[int, ...]
    states: np.ndarray
    manifold: Optional[tuple[tuple[int, ...], int]] = None

    def __post_init__(self):
        self.states.setflags(write=False)
        strides = np.cumprod([1] + [c + 1 for c in self.caps[:0:-1]])[::-1]
        lookup = np.full(int(np.prod([c + 1 for c in self.caps])), -1, dtype=np.int64)
        lookup[self.states @ strides] = np.arange(len(self.states))
        object.__setattr__(self, "_strides", strides)
        object.__setattr__(self, "_lookup", lookup)

    @property
    def size(self) -> int:
        return len(self.states)

    @property
    def n_modes(self) -> int:
        return len(self.caps)

    def __len__(self):
        return self.size

    def index(self, state: Sequence[int]) -> int:
        """Ordinal of ``state``; raises ``KeyError`` if it is not on the lattice."""
        i = self.indices(np.asarray(state, dtype=np.int64)[None, :])[0]
        if i < 0:
            raise KeyError(tuple(state))
        return int(i)

    def indices(self, states: np.ndarray) -> np.ndarray:
        """Ordinals of many states; ``-1`` for states off the lattice."""
        states = np.asarray(states, dtype=np.int64)
        inside = np.all((states >= 0) & (states <= np.asarray(self.caps)), axis=1)
        out = np.full(len(states), -1, dtype=np.int64)
        out[inside] = self._lookup[states[inside] @ self._strides]
        return out

    def on_boundary(self) -> np.ndarray:
        """Mask of states touching a box cap (meaningless on a manifold lattice)."""
        return np.any(self.states == np.asarray(self.caps), axis=1)


def enumerate_states(
    spec_or_modes,
    caps: Optional[Sequence[int]] = None,
    manifold: Optional[tuple[Sequence[int], int]] = None,
) -> TruncatedLattice:
    """All states in the box ``0 <= n_j <= caps[j]`` (and on the manifold, if given).

    ``spec_or_modes`` is a :class:`ModelSpec` or a mode count.  With a manifold of
    non-negative weights and no caps, the caps implied by the manifold are used.
    """
    m = spec_or_modes.n_modes if isinstance(spec_or_modes, ModelSpec) else int(spec_or_modes)
    if manifold is not None:
        c, total = tuple(int(x) for x in manifold[0]), int(manifold[1])
        if len(c) != m:
            raise LatticeError("manifold vector length does not match mode count")
        manifold = (c, total)
        if caps is None:
            if any(x <= 0 for x in c):
                raise LatticeError("caps required for a manifold with non-positive weights")
            caps = [total // x if total >= 0 else -1 for x in c]
    if caps is None:
        raise LatticeError("caps required without a manifold")
    caps = tuple(int(x) for x in caps)
    if len(caps) != m:
        raise LatticeError("caps length does not match mode count")
    if any(x < 0 for x in caps):
        raise LatticeError("empty lattice: negative cap")
    grid = np.array(list(itertools.product(*[range(x + 1) for x in caps])), dtype=np.int64)
    grid = grid.reshape(-1, m)
    if manifold is not None:
        grid = grid[grid @ np.asarray(manifold[0]) == manifold[1]]
    if len(grid) == 0:
        raise LatticeError("empty lattice")
    return TruncatedLattice(caps, np.ascontiguousarray(grid), manifold)


@dataclass(frozen=True)
class SparseGenerator:
    matrix: sp.csc_matrix
    lattice: TruncatedLattice

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def max_rate(self) -> float:
        return float(abs(self.matrix).max()) if self.matrix.nnz else 0.0

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def triplets(self) -> str:
        """``row col rate`` lines for every stored entry, column-major."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.row, coo.col))
        return "".join(
            f"{r} {c} {v:.17g}\n" for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order])
        )


def build_generator(spec: ModelSpec, lattice: TruncatedLattice) -> SparseGenerator:
    """Assemble the master-equation generator on ``lattice``.

    Jumps whose target leaves the lattice are dropped together with their loss
    term (reflecting truncation), so columns still sum to zero.
    """
    states = lattice.states
    size = lattice.size
    rows, cols, vals = [], [], []
    diag = np.zeros(size)
    src = np.arange(size)
    for op in spec.jumps:
        rate = jump_rates(op, states)
        target = lattice.indices(states + displacement(op, spec.n_modes))
        keep = (target >= 0) & (rate > 0)
        rows.append(target[keep])
        cols.append(src[keep])
        vals.append(rate[keep])
        np.subtract.at(diag, src[keep], rate[keep])
    rows.append(src)
    cols.append(src)
    vals.append(diag)
    q = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    ).tocsc()
    q.sum_duplicates()
    q.eliminate_zeros()
    return SparseGenerator(q, lattice)
