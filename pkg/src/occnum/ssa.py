"""Gillespie direct-method sampling of the jump process on the untruncated lattice.

Trajectory ``k`` draws from its own Philox stream keyed by ``(seed, k)``, so the
histogram does not depend on how trajectories are split across workers.
"""

from __future__ import annotations

import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numba
import numpy as np

from .cme import displacement
from .model import ModelSpec
from .solver import SCHEMA_VERSION, DiagonalDistribution

_BLOCK = 256


@numba.njit(cache=True, nogil=True)
def _run(state, t, t_end, coef, destroy, create, disp, uniforms):
    """Advance ``state`` in place; returns ``(t, used, finished)``.

    Stops early (``finished == False``) when the uniform buffer runs out.
    """
    n_jumps, n_modes = destroy.shape
    rates = np.empty(n_jumps)
    used = 0
    while True:
        total = 0.0
        for a in range(n_jumps):
            r = coef[a]
            for j in range(n_modes):
                n = state[j]
                for i in range(destroy[a, j]):
                    r *= n - i
                for i in range(1, create[a, j] + 1):
                    r *= n + i
            if r < 0.0:
                r = 0.0
            rates[a] = r
            total += r
        if total <= 0.0:
            return t_end, used, True
        if used + 2 > uniforms.shape[0]:
            return t, used, False
        t += -np.log1p(-uniforms[used]) / total
        if t > t_end:
            return t_end, used + 1, True
        target = uniforms[used + 1] * total
        used += 2
        acc = 0.0
        chosen = n_jumps - 1
        for a in range(n_jumps):
            acc += rates[a]
            if target < acc:
                chosen = a
                break
        for j in range(n_modes):
            state[j] += disp[chosen, j]


@dataclass
class EmpiricalDistribution:
    counts: Counter = field(default_factory=Counter)
    n_trajectories: int = 0
    seed: int = 0

    def probabilities(self) -> dict[tuple[int, ...], float]:
        return {k: v / self.n_trajectories for k, v in self.counts.items()}

    def to_csv(self, n_modes: Optional[int] = None) -> str:
        keys = sorted(self.counts)
        m = n_modes if n_modes is not None else (len(keys[0]) if keys else 0)
        head = ",".join(f"n{i + 1}" for i in range(m))
        lines = [f"# schema_version={SCHEMA_VERSION}", f"{head},count"]
        lines += [",".join(map(str, k)) + f",{self.counts[k]}" for k in keys]
        return "\n".join(lines) + "\n"


def _stream(seed: int, k: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(int(seed) << 64) | int(k)))


class _Compiled:
    def __init__(self, spec: ModelSpec):
        m = spec.n_modes
        self.coef = np.array([2.0 * op.coefficient ** 2 for op in spec.jumps])
        self.destroy = np.zeros((len(spec.jumps), m), dtype=np.int64)
        self.create = np.zeros((len(spec.jumps), m), dtype=np.int64)
        for a, op in enumerate(spec.jumps):
            d, c = op.powers(m)
            self.destroy[a] = d
            self.create[a] = c
        self.disp = np.array(
            [displacement(op, m) for op in spec.jumps], dtype=np.int64
        ).reshape(len(spec.jumps), m)

    def trajectory(self, init, t_end, seed, k):
        state = np.array(init, dtype=np.int64)
        if t_end == 0 or len(self.coef) == 0:
            return tuple(int(x) for x in state)
        rng = _stream(seed, k)
        t = 0.0
        block = _BLOCK
        while True:
            buf = rng.random(block)
            t, _, done = _run(state, t, t_end, self.coef, self.destroy, self.create,
                              self.disp, buf)
            if done:
                return tuple(int(x) for x in state)
            block = min(block * 2, 1 << 16)


def _workers(requested: Optional[int]) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("OCCNUM_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def sample_trajectories(
    spec: ModelSpec,
    init: Sequence[int],
    t: float,
    count: int,
    seed: int,
    workers: Optional[int] = None,
) -> EmpiricalDistribution:
    """Histogram of the state at time ``t`` over ``count`` independent trajectories.

    ``workers`` defaults to ``OCCNUM_THREADS`` or the CPU count; the result is
    identical for any worker count.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if t < 0:
        raise ValueError("t must be non-negative")
    if not 0 <= seed < 2 ** 64:
        raise ValueError("seed must be in [0, 2**64)")
    init = [int(x) for x in init]
    if len(init) != spec.n_modes or min(init) < 0:
        raise ValueError("initial state must be non-negative with one entry per mode")
    compiled = _Compiled(spec)

    def chunk(lo, hi):
        return Counter(compiled.trajectory(init, float(t), seed, k) for k in range(lo, hi))

    n_workers = min(_workers(workers), count)
    bounds = np.linspace(0, count, n_workers + 1).astype(int)
    if n_workers == 1:
        parts = [chunk(0, count)]
    else:
        with ThreadPoolExecutor(n_workers) as pool:
            parts = list(pool.map(chunk, bounds[:-1], bounds[1:]))
    total = Counter()
    for part in parts:
        total.update(part)
    return EmpiricalDistribution(total, count, seed)


def tv_distance(emp: EmpiricalDistribution, exact) -> float:
    """``1/2 sum |p_hat(n) - p(n)|`` over the union of both supports.

    ``exact`` is a :class:`DiagonalDistribution` or another empirical histogram.
    """
    a = emp.probabilities()
    if isinstance(exact, EmpiricalDistribution):
        b = exact.probabilities()
    elif isinstance(exact, DiagonalDistribution):
        b = exact.as_dict()
    else:
        b = dict(exact)
    if len({len(k) for k in list(a) + list(b)}) > 1:
        raise ValueError("mode counts differ")
    return 0.5 * sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in set(a) | set(b))
