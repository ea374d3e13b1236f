"""Model definitions: jump operators, model specs, built-in models.

A model is a set of modes (integer occupation numbers) and a list of jump
operators.  Each jump operator is a monomial ``lam * prod(a_j^+^q_j a_j^p_j)``
in Bose creation/annihilation operators; ``lam`` is the monomial coefficient,
so the transition rate it induces is ``2 * lam**2 * |<n+d|monomial|n>|**2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import sympy

CREATE = "create"
DESTROY = "destroy"

BUILTIN_MODELS = ("oscillator", "lvm", "lvm_truncated", "cannibal")


class ModelError(ValueError):
    """Raised for an invalid model or invalid model parameters."""

    def __init__(self, message, errors=()):
        super().__init__(message)
        self.errors = list(errors)


@dataclass(frozen=True)
class Factor:
    """One factor ``create(mode, power)`` or ``destroy(mode, power)``."""

    mode: int
    kind: str
    power: int = 1


@dataclass(frozen=True)
class JumpOperator:
    coefficient: float
    factors: tuple[Factor, ...]

    def powers(self, n_modes: int) -> tuple[list[int], list[int]]:
        """Per-mode (destroy, create) exponents, summed over repeated factors."""
        destroy = [0] * n_modes
        create = [0] * n_modes
        for f in self.factors:
            target = create if f.kind == CREATE else destroy
            target[f.mode] += f.power
        return destroy, create


def jump(coefficient: float, *factors: tuple[int, str, int]) -> JumpOperator:
    """Shorthand: ``jump(1.0, (0, "destroy", 1), (1, "create", 1))``."""
    return JumpOperator(float(coefficient), tuple(Factor(m, k, p) for m, k, p in factors))


@dataclass(frozen=True)
class ModelSpec:
    name: str
    modes: tuple[str, ...]
    jumps: tuple[JumpOperator, ...]
    # Per-mode frequency omega; only used by the mean-field layer.
    frequencies: Optional[tuple[float, ...]] = field(default=None)

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def mode_index(self, name: str) -> int:
        return self.modes.index(name)

    def check(self) -> "ModelSpec":
        errors = validate(self)
        if errors:
            raise ModelError("; ".join(errors), errors)
        return self


def validate(spec: ModelSpec) -> list[str]:
    """Return a list of invariant violations; empty means the spec is valid."""
    errors = []
    if not spec.modes:
        errors.append("model has no modes")
    if len(set(spec.modes)) != len(spec.modes):
        errors.append("duplicate mode name")
    n = len(spec.modes)
    if spec.frequencies is not None:
        if len(spec.frequencies) != n:
            errors.append("frequencies length does not match mode count")
        elif not all(math.isfinite(w) for w in spec.frequencies):
            errors.append("non-finite frequency")
    for i, op in enumerate(spec.jumps):
        if not (math.isfinite(op.coefficient) and op.coefficient > 0):
            errors.append(f"jump {i}: non-positive coefficient")
        if not op.factors:
            errors.append(f"jump {i}: no factors")
        kinds: dict[int, set[str]] = {}
        for f in op.factors:
            if f.kind not in (CREATE, DESTROY):
                errors.append(f"jump {i}: unknown factor kind {f.kind!r}")
            if not (0 <= f.mode < n):
                errors.append(f"jump {i}: unknown mode index {f.mode}")
            if not isinstance(f.power, int) or f.power < 1:
                errors.append(f"jump {i}: exponent must be a positive integer")
            kinds.setdefault(f.mode, set()).add(f.kind)
        for mode, ks in sorted(kinds.items()):
            if len(ks) > 1:
                errors.append(f"jump {i}: mixed action on mode {mode}")
    return errors


def displacement_matrix(spec: ModelSpec) -> list[list[int]]:
    rows = []
    for op in spec.jumps:
        destroy, create = op.powers(spec.n_modes)
        rows.append([c - d for c, d in zip(create, destroy)])
    return rows


def conserved_totals(spec: ModelSpec) -> list[tuple[int, ...]]:
    """Integer basis of vectors ``c`` with ``c . d = 0`` for every jump displacement ``d``.

    Each vector is scaled to coprime integers with a positive leading entry.
    """
    m = spec.n_modes
    rows = displacement_matrix(spec)
    if not rows:
        basis = [sympy.Matrix([1 if i == j else 0 for i in range(m)]) for j in range(m)]
    else:
        basis = sympy.Matrix(rows).nullspace()
    out = []
    for vec in basis:
        den = math.lcm(*[int(sympy.Rational(x).q) for x in vec])
        ints = [int(sympy.Rational(x) * den) for x in vec]
        g = math.gcd(*ints)
        ints = [x // g for x in ints]
        lead = next(x for x in ints if x != 0)
        if lead < 0:
            ints = [-x for x in ints]
        out.append(tuple(ints))
    return out


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not (math.isfinite(value) and value > 0):
        raise ModelError(f"parameter {name} must be positive, got {value}")
    return value


def builtin_model(name: str, params: Sequence[float] = ()) -> ModelSpec:
    """Build one of the four reference models.

    Parameters
    ----------
    name : {"oscillator", "lvm", "lvm_truncated", "cannibal"}
    params : sequence of float
        oscillator: ``(mu, omega)`` with omega optional (default 0);
        lvm and cannibal: ``(lambda1, lambda2)``; lvm_truncated: none.
    """
    params = list(params)
    if name == "oscillator":
        if not 1 <= len(params) <= 2:
            raise ModelError("oscillator takes parameters (mu[, omega])")
        mu = _positive("mu", params[0])
        omega = float(params[1]) if len(params) > 1 else 0.0
        if not (math.isfinite(omega) and omega >= 0):
            raise ModelError(f"parameter omega must be non-negative, got {omega}")
        spec = ModelSpec(
            "oscillator",
            ("a",),
            (jump(math.sqrt(mu), (0, CREATE, 1)), jump(1.0, (0, DESTROY, 2))),
            (omega,),
        )
    elif name == "lvm":
        if len(params) != 2:
            raise ModelError("lvm takes parameters (lambda1, lambda2)")
        l1, l2 = _positive("lambda1", params[0]), _positive("lambda2", params[1])
        spec = ModelSpec(
            "lvm",
            ("prey", "predator"),
            (
                jump(l1, (0, CREATE, 1)),
                jump(l2, (1, DESTROY, 1)),
                jump(1.0, (0, DESTROY, 1), (1, CREATE, 1)),
            ),
        )
    elif name == "lvm_truncated":
        if params:
            raise ModelError("lvm_truncated takes no parameters")
        spec = ModelSpec(
            "lvm_truncated",
            ("prey", "predator"),
            (jump(1.0, (0, DESTROY, 1), (1, CREATE, 1)),),
        )
    elif name == "cannibal":
        if len(params) != 2:
            raise ModelError("cannibal takes parameters (lambda1, lambda2)")
        l1, l2 = _positive("lambda1", params[0]), _positive("lambda2", params[1])
        spec = ModelSpec(
            "cannibal",
            ("kin1", "kin2"),
            (
                jump(l1, (0, DESTROY, 1), (1, CREATE, 1)),
                jump(l2, (0, CREATE, 1), (1, DESTROY, 1)),
            ),
        )
    else:
        raise ModelError(f"unknown built-in model {name!r}; expected one of {BUILTIN_MODELS}")
    return spec.check()


def swap_modes(spec: ModelSpec, i: int, j: int) -> ModelSpec:
    """Relabel modes ``i`` and ``j`` (names stay in place)."""

    def remap(m):
        return j if m == i else i if m == j else m

    jumps = tuple(
        JumpOperator(op.coefficient, tuple(sorted(
            (Factor(remap(f.mode), f.kind, f.power) for f in op.factors),
            key=lambda f: (f.mode, f.kind),
        )))
        for op in spec.jumps
    )
    freqs = None
    if spec.frequencies is not None:
        freqs = list(spec.frequencies)
        freqs[i], freqs[j] = freqs[j], freqs[i]
        freqs = tuple(freqs)
    return ModelSpec(spec.name, spec.modes, jumps, freqs)


def _ceil(x: float) -> int:
    # coefficients are stored as sqrt(rate); squaring them back leaves ~1 ulp of noise
    return math.ceil(round(x, 9))


def default_caps(spec: ModelSpec) -> list[int]:
    """Per-mode box truncation used when the caller gives none.

    Oscillator: ``ceil(2 mu) + 30``; LVM: ``ceil(4 max(lam1^2, lam2^2)) + 30`` per
    mode; any other model uses the LVM rule over all of its jump coefficients.
    """
    rates = [op.coefficient ** 2 for op in spec.jumps] or [0.0]
    if spec.name == "lvm" and len(spec.jumps) == 3:
        rates = rates[:2]
    if spec.name == "oscillator" and spec.n_modes == 1:
        mu = max(
            (op.coefficient ** 2 for op in spec.jumps
             if any(f.kind == CREATE for f in op.factors)),
            default=0.0,
        )
        return [_ceil(2 * mu) + 30]
    return [_ceil(4 * max(rates)) + 30] * spec.n_modes
