"""Deterministic layer: mean-field drift, ODE integration, and a numeric check of
the complex-coordinate decomposition of a vector field into ``H`` and ``R_a`` terms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .cme import displacement
from .model import ModelSpec, builtin_model

BLOWUP = 1e12


class BlowUpError(ArithmeticError):
    pass


@dataclass(frozen=True)
class DriftPolynomial:
    """``sum coeff * prod_j n_j^e_j`` for one mode."""

    terms: tuple[tuple[float, tuple[int, ...]], ...]

    def __call__(self, n: Sequence[float]) -> float:
        n = np.asarray(n, dtype=float)
        return float(sum(c * np.prod(n ** np.asarray(e)) for c, e in self.terms))

    def __str__(self):
        parts = []
        for c, e in self.terms:
            mono = "*".join(f"n{j + 1}" + (f"^{k}" if k > 1 else "") for j, k in enumerate(e) if k)
            parts.append(f"{c:+.17g}" + (f"*{mono}" if mono else ""))
        return " ".join(parts) or "0"


def meanfield_rhs(spec: ModelSpec) -> list[DriftPolynomial]:
    """Leading-order drift: jump ``a`` adds ``d_a,i * 2 lam_a^2 * prod n_j^(p_j+q_j)`` to mode ``i``."""
    m = spec.n_modes
    acc: list[dict] = [dict() for _ in range(m)]
    for op in spec.jumps:
        destroy, create = op.powers(m)
        expo = tuple(p + q for p, q in zip(destroy, create))
        d = displacement(op, m)
        for i in range(m):
            if d[i]:
                acc[i][expo] = acc[i].get(expo, 0.0) + d[i] * 2 * op.coefficient ** 2
    return [
        DriftPolynomial(tuple((c, e) for e, c in sorted(a.items()) if c != 0)) for a in acc
    ]


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray   # (len(times), M)

    def to_csv(self) -> str:
        from .solver import SCHEMA_VERSION

        m = self.states.shape[1]
        lines = [f"# schema_version={SCHEMA_VERSION}",
                 "t," + ",".join(f"n{i + 1}" for i in range(m))]
        for t, s in zip(self.times, self.states):
            lines.append(f"{t:.17g}," + ",".join(f"{x:.17g}" for x in s))
        return "\n".join(lines) + "\n"


def integrate_meanfield(
    spec: ModelSpec, n0: Sequence[float], t: float, n_samples: int = 101, rtol: float = 1e-9
) -> Trajectory:
    """Integrate the mean-field ODEs with adaptive RK45, sampled on a uniform grid."""
    n0 = np.asarray(n0, dtype=float)
    if n0.shape != (spec.n_modes,) or np.any(n0 < 0):
        raise ValueError("n0 must be non-negative with one entry per mode")
    if t < 0:
        raise ValueError("t must be non-negative")
    rhs = meanfield_rhs(spec)
    times = np.linspace(0.0, t, n_samples)
    if t == 0:
        return Trajectory(times[:1], n0[None, :].copy())

    def f(_, n):
        return [p(n) for p in rhs]

    def blowup(_, n):
        return BLOWUP - np.max(np.abs(n))

    blowup.terminal = True
    sol = solve_ivp(f, (0.0, t), n0, method="RK45", t_eval=times, rtol=rtol,
                    atol=1e-12, events=blowup)
    if sol.status == 1:
        raise BlowUpError(f"occupation exceeded {BLOWUP:g} at t={sol.t_events[0][0]:.6g}")
    if sol.status != 0:
        raise ArithmeticError(sol.message)
    return Trajectory(sol.t, sol.y.T.copy())


# -- decomposition check in complex coordinates --------------------------------

class ZPoly:
    """Polynomial in ``z_j`` and ``z_j*``: ``{(z_exps, zc_exps): coefficient}``."""

    def __init__(self, terms=None):
        self.terms = {k: complex(v) for k, v in (terms or {}).items() if v != 0}

    @classmethod
    def monomial(cls, coeff, z_exps, zc_exps):
        return cls({(tuple(z_exps), tuple(zc_exps)): coeff})

    def conj(self):
        return ZPoly({(zc, z): c.conjugate() for (z, zc), c in self.terms.items()})

    def d_conj(self, i):
        """Wirtinger derivative with respect to ``z_i*``."""
        out = {}
        for (z, zc), c in self.terms.items():
            if zc[i]:
                zc2 = list(zc)
                zc2[i] -= 1
                key = (z, tuple(zc2))
                out[key] = out.get(key, 0) + c * zc[i]
        return ZPoly(out)

    def scale(self, s):
        return ZPoly({k: c * s for k, c in self.terms.items()})

    def __call__(self, z):
        z = np.asarray(z, dtype=complex)
        zc = z.conj()
        total = 0j
        for (ze, zce), c in self.terms.items():
            total += c * np.prod(z ** np.asarray(ze)) * np.prod(zc ** np.asarray(zce))
        return total


@dataclass(frozen=True)
class Decomposition:
    hamiltonian: ZPoly
    jumps: tuple[ZPoly, ...]

    def field(self, z) -> np.ndarray:
        """``-i dH/dz_i* + sum_a (conj(R_a) dR_a/dz_i* - R_a d conj(R_a)/dz_i*)``."""
        z = np.asarray(z, dtype=complex)
        out = np.empty(len(z), dtype=complex)
        for i in range(len(z)):
            v = -1j * self.hamiltonian.d_conj(i)(z)
            for r in self.jumps:
                rb = r.conj()
                v += rb(z) * r.d_conj(i)(z) - r(z) * rb.d_conj(i)(z)
            out[i] = v
        return out


def decomposition_from_spec(spec: ModelSpec) -> Decomposition:
    """Classical counterparts: ``a_j -> z_j``, ``a_j^+ -> z_j*``, ``H = sum omega_j z_j* z_j``."""
    m = spec.n_modes
    h = {}
    for j, w in enumerate(spec.frequencies or ()):
        e = tuple(1 if k == j else 0 for k in range(m))
        h[(e, e)] = w
    jumps = []
    for op in spec.jumps:
        destroy, create = op.powers(m)
        jumps.append(ZPoly.monomial(op.coefficient, destroy, create))
    return Decomposition(ZPoly(h), tuple(jumps))


DEFAULT_PARAMS = {
    "oscillator": (1.3, 0.7),
    "lvm": (0.8, 1.1),
    "cannibal": (0.9, 1.4),
}


def direct_field(model: str, params: Sequence[float]):
    """Right-hand side of the original complex equations of motion for a built-in model."""
    if model == "oscillator":
        mu, omega = params

        def f(z):
            return np.array([-1j * omega * z[0] + mu * z[0] - 2 * z[0] * abs(z[0]) ** 2])
    elif model == "lvm":
        l1, l2 = params

        def f(z):
            return np.array([
                l1 ** 2 * z[0] - z[0] * abs(z[1]) ** 2,
                -(l2 ** 2) * z[1] + z[1] * abs(z[0]) ** 2,
            ])
    elif model == "cannibal":
        l1, l2 = params
        a, b = 2 * l2 ** 2, 2 * l1 ** 2

        def f(z):
            return np.array([
                (a - b) / 2 * z[0] * abs(z[1]) ** 2,
                (b - a) / 2 * z[1] * abs(z[0]) ** 2,
            ])
    else:
        raise ValueError(f"no direct field for model {model!r}")
    return f


def random_points(n_modes: int, count: int, seed: int = 0, radius: float = 3.0) -> np.ndarray:
    """``count`` points with every component uniform in the disk ``|z| <= radius``."""
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.random((count, n_modes)))
    theta = 2 * np.pi * rng.random((count, n_modes))
    return r * np.exp(1j * theta)


def faq_residual(
    model: str,
    points: Optional[Sequence[Sequence[complex]]] = None,
    seed: int = 0,
    params: Optional[Sequence[float]] = None,
    decomposition: Optional[Decomposition] = None,
    n_points: int = 100,
) -> float:
    """Max ``|direct field - decomposed field|`` over points and components.

    The decomposition defaults to the one read off the built-in model's jump
    operators; pass ``decomposition`` to check a modified one.
    """
    params = tuple(params) if params is not None else DEFAULT_PARAMS[model]
    spec = builtin_model(model, params)
    if decomposition is None:
        decomposition = decomposition_from_spec(spec)
    if points is None:
        points = random_points(spec.n_modes, n_points, seed)
    points = np.asarray(points, dtype=complex).reshape(-1, spec.n_modes)
    if len(points) == 0:
        raise ValueError("at least one evaluation point is required")
    f = direct_field(model, params)
    return float(max(np.max(np.abs(f(z) - decomposition.field(z))) for z in points))
