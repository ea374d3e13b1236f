"""Master equations for integer-occupation open systems defined by monomial jump operators."""

from .analytic import (
    CannibalParams,
    PolynomialGF,
    cannibal_ratio,
    cannibal_stationary,
    evolve_coefficients,
    lvm_special_gf,
    oscillator_gf,
    oscillator_moments,
    phi,
    truncated_lvm_generator,
)
from .cme import (
    SparseGenerator,
    TruncatedLattice,
    build_generator,
    displacement,
    drift_exact,
    enumerate_states,
    jump_rate,
)
from .dsl import ParseError, parse_model, serialize_model
from .meanfield import faq_residual, integrate_meanfield, meanfield_rhs
from .model import (
    Factor,
    JumpOperator,
    ModelError,
    ModelSpec,
    builtin_model,
    conserved_totals,
    default_caps,
    validate,
)
from .solver import (
    DiagonalDistribution,
    MomentSet,
    evolve,
    gf_eval,
    gf_ode_residual,
    moment_identity_residuals,
    moments,
    stationary,
)
from .ssa import EmpiricalDistribution, sample_trajectories, tv_distance

__version__ = "0.1.0"
