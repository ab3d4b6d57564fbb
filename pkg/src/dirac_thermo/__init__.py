"""Port-Lagrangian simulation of simple thermodynamic systems with constraints."""

from .errors import (
    ConstraintRankError,
    DerivativeMismatchError,
    DiracThermoError,
    DimensionError,
    KKTSingularError,
    LegendreInversionError,
    ModelDomainError,
    NewtonConvergenceError,
    NotDiracError,
)
from .linalg import (
    DiracCertificate,
    LinearDiracDescriptor,
    PresymplecticForm,
    Subspace,
    annihilator,
    certify_dirac,
    induced_dirac,
    membership_residual,
    orthogonal_complement,
    symmetric_pairing,
)
from .model import (
    PontryaginPoint,
    ThermoModel,
    VariationalConstraintMatrix,
    annihilator_of_CV,
    gradient_check,
    inverse_legendre,
    kinematic_residual,
    partial_legendre,
    variational_constraint,
    verify_derivatives,
)
from .dynamics import (
    CotangentPoint,
    GeneralizedEnergy,
    StepReport,
    TangentPoint,
    Trajectory,
    assemble_kkt,
    cotangent_residual,
    dirac_differential,
    dirac_residual,
    energy_balance_report,
    entropy_rate,
    simulate,
    step,
)
from .open_dynamics import (
    HeatSource,
    OpenModel,
    Port,
    external_power_decomposition,
    internal_entropy_production,
    open_rhs,
    open_simulate,
)
from .models import (
    BUILTINS,
    build_gas_piston,
    build_lcr,
    build_open_piston,
    build_piston_cylinder,
    piston_alpha,
)

__version__ = "0.1.0"
