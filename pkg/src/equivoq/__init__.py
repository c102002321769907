"""Optimal equivocation of cipher systems whose receiver must meet a distortion limit."""

__version__ = "0.1.0"

from .errors import ArgumentError, ConvergenceError, EquivoqError, InfeasibleError, ResourceError
from .prob import (
    JointPmf,
    Kernel,
    Pmf,
    binary_entropy,
    compose,
    conditional_entropy,
    entropy,
    kl_divergence,
    marginalize,
    mutual_information,
    product,
)
from .ratedist import (
    DistortionSpec,
    RdCurvePoint,
    blahut_arimoto_point,
    rd_curve,
    rd_function,
    rd_test_channel,
)
from .logloss import (
    LogLossPayoff,
    SoftStrategy,
    evaluate_payoff,
    expected_logloss,
    min_expected_logloss,
    posterior_strategy,
)
from .characterization import (
    AuxTriple,
    Equivocation,
    EquivocationResult,
    MembershipReport,
    SearchOptions,
    SecrecyConfig,
    check_membership,
    equivocation,
    equivocation_sweep,
    exhaustive_aux_search,
    joint_equivocation,
    objective_value,
    reconstruction_equivocation,
    source_equivocation,
)
from .oracle import (
    BlockCode,
    DisclosureMode,
    OracleReport,
    closed_form_equivocation,
    code_values,
    eavesdropper_value_general,
    eavesdropper_value_logloss,
    enumerate_codes,
    induced_joint,
    operational_value,
)
