"""Variational design of noisy multi-parameter quantum sensing protocols.

A density-matrix simulator for parametrized probe circuits under Kraus
noise, exact shift-rule gradients, Fisher-information bounds, and the
gradient-descent machinery to co-optimize probe preparation and measurement
against the weighted Cramér-Rao cost.
"""

from .channels import (
    ConvexChannel,
    KrausChannel,
    adjoint_apply,
    apply,
    dephasing,
    depolarizing,
    mixed_unitary,
)
from .circuits import (
    GateSpec,
    MetrologyModel,
    ParamCircuit,
    Povm,
    axis_rotation_gate,
    channel_gate,
    controlled_rx,
    encode,
    encoding_generators,
    fixed_gate,
    noisy_povm,
    prepare,
    probabilities,
    rotation_gate,
    state_vector,
)
from .errors import (
    ConfigError,
    DegenerateGeometryError,
    InternalConsistencyError,
    MetrologyError,
    UnsupportedGateError,
)
from .fisher import (
    CostConfig,
    FisherMatrix,
    Reparam,
    cfim,
    cost_gradient,
    crb_cost,
    crb_objective,
    qfim_pure,
    reparametrize,
    van_trees_expected_cfim,
    weighted_crb_cost,
)
from .gradients import (
    cfim_via_expectations,
    convex_channel_grad,
    derivative_operators,
    evaluation_count_audit,
    finite_diff_grad,
    phase_cfim,
    shift_grad_probs,
)
from .optimize import OptimizerConfig, OptTrace, descend, multi_restart, random_init
from .qalg import (
    DensityMatrix,
    HermitianOp,
    conjugate_evolve,
    embed_operator,
    expectation,
    pauli_matrix,
    pauli_rotation,
)

__version__ = "0.1.0"
