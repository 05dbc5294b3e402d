"""Federated learning over client data streams with bounded memories.

Simulates mass-weighted federated averaging where each client sees a stream
of samples through a small cache, supports pluggable memory rules and sample
weight schemes, tracks every sample's realized relative importance, and
minimizes a convex risk surrogate to choose how much importance historical
clients should keep.
"""

from ._kernels import USING_NUMBA
from .bound import (
    BoundCoefficients,
    ConvergenceError,
    EstimatedConstants,
    emit_bound_curves,
    estimate_c_ratio,
    estimate_constants,
    even_split_sizes,
    minimize_psi,
    project_simplex,
    psi,
    psi_subgradient,
    strategy_importance,
    write_curves_csv,
)
from .memory import MemoryRule, MemoryState, index_set, new_memory, update
from .model import (
    DomainSpec,
    Example,
    LossSpec,
    batch_losses,
    in_domain,
    l2_ball,
    logistic_loss_spec,
    loss_grad,
    loss_value,
    project,
    squared_loss_spec,
    two_point_box,
    two_point_erm_minimizer,
    two_point_erm_value,
    two_point_loss_spec,
    weighted_grad,
)
from .streams import (
    ClientStream,
    CountingProcessSpec,
    Purpose,
    RawSamples,
    SyntheticData,
    SyntheticSpec,
    arrival_count,
    constant_rate,
    generate_synthetic,
    load_csv_corpus,
    next_batch,
    poisson_arrivals,
    realized_arrivals,
    scheduled_arrivals,
    single_pulse,
    split_indices,
    substream,
)
from .trainer import (
    ClientSetup,
    TrainConfig,
    TrainResult,
    estimate_sigma_bar_sq,
    evaluate,
    local_update,
    minibatch_gradient,
    run,
    select_round_clients,
    weighted_erm_minimum,
)
from .weighting import (
    RoundTrace,
    WeightScheme,
    client_importance,
    coefficient_matrix,
    effective_sample_size,
    explicit_table,
    importance_to_client_weights,
    inverse_residence,
    per_client_stationary,
    round_mass_share,
    round_weights,
    sample_importance,
    sample_weight,
    unit_weights,
    write_trace_csv,
)

__version__ = "0.1.0"
