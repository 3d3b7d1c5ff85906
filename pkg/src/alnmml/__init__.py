"""alnmml: minimum-message-length models of pairwise protein alignments.

The package measures the Shannon information content of alignment
benchmarks under time-parameterised Markov substitution models, converts
legacy log-odds scoring matrices into such models, and infers optimal
matrices, divergence times and time-dependent Dirichlet distributions by
lossless-compression model selection.
"""

from .types import (
    AMINO_ACIDS,
    AlignmentRecord,
    DirichletParams,
    IndelModel,
    ModelBundle,
    StochasticMatrix,
    TimeBinnedDirichlets,
    TransitionParams,
    derive_full_transitions,
    three_state_stationary,
)
from .mml import (
    dirichlet_fisher_det,
    dirichlet_log_density,
    lattice_constant,
    log_gamma,
    mml_multinomial_estimate,
    msglen_alpha,
    msglen_simplex_vector_uniform_prior,
    msglen_theta_given_alpha,
    multinomial_fisher_det,
    trigamma,
)
from .markov import (
    MatrixPowerCache,
    ScoringMatrix,
    column_convergence_curve,
    conditional_to_logodds,
    expected_change,
    find_base_matrix,
    kl_divergence,
    logodds_to_conditional,
    matrix_power,
    stationary_distribution,
)
from .encoding import (
    EncodingReport,
    fit_indel_model,
    msglen_alignment_states,
    msglen_indel_model,
    msglen_matrix,
    msglen_sequences_given_alignment,
    msglen_time,
    total_message_length,
)
from .inference import (
    SearchConfig,
    fit_bin_dirichlets,
    fit_matrix_sa,
    fit_to_fixed_matrix,
    infer_time,
    perturb_dirichlet,
    rng_stream,
    run_em,
    sample_dirichlet,
)
from .benchmark import (
    BenchmarkStats,
    compute_stats,
    default_dirichlets,
    generate_synthetic,
    parse_benchmark,
    random_base_matrix,
    sequence_identity,
    serialize_benchmark,
)

__version__ = "0.1.0"
