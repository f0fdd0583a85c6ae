//! Identifiability: conditional matrices and their rank, checks of the
//! identification hypotheses, and constructive recovery of parameters from
//! exact laws of the observations.

pub mod conditional;
pub mod conditions;
pub mod hmm;
pub mod phi;
pub mod rank;
pub mod static_recovery;

pub use conditional::{
    build_conditional_matrix, build_conditional_matrix_with_budget, ConditionalMatrix, LexCodec,
    DEFAULT_BUDGET,
};
pub use conditions::{check_conditions, HypothesisEntry, IdentReport, Theorem, Verdict};
pub use hmm::{
    kron_power, recover_previous_transitions_via_hmm, recover_transitions_via_hmm, time_reversal,
    time_reversal_between, triple_product, HmmRecovery, Tensor3,
};
pub use phi::{
    build_phi, joint_consecutive_edge_distribution, recover_transitions_via_phi, PhiMatrix,
    PhiRecovery,
};
pub use rank::{
    draw_distinct_edge_laws, draw_spacing, generic_binary_bound, minimal_m_search,
    minimal_m_search_with, numerical_row_rank, rank_summary, RankSearchConfig, RankSummary,
    DEFAULT_REL_TOL,
};
pub use static_recovery::{
    assignment_probabilities, recover_static_params, StaticRecovery, DEFAULT_MATCH_TOL,
};
