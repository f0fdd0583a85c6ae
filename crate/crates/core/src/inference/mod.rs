//! Variational EM estimation.
//!
//! The variational family makes node paths independent, each a Markov chain
//! of its own. [`e_step`] and [`m_step`] alternate coordinate ascent on the
//! evidence lower bound [`elbo`]; [`fit`] runs several restarts and keeps the
//! best bound.
//!
//! ```
//! use dynsbm::inference::{fit, FitConfig};
//! use dynsbm::{presets::Scenario, simulate::sample_network};
//!
//! let sim = sample_network(&Scenario::Scenario1.params(), 40, 3).unwrap();
//! let config = FitConfig { n_restarts: 3, ..FitConfig::new(2) };
//! let result = fit(&sim.network, &config).unwrap();
//! assert!(result.params_hat.validate().is_valid());
//! assert!(result.max_elbo_decrease() <= 1e-8);
//! ```

mod align;
mod engine;
mod fit;
mod state;

pub use align::{align_labels, alignment_cost, time_alignment, MAX_ALIGN_STATES};
pub use engine::{
    e_step, elbo, floor_edge_laws, m_step, EStepReport, EStepSettings, EmptyCell, MStepOutput,
    EDGE_FLOOR,
};
pub use fit::{
    fit, fit_from, initial_state, spectral_labels, FitConfig, FitResult, InitStrategy,
    RestartSummary,
};
pub use state::VariationalState;
