//! Dynamic stochastic block models with finitely many edge states.
//!
//! The crate covers three workflows:
//!
//! * [`simulate`]: sample latent Markov node chains and the edge snapshots
//!   they generate;
//! * [`inference`]: variational EM estimation for homogeneous and
//!   inhomogeneous chains, with restarts and label alignment;
//! * [`identify`]: executable identifiability checks, namely the conditional
//!   edge-assignment matrix and its rank, hypothesis reports, and
//!   constructive parameter recovery from exact distributions.
//!
//! ```
//! use dynsbm::{presets::Scenario, simulate::sample_network};
//!
//! let params = Scenario::Scenario2.params();
//! let sim = sample_network(&params, 30, 7).unwrap();
//! assert_eq!(sim.network.n_times(), 3);
//! ```

// Index loops over state pairs mirror the formulas they implement.
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod identify;
pub mod inference;
pub mod labels;
pub mod likelihood;
pub mod markov;
pub mod network;
pub mod params;
pub mod presets;
pub mod simulate;

pub use error::{Error, Result};
pub use labels::{permute_labels, LabelPermutation};
pub use network::{LatentStates, ObservedNetwork};
pub use params::{EdgeTensor, ModelParams, Transitions, ValidationReport};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    mod estimation {}
    #[doc = include_str!("../../../book/src/identification.md")]
    mod identification {}
    #[doc = include_str!("../../../book/src/recovery.md")]
    mod recovery {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
