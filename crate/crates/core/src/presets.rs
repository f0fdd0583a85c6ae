//! Parameter sets used in the simulation studies.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::Error;
use crate::params::{EdgeTensor, ModelParams, Transitions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    /// Three states, six edge states, two time points, linearly independent
    /// edge laws.
    Scenario1,
    /// Same edge laws over four time points with three different transition
    /// matrices.
    Scenario1Inhomogeneous,
    /// Three states, three edge states, three time points, uniform start.
    Scenario2,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::Scenario1,
        Scenario::Scenario1Inhomogeneous,
        Scenario::Scenario2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Scenario1 => "scenario1",
            Scenario::Scenario1Inhomogeneous => "scenario1_inhomogeneous",
            Scenario::Scenario2 => "scenario2",
        }
    }

    pub fn params(self) -> ModelParams {
        match self {
            Scenario::Scenario1 => {
                ModelParams::time_stable(scenario1_pi(), sticky_rho(), scenario1_edges(), 2)
            }
            Scenario::Scenario1Inhomogeneous => ModelParams::new(
                scenario1_pi(),
                Transitions::Inhomogeneous(vec![sticky_rho(), rotating_rho(), uniform_rho()]),
                vec![scenario1_edges(); 4],
            ),
            Scenario::Scenario2 => {
                ModelParams::time_stable(vec![1.0 / 3.0; 3], sticky_rho(), scenario2_edges(), 3)
            }
        }
        .expect("preset shapes are consistent")
    }
}

/// Looks a preset up by name.
pub fn scenario_preset(name: &str) -> Result<ModelParams, Error> {
    name.parse::<Scenario>().map(Scenario::params)
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn scenario1_pi() -> Vec<f64> {
    vec![0.2, 0.33, 0.47]
}

fn sticky_rho() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.6, 0.2, 0.2, 0.2, 0.6, 0.2, 0.2, 0.2, 0.6])
}

fn rotating_rho() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[0.15, 0.15, 0.7, 0.7, 0.15, 0.15, 0.15, 0.7, 0.15])
}

fn uniform_rho() -> DMatrix<f64> {
    DMatrix::from_element(3, 3, 1.0 / 3.0)
}

// Tables are listed as bp11, bp22, bp33, bp12, bp13, bp23.
fn from_listing(listing: [[f64; 6]; 6], kappa: usize) -> EdgeTensor {
    let slot = |q: usize, l: usize| match (q, l) {
        (0, 0) => 0,
        (1, 1) => 1,
        (2, 2) => 2,
        (0, 1) => 3,
        (0, 2) => 4,
        _ => 5,
    };
    EdgeTensor::from_fn(3, kappa, |q, l| listing[slot(q, l)][..kappa].to_vec()).unwrap()
}

fn scenario1_edges() -> EdgeTensor {
    from_listing(
        [
            [0.2, 0.1, 0.1, 0.1, 0.1, 0.4],
            [0.2, 0.1, 0.1, 0.1, 0.4, 0.1],
            [0.2, 0.1, 0.1, 0.4, 0.1, 0.1],
            [0.2, 0.1, 0.4, 0.1, 0.1, 0.1],
            [0.2, 0.4, 0.1, 0.1, 0.1, 0.1],
            [0.4, 0.1, 0.1, 0.1, 0.1, 0.2],
        ],
        6,
    )
}

fn scenario2_edges() -> EdgeTensor {
    let pad = 0.0;
    from_listing(
        [
            [0.1, 0.55, 0.35, pad, pad, pad],
            [0.2, 0.45, 0.35, pad, pad, pad],
            [0.3, 0.35, 0.35, pad, pad, pad],
            [0.4, 0.25, 0.35, pad, pad, pad],
            [0.5, 0.15, 0.35, pad, pad, pad],
            [0.6, 0.05, 0.35, pad, pad, pad],
        ],
        3,
    )
}
