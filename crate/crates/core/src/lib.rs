//! Causal direction discovery from the convergence-time asymmetry of small
//! regression networks.
//!
//! [`cca::score_pair`] trains a network to predict `y` from `x` and another to
//! predict `x` from `y`, and compares how many steps each needs to reach a
//! held-out error threshold. The other modules supply the networks
//! ([`mlp`]), synthetic data ([`dgp`]), structure learning ([`graph`]),
//! benchmark handling ([`tuebingen`]) and seeded random streams ([`rng`]).

pub mod cca;
pub mod dgp;
pub mod error;
pub mod graph;
pub mod mlp;
pub mod rng;
pub mod tuebingen;

pub use error::{Error, Result};

// Compiles and runs the code in the book chapters as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/mechanisms.md")]
    mod mechanisms {}
    #[doc = include_str!("../../../book/src/structure.md")]
    mod structure {}
    #[doc = include_str!("../../../book/src/reproducibility.md")]
    mod reproducibility {}
    #[doc = include_str!("../../../book/src/benchmark.md")]
    mod benchmark {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
