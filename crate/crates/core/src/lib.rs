//! Exploration-driven adversarial learning.
//!
//! A momentum particle swarm ([`swarm`]) searches for a single additive
//! perturbation that maximizes a frozen classifier's error ([`adversary`]).
//! The [`game`] module trains the classifier ([`learner`]), runs the search,
//! and compares a clean model, the clean model under attack, and a model
//! retrained on perturbed data. [`data_io`] handles the datasets and image
//! export.

pub mod adversary;
pub mod data_io;
pub mod error;
pub mod game;
pub mod learner;
pub mod rng;
pub mod swarm;

pub use error::{DataError, Error, Result};
