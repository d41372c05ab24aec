//! Generalized mixability for prediction with expert advice.
//!
//! The crate provides entropies on the simplex with their duals and Bregman
//! divergences, proper losses built from entropies, the generalized
//! aggregating algorithm, and a numerical estimator of the largest scale η at
//! which a loss is mixable with respect to an entropy.

pub mod arena;
pub mod cli;
pub mod entropy;
pub mod error;
pub mod gaa;
pub mod loss;
pub mod mixability;
pub mod search;
pub mod simplex;

pub use error::{Error, Result};
