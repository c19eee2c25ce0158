//! Constrained particle filtering for discretely observed Itô diffusions.
//!
//! The crate provides Euler–Maruyama simulation ([`sde`]), test models
//! ([`models`]), observation and constraint machinery ([`ssm`]), sampling
//! interfaces ([`kernel`]), the filters themselves ([`filters`]) and numerical
//! checks of their theory ([`analysis`]).

pub mod analysis;
pub mod error;
pub mod experiment;
pub mod filters;
pub mod kernel;
pub mod models;
pub mod rng;
pub mod sde;
pub mod ssm;

pub use error::{Error, Result};
