//! Staged tree classifiers for categorical data.
//!
//! A staged tree classifier is an event tree over `(C, X_1, ..., X_p)` with the
//! class at the root whose vertices are partitioned into stages sharing a
//! conditional distribution. The crate covers model construction, structure
//! learning, conversion of Bayesian network classifiers, independence
//! read-out and evaluation.

pub mod bn;
pub mod classify;
pub mod data;
pub mod error;
pub mod estimate;
pub mod experiment;
pub mod independence;
pub mod io;
pub mod learn;
pub mod model;
pub mod ordering;
pub mod synth;

pub use error::{Error, Result};
