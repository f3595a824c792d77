//! Capture-year inference for photographs from recognized faces.
//!
//! Each detected face contributes a recognition embedding and an age
//! posterior. Identities are matched against a gallery of prototypes under a
//! von Mises-Fisher likelihood, the joint assignment of faces to identities is
//! marginalized, and every assignment turns apparent ages into a posterior
//! over calendar years through the identities' birth years.

pub mod annotation;
pub mod assignment;
pub mod dating;
pub mod dist;
pub mod error;
pub mod evaluation;
pub mod gallery;
pub mod priors;
pub mod scene;
pub mod special;
pub mod synthetic;

pub use dist::{DiscreteDistribution, Embedding, YearSupport};
pub use error::{Error, Result};
