//! Procedural generation of benchmark instances.
//!
//! Every generator is a pure function of `(catalog, parameters, rng)`. The
//! rng's provenance is stored on the instance, and the instance id is a hash
//! of the full content, so regenerating with the same seed reproduces the
//! same bytes.

mod batch;
mod generate;
mod shuffle;
mod types;

pub use batch::*;
pub use generate::*;
pub use shuffle::*;
pub use types::*;

use thiserror::Error;

use crate::catalog::CatalogError;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("insufficient catalog: {0}")]
    InsufficientCatalog(String),
    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("generator invariant violated: {0}")]
    Internal(String),
}

#[cfg(test)]
mod tests;
