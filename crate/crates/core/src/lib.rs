//! Codebook-based millimeter-wave beam tracking for multi-UAV networks whose
//! nodes carry cylindrical conformal arrays of sectored (directional)
//! elements.
//!
//! The crate is layered bottom-up: [`array`] geometry and gains, the
//! hierarchical [`codebook`], the LoS [`channel`] and its metrics, UAV
//! [`mobility`], GP-based [`tracking`] with Monte-Carlo error bounds,
//! codeword selection and subarray partitioning in [`beamtrack`], and the
//! frame-level simulator in [`sim`].

pub mod array;
pub mod beamtrack;
pub mod channel;
pub mod codebook;
pub mod error;
pub mod mobility;
pub mod sim;
pub mod tracking;

pub use error::{Error, Result};
