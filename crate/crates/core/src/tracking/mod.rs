//! Prediction of remote-UAV motion between exchanges and bounds on the
//! resulting beam-angle errors.

pub mod bounding;
pub mod frames;
pub mod gp;
pub mod msi;

pub use bounding::{bound_tracking_error, estimate_from_samples, sample_link_angles, AngleEstimate, LinkEnds, LinkEstimate};
pub use frames::{array_rotation, body_rotation, direction_angles, geometric_angles, Mount, Pose};
pub use gp::{prediction_error_band, FitOptions, GpDump, GpHyper, GpModel, GpPrediction};
pub use msi::{component_series, training_set, GpSettings, MsiComponent, MsiDistribution, MsiPredictor};
