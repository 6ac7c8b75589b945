//! Full-duplex MIMO joint communications and sensing with a reconfigurable
//! intelligent surface.
//!
//! The crate synthesizes the RIS-assisted scene and its channels, runs the
//! alternating WMMSE / majorization-minimization design of the precoder and
//! the RIS phases under power, unit-modulus and CRB constraints, and checks
//! the resulting sensing accuracy with a MUSIC estimator.

pub mod channels;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod optimizer;
pub mod sensing_crb;
pub mod steering;

pub use channels::{build_channel_set, ChannelParams, ChannelSet};
pub use error::{JcasError, Result};
pub use geometry::{Scene, SceneConfig};
pub use optimizer::{jcas_optimize, OptimizerConfig, RisPhase};
pub use steering::{PathCoefficients, SensingContext};
