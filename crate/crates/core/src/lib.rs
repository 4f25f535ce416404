//! Conditional flow matching with Feynman-Kac particle steering.
//!
//! The crate trains small velocity (and optional score) networks on synthetic
//! densities, converts the learned deterministic flow into a
//! marginal-preserving SDE, and steers inference toward energy-tilted
//! terminal distributions by weighting and resampling particle ensembles.
//!
//! Module map:
//! - [`schedule`], [`path`], [`model`], [`coupling`], [`train`], [`ode`],
//!   [`checkpoint`]: conditional-path training and deterministic inference
//! - [`sde`]: score extraction and Euler-Maruyama sampling that preserves
//!   the flow's marginals
//! - [`steering`]: terminal-reward estimates, potential schedules,
//!   resampling, and the full steering loop plus the importance-sampling
//!   baseline
//! - [`potentials`]: orthant and tetrahedral-chirality energies
//! - [`bench`]: dataset generators, metrics, and experiment drivers
//! - [`samplers`], [`fields`], [`rng`], [`io`]: shared plumbing

pub mod bench;
pub mod checkpoint;
pub mod coupling;
pub mod error;
pub mod fields;
pub mod io;
pub mod model;
pub mod ode;
pub mod path;
pub mod potentials;
pub mod rng;
pub mod samplers;
pub mod schedule;
pub mod sde;
pub mod steering;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use error::{CoreError, Result};
pub use model::{Activation, ModelConfig, VelocityField, VelocityModel};
pub use path::{cfm_regression_loss, sample_conditional_path, PathSample};
pub use potentials::{ChiralCenter, Geometry, Handedness, Potential};
pub use schedule::{ot_schedule, ScheduleKind, ScheduleParams};
pub use sde::{NoiseSchedule, ScoreSource};
pub use steering::{
    effective_sample_size, fk_sample, importance_sample, multinomial_resample, EstimateOrder,
    FkOutput, ParticleEnsemble, PotentialSchedule, SteeringConfig,
};
pub use train::{train_flow, Coupling, PairSampler, TrainConfig, TrainResult};
