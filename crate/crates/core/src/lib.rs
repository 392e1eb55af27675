//! Continual-learning simulation over dependent task sequences.
//!
//! Tasks are generated by pushing task-1 inputs through a chain of
//! deterministic maps, predictors are trained by weighted replay,
//! distillation, or data-dependent reweighting, and the measured estimation
//! error is compared against explicit high-probability recovery bounds.
//!
//! Task indices `t` are 1-based throughout the public API; sample indices `i`
//! are 0-based.

pub mod bounds;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod learner;
pub mod memory;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod transforms;

pub use datagen::{InputDist, SampleStore, TaskSequenceSpec};
pub use error::{Error, Result};
pub use learner::TrainOutcome;
pub use memory::MemoryPolicy;
pub use models::{Family, ParameterSpace, Predictor};
pub use transforms::{DependencyChain, Transformation};
