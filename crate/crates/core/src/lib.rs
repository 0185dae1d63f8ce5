//! Reinforcement learning with perturbed rewards.
//!
//! Rewards pass through a confusion-matrix channel before reaching the
//! learner. The crate builds such channels, computes the corrected
//! (surrogate) rewards that undo them in expectation, estimates unknown
//! channels from data, and runs tabular learners on top.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below fix the common double-precision case.

// Negated comparisons deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod environments;
pub mod error;
pub mod estimator;
pub mod learners;
pub mod linalg;
pub mod mdp;
pub mod noise;
pub mod scalar;
pub mod surrogate;

pub use environments::{Environment, MdpEnv, Oracle, StepOutcome};
pub use error::{Error, Result};
pub use estimator::{EstimatedConfusion, EstimatorConfig, ObservationBuffer, StateDiscretizer};
pub use learners::{LearnerConfig, RewardMode, RunOutput, RunRecord, RunRngs};
pub use mdp::{MdpModel, Policy, QTable, ValueFunction};
pub use noise::{ConfusionMatrix, NoiseChannel, NoiseKind, NoiseSchedule, NoiseSpec};
pub use scalar::Real;
pub use surrogate::{Quantizer, RewardLevels, SurrogateTable};

pub type MdpModel64 = MdpModel<f64>;
pub type QTable64 = QTable<f64>;
pub type ValueFunction64 = ValueFunction<f64>;
pub type ConfusionMatrix64 = ConfusionMatrix<f64>;
pub type NoiseSpec64 = NoiseSpec<f64>;
pub type NoiseSchedule64 = NoiseSchedule<f64>;
pub type NoiseChannel64 = NoiseChannel<f64>;
pub type RewardLevels64 = RewardLevels<f64>;
pub type SurrogateTable64 = SurrogateTable<f64>;
pub type Quantizer64 = Quantizer<f64>;
pub type MdpEnv64 = MdpEnv<f64>;
pub type Oracle64 = Oracle<f64>;
pub type RunOutput64 = RunOutput<f64>;
pub type EstimatedConfusion64 = EstimatedConfusion<f64>;

pub type MdpModel32 = MdpModel<f32>;
pub type QTable32 = QTable<f32>;
pub type ConfusionMatrix32 = ConfusionMatrix<f32>;
