//! Gaussian-Bernoulli RBMs trained by stochastic maximum likelihood, with an
//! approximated mutual-information criterion for choosing when to stop.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod classify;
pub mod data;
pub mod encode;
pub mod error;
pub mod infomax;
pub mod math;
pub mod model;
pub mod oracle;
pub mod params;
pub mod pipeline;
pub mod rng;
pub mod toy;
pub mod train;
pub mod verify;

pub use checkpoint::{CheckpointId, CheckpointSource, CheckpointStore, MemoryCheckpoints};
pub use error::{GrbmError, Result};
pub use infomax::{AmiTrace, MutualInfoReport, StopCriterion, StopDecision};
pub use params::{GradientEstimate, GrbmParams};
pub use train::{Algorithm, Reconstruction, EpochRecord, SparsityConfig, TrainConfig, TrainOutcome, TrainSession};
pub use classify::{CvGrid, CvPoint, CvReport, LinearSvmModel};
pub use data::{Dataset, ImageSet, PreprocessModel, ToyGmmSpec};
pub use encode::{EncoderConfig, EncodingScheme};
