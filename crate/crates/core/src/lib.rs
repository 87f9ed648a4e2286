//! Diffusion-model posterior inference for high-dimensional MIMO channel
//! estimation.
//!
//! The crate is organized around the estimation pipeline:
//!
//! * [`channel`] — synthetic clustered MIMO channel generation and the
//!   spatial / angular / real-vector representations.
//! * [`dataset`] — the binary container format for channel sample sets.
//! * [`measurement`] — pilot matrices, the real measurement operator with a
//!   cached SVD, AWGN observations, and the few-bit mid-rise quantizer.
//! * [`diffusion`] — noise schedule, the convolutional noise-prediction
//!   network with hand-derived backpropagation, training, checkpoints, and
//!   unconditional reverse sampling.
//! * [`estimator`] — posterior channel estimation guided by a trained
//!   diffusion prior, for full-resolution and quantized observations.
//! * [`sure`] — two-stage training from noisy channel realizations via
//!   Stein's unbiased risk estimate.
//! * [`baselines`] — LS, sample-covariance LMMSE, and angular-domain LASSO.

pub mod baselines;
pub mod channel;
pub mod dataset;
pub mod diffusion;
pub mod estimator;
pub mod measurement;
pub mod numerics;
pub mod sure;

mod error;

pub use channel::{ChannelSample, ClusterModel, SystemConfig};
pub use dataset::Dataset;
pub use diffusion::{DenoiserNetwork, NoiseSchedule, TrainConfig};
pub use error::{Error, Result};
pub use estimator::EstimatorConfig;
pub use measurement::{
    MeasurementModel, Observation, ObservationKind, PilotKind, PilotMatrix, Quantizer,
};
pub use sure::{NoisyDataset, SureConfig};
