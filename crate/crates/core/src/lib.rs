//! Confidence labels and projective losses for learning with noisy labels.
//!
//! The crate is organised bottom-up:
//!
//! * [`numeric`]: matrices, a feed-forward classifier with hand-written
//!   backpropagation, SGD and a finite-difference gradient oracle;
//! * [`labels`]: similarity groups and the confidence labels built from them;
//! * [`losses`]: projection, log-projection and pCE losses plus CE/L1/MSE;
//! * [`noising`]: symmetric and asymmetric label corruption with a trusted subset;
//! * [`data`]: synthetic paired clusters and the CIFAR-10 binary reader;
//! * [`trainer`]: mini-batch training with plateau LR scheduling;
//! * [`gradcheck`]: gradient verification across all loss kinds.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! below fix the scalar to `f64`, the precision every tolerance in the test
//! suite is stated for.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod json;
pub mod labels;
pub mod losses;
pub mod noising;
pub mod numeric;
pub mod rng;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix = numeric::Matrix<f64>;
pub type MlpParams = numeric::MlpParams<f64>;
pub type PredictionVector = numeric::PredictionVector<f64>;
pub type ConfidenceLabel = labels::ConfidenceLabel<f64>;
pub type SimilarityGroup = labels::SimilarityGroup<f64>;
pub type LabelBook = labels::LabelBook<f64>;
pub type LossSpec = losses::LossSpec<f64>;
pub type LossResult = losses::LossResult<f64>;
pub type NoisedDataset = noising::NoisedDataset<f64>;
pub type LabeledSet = data::LabeledSet<f64>;
pub type DatasetBundle = data::DatasetBundle<f64>;
pub type TrainOutcome = trainer::TrainOutcome<f64>;

/// Single-precision aliases.
pub mod f32 {
    pub type Matrix = crate::numeric::Matrix<f32>;
    pub type MlpParams = crate::numeric::MlpParams<f32>;
    pub type ConfidenceLabel = crate::labels::ConfidenceLabel<f32>;
    pub type LabelBook = crate::labels::LabelBook<f32>;
    pub type LossSpec = crate::losses::LossSpec<f32>;
    pub type NoisedDataset = crate::noising::NoisedDataset<f32>;
    pub type DatasetBundle = crate::data::DatasetBundle<f32>;
}
