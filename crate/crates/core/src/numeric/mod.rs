//! Dense arithmetic, the feed-forward classifier, SGD and the finite-difference oracle.

mod finite_diff;
mod matrix;
mod mlp;
mod optim;
mod prob;

pub use finite_diff::{finite_diff_gradient, finite_diff_vector, params_relative_error, relative_error, STEP_RANGE};
pub use matrix::Matrix;
pub use mlp::{backward, backward_logits, forward, predict, Activation, ForwardCache, Layer, MlpParams};
pub use optim::sgd_step;
pub use prob::{softmax, PredictionVector};
