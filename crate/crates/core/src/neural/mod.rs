//! Dense multilayer perceptrons with exact per-sample gradients.

mod grad;
mod loss;
mod net;
mod train;

pub(crate) use grad::backward_into;
pub use grad::{mean_gradient, per_sample_gradients, sample_gradient, sgd_step, GradientSet};
pub(crate) use loss::bce;
pub use loss::{loss, LossKind, LossSpec, Target, Targets, PROB_EPS};
pub(crate) use net::argmax;
pub use net::{init_net, Activation, Dense, DenseNet, Forward, Trace};
pub use train::{shuffled_batches, train_epochs, TrainConfig};
