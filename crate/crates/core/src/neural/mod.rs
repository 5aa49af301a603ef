//! Per-pixel reflectance decoder: Fourier light embedding feeding a small
//! ELU network, trained with Adam on absolute error.

pub mod fourier;
pub mod mlp;
pub mod train;

pub use fourier::FourierMatrix;
pub use mlp::{architecture, MlpWeights, Real};
pub use train::{train, train_with_progress, EpochRecord, SamplePermutation, TrainConfig};
