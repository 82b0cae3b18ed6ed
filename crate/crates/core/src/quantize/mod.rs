//! Codebooks, nearest-codeword assignment, distortion estimates and Lloyd training.

mod codebook;
mod distortion;
mod init;
mod lloyd;
mod local;
mod similarity;
mod train;

pub use codebook::Codebook;
pub use distortion::{
    assign, distortion, distortion_on_samples, DistortionMode, ErrorEstimate, ErrorMethod,
};
pub use init::{grid_points, init_seed, InitStrategy};
pub use lloyd::{lloyd, LloydConfig, LloydInput, LloydResult};
pub use local::{allocate_levels, compose_local, hessian_modulus};
pub use similarity::{Nearest, Prepared, Similarity, TIE_TOL};
pub use train::{train, train_from, TrainConfig, TrainResult};
