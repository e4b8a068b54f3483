//! Simultaneous non-Gaussian component analysis (SING) of two
//! subject-aligned datasets.
//!
//! Each dataset is double-centered and whitened, decomposed into maximally
//! non-Gaussian components with the Jarque–Bera contrast, and the two fits
//! are coupled through a chordal-distance penalty on their subject scores.

pub mod averaged;
pub mod baselines;
pub mod benchmark;
pub mod cli;
pub mod contrast;
pub mod data_model;
pub mod error;
pub mod io;
pub mod linalg;
pub mod lngca;
pub mod matching;
pub mod metrics;
pub mod preprocess;
pub mod simulate;
pub mod sing;

pub use data_model::{ComponentMatrix, DataMatrix, MixingMatrix, SignedPermutation, UnmixingMatrix};
pub use error::{Result, SingError};
