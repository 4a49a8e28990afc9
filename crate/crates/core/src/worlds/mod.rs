//! Synthetic generative worlds: encoders of tunable disentanglement quality
//! over a [`FactorSpace`](crate::FactorSpace), shipped encoder families, and
//! the exact `x = min(y, s)` counterexample world.

mod encoder;
mod family;
mod theorem;

pub use encoder::{build_encoder, random_orthogonal, Encoder, EncoderSpec};
pub use family::{encoder_family, Family};
pub use theorem::{
    gap_grid, BayesClassifier, CounterexampleWorld, JointTable, MinMixing, PredictionMode,
};
