//! Ladder polynomial neural networks.
//!
//! Each layer computes `h^ℓ = (W^ℓ h^{ℓ-1} + b^ℓ) ⊙ (V^ℓ x)`, so the network
//! output is a polynomial in the input `x` that is linear in every single
//! weight matrix. The crate covers training, exact analysis along lines,
//! Lipschitz bounds, Gaussian moment propagation and constructive
//! embeddings of polynomial kernels, factorization machines and tensor trains.

pub mod analysis;
pub mod bayes;
pub mod cli;
pub mod compat;
pub mod dataio;
pub mod error;
pub mod experiment;
pub mod model_io;
pub mod network;
mod serde_rows;
pub mod train;

pub use error::{LpnnError, Result};
pub use network::{init_network, layer_forward, ActivationTrace, Head, InitConfig, LadderLayer, LadderNetwork};
