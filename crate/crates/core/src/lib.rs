//! Multi-source tensor fusion and sub-mode coordinate alignment for daily
//! stock movement prediction.
//!
//! The pipeline fuses quantitative, event and sentiment features of every
//! (stock, day) into a third-order tensor, decomposes each tensor with
//! Tucker, learns per-mode modification matrices that pull the subspaces
//! of similar tensors together, and classifies the reduced tensors with a
//! recurrent model.

pub mod error;
pub mod fusion;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod predictor;
pub mod smc;
pub mod tensor;
pub mod tucker;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use tensor::{Mode, Tensor3};
pub use tucker::{TuckerConfig, TuckerFactors};
