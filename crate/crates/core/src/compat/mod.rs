//! Exact embeddings of other polynomial model families as ladder networks.

mod fm;
mod kernel;
mod tt;

pub use fm::{from_fm2, FM2Model};
pub use kernel::{from_poly_kernel, KernelModel};
pub use tt::{to_tensor_train, to_tensor_train_output, tt_contract, TTCore};
