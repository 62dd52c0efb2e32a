//! Dense tensors with reverse-mode differentiation.
//!
//! A [`Graph`] records one forward pass. Model weights live in a
//! [`ParamStore`]; [`Graph::param`] copies them in as leaves, and after
//! [`Graph::backward`] the store picks the gradients up with
//! [`ParamStore::absorb_grads`]. Optimizers then update the store.

mod checkpoint;
mod gradcheck;
mod graph;
mod kernels;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint_into, restore_checkpoint, save_checkpoint};
pub use gradcheck::{check_gradients, GradCheckReport, GRAD_FLOOR};
pub use graph::{Conv2dSpec, Graph, NodeId};
pub use kernels::ConvGeom;
pub use optim::{Adam, Optimizer, Sgd};
pub use params::{ParamId, ParamStore, Parameter};
pub use tensor::Tensor;
