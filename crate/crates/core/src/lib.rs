//! Trainable event-driven convolution for event-camera streams, with a
//! spiking-transformer classifier on top.
//!
//! The crate is organized bottom-up:
//!
//! - [`event`]: address-event streams, EVS1/CSV files, temporal binning and
//!   synthetic moving-glyph data.
//! - [`evconv`]: per-event convolution, the parameter count map and the
//!   stride-`K` readout that reproduces it exactly, plus a Gabor bank.
//! - [`autograd`]: dense tensors, a reverse-mode tape, optimizers and
//!   checkpoints.
//! - [`snn`]: leaky integrate-and-fire neurons with surrogate gradients.
//! - [`spikeformer`]: patch embedding, conditional positional embedding,
//!   spiking self-attention, encoder blocks and the firing-rate head.
//! - [`pipeline`]: model assembly, training, evaluation and ablations.
//! - [`verify`] and [`bench`]: the equivalence/gradient suites and the
//!   throughput benchmark behind the CLI.

pub mod autograd;
pub mod bench;
pub mod cli;
pub mod error;
pub mod evconv;
pub mod event;
pub mod pipeline;
pub mod real;
pub mod snn;
pub mod spikeformer;
pub mod verify;

pub use error::{Error, Result};
pub use real::Real;
