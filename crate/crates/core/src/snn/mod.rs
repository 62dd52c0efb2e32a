//! Leaky integrate-and-fire neurons.

mod lif;
mod spikes;

pub use lif::{
    lif_scan, lif_scan_backward, relaxed_spike, surrogate_grad, LifLayer, LifParams, SpikeMode,
};
pub use spikes::SpikeTensor;
