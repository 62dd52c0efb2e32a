//! Event-driven convolution.
//!
//! Stamping a kernel at every event makes each response value a linear
//! combination of the kernel weights, with the number of times each weight
//! landed on that position as coefficients. [`build_count_map`] records those
//! coefficients without looking at the kernel; [`strided_readout`] turns them
//! back into a response map with a stride-`K` convolution, which is what makes
//! the kernel trainable. [`event_conv_reference`] is the direct per-event
//! stamping used as ground truth.

mod count_map;
mod dump;
mod gabor;
mod kernel;
mod readout;
mod reference;

pub use count_map::{build_count_map, footprint_size, CountMap};
pub use dump::{read_count_map_dump, read_response_dump, write_count_map_dump, write_response_dump};
pub use gabor::{gabor_bank, gabor_kernel, GaborParams};
pub use kernel::{Kernel, ReadoutBank};
pub use readout::strided_readout;
pub use reference::event_conv_reference;

use crate::real::Real;

/// Dense `channels x height x width` response values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap<F> {
    channels: usize,
    height: usize,
    width: usize,
    values: Vec<F>,
}

impl<F: Real> ResponseMap<F> {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        ResponseMap {
            channels,
            height,
            width,
            values: vec![F::zero(); channels * height * width],
        }
    }

    pub fn from_values(channels: usize, height: usize, width: usize, values: Vec<F>) -> Option<Self> {
        (values.len() == channels * height * width).then_some(ResponseMap {
            channels,
            height,
            width,
            values,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn into_values(self) -> Vec<F> {
        self.values
    }

    #[inline]
    pub fn get(&self, c: usize, row: usize, col: usize) -> F {
        self.values[(c * self.height + row) * self.width + col]
    }

    /// Largest absolute entrywise difference. Panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(
            (self.channels, self.height, self.width),
            (other.channels, other.height, other.width),
            "response map shapes differ"
        );
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }
}
