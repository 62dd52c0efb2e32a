use crate::error::{Error, Result};
use crate::real::Real;

/// Square, odd-sized convolution kernel. `values[r * size + c]` is parameter
/// index `n = r * size + c + 1` in the usual 1-based numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel<F> {
    size: usize,
    values: Vec<F>,
}

impl<F: Real> Kernel<F> {
    pub fn new(size: usize, values: Vec<F>) -> Result<Self> {
        check_size(size)?;
        if values.len() != size * size {
            return Err(Error::arg(format!(
                "kernel of size {size} needs {} values, got {}",
                size * size,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("kernel values must be finite"));
        }
        Ok(Kernel { size, values })
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> F) -> Result<Self> {
        check_size(size)?;
        let values = (0..size * size).map(|i| f(i / size, i % size)).collect();
        Self::new(size, values)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Offset of the center row/column.
    pub fn center(&self) -> usize {
        self.size / 2
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> F {
        self.values[row * self.size + col]
    }

    pub fn transposed(&self) -> Self {
        Kernel::from_fn(self.size, |r, c| self.get(c, r)).expect("same size")
    }

    pub fn cast<G: Real>(&self) -> Kernel<G> {
        Kernel {
            size: self.size,
            values: self.values.iter().map(|v| G::from_f64(v.as_f64())).collect(),
        }
    }
}

pub(crate) fn check_size(size: usize) -> Result<()> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(Error::arg(format!("kernel size must be odd and positive, got {size}")));
    }
    Ok(())
}

/// Weights of the stride-`K` readout: one kernel per (output channel,
/// polarity) pair, stored `[out][in][K*K]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutBank<F> {
    out_channels: usize,
    in_channels: usize,
    size: usize,
    weights: Vec<F>,
}

impl<F: Real> ReadoutBank<F> {
    pub fn new(out_channels: usize, in_channels: usize, size: usize, weights: Vec<F>) -> Result<Self> {
        check_size(size)?;
        if weights.len() != out_channels * in_channels * size * size {
            return Err(Error::arg(format!(
                "readout bank {out_channels}x{in_channels}x{size}x{size} got {} weights",
                weights.len()
            )));
        }
        Ok(ReadoutBank {
            out_channels,
            in_channels,
            size,
            weights,
        })
    }

    /// Output channel `o` applies `kernels[o]` to every input channel and sums.
    pub fn shared(kernels: &[Kernel<F>], in_channels: usize) -> Result<Self> {
        let size = kernels
            .first()
            .map(|k| k.size())
            .ok_or_else(|| Error::arg("readout bank needs at least one kernel"))?;
        let mut weights = Vec::with_capacity(kernels.len() * in_channels * size * size);
        for k in kernels {
            if k.size() != size {
                return Err(Error::arg(format!(
                    "kernel size mismatch in bank: {} vs {size}",
                    k.size()
                )));
            }
            for _ in 0..in_channels {
                weights.extend_from_slice(k.values());
            }
        }
        Self::new(kernels.len(), in_channels, size, weights)
    }

    /// Output channel `p` applies `kernel` to input channel `p` only, which is
    /// what per-event stamping computes.
    pub fn depthwise(kernel: &Kernel<F>, channels: usize) -> Self {
        let kk = kernel.size() * kernel.size();
        let mut weights = vec![F::zero(); channels * channels * kk];
        for p in 0..channels {
            let base = (p * channels + p) * kk;
            weights[base..base + kk].copy_from_slice(kernel.values());
        }
        ReadoutBank {
            out_channels: channels,
            in_channels: channels,
            size: kernel.size(),
            weights,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn weights(&self) -> &[F] {
        &self.weights
    }

    #[inline]
    pub fn kernel_slice(&self, out: usize, input: usize) -> &[F] {
        let kk = self.size * self.size;
        let base = (out * self.in_channels + input) * kk;
        &self.weights[base..base + kk]
    }
}
