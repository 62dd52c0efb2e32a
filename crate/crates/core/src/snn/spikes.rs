use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

/// A tensor whose entries are spike counts in `0..=max_count`, leading axis
/// time. LIF outputs have `max_count == 1`; the sum of patch spikes and
/// positional spikes has `max_count == 2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTensor<F> {
    tensor: Tensor<F>,
    max_count: u32,
}

impl<F: Real> SpikeTensor<F> {
    pub fn new(tensor: Tensor<F>, max_count: u32) -> Result<Self> {
        if tensor.rank() == 0 {
            return Err(Error::arg("spike tensors need a leading time axis"));
        }
        for (i, &v) in tensor.data().iter().enumerate() {
            let ok = v >= F::zero() && v.fract().is_zero() && v.as_f64() <= max_count as f64;
            if !ok {
                return Err(Error::Invariant(format!(
                    "entry {i} = {v} is not a spike count in 0..={max_count}"
                )));
            }
        }
        Ok(SpikeTensor { tensor, max_count })
    }

    pub fn binary(tensor: Tensor<F>) -> Result<Self> {
        Self::new(tensor, 1)
    }

    pub fn time_steps(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn max_count(&self) -> u32 {
        self.max_count
    }

    pub fn tensor(&self) -> &Tensor<F> {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor<F> {
        self.tensor
    }

    /// Largest entry actually present.
    pub fn peak(&self) -> u32 {
        self.tensor.data().iter().fold(0.0f64, |m, v| m.max(v.as_f64())) as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_check() {
        let t = Tensor::new(&[2, 2], vec![0.0f32, 1.0, 1.0, 0.0]).unwrap();
        assert!(SpikeTensor::binary(t).is_ok());
        let t = Tensor::new(&[2, 2], vec![0.0f32, 2.0, 1.0, 0.0]).unwrap();
        assert!(SpikeTensor::binary(t.clone()).is_err());
        assert_eq!(SpikeTensor::new(t, 2).unwrap().peak(), 2);
        let t = Tensor::new(&[1, 2], vec![0.5f32, 0.0]).unwrap();
        assert!(SpikeTensor::new(t, 2).is_err());
    }
}
