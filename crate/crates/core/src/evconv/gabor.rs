use std::f64::consts::PI;

use super::Kernel;
use crate::error::{Error, Result};

/// Fixed Gabor filter bank parameters. Orientations are in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct GaborParams {
    pub sigma: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub thetas: Vec<f64>,
    pub size: usize,
}

impl Default for GaborParams {
    fn default() -> Self {
        GaborParams {
            sigma: 1.2,
            lambda: 1.5,
            gamma: 0.3,
            thetas: vec![0.0, 45.0, 90.0, 135.0],
            size: 3,
        }
    }
}

impl GaborParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.sigma.is_nan() || self.sigma <= 0.0 {
            problems.push(format!("sigma must be positive, got {}", self.sigma));
        }
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            problems.push(format!("lambda must be positive, got {}", self.lambda));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            problems.push(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.size == 0 || self.size.is_multiple_of(2) {
            problems.push(format!("size must be odd, got {}", self.size));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Raw filter value at integer offset `(dx, dy)` before normalization.
    pub fn raw_value(&self, theta_deg: f64, dx: f64, dy: f64) -> f64 {
        let (s, c) = theta_deg.to_radians().sin_cos();
        let x = dx * c + dy * s;
        let y = -dx * s + dy * c;
        (-(x * x + self.gamma * self.gamma * y * y) / (2.0 * self.sigma * self.sigma)).exp()
            * (2.0 * PI * x / self.lambda).cos()
    }
}

/// Gabor kernel at orientation `theta_deg`, shifted to zero mean and scaled to
/// unit L2 norm. Rows index `dy`, columns `dx`.
pub fn gabor_kernel(params: &GaborParams, theta_deg: f64) -> Result<Kernel<f64>> {
    params.validate()?;
    if !params.thetas.iter().any(|&t| (t - theta_deg).abs() < 1e-9) {
        return Err(Error::arg(format!(
            "orientation {theta_deg} not in {:?}",
            params.thetas
        )));
    }
    let c = (params.size / 2) as f64;
    let mut k = Kernel::from_fn(params.size, |r, col| {
        params.raw_value(theta_deg, col as f64 - c, r as f64 - c)
    })?
    .values()
    .to_vec();
    let mean = k.iter().sum::<f64>() / k.len() as f64;
    k.iter_mut().for_each(|v| *v -= mean);
    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        k.iter_mut().for_each(|v| *v /= norm);
    }
    Kernel::new(params.size, k)
}

pub fn gabor_bank(params: &GaborParams) -> Result<Vec<Kernel<f64>>> {
    params.thetas.iter().map(|&t| gabor_kernel(params, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_center_value_is_one() {
        assert_eq!(GaborParams::default().raw_value(0.0, 0.0, 0.0), 1.0);
    }

    #[test]
    fn normalized_bank() {
        for k in gabor_bank(&GaborParams::default()).unwrap() {
            let sum: f64 = k.values().iter().sum();
            let l2: f64 = k.values().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(sum.abs() < 1e-6);
            assert!((l2 - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn ninety_degrees_is_transpose_of_zero() {
        let p = GaborParams::default();
        let k0 = gabor_kernel(&p, 0.0).unwrap();
        let k90 = gabor_kernel(&p, 90.0).unwrap();
        for (a, b) in k90.values().iter().zip(k0.transposed().values()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    // Independent scalar evaluation of the 3x3, 0-degree filter.
    #[test]
    fn zero_degree_table() {
        let (sigma, lambda, gamma) = (1.2f64, 1.5f64, 0.3f64);
        let mut raw = [[0.0f64; 3]; 3];
        for (r, row) in raw.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                let dx = c as f64 - 1.0;
                let dy = r as f64 - 1.0;
                *v = (-(dx * dx + gamma * gamma * dy * dy) / (2.0 * sigma * sigma)).exp()
                    * (2.0 * std::f64::consts::PI * dx / lambda).cos();
            }
        }
        let mean: f64 = raw.iter().flatten().sum::<f64>() / 9.0;
        let centered: Vec<f64> = raw.iter().flatten().map(|v| v - mean).collect();
        let norm = centered.iter().map(|v| v * v).sum::<f64>().sqrt();
        let k = gabor_kernel(&GaborParams::default(), 0.0).unwrap();
        for (got, want) in k.values().iter().zip(centered.iter().map(|v| v / norm)) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn unknown_orientation_and_bad_params() {
        assert!(gabor_kernel(&GaborParams::default(), 30.0).is_err());
        let p = GaborParams {
            gamma: 1.5,
            ..GaborParams::default()
        };
        assert!(gabor_bank(&p).is_err());
    }
}
