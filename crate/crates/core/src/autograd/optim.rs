use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

pub trait Optimizer<F: Real> {
    /// Updates every trainable parameter in place from its gradient. The
    /// gradients are left as they are.
    fn step(&mut self, params: &mut ParamStore<F>) -> Result<()>;
}

fn missing(name: &str) -> Error {
    Error::State(format!("parameter {name} has no gradient"))
}

#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
}

impl<F: Real> Optimizer<F> for Sgd {
    fn step(&mut self, params: &mut ParamStore<F>) -> Result<()> {
        let lr = F::from_f64(self.lr);
        for p in params.iter_mut().filter(|p| p.requires_grad()) {
            let g = p.grad().ok_or_else(|| missing(p.name()))?.data().to_vec();
            for (w, gv) in p.value_mut().data_mut().iter_mut().zip(g) {
                *w -= lr * gv;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u32,
    m: Vec<Tensor<F>>,
    v: Vec<Tensor<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u32 {
        self.t
    }
}

impl<F: Real> Optimizer<F> for Adam<F> {
    fn step(&mut self, params: &mut ParamStore<F>) -> Result<()> {
        if self.m.is_empty() {
            self.m = params.iter().map(|(_, p)| Tensor::zeros(p.value().shape())).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::State("parameter set changed between Adam steps".into()));
        }
        for (_, p) in params.iter().filter(|(_, p)| p.requires_grad()) {
            if p.grad().is_none() {
                return Err(missing(p.name()));
            }
        }
        self.t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        let step = F::from_f64(self.lr * bc2.sqrt() / bc1);
        let eps_hat = F::from_f64(self.eps * bc2.sqrt());
        let (b1f, b2f) = (F::from_f64(b1), F::from_f64(b2));
        for (i, p) in params.iter_mut().enumerate() {
            if !p.requires_grad() {
                continue;
            }
            let g = p.grad().expect("checked").data().to_vec();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (j, w) in p.value_mut().data_mut().iter_mut().enumerate() {
                m[j] = b1f * m[j] + (F::one() - b1f) * g[j];
                v[j] = b2f * v[j] + (F::one() - b2f) * g[j] * g[j];
                *w -= step * m[j] / (v[j].sqrt() + eps_hat);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(w: f64, g: Option<f64>) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(w));
        if let Some(g) = g {
            s.get_mut(id).accumulate_grad(&Tensor::scalar(g)).unwrap();
        }
        s
    }

    #[test]
    fn sgd_step() {
        let mut s = store(1.0, Some(0.5));
        Sgd { lr: 0.1 }.step(&mut s).unwrap();
        let p = s.get(s.find("w").unwrap());
        assert!((p.value().data()[0] - 0.95).abs() < 1e-15);
        assert_eq!(p.grad().unwrap().data()[0], 0.5);
    }

    #[test]
    fn sgd_zero_grad_is_fixed_point() {
        let mut s = store(1.0, Some(0.0));
        Sgd { lr: 0.1 }.step(&mut s).unwrap();
        assert_eq!(s.get(s.find("w").unwrap()).value().data()[0], 1.0);
    }

    #[test]
    fn adam_first_step_is_about_lr() {
        let lr = 1e-3;
        for g in [1e-3, 1.0, 1e3] {
            let mut s = store(0.0, Some(g));
            Adam::new(lr).step(&mut s).unwrap();
            let dw = s.get(s.find("w").unwrap()).value().data()[0].abs();
            assert!(dw >= 0.9 * lr && dw <= 1.0 * lr, "g={g} dw={dw}");
        }
    }

    #[test]
    fn missing_grad_is_state_error() {
        let mut s = store(1.0, None);
        assert!(matches!(Sgd { lr: 0.1 }.step(&mut s), Err(Error::State(_))));
        assert!(matches!(Adam::<f64>::new(0.1).step(&mut s), Err(Error::State(_))));
    }
}
