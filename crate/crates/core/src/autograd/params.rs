use super::graph::Graph;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named trainable tensor with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter<F> {
    name: String,
    value: Tensor<F>,
    grad: Option<Tensor<F>>,
    requires_grad: bool,
}

impl<F: Real> Parameter<F> {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &Tensor<F> {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut Tensor<F> {
        &mut self.value
    }

    pub fn grad(&self) -> Option<&Tensor<F>> {
        self.grad.as_ref()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
    }

    pub fn accumulate_grad(&mut self, g: &Tensor<F>) -> Result<()> {
        if g.shape() != self.value.shape() {
            return Err(Error::Shape {
                op: "accumulate_grad",
                lhs: self.value.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
        match &mut self.grad {
            Some(acc) => acc.add_assign(g),
            None => self.grad = Some(g.clone()),
        }
        Ok(())
    }
}

/// Owns every parameter of a model, in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<F> {
    params: Vec<Parameter<F>>,
}

impl<F: Real> ParamStore<F> {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad: None,
            requires_grad: true,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn add_frozen(&mut self, name: impl Into<String>, value: Tensor<F>) -> ParamId {
        let id = self.add(name, value);
        self.params[id.0].requires_grad = false;
        id
    }

    pub fn get(&self, id: ParamId) -> &Parameter<F> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<F> {
        &mut self.params[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<F>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<F>> {
        self.params.iter_mut()
    }

    /// Number of scalar values across trainable parameters.
    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.requires_grad)
            .map(|p| p.value.len())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Adds the gradients a graph accumulated on its parameter leaves.
    pub fn absorb_grads(&mut self, graph: &Graph<F>) -> Result<()> {
        for (id, g) in graph.param_grads() {
            self.params[id.0].accumulate_grad(g)?;
        }
        Ok(())
    }

    pub fn scale_grads(&mut self, s: F) {
        for g in self.params.iter_mut().filter_map(|p| p.grad.as_mut()) {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}
