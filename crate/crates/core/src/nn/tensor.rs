//! Row-major f64 tensors and trainable parameters.

use crate::error::{Error, Result};

/// A dense tensor: positive extents, row-major f64 values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        let n: usize = shape.iter().product();
        assert_eq!(
            n,
            data.len(),
            "shape {:?} expects {} values, got {}",
            shape,
            n,
            data.len()
        );
        Tensor { shape, data }
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

/// Handle to one parameter inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// A trainable tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// All parameters of one model, in declaration order. Declaration order is
/// the serialization order of checkpoint payloads.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let grad = Tensor::zeros(value.shape.clone());
        self.params.push(Parameter {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    /// Reset every gradient to zero. Accumulation is additive, so a
    /// `zero_grad` followed by one backward equals a fresh backward.
    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Accumulate `grad` into the parameter's gradient.
    pub fn accumulate_grad(&mut self, id: ParamId, grad: &[f64]) {
        let g = &mut self.params[id.0].grad.data;
        debug_assert_eq!(g.len(), grad.len());
        for (a, b) in g.iter_mut().zip(grad) {
            *a += b;
        }
    }

    /// Total number of scalar values across all parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn check_grads_finite(&self) -> Result<()> {
        for p in &self.params {
            if !p.grad.all_finite() {
                return Err(Error::NonFiniteGradient {
                    param: p.name.clone(),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn param_grad_matches_value_shape() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::zeros(vec![3, 4]));
        assert_eq!(store.get(id).grad.shape, vec![3, 4]);
        assert_eq!(store.scalar_count(), 12);
    }

    #[test]
    fn zero_grad_resets() {
        let mut store = ParamStore::new();
        let id = store.add("w", Tensor::zeros(vec![2]));
        store.accumulate_grad(id, &[1.0, 2.0]);
        store.accumulate_grad(id, &[1.0, 2.0]);
        assert_eq!(store.get(id).grad.data, vec![2.0, 4.0]);
        store.zero_grad();
        assert_eq!(store.get(id).grad.data, vec![0.0, 0.0]);
    }
}
