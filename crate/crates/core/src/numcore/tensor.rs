use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Storage precision for learnable parameters.
///
/// Arithmetic is always carried out in `f64`. With [`Precision::F32`] every
/// parameter is rounded to the nearest `f32` after initialization and after
/// each optimizer step, which emulates 32-bit storage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl Precision {
    pub fn round(self, values: &mut [f64]) {
        if self == Precision::F32 {
            for v in values {
                *v = *v as f32 as f64;
            }
        }
    }
}

/// Dense row-major array of `f64` with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::dim("tensor", format!("zero-sized dimension in {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(Error::dim(
                "tensor",
                format!("shape {shape:?} holds {n} values, got {}", values.len()),
            ));
        }
        Ok(Tensor {
            shape,
            values,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            values: vec![0.0; n],
            grad: None,
        }
    }

    pub fn filled(shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            values: vec![value; n],
            grad: None,
        }
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        Tensor {
            shape: vec![values.len().max(1)],
            values: if values.is_empty() { vec![0.0] } else { values },
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            values: vec![value],
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [f64]> {
        self.grad.as_deref_mut()
    }

    /// Replaces the gradient buffer. Its length must match the value count.
    pub fn set_grad(&mut self, grad: Vec<f64>) -> Result<()> {
        if grad.len() != self.values.len() {
            return Err(Error::Contract(format!(
                "gradient of length {} for tensor of {} values",
                grad.len(),
                self.values.len()
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    /// Adds `delta` into the gradient, creating it on first use.
    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.values.len() {
            return Err(Error::Contract(format!(
                "gradient of length {} for tensor of {} values",
                delta.len(),
                self.values.len()
            )));
        }
        match &mut self.grad {
            Some(g) => g.iter_mut().zip(delta).for_each(|(g, d)| *g += d),
            None => self.grad = Some(delta.to_vec()),
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.grad = Some(vec![0.0; self.values.len()]);
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
            && self
                .grad
                .as_ref()
                .is_none_or(|g| g.iter().all(|v| v.is_finite()))
    }

    /// Views the tensor as `rows x cols` where `cols` is the last dimension.
    pub fn rows_cols(&self) -> (usize, usize) {
        let cols = *self.shape.last().unwrap_or(&1);
        (self.values.len() / cols.max(1), cols)
    }
}

/// An ordered collection of named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, tensor: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensor(&self, index: usize) -> &Tensor {
        &self.tensors[index]
    }

    pub fn tensor_mut(&mut self, index: usize) -> &mut Tensor {
        &mut self.tensors[index]
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.tensors.iter_mut().collect()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn clear_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::clear_grad);
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::is_finite)
    }

    /// Values of every tensor, flattened in store order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.tensors
            .iter()
            .flat_map(|t| t.values().iter().copied())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_value_count() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
        let err = Tensor::new(vec![2, 3], vec![0.0; 5]).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
        assert!(Tensor::new(vec![0, 3], vec![]).is_err());
    }

    #[test]
    fn grad_length_is_checked() {
        let mut t = Tensor::zeros(vec![4]);
        assert!(t.set_grad(vec![0.0; 3]).is_err());
        t.accumulate_grad(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        t.accumulate_grad(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn f32_precision_rounds_storage() {
        let mut v = vec![0.1_f64, 1.0 / 3.0];
        Precision::F32.round(&mut v);
        assert_eq!(v[0], 0.1_f32 as f64);
        let mut w = vec![0.1_f64];
        Precision::F64.round(&mut w);
        assert_eq!(w[0], 0.1);
    }
}
