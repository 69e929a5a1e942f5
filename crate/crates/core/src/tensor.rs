use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense row-major `f32` tensor with explicit dims.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    values: Vec<f32>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, values: Vec<f32>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Shape(alloc::format!("zero-sized dim in {dims:?}")));
        }
        let numel: usize = dims.iter().product();
        if numel != values.len() {
            return Err(Error::Shape(alloc::format!(
                "dims {dims:?} hold {numel} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            dims,
            values,
            requires_grad: true,
        })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let numel = dims.iter().product();
        Self {
            dims,
            values: vec![0.0; numel],
            requires_grad: true,
        }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    /// Rows/cols view: the last dim is the column count.
    pub fn matrix_dims(&self) -> (usize, usize) {
        let cols = *self.dims.last().unwrap_or(&1);
        (self.numel() / cols.max(1), cols)
    }

    /// Bitwise equality of dims and payload (distinguishes `-0.0`, NaN payloads).
    pub fn bitwise_eq(&self, other: &Tensor) -> bool {
        self.dims == other.dims
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_inconsistent_dims() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 0], vec![]).is_err());
        let t = Tensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
        assert_eq!(t.matrix_dims(), (2, 3));
    }

    #[test]
    fn bitwise_eq_sees_signed_zero() {
        let a = Tensor::new(vec![1], vec![0.0]).unwrap();
        let b = Tensor::new(vec![1], vec![-0.0]).unwrap();
        assert_eq!(a, b);
        assert!(!a.bitwise_eq(&b));
    }
}
