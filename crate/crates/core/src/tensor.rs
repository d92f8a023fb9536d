//! Dense row-major tensors.
//!
//! Deliberately minimal: no views, no broadcasting beyond what the autodiff
//! ops implement themselves. Correctness over generality.

use crate::error::CoreError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F: Scalar> {
    shape: Vec<usize>,
    values: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn new(shape: Vec<usize>, values: Vec<F>) -> Result<Self, CoreError> {
        let n: usize = shape.iter().product();
        if n != values.len() {
            return Err(CoreError::ShapeMismatch {
                layer: "tensor".into(),
                detail: format!("shape {:?} wants {} values, got {}", shape, n, values.len()),
            });
        }
        Ok(Tensor { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            values: vec![F::zero(); n],
        }
    }

    pub fn filled(shape: Vec<usize>, v: F) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape,
            values: vec![v; n],
        }
    }

    pub fn scalar(v: F) -> Self {
        Tensor {
            shape: vec![1],
            values: vec![v],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [F] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<F> {
        self.values
    }

    /// Rows of a 2-D tensor (a 1-D tensor counts as one row).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            2 => self.shape[0],
            _ => panic!("rows() on tensor of rank {}", self.shape.len()),
        }
    }

    /// Columns of a 2-D tensor (length for 1-D).
    pub fn cols(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[1],
            _ => panic!("cols() on tensor of rank {}", self.shape.len()),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn new_checks_element_count() {
        let t = Tensor::<f64>::new(vec![2, 3], vec![0.0; 6]);
        assert!(t.is_ok());
        let bad = Tensor::<f64>::new(vec![2, 3], vec![0.0; 5]);
        assert!(matches!(bad, Err(CoreError::ShapeMismatch { .. })));
    }

    #[test]
    fn rows_cols_for_rank_one_and_two() {
        let v = Tensor::<f64>::zeros(vec![4]);
        assert_eq!((v.rows(), v.cols()), (1, 4));
        let m = Tensor::<f64>::zeros(vec![3, 4]);
        assert_eq!((m.rows(), m.cols()), (3, 4));
    }

    #[test]
    fn generic_over_f32() {
        let t = Tensor::<f32>::filled(vec![2, 2], 1.5f32);
        assert_eq!(t.values(), &[1.5f32; 4]);
    }
}
