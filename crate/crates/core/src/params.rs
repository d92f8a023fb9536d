//! Flattened parameter and gradient vectors.
//!
//! A `ParameterVector` is the single source of truth for a model's weights:
//! contiguous storage plus a segment table fixed at model construction. The
//! same layout indexes optimizer buffers and gradients, so everything that
//! compares or updates weights works on aligned flat slices.

use crate::error::CoreError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector<F: Scalar> {
    segments: Vec<Segment>,
    values: Vec<F>,
}

impl<F: Scalar> ParameterVector<F> {
    pub fn new() -> Self {
        ParameterVector {
            segments: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Append a named segment; returns its index.
    pub fn push_segment(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<F>) -> usize {
        let n: usize = shape.iter().product();
        assert_eq!(n, values.len(), "segment shape/value mismatch");
        let seg = Segment {
            name: name.into(),
            shape,
            offset: self.values.len(),
        };
        self.values.extend_from_slice(&values);
        self.segments.push(seg);
        self.segments.len() - 1
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn total_len(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [F] {
        &mut self.values
    }

    pub fn segment_values(&self, idx: usize) -> &[F] {
        let seg = &self.segments[idx];
        &self.values[seg.offset..seg.offset + seg.len()]
    }

    pub fn segment_values_mut(&mut self, idx: usize) -> &mut [F] {
        let (offset, len) = {
            let seg = &self.segments[idx];
            (seg.offset, seg.len())
        };
        &mut self.values[offset..offset + len]
    }

    /// Euclidean distance to another parameter vector of the same layout.
    pub fn distance(&self, other: &Self) -> Result<F, CoreError> {
        if self.values.len() != other.values.len() {
            return Err(CoreError::ShapeMismatch {
                layer: "parameter vector".into(),
                detail: format!("lengths {} vs {}", self.values.len(), other.values.len()),
            });
        }
        let mut acc = F::zero();
        for (a, b) in self.values.iter().zip(&other.values) {
            let d = *a - *b;
            acc = acc + d * d;
        }
        Ok(acc.sqrt())
    }
}

impl<F: Scalar> Default for ParameterVector<F> {
    fn default() -> Self {
        Self::new()
    }
}

/// A flat gradient aligned index-for-index with a `ParameterVector`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector<F: Scalar> {
    values: Vec<F>,
}

impl<F: Scalar> GradientVector<F> {
    pub fn zeros(len: usize) -> Self {
        GradientVector {
            values: vec![F::zero(); len],
        }
    }

    pub fn from_values(values: Vec<F>) -> Self {
        GradientVector { values }
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

    pub fn l2_norm(&self) -> F {
        let mut acc = F::zero();
        for v in &self.values {
            acc = acc + *v * *v;
        }
        acc.sqrt()
    }

    pub fn dot(&self, other: &Self) -> F {
        debug_assert_eq!(self.values.len(), other.values.len());
        let mut acc = F::zero();
        for (a, b) in self.values.iter().zip(&other.values) {
            acc = acc + *a * *b;
        }
        acc
    }

    pub fn scale_in_place(&mut self, c: F) {
        for v in &mut self.values {
            *v = *v * c;
        }
    }

    pub fn add_scaled(&mut self, other: &Self, c: F) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a = *a + c * *b;
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
    fn segments_are_contiguous_and_ordered() {
        let mut pv = ParameterVector::<f64>::new();
        pv.push_segment("a", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]);
        pv.push_segment("b", vec![3], vec![5.0, 6.0, 7.0]);
        assert_eq!(pv.total_len(), 7);
        assert_eq!(pv.segment_values(0), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(pv.segment_values(1), &[5.0, 6.0, 7.0]);
        assert_eq!(pv.segments()[1].offset, 4);
    }

    #[test]
    fn distance_matches_hand_values() {
        let mut a = ParameterVector::<f64>::new();
        a.push_segment("w", vec![4], vec![1.0, 1.0, 1.0, 1.0]);
        let mut b = ParameterVector::<f64>::new();
        b.push_segment("w", vec![4], vec![0.0, 0.0, 0.0, 0.0]);
        assert_eq!(a.distance(&b).unwrap(), 2.0);
        assert_eq!(a.distance(&a).unwrap(), 0.0);
    }

    #[test]
    fn gradient_norm_is_euclidean() {
        let g = GradientVector::from_values(vec![3.0f64, 4.0]);
        assert_eq!(g.l2_norm(), 5.0);
    }
}
