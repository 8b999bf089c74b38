//! Minimal dense row-major tensor.
//!
//! Layout is row-major: the last axis varies fastest. This is the spatial
//! half of the global vectorization order (channel slowest, then spatial
//! axes in order).

use crate::error::{Result, SpecNormError};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.is_empty() || expected != data.len() {
            return Err(SpecNormError::ShapeMismatch {
                expected: shape,
                found: vec![data.len()],
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    /// Tensor of the given shape with a single 1 at `index`.
    pub fn basis(shape: &[usize], index: &[usize]) -> Self {
        let mut t = Self::zeros(shape);
        let flat = t.flat_index(index);
        t.data[flat] = 1.0;
        t
    }

    /// Odd-extent filter with 1 at the center and 0 elsewhere.
    pub fn delta(shape: &[usize]) -> Self {
        let center: Vec<usize> = shape.iter().map(|&k| k / 2).collect();
        Self::basis(shape, &center)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        row_major_strides(&self.shape)
    }

    pub fn flat_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(row_major_strides(&self.shape))
            .map(|(i, s)| i * s)
            .sum()
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.flat_index(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let flat = self.flat_index(index);
        self.data[flat] = value;
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| x * alpha).collect(),
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }
}

pub fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for axis in (0..shape.len().saturating_sub(1)).rev() {
        strides[axis] = strides[axis + 1] * shape[axis + 1];
    }
    strides
}

/// Advances a multi-index in row-major order. Returns false after the last index.
pub fn next_index(index: &mut [usize], shape: &[usize]) -> bool {
    for axis in (0..shape.len()).rev() {
        index[axis] += 1;
        if index[axis] < shape[axis] {
            return true;
        }
        index[axis] = 0;
    }
    false
}

/// All multi-indices of `shape` in row-major order.
pub fn indices(shape: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = shape.iter().product();
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return out;
    }
    let mut index = vec![0; shape.len()];
    loop {
        out.push(index.clone());
        if !next_index(&mut index, shape) {
            break;
        }
    }
    out
}
