//! Minimal dense-tensor engine with reverse-mode automatic differentiation
//! and an Adam optimizer.
//!
//! Tensors are row-major with a build-time float width (`f32` by default,
//! `f64` behind the `float64` feature). Differentiable computation runs
//! through [`graph::Graph`], a define-by-run tape whose nodes record a
//! backward rule each; [`gradcheck`] verifies every rule against central
//! finite differences.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod graph;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[cfg(feature = "float64")]
pub type Float = f64;
#[cfg(not(feature = "float64"))]
pub type Float = f32;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} does not match data length {len}")]
    ShapeDataMismatch { shape: Vec<usize>, len: usize },
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("non-finite gradient in parameter `{name}`")]
    NonFiniteGrad { name: String },
    #[error("gradient missing for parameter `{name}`")]
    MissingGrad { name: String },
}

/// Dense row-major tensor. `grad`, when present, always matches `data` in
/// length; it is populated by [`graph::Graph::backward`] via
/// [`graph::Graph::write_grad`] and consumed by the optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<Float>,
    pub grad: Option<Vec<Float>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<Float>) -> Result<Self, TensorError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeDataMismatch {
                shape,
                len: data.len(),
            });
        }
        Ok(Self {
            shape,
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
            grad: None,
        }
    }

    pub fn scalar(v: Float) -> Self {
        Self {
            shape: vec![1],
            data: vec![v],
            grad: None,
        }
    }

    pub fn from_vec(data: Vec<Float>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
            grad: None,
        }
    }

    /// 2-D constructor from nested rows; all rows must share a length.
    pub fn from_rows(rows: &[Vec<Float>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows in Tensor::from_rows");
            data.extend_from_slice(row);
        }
        Self {
            shape: vec![r, c],
            data,
            grad: None,
        }
    }

    /// Gaussian init with the given standard deviation.
    pub fn randn<R: Rng>(shape: Vec<usize>, std: f64, rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("valid std");
        let data = (0..n).map(|_| dist.sample(rng) as Float).collect();
        Self {
            shape,
            data,
            grad: None,
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Interprets the tensor as a matrix: all leading dims collapse into
    /// rows, the last dim is the column count. Scalars become 1x1.
    pub fn as_matrix_dims(&self) -> (usize, usize) {
        match self.shape.len() {
            0 => (1, 1),
            1 => (1, self.shape[0]),
            _ => {
                let cols = *self.shape.last().unwrap();
                (self.numel() / cols.max(1), cols)
            }
        }
    }

    pub fn row(&self, i: usize) -> &[Float] {
        let (_, c) = self.as_matrix_dims();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Drops any stored gradient.
    pub fn clear_grad(&mut self) {
        self.grad = None;
    }
}
