//! Dense model vectors and the handful of algebraic operations every update
//! rule is built from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A dense `d`-dimensional parameter or gradient vector with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ModelVector(Vec<f64>);

impl ModelVector {
    /// Wraps `values`, rejecting NaN or infinite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        Ok(Self(values))
    }

    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    /// Wraps values already known to be finite (kernel outputs that were
    /// checked by the caller).
    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Self(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn dot(&self, other: &ModelVector) -> Result<f64> {
        same_dim(self, other)?;
        Ok(self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum())
    }

    pub fn sub(&self, other: &ModelVector) -> Result<ModelVector> {
        axpy(-1.0, other, self)
    }

    pub fn add(&self, other: &ModelVector) -> Result<ModelVector> {
        axpy(1.0, other, self)
    }

    pub fn scale(&self, a: f64) -> Result<ModelVector> {
        ModelVector::new(self.0.iter().map(|v| a * v).collect())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Squared Euclidean distance.
    pub fn dist_sq(&self, other: &ModelVector) -> Result<f64> {
        same_dim(self, other)?;
        Ok(self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

impl std::ops::Index<usize> for ModelVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

pub(crate) fn same_dim(a: &ModelVector, b: &ModelVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::dims(a.dim(), b.dim()));
    }
    Ok(())
}

/// `y + a·x`, elementwise.
pub fn axpy(a: f64, x: &ModelVector, y: &ModelVector) -> Result<ModelVector> {
    same_dim(y, x)?;
    ModelVector::new(y.0.iter().zip(&x.0).map(|(yi, xi)| yi + a * xi).collect())
}

/// Arithmetic mean, summed in ascending index order.
pub fn average(vs: &[ModelVector]) -> Result<ModelVector> {
    let first = vs
        .first()
        .ok_or_else(|| Error::Usage("cannot average an empty list of vectors".into()))?;
    let mut acc = vec![0.0; first.dim()];
    for v in vs {
        same_dim(first, v)?;
        for (a, x) in acc.iter_mut().zip(&v.0) {
            *a += x;
        }
    }
    let n = vs.len() as f64;
    ModelVector::new(acc.into_iter().map(|a| a / n).collect())
}

/// Sum of squared deviations from the mean, `Σ‖v_i − v̄‖²`.
pub fn dispersion(vs: &[ModelVector]) -> Result<f64> {
    let mean = average(vs)?;
    let mut total = 0.0;
    for v in vs {
        total += v.dist_sq(&mean)?;
    }
    Ok(total)
}
