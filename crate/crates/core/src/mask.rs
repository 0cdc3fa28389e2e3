//! Rand-K coordinate masks and the projections they induce.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::vector::ModelVector;

/// A set of `k` distinct coordinates out of `d`, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    indices: Vec<usize>,
    d: usize,
}

impl Mask {
    pub fn new(mut indices: Vec<usize>, d: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.is_empty() {
            return Err(Error::config("mask must contain at least one coordinate"));
        }
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("mask indices must be distinct"));
        }
        if let Some(&last) = indices.last() {
            if last >= d {
                return Err(Error::config(format!(
                    "mask index {last} out of range for dimension {d}"
                )));
            }
        }
        Ok(Self { indices, d })
    }

    pub fn full(d: usize) -> Self {
        Self {
            indices: (0..d).collect(),
            d,
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_full(&self) -> bool {
        self.k() == self.d
    }

    pub fn contains(&self, j: usize) -> bool {
        self.indices.binary_search(&j).is_ok()
    }

    /// Dense membership table, `true` on selected coordinates.
    pub fn membership(&self) -> Vec<bool> {
        let mut out = vec![false; self.d];
        for &j in &self.indices {
            out[j] = true;
        }
        out
    }

    /// The complementary mask, or `None` when this mask selects everything.
    pub fn complement(&self) -> Option<Mask> {
        let member = self.membership();
        let rest: Vec<usize> = (0..self.d).filter(|&j| !member[j]).collect();
        if rest.is_empty() {
            None
        } else {
            Some(Mask {
                indices: rest,
                d: self.d,
            })
        }
    }

    fn check_dim(&self, x: &ModelVector) -> Result<()> {
        if x.dim() != self.d {
            return Err(Error::dims(self.d, x.dim()));
        }
        Ok(())
    }
}

/// Keeps the coordinates in `s` and zeroes the rest.
pub fn project_mask(x: &ModelVector, s: &Mask) -> Result<ModelVector> {
    s.check_dim(x)?;
    let mut out = vec![0.0; x.dim()];
    for &j in s.indices() {
        out[j] = x[j];
    }
    Ok(ModelVector::from_vec_unchecked(out))
}

/// Keeps the coordinates outside `s` and zeroes the ones in it.
pub fn project_complement(x: &ModelVector, s: &Mask) -> Result<ModelVector> {
    s.check_dim(x)?;
    let mut out = x.as_slice().to_vec();
    for &j in s.indices() {
        out[j] = 0.0;
    }
    Ok(ModelVector::from_vec_unchecked(out))
}

/// Draws a uniformly random `k`-subset of `0..d` by a partial Fisher–Yates
/// shuffle.
pub fn sample_rand_k(d: usize, k: usize, rng: &mut RngStream) -> Result<Mask> {
    if k == 0 || k > d {
        return Err(Error::config(format!(
            "mask size k={k} must satisfy 1 <= k <= d={d}"
        )));
    }
    let mut perm: Vec<usize> = (0..d).collect();
    for i in 0..k {
        let j = i + rng.below((d - i) as u64) as usize;
        perm.swap(i, j);
    }
    perm.truncate(k);
    perm.sort_unstable();
    Ok(Mask { indices: perm, d })
}
