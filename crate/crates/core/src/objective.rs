//! Objectives and stochastic-gradient oracles.
//!
//! The main objective is mean binary logistic loss plus an optional
//! coordinate-wise Geman–McClure penalty `λ Σ_j w_j² / (w_j² + θ²)`. A diagonal
//! quadratic with additive Gaussian noise is provided as a closed-form oracle
//! for exercising the engine independently of real data.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream, StreamKey};
use crate::vector::{check_finite, ModelVector};

/// `log(1 + exp(t))` without overflow.
#[inline]
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `1 / (1 + exp(−t))` without overflow.
#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(1 + exp(−y·⟨x, w⟩))`.
pub fn logistic_loss(w: &[f64], x: &[f64], y: f64) -> f64 {
    softplus(-y * dot(x, w))
}

/// Adds `scale · ∇_w logistic_loss(w; x, y)` into `out`.
#[inline]
fn add_logistic_grad(out: &mut [f64], w: &[f64], x: &[f64], y: f64, scale: f64) {
    let coef = -y * sigmoid(-y * dot(x, w)) * scale;
    for (o, xj) in out.iter_mut().zip(x) {
        *o += coef * xj;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerParams {
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
}

fn default_theta() -> f64 {
    1.0
}

impl Default for RegularizerParams {
    fn default() -> Self {
        Self::disabled()
    }
}

impl RegularizerParams {
    pub fn new(lambda: f64, theta: f64) -> Result<Self> {
        let p = Self { lambda, theta };
        p.validate()?;
        Ok(p)
    }

    pub fn disabled() -> Self {
        Self {
            lambda: 0.0,
            theta: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::config("regularizer lambda must be finite and >= 0"));
        }
        if !(self.theta > 0.0 && self.theta.is_finite()) {
            return Err(Error::config("regularizer theta must be finite and > 0"));
        }
        Ok(())
    }

    pub fn is_enabled(&self) -> bool {
        self.lambda > 0.0
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        if !self.is_enabled() {
            return 0.0;
        }
        let t2 = self.theta * self.theta;
        self.lambda * w.iter().map(|v| v * v / (v * v + t2)).sum::<f64>()
    }

    /// Adds `∇R(w)` into `out`.
    pub fn add_gradient(&self, w: &[f64], out: &mut [f64]) {
        if !self.is_enabled() {
            return;
        }
        let t2 = self.theta * self.theta;
        for (o, v) in out.iter_mut().zip(w) {
            let den = v * v + t2;
            *o += self.lambda * 2.0 * v * t2 / (den * den);
        }
    }

    /// Upper bound on the penalty's curvature, attained at `w_j = 0`.
    pub fn curvature_bound(&self) -> f64 {
        2.0 * self.lambda / (self.theta * self.theta)
    }
}

/// Mean logistic loss over `ds` plus `R(w)`.
pub fn full_loss(w: &ModelVector, ds: &Dataset, reg: &RegularizerParams) -> Result<f64> {
    check_dataset(w, ds)?;
    let w = w.as_slice();
    let sum: f64 = (0..ds.len())
        .map(|i| logistic_loss(w, ds.row(i), ds.label(i)))
        .sum();
    Ok(sum / ds.len() as f64 + reg.value(w))
}

/// Exact gradient of [`full_loss`].
pub fn full_gradient(
    w: &ModelVector,
    ds: &Dataset,
    reg: &RegularizerParams,
) -> Result<ModelVector> {
    check_dataset(w, ds)?;
    let ws = w.as_slice();
    let mut g = vec![0.0; ds.dim()];
    let scale = 1.0 / ds.len() as f64;
    for i in 0..ds.len() {
        add_logistic_grad(&mut g, ws, ds.row(i), ds.label(i), scale);
    }
    reg.add_gradient(ws, &mut g);
    check_finite(&g)?;
    Ok(ModelVector::from_vec_unchecked(g))
}

/// Fraction of examples where `sign(⟨x, w⟩)` equals the label, predicting
/// +1 on a zero margin.
pub fn accuracy(w: &ModelVector, ds: &Dataset) -> Result<f64> {
    check_dataset(w, ds)?;
    let correct = (0..ds.len())
        .filter(|&i| {
            let pred = if dot(ds.row(i), w.as_slice()) >= 0.0 {
                1.0
            } else {
                -1.0
            };
            pred == ds.label(i)
        })
        .count();
    Ok(correct as f64 / ds.len() as f64)
}

fn check_dataset(w: &ModelVector, ds: &Dataset) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::config("dataset has no examples"));
    }
    if w.dim() != ds.dim() {
        return Err(Error::dims(ds.dim(), w.dim()));
    }
    Ok(())
}

/// Smoothness bound for [`full_loss`]: `max‖x‖²/4` plus the penalty's curvature.
pub fn logistic_smoothness_bound(ds: &Dataset, reg: &RegularizerParams) -> f64 {
    let max_sq = (0..ds.len())
        .map(|i| dot(ds.row(i), ds.row(i)))
        .fold(0.0, f64::max);
    max_sq / 4.0 + reg.curvature_bound()
}

/// A stochastic first-order oracle addressed by `(worker, round, step)`.
///
/// Implementations must be pure functions of their inputs and the root seed
/// they were built with.
pub trait GradientOracle {
    fn dim(&self) -> usize;

    /// Examples consumed per call, for resource accounting.
    fn batch_size(&self) -> usize;

    fn gradient(
        &self,
        w: &ModelVector,
        worker: usize,
        round: u64,
        step: usize,
    ) -> Result<ModelVector>;
}

/// Minibatch logistic gradients over a worker's assigned examples, sampled
/// uniformly with replacement, plus the full regularizer gradient.
#[derive(Debug, Clone)]
pub struct LogisticOracle<'a> {
    train: &'a Dataset,
    assignments: &'a [Vec<usize>],
    batch_size: usize,
    reg: RegularizerParams,
    root_seed: u64,
}

impl<'a> LogisticOracle<'a> {
    pub fn new(
        train: &'a Dataset,
        assignments: &'a [Vec<usize>],
        batch_size: usize,
        reg: RegularizerParams,
        root_seed: u64,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::config("training set is empty"));
        }
        if batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        reg.validate()?;
        if let Some(&bad) = assignments.iter().flatten().find(|&&i| i >= train.len()) {
            return Err(Error::config(format!(
                "assigned example {bad} out of range"
            )));
        }
        Ok(Self {
            train,
            assignments,
            batch_size,
            reg,
            root_seed,
        })
    }

    pub fn regularizer(&self) -> &RegularizerParams {
        &self.reg
    }
}

impl GradientOracle for LogisticOracle<'_> {
    fn dim(&self) -> usize {
        self.train.dim()
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }

    fn gradient(
        &self,
        w: &ModelVector,
        worker: usize,
        round: u64,
        step: usize,
    ) -> Result<ModelVector> {
        let pool = self
            .assignments
            .get(worker)
            .ok_or_else(|| Error::config(format!("no data assignment for worker {worker}")))?;
        if pool.is_empty() {
            return Err(Error::config(format!(
                "worker {worker} has no training examples"
            )));
        }
        if w.dim() != self.dim() {
            return Err(Error::dims(self.dim(), w.dim()));
        }
        let mut rng = RngStream::new(self.root_seed, StreamKey::sample(worker, round, step));
        let ws = w.as_slice();
        let mut g = vec![0.0; self.dim()];
        let scale = 1.0 / self.batch_size as f64;
        for _ in 0..self.batch_size {
            let i = pool[rng.below(pool.len() as u64) as usize];
            add_logistic_grad(&mut g, ws, self.train.row(i), self.train.label(i), scale);
        }
        self.reg.add_gradient(ws, &mut g);
        check_finite(&g)?;
        Ok(ModelVector::from_vec_unchecked(g))
    }
}

/// `diag(a)·w + σ·ξ` with `ξ` standard normal drawn from `rng`.
pub fn quadratic_oracle(
    w: &ModelVector,
    a_diag: &ModelVector,
    noise_sigma: f64,
    rng: &mut RngStream,
) -> Result<ModelVector> {
    if w.dim() != a_diag.dim() {
        return Err(Error::dims(a_diag.dim(), w.dim()));
    }
    let mut g = Vec::with_capacity(w.dim());
    for (wj, aj) in w.as_slice().iter().zip(a_diag.as_slice()) {
        let noise = if noise_sigma != 0.0 {
            noise_sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        };
        g.push(aj * wj + noise);
    }
    ModelVector::new(g)
}

/// The objective `½ Σ_j a_j w_j²` with isotropic Gaussian gradient noise.
#[derive(Debug, Clone)]
pub struct QuadraticOracle {
    a_diag: ModelVector,
    noise_sigma: f64,
    root_seed: u64,
}

impl QuadraticOracle {
    pub fn new(a_diag: ModelVector, noise_sigma: f64, root_seed: u64) -> Result<Self> {
        if a_diag.as_slice().iter().any(|&a| a <= 0.0) {
            return Err(Error::config("quadratic curvatures must be positive"));
        }
        if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma must be finite and >= 0"));
        }
        Ok(Self {
            a_diag,
            noise_sigma,
            root_seed,
        })
    }

    /// Smoothness constant, `max_j a_j`.
    pub fn smoothness(&self) -> f64 {
        self.a_diag.max_abs()
    }
}

impl GradientOracle for QuadraticOracle {
    fn dim(&self) -> usize {
        self.a_diag.dim()
    }

    fn batch_size(&self) -> usize {
        1
    }

    fn gradient(
        &self,
        w: &ModelVector,
        worker: usize,
        round: u64,
        step: usize,
    ) -> Result<ModelVector> {
        let mut rng = RngStream::new(self.root_seed, StreamKey::sample(worker, round, step));
        quadratic_oracle(w, &self.a_diag, self.noise_sigma, &mut rng)
    }
}

/// Monte Carlo estimates of the gradient-noise constants at a fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseEstimate {
    /// Mean of `‖g − ∇f‖²`.
    pub sigma_sq: f64,
    /// Mean of `‖g‖²`.
    pub second_moment: f64,
    pub samples: usize,
}

/// Estimates variance and second moment of `oracle` at `w` for `worker`,
/// against the supplied exact gradient. Draws use dedicated estimation
/// rounds so they never coincide with training sample keys.
pub fn estimate_noise(
    oracle: &dyn GradientOracle,
    w: &ModelVector,
    exact: &ModelVector,
    worker: usize,
    samples: usize,
) -> Result<NoiseEstimate> {
    if samples == 0 {
        return Err(Error::Usage("need at least one sample".into()));
    }
    let base = u64::MAX - (Purpose::Estimate as u64);
    let mut var = 0.0;
    let mut second = 0.0;
    for s in 0..samples {
        let g = oracle.gradient(w, worker, base, s)?;
        var += g.dist_sq(exact)?;
        second += g.norm_sq();
    }
    Ok(NoiseEstimate {
        sigma_sq: var / samples as f64,
        second_moment: second / samples as f64,
        samples,
    })
}
