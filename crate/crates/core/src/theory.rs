//! Closed-form convergence quantities: bound constants, the four-term rate
//! bound, the stepsize condition, and round/time complexities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timing::{harmonic_identity_holds, TimingAggregates, TimingPlan};

/// Default multiplier in the round-complexity expression.
pub const DEFAULT_C_R: f64 = 12.0;

/// Sparsity-dependent constants for a choice of the free parameters α, β.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub alpha: f64,
    pub beta: f64,
    pub k: usize,
    pub d: usize,
    pub p: f64,
    pub q: f64,
    pub c: f64,
    pub b: f64,
    #[serde(rename = "d_const")]
    pub big_d: f64,
}

impl BoundParams {
    /// Rejects non-positive α, β, an invalid `K`, and any choice with `c ≥ 1`.
    pub fn new(alpha: f64, beta: f64, k: usize, d: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::config(format!(
                "alpha={alpha} and beta={beta} must be positive and finite"
            )));
        }
        if k == 0 || k > d {
            return Err(Error::config(format!("K={k} must satisfy 1 <= K <= d={d}")));
        }
        // Integer difference keeps q exactly 0 when K = d.
        let q = (d - k) as f64 / d as f64;
        let p = k as f64 / d as f64;
        let c = q * (1.0 + alpha) * (1.0 + beta);
        if c >= 1.0 {
            return Err(Error::config(format!(
                "c = q(1+alpha)(1+beta) = {c} must be < 1; choose smaller alpha/beta"
            )));
        }
        Ok(Self {
            alpha,
            beta,
            k,
            d,
            p,
            q,
            c,
            b: q * (1.0 + beta) * (1.0 + 1.0 / alpha),
            big_d: 1.0 + q / beta,
        })
    }

    /// `(B·S_N + D·S_Q)/(1 − c)`, the sparsity-dependent factor of the fourth term.
    pub fn drift_factor(&self, agg: &TimingAggregates) -> f64 {
        (self.b * agg.s_n as f64 + self.big_d * agg.s_q as f64) / (1.0 - self.c)
    }
}

/// Problem-level constants; `g` is the second-moment bound G (not squared).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    pub l: f64,
    pub sigma_sq: f64,
    pub g: f64,
    pub delta: f64,
}

impl ProblemConstants {
    pub fn new(l: f64, sigma_sq: f64, g: f64, delta: f64) -> Result<Self> {
        let all = [l, sigma_sq, g, delta];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("problem constants must be finite"));
        }
        if l <= 0.0 || g < 0.0 || sigma_sq < 0.0 || delta < 0.0 {
            return Err(Error::config(
                "need L > 0, sigma^2 >= 0, G >= 0 and delta >= 0",
            ));
        }
        Ok(Self {
            l,
            sigma_sq,
            g,
            delta,
        })
    }
}

/// The four terms of the rate bound and their sum. `term4_s_n` and
/// `term4_s_q` split the fourth term into its `S_N` and `S_Q` contributions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateTerms {
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
    pub term4: f64,
    pub term4_s_n: f64,
    pub term4_s_q: f64,
    pub total: f64,
}

/// Largest admissible stepsize, `1/(8·L·H_max)`.
pub fn max_stepsize(l: f64, h_max: u64) -> f64 {
    1.0 / (8.0 * l * h_max as f64)
}

pub fn check_stepsize(eta: f64, l: f64, h_max: u64) -> Result<()> {
    let max = max_stepsize(l, h_max);
    if eta.is_nan() || eta <= 0.0 || eta > max {
        return Err(Error::config(format!(
            "stepsize {eta} violates 0 < eta <= 1/(8*L*H_max) = {max}"
        )));
    }
    Ok(())
}

pub fn rate_bound(
    consts: &ProblemConstants,
    agg: &TimingAggregates,
    bp: &BoundParams,
    eta: f64,
    n: usize,
    rounds: u64,
) -> Result<RateTerms> {
    check_stepsize(eta, consts.l, agg.h_max)?;
    if n == 0 || rounds == 0 {
        return Err(Error::config("the bound needs n >= 1 and R >= 1"));
    }
    let n = n as f64;
    let nh = n * agg.h_bar;
    let l = consts.l;
    let g_sq = consts.g * consts.g;
    let pref = 6.0 * l * l * eta * eta * g_sq;
    let term1 = 4.0 * consts.delta / (eta * agg.h_bar * rounds as f64);
    let term2 = 4.0 * l * eta * consts.sigma_sq / n;
    let term3 = pref * agg.psi_h as f64 / nh;
    let scale = pref * agg.h_max as f64 / (nh * (1.0 - bp.c));
    let term4 = scale * (bp.b * agg.s_n as f64 + bp.big_d * agg.s_q as f64);
    Ok(RateTerms {
        term1,
        term2,
        term3,
        term4,
        term4_s_n: scale * bp.b * agg.s_n as f64,
        term4_s_q: scale * bp.big_d * agg.s_q as f64,
        total: term1 + term2 + term3 + term4,
    })
}

/// `X = Ψ_H + H_max·(B·S_N + D·S_Q)/(1 − c)`.
pub fn drift_constant(agg: &TimingAggregates, bp: &BoundParams) -> f64 {
    agg.psi_h as f64 + agg.h_max as f64 * bp.drift_factor(agg)
}

/// Rounds sufficient to reach `ε`-stationarity, with multiplier `c_r`.
pub fn round_complexity(
    consts: &ProblemConstants,
    agg: &TimingAggregates,
    bp: &BoundParams,
    n: usize,
    epsilon: f64,
    c_r: f64,
) -> Result<u64> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::config(format!("epsilon {epsilon} must be positive")));
    }
    if !(c_r > 0.0 && c_r.is_finite()) {
        return Err(Error::config(format!("c_R {c_r} must be positive")));
    }
    if n == 0 {
        return Err(Error::config("at least one worker is required"));
    }
    let n = n as f64;
    let h = agg.h_bar;
    let dl = consts.delta * consts.l;
    let x = drift_constant(agg, bp);
    let t1 = dl * consts.sigma_sq / (n * epsilon * h);
    let t2 = dl * consts.g * x.sqrt() / (epsilon.powf(1.5) * h * (n * h).sqrt());
    let t3 = dl * agg.h_max as f64 / (epsilon * h);
    let r = (c_r * (t1 + t2 + t3)).ceil();
    if !r.is_finite() || r > u64::MAX as f64 {
        return Err(Error::config("round complexity overflows"));
    }
    Ok(r as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeComplexity {
    pub seconds: u64,
    pub tau_h: f64,
    /// Whether `R·(Mτ+ζ) = R·τ_H·H̄` holds in exact arithmetic.
    pub harmonic_identity: bool,
}

pub fn time_complexity(rounds: u64, plan: &TimingPlan) -> Result<TimeComplexity> {
    let seconds = rounds
        .checked_mul(plan.round_duration())
        .ok_or_else(|| Error::config("time complexity overflows 64 bits"))?;
    let agg = plan.aggregates();
    Ok(TimeComplexity {
        seconds,
        tau_h: agg.tau_h,
        harmonic_identity: harmonic_identity_holds(plan, &agg),
    })
}

/// Chooses (α, β) on a log-spaced grid over `[1e-4, 1e2]` to minimise the
/// fourth term's sparsity factor subject to `c < 1`. Returns `None` when no
/// grid point is admissible.
pub fn search_alpha_beta(
    agg: &TimingAggregates,
    k: usize,
    d: usize,
    points: usize,
) -> Option<BoundParams> {
    let points = points.max(2);
    let grid: Vec<f64> = (0..points)
        .map(|i| 10f64.powf(-4.0 + 6.0 * i as f64 / (points - 1) as f64))
        .collect();
    let mut best: Option<(f64, BoundParams)> = None;
    for &a in &grid {
        for &b in &grid {
            let Ok(bp) = BoundParams::new(a, b, k, d) else {
                continue;
            };
            let f = bp.drift_factor(agg);
            if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                best = Some((f, bp));
            }
        }
    }
    best.map(|(_, bp)| bp)
}
