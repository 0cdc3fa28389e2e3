//! Worker timing model on an integer clock.
//!
//! Worker `i` needs `τ_i` seconds per local step. With `τ = lcm(τ_1..τ_n)`, a
//! round is `M·τ` seconds of computation followed by `ζ` seconds of
//! communication, where `ζ` is a multiple of `τ`. Every worker therefore
//! completes a whole number of steps in each phase.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest accepted `lcm(τ_1..τ_n)`.
pub const MAX_LCM: u64 = 1 << 32;

/// Largest accepted number of local steps a single worker may take per round.
pub const MAX_STEPS_PER_ROUND: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingPlan {
    pub taus: Vec<u64>,
    pub m: u64,
    pub zeta: u64,
    pub tau: u64,
    /// Steps before communication starts.
    pub n: Vec<u64>,
    /// Steps while communication is in flight.
    pub q: Vec<u64>,
    /// Total steps per round.
    pub h: Vec<u64>,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Least common multiple, `None` on overflow past [`MAX_LCM`].
pub fn lcm_all(values: &[u64]) -> Option<u64> {
    values.iter().try_fold(1u64, |acc, &v| {
        let l = (acc / gcd(acc, v)).checked_mul(v)?;
        (l <= MAX_LCM).then_some(l)
    })
}

pub fn build_plan(taus: &[u64], m: u64, zeta: u64) -> Result<TimingPlan> {
    if taus.is_empty() {
        return Err(Error::config("at least one worker step time is required"));
    }
    if let Some(i) = taus.iter().position(|&t| t == 0) {
        return Err(Error::config(format!(
            "taus[{i}] = 0; step times must be positive integers"
        )));
    }
    if m == 0 {
        return Err(Error::config("M must be at least 1"));
    }
    let tau = lcm_all(taus).ok_or_else(|| {
        Error::config(format!(
            "lcm of taus exceeds {MAX_LCM}; choose step times with a smaller common multiple"
        ))
    })?;
    if !zeta.is_multiple_of(tau) {
        let below = zeta / tau * tau;
        let above = below + tau;
        return Err(Error::config(format!(
            "zeta must be a multiple of {tau} (lcm of taus); nearest valid values are {below} and {above}"
        )));
    }
    let window = m
        .checked_mul(tau)
        .ok_or_else(|| Error::config("M·tau overflows"))?;
    let n: Vec<u64> = taus.iter().map(|&t| window / t).collect();
    let q: Vec<u64> = taus.iter().map(|&t| zeta / t).collect();
    let h: Vec<u64> = n.iter().zip(&q).map(|(a, b)| a + b).collect();
    if let Some(&worst) = h.iter().max() {
        if worst > MAX_STEPS_PER_ROUND {
            return Err(Error::config(format!(
                "a worker would take {worst} local steps per round (limit {MAX_STEPS_PER_ROUND}); reduce M or zeta"
            )));
        }
    }
    Ok(TimingPlan {
        taus: taus.to_vec(),
        m,
        zeta,
        tau,
        n,
        q,
        h,
    })
}

impl TimingPlan {
    pub fn workers(&self) -> usize {
        self.taus.len()
    }

    /// `M·τ + ζ`, identical for every worker.
    pub fn round_duration(&self) -> u64 {
        self.m * self.tau + self.zeta
    }

    pub fn aggregates(&self) -> TimingAggregates {
        aggregates(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingAggregates {
    pub n_bar: f64,
    pub h_bar: f64,
    pub h_max: u64,
    pub s_n: u64,
    pub s_q: u64,
    /// `Σ_i Σ_{t<H_i} t²`.
    pub psi_h: u128,
    /// Harmonic mean of the step times, seconds.
    pub tau_h: f64,
    /// `tau_h` as the exact fraction `tau_h_num / tau_h_den`.
    pub tau_h_num: u64,
    pub tau_h_den: u64,
}

pub fn aggregates(plan: &TimingPlan) -> TimingAggregates {
    let n = plan.workers() as u64;
    let sum_n: u64 = plan.n.iter().sum();
    let sum_h: u64 = plan.h.iter().sum();
    let psi_h = plan
        .h
        .iter()
        .map(|&h| {
            let h = h as u128;
            // h ≥ 1 always, so h - 1 does not underflow.
            (h - 1) * h * (2 * h - 1) / 6
        })
        .sum();
    // n / Σ 1/τ_i = n·τ / Σ τ/τ_i, reduced.
    let den_raw: u64 = plan.taus.iter().map(|&t| plan.tau / t).sum();
    let num_raw = n * plan.tau;
    let g = gcd(num_raw, den_raw);
    TimingAggregates {
        n_bar: sum_n as f64 / n as f64,
        h_bar: sum_h as f64 / n as f64,
        h_max: plan.h.iter().copied().max().unwrap_or(0),
        s_n: plan.n.iter().map(|v| v * v).sum(),
        s_q: plan.q.iter().map(|v| v * v).sum(),
        psi_h,
        tau_h: num_raw as f64 / den_raw as f64,
        tau_h_num: num_raw / g,
        tau_h_den: den_raw / g,
    }
}

/// Checks `τ_H · H̄ = M·τ + ζ` in exact integer arithmetic.
pub fn harmonic_identity_holds(plan: &TimingPlan, agg: &TimingAggregates) -> bool {
    let n = plan.workers() as u128;
    let sum_h: u128 = plan.h.iter().map(|&h| h as u128).sum();
    // (num/den)·(sum_h/n) == duration  ⇔  num·sum_h == duration·den·n
    agg.tau_h_num as u128 * sum_h == plan.round_duration() as u128 * agg.tau_h_den as u128 * n
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn heterogeneous_protocol_counts() {
        let plan = build_plan(&[1, 2, 3, 6], 3, 6).unwrap();
        assert_eq!(plan.tau, 6);
        assert_eq!(plan.n, vec![18, 9, 6, 3]);
        assert_eq!(plan.q, vec![6, 3, 2, 1]);
        assert_eq!(plan.h, vec![24, 12, 8, 4]);
        assert_eq!(plan.round_duration(), 24);
    }

    #[test]
    fn stress_protocol_counts() {
        let plan = build_plan(&[1, 2, 3, 6], 1, 96).unwrap();
        assert_eq!(plan.n, vec![6, 3, 2, 1]);
        assert_eq!(plan.q, vec![96, 48, 32, 16]);
    }

    #[test]
    fn minibatch_specialization() {
        let plan = build_plan(&[1, 1], 1, 0).unwrap();
        assert_eq!(plan.tau, 1);
        assert_eq!(plan.n, vec![1, 1]);
        assert_eq!(plan.q, vec![0, 0]);
        assert_eq!(plan.h, vec![1, 1]);
    }

    #[test]
    fn rejects_off_grid_zeta() {
        let err = build_plan(&[1, 2, 3, 6], 3, 5).unwrap_err().to_string();
        assert!(err.contains("multiple of 6"), "{err}");
        assert!(err.contains("0 and 6"), "{err}");
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(build_plan(&[], 1, 0).is_err());
        assert!(build_plan(&[1, 0], 1, 0).is_err());
        assert!(build_plan(&[1], 0, 0).is_err());
    }

    #[test]
    fn rejects_huge_lcm() {
        // Product of distinct primes beyond 2^32.
        let taus = [65_521, 65_519, 65_497];
        assert!(build_plan(&taus, 1, 0).is_err());
    }

    // Reference values from direct evaluation of the aggregate definitions.
    fn psi_by_summation(h: &[u64]) -> u128 {
        h.iter()
            .map(|&hi| (0..hi as u128).map(|t| t * t).sum::<u128>())
            .sum()
    }

    #[test]
    fn aggregates_heterogeneous() {
        let plan = build_plan(&[1, 2, 3, 6], 3, 6).unwrap();
        let agg = plan.aggregates();
        assert_eq!(agg.h_bar, 12.0);
        assert_eq!(agg.n_bar, 9.0);
        assert_eq!(agg.h_max, 24);
        assert_eq!(agg.s_n, 450);
        assert_eq!(agg.s_q, 50);
        assert_eq!(agg.psi_h, 4984);
        assert_eq!(agg.psi_h, psi_by_summation(&plan.h));
        assert_eq!(agg.tau_h, 2.0);
        assert_eq!((agg.tau_h_num, agg.tau_h_den), (2, 1));
        assert_eq!(plan.round_duration() as f64 / agg.h_bar, 2.0);
        assert!(harmonic_identity_holds(&plan, &agg));
    }

    #[test]
    fn aggregates_minibatch() {
        let agg = build_plan(&[1, 1], 1, 0).unwrap().aggregates();
        assert_eq!(agg.h_bar, 1.0);
        assert_eq!(agg.h_max, 1);
        assert_eq!(agg.s_n, 2);
        assert_eq!(agg.s_q, 0);
        assert_eq!(agg.psi_h, 0);
    }

    #[test]
    fn aggregates_single_worker_two_steps() {
        let plan = build_plan(&[2], 1, 2).unwrap();
        assert_eq!(plan.n, vec![1]);
        assert_eq!(plan.q, vec![1]);
        assert_eq!(plan.aggregates().psi_h, 1);
        assert_eq!(psi_by_summation(&plan.h), 1);
    }

    proptest! {
        #[test]
        fn plan_invariants(
            taus in prop::collection::vec(1u64..12, 1..6),
            m in 1u64..5,
            zeta_mult in 0u64..4,
        ) {
            let tau = lcm_all(&taus).unwrap();
            let plan = build_plan(&taus, m, zeta_mult * tau).unwrap();
            let agg = plan.aggregates();
            for (i, &t) in taus.iter().enumerate() {
                prop_assert_eq!(tau % t, 0);
                prop_assert_eq!(t * plan.n[i], m * tau);
                prop_assert_eq!(t * plan.q[i], plan.zeta);
                prop_assert!(plan.h[i] >= 1);
                prop_assert_eq!(t * plan.h[i], plan.round_duration());
            }
            prop_assert!(harmonic_identity_holds(&plan, &agg));
            prop_assert_eq!(agg.psi_h == 0, plan.h.iter().all(|&h| h == 1));
            prop_assert_eq!(agg.psi_h, psi_by_summation(&plan.h));
            if plan.zeta == 0 {
                prop_assert_eq!(agg.s_q, 0);
                prop_assert!(plan.q.iter().all(|&q| q == 0));
            }
            // Monotone in M and ζ.
            let more_m = build_plan(&taus, m + 1, plan.zeta).unwrap();
            let more_z = build_plan(&taus, m, plan.zeta + tau).unwrap();
            for (i, &t) in taus.iter().enumerate() {
                prop_assert_eq!(more_m.n[i] * m, plan.n[i] * (m + 1));
                prop_assert_eq!(more_z.q[i], plan.q[i] + tau / t);
            }
        }
    }
}
