//! The round state machine.
//!
//! A round of the overlapped methods runs as follows for every worker `i`:
//! `N_i` local steps from `x_i` reach `y_i`; the masked model `Proj_S(y_i)` is
//! sent; `Q_i` more local steps reach `z_i` while the message is in flight; the
//! delayed average `Proj_S(ȳ)` is then merged into `z_i` to give the next round
//! start. The blocking baselines skip the overlap phase and idle instead.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{sample_rand_k, Mask};
use crate::objective::GradientOracle;
use crate::rng::{RngStream, StreamKey};
use crate::timing::TimingPlan;
use crate::vector::{average, check_finite, same_dim, ModelVector};

/// Any coordinate larger than this in magnitude aborts the run.
pub const DIVERGENCE_LIMIT: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SyncSgd,
    FedavgFull,
    LocalSparse,
    OverlapOverwrite,
    OverlapDelayCorrected,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::SyncSgd,
        Method::FedavgFull,
        Method::LocalSparse,
        Method::OverlapOverwrite,
        Method::OverlapDelayCorrected,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::SyncSgd => "sync_sgd",
            Method::FedavgFull => "fedavg_full",
            Method::LocalSparse => "local_sparse",
            Method::OverlapOverwrite => "overlap_overwrite",
            Method::OverlapDelayCorrected => "overlap_delay_corrected",
        }
    }

    /// Whether workers keep stepping while communication is in flight.
    pub fn overlaps(self) -> bool {
        matches!(
            self,
            Method::OverlapOverwrite | Method::OverlapDelayCorrected
        )
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown method {s:?}; expected one of {}",
                    Method::ALL.map(Method::name).join(", ")
                ))
            })
    }
}

/// Per-round step counts and duration for one method under a timing plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundSchedule {
    pub method: Method,
    pub pre_steps: Vec<u64>,
    pub overlap_steps: Vec<u64>,
    /// Logical seconds per round.
    pub duration: u64,
    pub k: usize,
    pub d: usize,
}

impl RoundSchedule {
    /// Derives the schedule, rejecting method/plan combinations the method
    /// cannot represent. `blocking_window` overrides the compute window of
    /// the blocking local methods (default `M·τ`).
    pub fn new(
        method: Method,
        plan: &TimingPlan,
        k: usize,
        d: usize,
        blocking_window: Option<u64>,
    ) -> Result<Self> {
        if k == 0 || k > d {
            return Err(Error::config(format!("K={k} must satisfy 1 <= K <= d={d}")));
        }
        let zero = vec![0; plan.workers()];
        let (pre_steps, overlap_steps, duration) = match method {
            Method::SyncSgd => {
                let equal = plan.taus.windows(2).all(|w| w[0] == w[1]);
                if !(equal && plan.m == 1 && plan.zeta == 0 && k == d) {
                    return Err(Error::config(
                        "sync_sgd requires equal taus, M=1, zeta=0 and K=d (p=1)",
                    ));
                }
                (vec![1; plan.workers()], zero, plan.tau)
            }
            Method::FedavgFull | Method::LocalSparse => {
                if method == Method::FedavgFull && k != d {
                    return Err(Error::config("fedavg_full requires K=d (p=1)"));
                }
                let window = blocking_window.unwrap_or(plan.m * plan.tau);
                if window == 0 || !window.is_multiple_of(plan.tau) {
                    return Err(Error::config(format!(
                        "blocking compute window {window} must be a positive multiple of {}",
                        plan.tau
                    )));
                }
                let pre = plan.taus.iter().map(|t| window / t).collect();
                (pre, zero, window + plan.zeta)
            }
            Method::OverlapOverwrite | Method::OverlapDelayCorrected => {
                (plan.n.clone(), plan.q.clone(), plan.round_duration())
            }
        };
        Ok(Self {
            method,
            pre_steps,
            overlap_steps,
            duration,
            k,
            d,
        })
    }

    pub fn workers(&self) -> usize {
        self.pre_steps.len()
    }

    pub fn steps(&self, worker: usize) -> u64 {
        self.pre_steps[worker] + self.overlap_steps[worker]
    }

    pub fn total_steps(&self) -> u64 {
        (0..self.workers()).map(|i| self.steps(i)).sum()
    }

    /// Values moved per round: `n` uplinks and `n` deliveries of `K` values.
    pub fn coordinates_per_round(&self) -> u64 {
        2 * self.workers() as u64 * self.k as u64
    }
}

/// One worker's view of the current round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerState {
    /// Round start.
    pub x: ModelVector,
    /// Model at the moment communication started in the latest round.
    pub y: ModelVector,
    /// Model when the server message arrived in the latest round.
    pub z: ModelVector,
    pub steps_taken_this_round: u64,
}

impl WorkerState {
    pub fn new(x: ModelVector) -> Self {
        Self {
            y: x.clone(),
            z: x.clone(),
            x,
            steps_taken_this_round: 0,
        }
    }
}

/// Result of a sequence of local SGD steps.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalRun {
    pub end: ModelVector,
    /// Sum of the stochastic gradients applied.
    pub grad_sum: ModelVector,
}

/// Applies `count` SGD steps `w ← w − η·g(w)`, step `t` using the sample key
/// `(worker, round, first_step + t)`.
pub fn run_local_steps(
    start: &ModelVector,
    count: u64,
    eta: f64,
    oracle: &dyn GradientOracle,
    worker: usize,
    round: u64,
    first_step: u64,
) -> Result<LocalRun> {
    let mut w = start.as_slice().to_vec();
    let mut grad_sum = vec![0.0; w.len()];
    for t in 0..count {
        let point = ModelVector::from_vec_unchecked(w);
        let g = oracle
            .gradient(&point, worker, round, (first_step + t) as usize)
            .map_err(|e| match e {
                Error::NonFinite { .. } => diverged(round, worker, "non-finite gradient"),
                other => other,
            })?;
        w = point.into_vec();
        for ((wj, gj), sj) in w.iter_mut().zip(g.as_slice()).zip(grad_sum.iter_mut()) {
            *wj -= eta * gj;
            *sj += gj;
        }
        if let Some(j) = w
            .iter()
            .position(|v| v.is_nan() || v.abs() > DIVERGENCE_LIMIT)
        {
            return Err(diverged(
                round,
                worker,
                &format!("coordinate {j} reached {:e}", w[j]),
            ));
        }
    }
    check_finite(&grad_sum).map_err(|_| diverged(round, worker, "gradient sum overflowed"))?;
    Ok(LocalRun {
        end: ModelVector::from_vec_unchecked(w),
        grad_sum: ModelVector::from_vec_unchecked(grad_sum),
    })
}

fn diverged(round: u64, worker: usize, what: &str) -> Error {
    Error::Diverged {
        round,
        reason: format!("worker {worker}: {what}"),
    }
}

/// Delay-corrected merge: `ȳ_j + (z_j − y_j)` on the mask, `z_j` elsewhere.
pub fn merge_delay_corrected(
    z: &ModelVector,
    y: &ModelVector,
    y_bar: &ModelVector,
    s: &Mask,
) -> Result<ModelVector> {
    same_dim(z, y)?;
    same_dim(z, y_bar)?;
    if s.d() != z.dim() {
        return Err(Error::dims(s.d(), z.dim()));
    }
    let mut out = z.as_slice().to_vec();
    for &j in s.indices() {
        out[j] = y_bar[j] + (z[j] - y[j]);
    }
    ModelVector::new(out)
}

/// Overwrite merge: `m_j` on the mask, `z_j` elsewhere.
pub fn merge_overwrite(z: &ModelVector, m: &ModelVector, s: &Mask) -> Result<ModelVector> {
    same_dim(z, m)?;
    if s.d() != z.dim() {
        return Err(Error::dims(s.d(), z.dim()));
    }
    let mut out = z.as_slice().to_vec();
    for &j in s.indices() {
        out[j] = m[j];
    }
    Ok(ModelVector::from_vec_unchecked(out))
}

/// Draws the round's shared mask; `K = d` short-circuits to the full set.
pub fn round_mask(root_seed: u64, round: u64, k: usize, d: usize) -> Result<Mask> {
    if k == d {
        return Ok(Mask::full(d));
    }
    sample_rand_k(d, k, &mut RngStream::new(root_seed, StreamKey::mask(round)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: u64,
    pub next_x: Vec<ModelVector>,
    pub y: Vec<ModelVector>,
    pub z: Vec<ModelVector>,
    pub mask: Mask,
    /// What the server broadcast: `Proj_S(ȳ)`, or the averaged gradient for
    /// synchronous SGD.
    pub server_message: ModelVector,
    /// Logical seconds.
    pub duration: u64,
    pub steps: Vec<u64>,
    /// `G_r`: the per-worker gradient sums, averaged over all `n` workers.
    pub applied_gradient: ModelVector,
}

/// Runs one round for `method` from the round-start models in `states`.
pub fn run_round(
    states: &[WorkerState],
    schedule: &RoundSchedule,
    eta: f64,
    oracle: &dyn GradientOracle,
    root_seed: u64,
    round: u64,
) -> Result<RoundOutcome> {
    if states.len() != schedule.workers() {
        return Err(Error::config(format!(
            "{} worker states for a {}-worker schedule",
            states.len(),
            schedule.workers()
        )));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::config(format!("stepsize {eta} must be positive")));
    }
    for s in states {
        if s.x.dim() != schedule.d {
            return Err(Error::dims(schedule.d, s.x.dim()));
        }
    }
    if oracle.dim() != schedule.d {
        return Err(Error::dims(schedule.d, oracle.dim()));
    }
    let mask = round_mask(root_seed, round, schedule.k, schedule.d)?;
    let steps: Vec<u64> = (0..states.len()).map(|i| schedule.steps(i)).collect();

    if schedule.method == Method::SyncSgd {
        return sync_round(states, schedule, eta, oracle, round, mask, steps);
    }

    let mut ys = Vec::with_capacity(states.len());
    let mut zs = Vec::with_capacity(states.len());
    let mut grad_sums = Vec::with_capacity(states.len());
    for (i, state) in states.iter().enumerate() {
        let pre = run_local_steps(&state.x, schedule.pre_steps[i], eta, oracle, i, round, 0)?;
        let (z, grad_sum) = if schedule.overlap_steps[i] > 0 {
            let post = run_local_steps(
                &pre.end,
                schedule.overlap_steps[i],
                eta,
                oracle,
                i,
                round,
                schedule.pre_steps[i],
            )?;
            (post.end, pre.grad_sum.add(&post.grad_sum)?)
        } else {
            (pre.end.clone(), pre.grad_sum)
        };
        ys.push(pre.end);
        zs.push(z);
        grad_sums.push(grad_sum);
    }
    let y_bar = average(&ys)?;
    let message = crate::mask::project_mask(&y_bar, &mask)?;
    let next_x = match schedule.method {
        Method::FedavgFull => vec![y_bar.clone(); states.len()],
        Method::LocalSparse | Method::OverlapOverwrite => zs
            .iter()
            .map(|z| merge_overwrite(z, &message, &mask))
            .collect::<Result<_>>()?,
        Method::OverlapDelayCorrected => zs
            .iter()
            .zip(&ys)
            .map(|(z, y)| merge_delay_corrected(z, y, &y_bar, &mask))
            .collect::<Result<_>>()?,
        Method::SyncSgd => unreachable!("handled above"),
    };
    Ok(RoundOutcome {
        round,
        next_x,
        y: ys,
        z: zs,
        mask,
        server_message: message,
        duration: schedule.duration,
        steps,
        applied_gradient: average(&grad_sums)?,
    })
}

fn sync_round(
    states: &[WorkerState],
    schedule: &RoundSchedule,
    eta: f64,
    oracle: &dyn GradientOracle,
    round: u64,
    mask: Mask,
    steps: Vec<u64>,
) -> Result<RoundOutcome> {
    let x_bar = average(&states.iter().map(|s| s.x.clone()).collect::<Vec<_>>())?;
    let mut grads = Vec::with_capacity(states.len());
    let mut ys = Vec::with_capacity(states.len());
    for (i, state) in states.iter().enumerate() {
        let g = oracle
            .gradient(&state.x, i, round, 0)
            .map_err(|e| match e {
                Error::NonFinite { .. } => diverged(round, i, "non-finite gradient"),
                other => other,
            })?;
        ys.push(crate::vector::axpy(-eta, &g, &state.x)?);
        grads.push(g);
    }
    let g_bar = average(&grads)?;
    let next = crate::vector::axpy(-eta, &g_bar, &x_bar)
        .map_err(|_| diverged(round, 0, "non-finite iterate"))?;
    if next.max_abs() > DIVERGENCE_LIMIT {
        return Err(diverged(round, 0, "iterate exceeded the divergence limit"));
    }
    Ok(RoundOutcome {
        round,
        next_x: vec![next; states.len()],
        z: ys.clone(),
        y: ys,
        mask,
        server_message: g_bar.clone(),
        duration: schedule.duration,
        steps,
        applied_gradient: g_bar,
    })
}

/// Stateful driver holding every worker's model across rounds.
#[derive(Debug, Clone)]
pub struct Simulator {
    schedule: RoundSchedule,
    eta: f64,
    root_seed: u64,
    states: Vec<WorkerState>,
    round: u64,
    logical_time: u64,
    steps_total: Vec<u64>,
}

impl Simulator {
    /// Every worker starts from `x0`.
    pub fn new(schedule: RoundSchedule, eta: f64, x0: ModelVector, root_seed: u64) -> Result<Self> {
        if x0.dim() != schedule.d {
            return Err(Error::dims(schedule.d, x0.dim()));
        }
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::config(format!("stepsize {eta} must be positive")));
        }
        let n = schedule.workers();
        Ok(Self {
            states: vec![WorkerState::new(x0); n],
            steps_total: vec![0; n],
            schedule,
            eta,
            root_seed,
            round: 0,
            logical_time: 0,
        })
    }

    pub fn schedule(&self) -> &RoundSchedule {
        &self.schedule
    }

    pub fn states(&self) -> &[WorkerState] {
        &self.states
    }

    /// Index of the next round to run.
    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn logical_time(&self) -> u64 {
        self.logical_time
    }

    pub fn steps_total(&self) -> &[u64] {
        &self.steps_total
    }

    pub fn models(&self) -> Vec<ModelVector> {
        self.states.iter().map(|s| s.x.clone()).collect()
    }

    pub fn average_model(&self) -> ModelVector {
        average(&self.models()).expect("simulator always has at least one worker")
    }

    /// Runs the next round and advances all state.
    pub fn step(&mut self, oracle: &dyn GradientOracle) -> Result<RoundOutcome> {
        let outcome = run_round(
            &self.states,
            &self.schedule,
            self.eta,
            oracle,
            self.root_seed,
            self.round,
        )?;
        for (i, state) in self.states.iter_mut().enumerate() {
            state.x = outcome.next_x[i].clone();
            state.y = outcome.y[i].clone();
            state.z = outcome.z[i].clone();
            state.steps_taken_this_round = outcome.steps[i];
            self.steps_total[i] += outcome.steps[i];
        }
        self.round += 1;
        self.logical_time += outcome.duration;
        Ok(outcome)
    }
}
