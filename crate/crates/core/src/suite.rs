//! Suite orchestration: data preparation shared by every run, the
//! (method, seed) loop, the run manifest, and the theory report.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config::ResolvedConfig;
use crate::data::{
    generate_synthetic, load_libsvm, partition_dirichlet, partition_shards, partition_shared,
    split_train_val, Dataset, NormalizationStats, Partition, PartitionMode,
};
use crate::engine::{Method, RoundSchedule, Simulator};
use crate::error::{Error, Result};
use crate::metrics::{write_atomic, write_metrics, EvalContext, MetricsRecord, MetricsTracker};
use crate::objective::{
    estimate_noise, full_gradient, full_loss, logistic_smoothness_bound, LogisticOracle,
};
use crate::theory::{
    check_stepsize, drift_constant, max_stepsize, rate_bound, round_complexity, search_alpha_beta,
    time_complexity, BoundParams, ProblemConstants, RateTerms, TimeComplexity,
};
use crate::timing::TimingAggregates;
use crate::vector::ModelVector;

pub const MANIFEST_VERSION: u32 = 1;

/// Data artifacts shared by all runs of a suite.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: Dataset,
    pub val: Dataset,
    pub partition: Partition,
    pub source_fingerprint: String,
}

pub fn prepare_data(rc: &ResolvedConfig) -> Result<PreparedData> {
    let cfg = &rc.config;
    let full = match (&cfg.dataset.synthetic, &cfg.dataset.libsvm) {
        (Some(spec), _) => generate_synthetic(spec)?,
        (None, Some(src)) => load_libsvm(&src.path, Some(rc.d))?,
        (None, None) => return Err(Error::config("no dataset configured")),
    };
    let source_fingerprint = full.fingerprint();
    let (mut train, mut val) = split_train_val(&full, cfg.dataset.val_fraction, cfg.data_seed)?;
    if train.is_empty() {
        return Err(Error::config("the training split is empty"));
    }
    if cfg.dataset.normalize {
        let stats = NormalizationStats::fit(&train);
        stats.apply(&mut train);
        stats.apply(&mut val);
    }
    let n = rc.plan.workers();
    let partition = match cfg.partition {
        PartitionMode::Shared => partition_shared(train.len(), n),
        PartitionMode::Shard => partition_shards(train.len(), n, cfg.data_seed),
        PartitionMode::Dirichlet { alpha } => partition_dirichlet(&train, n, alpha, cfg.data_seed)?,
    };
    let empty = partition.empty_workers();
    if !empty.is_empty() {
        return Err(Error::config(format!(
            "partition leaves workers {empty:?} without training examples; use more data, a larger alpha, or another data_seed"
        )));
    }
    Ok(PreparedData {
        train,
        val,
        partition,
        source_fingerprint,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Diverged { round: u64, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Method,
    pub seed: u64,
    #[serde(flatten)]
    pub status: RunStatus,
    pub rounds_completed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    pub csv: String,
    pub jsonl: String,
}

/// Metrics of one (method, seed) run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub records: Vec<MetricsRecord>,
    pub status: RunStatus,
    pub rounds_completed: u64,
}

/// Runs one method from `x⁰ = 0` with root seed `seed`. Divergence ends the
/// run early and is reported in the status, not as an error.
pub fn run_single(
    rc: &ResolvedConfig,
    data: &PreparedData,
    schedule: &RoundSchedule,
    seed: u64,
) -> Result<RunResult> {
    let cfg = &rc.config;
    let oracle = LogisticOracle::new(
        &data.train,
        &data.partition.assignments,
        cfg.batch_size,
        cfg.regularizer,
        seed,
    )?;
    let mut sim = Simulator::new(schedule.clone(), cfg.eta, ModelVector::zeros(rc.d), seed)?;
    let mut tracker = MetricsTracker::new(cfg.batch_size as u64, cfg.value_bit_width)
        .eval_every(cfg.eval_every)
        .per_worker(cfg.per_worker_eval);
    let ctx = EvalContext {
        train: &data.train,
        val: &data.val,
        reg: cfg.regularizer,
    };
    let mut records = Vec::new();
    if cfg.rounds > 0 {
        records.push(tracker.initial(sim.states(), &ctx)?);
    }
    let mut status = RunStatus::Completed;
    for r in 0..cfg.rounds {
        let x_prev = sim.models();
        match sim.step(&oracle) {
            Ok(outcome) => {
                let last = r + 1 == cfg.rounds;
                if let Some(rec) =
                    tracker.measure_round_with_drift(&x_prev, sim.states(), &outcome, &ctx, last)?
                {
                    records.push(rec);
                }
            }
            Err(Error::Diverged { round, reason }) => {
                log::warn!(
                    "{} seed {seed} diverged in round {round}: {reason}",
                    schedule.method
                );
                status = RunStatus::Diverged { round, reason };
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(RunResult {
        records,
        status,
        rounds_completed: sim.round(),
    })
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    manifest_version: u32,
    config: &'a crate::config::ExperimentConfig,
    derived: Derived,
    data: DataFacts,
    runs: &'a [RunSummary],
}

#[derive(Debug, Clone, Serialize)]
struct Derived {
    d: usize,
    k: usize,
    n_workers: usize,
    tau: u64,
    n: Vec<u64>,
    q: Vec<u64>,
    h: Vec<u64>,
    round_duration: u64,
    initialization: &'static str,
    partition_mode: String,
    schedules: Vec<ScheduleFacts>,
}

#[derive(Debug, Clone, Serialize)]
struct ScheduleFacts {
    method: Method,
    pre_steps: Vec<u64>,
    overlap_steps: Vec<u64>,
    duration: u64,
    coordinates_per_round: u64,
}

#[derive(Debug, Clone, Serialize)]
struct DataFacts {
    source_fingerprint: String,
    train_fingerprint: String,
    val_fingerprint: String,
    partition_fingerprint: String,
    n_train: usize,
    n_val: usize,
}

/// What a suite wrote.
#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub run_dir: PathBuf,
    pub manifest: PathBuf,
    pub runs: Vec<RunSummary>,
}

impl SuiteReport {
    pub fn any_diverged(&self) -> bool {
        self.runs.iter().any(|r| r.status != RunStatus::Completed)
    }
}

fn stem(method: Method, seed: u64) -> String {
    format!("{method}_seed{seed}")
}

/// Runs every (method, seed) pair of the config and writes
/// `{output_dir}/{run_name}/{method}_seed{seed}.{csv,jsonl}` plus
/// `manifest.toml`.
pub fn run_suite(rc: &ResolvedConfig) -> Result<SuiteReport> {
    let cfg = &rc.config;
    let data = prepare_data(rc)?;
    let run_dir = cfg.output_dir.join(&cfg.run_name);
    let mut runs = Vec::new();
    for schedule in &rc.schedules {
        for &seed in &cfg.seeds {
            log::info!("running {} seed {seed}", schedule.method);
            let result = run_single(rc, &data, schedule, seed)?;
            let name = stem(schedule.method, seed);
            write_metrics(&run_dir, &name, &result.records)?;
            runs.push(RunSummary {
                method: schedule.method,
                seed,
                status: result.status,
                rounds_completed: result.rounds_completed,
                final_train_loss: result.records.last().map(|r| r.train_loss),
                csv: format!("{name}.csv"),
                jsonl: format!("{name}.jsonl"),
            });
        }
    }
    let manifest = Manifest {
        manifest_version: MANIFEST_VERSION,
        config: cfg,
        derived: Derived {
            d: rc.d,
            k: rc.k,
            n_workers: rc.plan.workers(),
            tau: rc.plan.tau,
            n: rc.plan.n.clone(),
            q: rc.plan.q.clone(),
            h: rc.plan.h.clone(),
            round_duration: rc.plan.round_duration(),
            initialization: "zeros",
            partition_mode: format!("{:?}", cfg.partition),
            schedules: rc
                .schedules
                .iter()
                .map(|s| ScheduleFacts {
                    method: s.method,
                    pre_steps: s.pre_steps.clone(),
                    overlap_steps: s.overlap_steps.clone(),
                    duration: s.duration,
                    coordinates_per_round: s.coordinates_per_round(),
                })
                .collect(),
        },
        data: DataFacts {
            source_fingerprint: data.source_fingerprint.clone(),
            train_fingerprint: data.train.fingerprint(),
            val_fingerprint: data.val.fingerprint(),
            partition_fingerprint: data.partition.fingerprint(),
            n_train: data.train.len(),
            n_val: data.val.len(),
        },
        runs: &runs,
    };
    let text = toml::to_string(&manifest)
        .map_err(|e| Error::config(format!("manifest serialization: {e}")))?;
    let manifest_path = run_dir.join("manifest.toml");
    write_atomic(&manifest_path, text.as_bytes())?;
    Ok(SuiteReport {
        run_dir,
        manifest: manifest_path,
        runs,
    })
}

/// Which problem constants were supplied and which were estimated.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantSources {
    pub l: &'static str,
    pub sigma_sq: &'static str,
    pub g: &'static str,
    pub delta: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    pub n_workers: usize,
    pub d: usize,
    pub k: usize,
    pub eta: f64,
    pub rounds: u64,
    pub constants: ProblemConstants,
    pub constant_sources: ConstantSources,
    pub aggregates: TimingAggregates,
    pub bound_params: BoundParams,
    pub drift_constant_x: f64,
    pub max_stepsize: f64,
    pub eta_admissible: bool,
    /// Bound at the configured stepsize, when admissible.
    pub rate_terms: Option<RateTerms>,
    pub rate_terms_at_max_stepsize: Option<RateTerms>,
    pub epsilon: f64,
    pub c_r: f64,
    pub round_complexity: u64,
    pub time_complexity: TimeComplexity,
}

const ESTIMATED: &str = "estimated";
const SUPPLIED: &str = "supplied";

/// Evaluates the bound for the config. Unset constants are estimated at
/// `x⁰ = 0`: `L` from the logistic curvature bound, `σ²` and `G²` by Monte
/// Carlo (max over workers), and `Δ ≤ f(x⁰)` because the objective is
/// non-negative.
pub fn theory_report(rc: &ResolvedConfig) -> Result<TheoryReport> {
    let cfg = &rc.config;
    let tc = cfg.theory.clone().unwrap_or_default();
    let agg = rc.plan.aggregates();
    let n = rc.plan.workers();

    let needs_data =
        tc.l.is_none() || tc.sigma_sq.is_none() || tc.g.is_none() || tc.delta.is_none();
    let (mut l, mut sigma_sq, mut g, mut delta) = (0.0, 0.0f64, 0.0, 0.0);
    if needs_data {
        let data = prepare_data(rc)?;
        let x0 = ModelVector::zeros(rc.d);
        l = logistic_smoothness_bound(&data.train, &cfg.regularizer);
        delta = full_loss(&x0, &data.train, &cfg.regularizer)?;
        if tc.sigma_sq.is_none() || tc.g.is_none() {
            let seed = cfg.seeds.first().copied().unwrap_or(0);
            let oracle = LogisticOracle::new(
                &data.train,
                &data.partition.assignments,
                cfg.batch_size,
                cfg.regularizer,
                seed,
            )?;
            let mut g_sq: f64 = 0.0;
            for (i, assigned) in data.partition.assignments.iter().enumerate() {
                let local = data.train.subset(assigned);
                let exact = full_gradient(&x0, &local, &cfg.regularizer)?;
                let est = estimate_noise(&oracle, &x0, &exact, i, tc.noise_samples)?;
                sigma_sq = sigma_sq.max(est.sigma_sq);
                g_sq = g_sq.max(est.second_moment);
            }
            g = g_sq.sqrt();
        }
    }
    let source = |o: Option<f64>| if o.is_some() { SUPPLIED } else { ESTIMATED };
    let constant_sources = ConstantSources {
        l: source(tc.l),
        sigma_sq: source(tc.sigma_sq),
        g: source(tc.g),
        delta: source(tc.delta),
    };
    let consts = ProblemConstants::new(
        tc.l.unwrap_or(l),
        tc.sigma_sq.unwrap_or(sigma_sq),
        tc.g.unwrap_or(g),
        tc.delta.unwrap_or(delta),
    )?;

    let bp = match (tc.alpha, tc.beta) {
        (Some(a), Some(b)) => BoundParams::new(a, b, rc.k, rc.d)?,
        (None, None) => search_alpha_beta(&agg, rc.k, rc.d, 121)
            .ok_or_else(|| Error::config("no (alpha, beta) on the search grid gives c < 1"))?,
        _ => {
            return Err(Error::config(
                "set both theory.alpha and theory.beta, or neither",
            ))
        }
    };
    let eta_max = max_stepsize(consts.l, agg.h_max);
    let eta_admissible = check_stepsize(cfg.eta, consts.l, agg.h_max).is_ok();
    let rounds = cfg.rounds.max(1);
    let rate_terms = if eta_admissible {
        Some(rate_bound(&consts, &agg, &bp, cfg.eta, n, rounds)?)
    } else {
        None
    };
    let at_max = rate_bound(&consts, &agg, &bp, eta_max, n, rounds).ok();
    let r = round_complexity(&consts, &agg, &bp, n, tc.epsilon, tc.c_r)?;
    Ok(TheoryReport {
        n_workers: n,
        d: rc.d,
        k: rc.k,
        eta: cfg.eta,
        rounds,
        constants: consts,
        constant_sources,
        drift_constant_x: drift_constant(&agg, &bp),
        aggregates: agg,
        bound_params: bp,
        max_stepsize: eta_max,
        eta_admissible,
        rate_terms,
        rate_terms_at_max_stepsize: at_max,
        epsilon: tc.epsilon,
        c_r: tc.c_r,
        round_complexity: r,
        time_complexity: time_complexity(r, &rc.plan)?,
    })
}
