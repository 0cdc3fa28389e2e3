//! Per-round measurement and resource accounting.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::{RoundOutcome, WorkerState};
use crate::error::{Error, Result};
use crate::objective::{accuracy, full_gradient, full_loss, RegularizerParams};
use crate::vector::{average, dispersion, ModelVector};

/// Bit width used to account communicated values unless configured otherwise.
pub const DEFAULT_VALUE_BITS: u64 = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub round: u64,
    pub logical_time: u64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    pub grad_norm: f64,
    pub disagreement_x: f64,
    pub processed_examples: u64,
    pub comm_coordinates: u64,
    pub comm_bits: u64,
    /// Drift of the round that produced this state; absent for round 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub worker_train_loss: Option<Vec<f64>>,
}

pub const CSV_COLUMNS: [&str; 11] = [
    "round",
    "logical_time",
    "train_loss",
    "val_loss",
    "train_accuracy",
    "val_accuracy",
    "grad_norm",
    "disagreement_x",
    "processed_examples",
    "comm_coordinates",
    "comm_bits",
];

/// Within-round dispersion of the pre-communication progress `u = y − x`, the
/// overlap progress `v = z − y`, and of `y` and `z` themselves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftDiagnostics {
    pub u_sq: f64,
    pub v_sq: f64,
    pub y_sq: f64,
    pub z_sq: f64,
}

pub fn drift_diagnostics(
    x: &[ModelVector],
    y: &[ModelVector],
    z: &[ModelVector],
) -> Result<DriftDiagnostics> {
    let u: Vec<ModelVector> = y
        .iter()
        .zip(x)
        .map(|(a, b)| a.sub(b))
        .collect::<Result<_>>()?;
    let v: Vec<ModelVector> = z
        .iter()
        .zip(y)
        .map(|(a, b)| a.sub(b))
        .collect::<Result<_>>()?;
    Ok(DriftDiagnostics {
        u_sq: dispersion(&u)?,
        v_sq: dispersion(&v)?,
        y_sq: dispersion(y)?,
        z_sq: dispersion(z)?,
    })
}

/// `X = Σ‖x_i − x̄‖²`.
pub fn disagreement(states: &[WorkerState]) -> Result<f64> {
    dispersion(&states.iter().map(|s| s.x.clone()).collect::<Vec<_>>())
}

/// Data and settings needed to evaluate a model.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub reg: RegularizerParams,
}

/// Accumulates resource counters across rounds and produces records.
#[derive(Debug, Clone)]
pub struct MetricsTracker {
    batch_size: u64,
    value_bits: u64,
    eval_every: u64,
    per_worker: bool,
    logical_time: u64,
    processed: u64,
    coordinates: u64,
}

impl MetricsTracker {
    pub fn new(batch_size: u64, value_bits: u64) -> Self {
        Self {
            batch_size,
            value_bits,
            eval_every: 1,
            per_worker: false,
            logical_time: 0,
            processed: 0,
            coordinates: 0,
        }
    }

    /// Evaluate only every `k`-th round (the caller always gets the last round
    /// by passing `force`).
    pub fn eval_every(mut self, k: u64) -> Self {
        self.eval_every = k.max(1);
        self
    }

    pub fn per_worker(mut self, on: bool) -> Self {
        self.per_worker = on;
        self
    }

    /// Record for the initial state, before any round has run.
    pub fn initial(&self, states: &[WorkerState], ctx: &EvalContext<'_>) -> Result<MetricsRecord> {
        self.evaluate(0, states, ctx, None)
    }

    /// Books the resources used by `outcome` and, when due, evaluates the
    /// post-round `states`.
    pub fn measure_round(
        &mut self,
        states: &[WorkerState],
        outcome: &RoundOutcome,
        ctx: &EvalContext<'_>,
        force: bool,
    ) -> Result<Option<MetricsRecord>> {
        let n = outcome.next_x.len() as u64;
        self.logical_time += outcome.duration;
        self.processed += self.batch_size * outcome.steps.iter().sum::<u64>();
        self.coordinates += 2 * n * outcome.mask.k() as u64;
        let round = outcome.round + 1;
        if !force && !round.is_multiple_of(self.eval_every) {
            return Ok(None);
        }
        self.evaluate(round, states, ctx, None).map(Some)
    }

    /// Like [`measure_round`](Self::measure_round) but also records drift
    /// diagnostics, which need the round-start models `x_prev`.
    pub fn measure_round_with_drift(
        &mut self,
        x_prev: &[ModelVector],
        states: &[WorkerState],
        outcome: &RoundOutcome,
        ctx: &EvalContext<'_>,
        force: bool,
    ) -> Result<Option<MetricsRecord>> {
        let rec = self.measure_round(states, outcome, ctx, force)?;
        match rec {
            Some(mut r) => {
                r.drift = Some(drift_diagnostics(x_prev, &outcome.y, &outcome.z)?);
                Ok(Some(r))
            }
            None => Ok(None),
        }
    }

    fn evaluate(
        &self,
        round: u64,
        states: &[WorkerState],
        ctx: &EvalContext<'_>,
        drift: Option<DriftDiagnostics>,
    ) -> Result<MetricsRecord> {
        let models: Vec<ModelVector> = states.iter().map(|s| s.x.clone()).collect();
        let x_bar = average(&models)?;
        let (val_loss, val_accuracy) = if ctx.val.is_empty() {
            (None, None)
        } else {
            (
                Some(full_loss(&x_bar, ctx.val, &ctx.reg)?),
                Some(accuracy(&x_bar, ctx.val)?),
            )
        };
        let worker_train_loss = if self.per_worker {
            Some(
                models
                    .iter()
                    .map(|m| full_loss(m, ctx.train, &ctx.reg))
                    .collect::<Result<Vec<_>>>()?,
            )
        } else {
            None
        };
        Ok(MetricsRecord {
            round,
            logical_time: self.logical_time,
            train_loss: full_loss(&x_bar, ctx.train, &ctx.reg)?,
            val_loss,
            train_accuracy: accuracy(&x_bar, ctx.train)?,
            val_accuracy,
            grad_norm: full_gradient(&x_bar, ctx.train, &ctx.reg)?.norm(),
            disagreement_x: dispersion(&models)?,
            processed_examples: self.processed,
            comm_coordinates: self.coordinates,
            comm_bits: self.coordinates * self.value_bits,
            drift,
            worker_train_loss,
        })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders the CSV table. Floats use the shortest representation that
/// parses back to the same value.
pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = CSV_COLUMNS.join(",");
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.round,
            r.logical_time,
            r.train_loss,
            opt(r.val_loss),
            r.train_accuracy,
            opt(r.val_accuracy),
            r.grad_norm,
            r.disagreement_x,
            r.processed_examples,
            r.comm_coordinates,
            r.comm_bits
        );
    }
    out
}

/// One JSON object per line, including the optional diagnostics.
pub fn metrics_jsonl(records: &[MetricsRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("metrics records always serialize"));
        out.push('\n');
    }
    out
}

/// Parses a table produced by [`metrics_csv`].
pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_COLUMNS.join(",") => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "unexpected metrics header".into(),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        let perr = |m: &str| Error::Parse {
            line: i + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != CSV_COLUMNS.len() {
            return Err(perr("wrong number of fields"));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|_| perr("bad integer"));
        let float = |s: &str| s.parse::<f64>().map_err(|_| perr("bad float"));
        let ofloat = |s: &str| {
            if s.is_empty() {
                Ok(None)
            } else {
                float(s).map(Some)
            }
        };
        out.push(MetricsRecord {
            round: int(f[0])?,
            logical_time: int(f[1])?,
            train_loss: float(f[2])?,
            val_loss: ofloat(f[3])?,
            train_accuracy: float(f[4])?,
            val_accuracy: ofloat(f[5])?,
            grad_norm: float(f[6])?,
            disagreement_x: float(f[7])?,
            processed_examples: int(f[8])?,
            comm_coordinates: int(f[9])?,
            comm_bits: int(f[10])?,
            drift: None,
            worker_train_loss: None,
        });
    }
    Ok(out)
}

/// Writes `bytes` to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes `{stem}.csv` and `{stem}.jsonl` under `dir`.
pub fn write_metrics(
    dir: &Path,
    stem: &str,
    records: &[MetricsRecord],
) -> Result<(PathBuf, PathBuf)> {
    let csv = dir.join(format!("{stem}.csv"));
    let jsonl = dir.join(format!("{stem}.jsonl"));
    write_atomic(&csv, metrics_csv(records).as_bytes())?;
    write_atomic(&jsonl, metrics_jsonl(records).as_bytes())?;
    Ok((csv, jsonl))
}
