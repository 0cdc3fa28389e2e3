//! Experiment configuration: TOML schema, defaults, and up-front validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_libsvm, PartitionMode, SyntheticSpec};
use crate::engine::{Method, RoundSchedule};
use crate::error::{Error, Result};
use crate::objective::RegularizerParams;
use crate::timing::{build_plan, TimingPlan};

/// One validation problem, addressed by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
    pub hint: Option<String>,
}

impl ConfigIssue {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
            hint: None,
        }
    }

    fn hint(mut self, hint: impl Into<String>) -> Self {
        self.hint = Some(hint.into());
        self
    }
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)?;
        if let Some(h) = &self.hint {
            write!(f, " (hint: {h})")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_name: String,
    /// Relative paths are resolved against the config file's directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub methods: Vec<Method>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Seed for the train/validation split and the worker partition, shared
    /// by every (method, seed) run of the suite.
    #[serde(default)]
    pub data_seed: u64,
    pub rounds: u64,
    pub eta: f64,
    pub batch_size: usize,
    /// Fraction of coordinates communicated; `K = max(1, round(p·d))`.
    #[serde(default = "default_p")]
    pub p: f64,
    #[serde(default = "default_bits")]
    pub value_bit_width: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
    #[serde(default)]
    pub per_worker_eval: bool,
    pub dataset: DatasetConfig,
    #[serde(default = "default_partition")]
    pub partition: PartitionMode,
    pub timing: TimingConfig,
    #[serde(default)]
    pub regularizer: RegularizerParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory: Option<TheoryConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default = "yes")]
    pub normalize: bool,
    #[serde(default)]
    pub val_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub libsvm: Option<LibsvmSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibsvmSource {
    pub path: PathBuf,
    /// Feature dimension; inferred from the largest index when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    /// Seconds per local step, one entry per worker (or a single entry
    /// broadcast to `n_workers`).
    pub taus: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_workers: Option<usize>,
    pub m: u64,
    pub zeta: u64,
    /// Compute window of the blocking methods; defaults to `M·τ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocking_compute_window: Option<u64>,
}

impl TimingConfig {
    pub fn worker_taus(&self) -> Vec<u64> {
        match (self.n_workers, self.taus.len()) {
            (Some(n), 1) => vec![self.taus[0]; n],
            _ => self.taus.clone(),
        }
    }
}

/// Inputs of the `theory` report. Constants left unset are estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_c_r")]
    pub c_r: f64,
    #[serde(default = "default_noise_samples")]
    pub noise_samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_sq: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            alpha: None,
            beta: None,
            epsilon: default_epsilon(),
            c_r: default_c_r(),
            noise_samples: default_noise_samples(),
            l: None,
            sigma_sq: None,
            g: None,
            delta: None,
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_p() -> f64 {
    1.0
}
fn default_bits() -> u64 {
    crate::metrics::DEFAULT_VALUE_BITS
}
fn default_eval_every() -> u64 {
    1
}
fn yes() -> bool {
    true
}
fn default_partition() -> PartitionMode {
    PartitionMode::Shard
}
fn default_epsilon() -> f64 {
    1e-2
}
fn default_c_r() -> f64 {
    crate::theory::DEFAULT_C_R
}
fn default_noise_samples() -> usize {
    200
}

/// `K = max(1, round(p·d))`, rounding halves up.
pub fn k_from_p(p: f64, d: usize) -> usize {
    ((p * d as f64 + 0.5).floor() as usize).clamp(1, d.max(1))
}

/// A configuration that passed validation, with derived quantities.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    /// The config with every path made absolute.
    pub config: ExperimentConfig,
    pub d: usize,
    pub k: usize,
    pub plan: TimingPlan,
    pub schedules: Vec<RoundSchedule>,
}

/// Parses TOML text. Accepts either a config file or a run manifest, whose
/// `[config]` table holds the resolved configuration.
pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, Vec<ConfigIssue>> {
    let value: toml::Table =
        toml::from_str(text).map_err(|e| vec![ConfigIssue::new("<file>", e.to_string())])?;
    let table = match value.get("config") {
        Some(toml::Value::Table(t)) if value.contains_key("manifest_version") => t.clone(),
        _ => value,
    };
    table
        .try_into()
        .map_err(|e: toml::de::Error| vec![ConfigIssue::new("<file>", e.message().to_string())])
}

fn absolutize(path: &Path, base: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Parses and checks every cross-field constraint, collecting all issues.
/// Relative paths resolve against `base_dir`.
pub fn validate_config(
    text: &str,
    base_dir: &Path,
) -> std::result::Result<ResolvedConfig, Vec<ConfigIssue>> {
    let mut cfg = parse_config(text)?;
    cfg.output_dir = absolutize(&cfg.output_dir, base_dir);
    if let Some(src) = &mut cfg.dataset.libsvm {
        src.path = absolutize(&src.path, base_dir);
    }
    check_config(cfg)
}

/// Validates an already-parsed config whose paths are final.
pub fn check_config(
    cfg: ExperimentConfig,
) -> std::result::Result<ResolvedConfig, Vec<ConfigIssue>> {
    let mut issues = Vec::new();
    let mut push = |i: ConfigIssue| issues.push(i);

    if cfg.run_name.is_empty()
        || cfg.run_name.contains(['/', '\\'])
        || cfg.run_name == "."
        || cfg.run_name == ".."
    {
        push(
            ConfigIssue::new("run_name", "must be a non-empty plain name")
                .hint("e.g. \"b1_heterogeneous\""),
        );
    }
    if cfg.methods.is_empty() {
        push(
            ConfigIssue::new("methods", "at least one method is required").hint(format!(
                "choose from {}",
                Method::ALL.map(|m| m.name()).join(", ")
            )),
        );
    }
    let mut seen = Vec::new();
    for m in &cfg.methods {
        if seen.contains(m) {
            push(ConfigIssue::new("methods", format!("{m} listed twice")));
        }
        seen.push(*m);
    }
    if cfg.seeds.is_empty() {
        push(ConfigIssue::new("seeds", "at least one seed is required"));
    }
    let mut sorted = cfg.seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != cfg.seeds.len() {
        push(ConfigIssue::new("seeds", "seeds must be distinct"));
    }
    if !(cfg.eta > 0.0 && cfg.eta.is_finite()) {
        push(ConfigIssue::new(
            "eta",
            format!("{} must be positive and finite", cfg.eta),
        ));
    }
    if cfg.batch_size == 0 {
        push(ConfigIssue::new("batch_size", "must be at least 1"));
    }
    if !(cfg.p > 0.0 && cfg.p <= 1.0) {
        push(
            ConfigIssue::new("p", format!("{} must lie in (0, 1]", cfg.p))
                .hint("use p = 1 for full averaging"),
        );
    }
    if cfg.value_bit_width == 0 {
        push(ConfigIssue::new("value_bit_width", "must be at least 1"));
    }
    if cfg.eval_every == 0 {
        push(ConfigIssue::new("eval_every", "must be at least 1"));
    }
    if !(0.0..1.0).contains(&cfg.dataset.val_fraction) {
        push(ConfigIssue::new(
            "dataset.val_fraction",
            "must lie in [0, 1)",
        ));
    }
    if let PartitionMode::Dirichlet { alpha } = cfg.partition {
        if !(alpha > 0.0 && alpha.is_finite()) {
            push(
                ConfigIssue::new("partition.alpha", "must be positive")
                    .hint("0.1 is strongly non-iid, 100 is near-iid"),
            );
        }
    }
    if let Err(e) = cfg.regularizer.validate() {
        push(ConfigIssue::new("regularizer", e.to_string()));
    }
    if let Some(t) = &cfg.theory {
        if t.epsilon.is_nan() || t.epsilon <= 0.0 {
            push(ConfigIssue::new("theory.epsilon", "must be positive"));
        }
        if t.c_r.is_nan() || t.c_r <= 0.0 {
            push(ConfigIssue::new("theory.c_r", "must be positive"));
        }
        if t.noise_samples < 2 {
            push(ConfigIssue::new(
                "theory.noise_samples",
                "must be at least 2",
            ));
        }
    }

    // Dimension, from the synthetic spec or the data file.
    let d = match (&cfg.dataset.synthetic, &cfg.dataset.libsvm) {
        (Some(s), None) => {
            if s.d == 0 || s.n_examples == 0 {
                push(ConfigIssue::new(
                    "dataset.synthetic",
                    "d and n_examples must be at least 1",
                ));
                None
            } else {
                Some(s.d)
            }
        }
        (None, Some(src)) => match src.dimension {
            Some(0) => {
                push(ConfigIssue::new(
                    "dataset.libsvm.dimension",
                    "must be at least 1",
                ));
                None
            }
            Some(d) => Some(d),
            None => match load_libsvm(&src.path, None) {
                Ok(ds) => Some(ds.dim()),
                Err(e) => {
                    push(ConfigIssue::new("dataset.libsvm.path", e.to_string()));
                    None
                }
            },
        },
        _ => {
            push(
                ConfigIssue::new(
                    "dataset",
                    "exactly one of [dataset.synthetic] or [dataset.libsvm] is required",
                )
                .hint("e.g. [dataset.synthetic] d = 100, n_examples = 8000"),
            );
            None
        }
    };

    // Timing.
    let t = &cfg.timing;
    if let Some(n) = t.n_workers {
        if n == 0 {
            push(ConfigIssue::new("timing.n_workers", "must be at least 1"));
        } else if t.taus.len() != 1 && t.taus.len() != n {
            push(
                ConfigIssue::new(
                    "timing.n_workers",
                    format!("{n} workers but {} taus", t.taus.len()),
                )
                .hint("give one tau per worker, or a single tau to share"),
            );
        }
    }
    let plan = match build_plan(&t.worker_taus(), t.m, t.zeta) {
        Ok(p) => Some(p),
        Err(e) => {
            let msg = strip_prefix(&e);
            let field = if msg.starts_with("zeta") {
                "timing.zeta"
            } else if msg.starts_with('M') {
                "timing.m"
            } else if msg.contains("tau") {
                "timing.taus"
            } else {
                "timing"
            };
            push(ConfigIssue::new(field, msg));
            None
        }
    };

    let mut schedules = Vec::new();
    let mut k = 0;
    if let (Some(d), Some(plan)) = (d, &plan) {
        k = k_from_p(cfg.p, d);
        for &m in &cfg.methods {
            match RoundSchedule::new(m, plan, k, d, t.blocking_compute_window) {
                Ok(s) => schedules.push(s),
                Err(e) => {
                    let mut issue =
                        ConfigIssue::new("methods", format!("{m}: {}", strip_prefix(&e)));
                    if matches!(m, Method::SyncSgd | Method::FedavgFull) {
                        issue = issue.hint(format!("resolved K={k}, d={d}"));
                    }
                    push(issue);
                }
            }
        }
    }

    if issues.is_empty() {
        Ok(ResolvedConfig {
            d: d.expect("dimension resolved when no issues"),
            k,
            plan: plan.expect("plan built when no issues"),
            schedules,
            config: cfg,
        })
    } else {
        Err(issues)
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Reads and validates a config (or manifest) file.
pub fn load_config(path: &Path) -> Result<ResolvedConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let absolute = std::path::absolute(path).map_err(|e| Error::io(path, e))?;
    let base = absolute.parent().unwrap_or(Path::new("/"));
    validate_config(&text, base).map_err(Error::Invalid)
}
