//! Dataset ingestion and preparation: LIBSVM parsing, standardization,
//! train/validation splitting, worker partitioning and a synthetic generator.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::{Purpose, RngStream, StreamKey};

/// Binary classification examples with dense features and labels in {−1, +1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<f64>,
    d: usize,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<f64>, d: usize) -> Result<Self> {
        if features.len() != labels.len() * d {
            return Err(Error::config(format!(
                "feature matrix has {} entries, expected {} examples × {d}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(i) = labels.iter().position(|&y| y != 1.0 && y != -1.0) {
            return Err(Error::config(format!("label of example {i} is not ±1")));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!(
                "non-finite feature in example {}",
                i / d.max(1)
            )));
        }
        Ok(Self {
            features,
            labels,
            d,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            labels,
            d: self.d,
        }
    }

    /// SHA-256 over dimension, labels and features, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.d as u64).to_le_bytes());
        for y in &self.labels {
            h.update(y.to_le_bytes());
        }
        for v in &self.features {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses LIBSVM text. Labels may be any two distinct numbers; the smaller
/// one becomes −1. A file with a single label value maps it to +1 if it is
/// positive and −1 otherwise.
pub fn parse_libsvm(text: &str, dim_override: Option<usize>) -> Result<Dataset> {
    let mut rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    let mut max_index = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let line_no = lineno + 1;
        let perr = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| perr(format!("invalid label {label_tok:?}")))?;
        let mut entries = Vec::new();
        let mut prev = 0usize;
        for tok in tokens {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| perr(format!("expected index:value, found {tok:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| perr(format!("invalid feature index {idx:?}")))?;
            if idx == 0 {
                return Err(perr("feature indices are 1-based".into()));
            }
            if idx <= prev {
                return Err(perr(format!(
                    "feature indices must be strictly increasing ({idx} after {prev})"
                )));
            }
            let val: f64 = val
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| perr(format!("invalid feature value {val:?}")))?;
            prev = idx;
            entries.push((idx - 1, val));
        }
        max_index = max_index.max(prev);
        rows.push((label, entries));
    }
    if rows.is_empty() {
        return Err(Error::config("no examples"));
    }

    let mut distinct: Vec<f64> = Vec::new();
    for (y, _) in &rows {
        if !distinct.contains(y) {
            distinct.push(*y);
            if distinct.len() > 2 {
                return Err(Error::config(format!(
                    "expected a binary label set, found at least {:?}",
                    distinct
                )));
            }
        }
    }
    distinct.sort_by(|a, b| a.total_cmp(b));
    let to_pm = |y: f64| -> f64 {
        match distinct.as_slice() {
            [only] => {
                if *only > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            }
            [low, _] if y == *low => -1.0,
            _ => 1.0,
        }
    };

    let d = match dim_override {
        Some(d) if d < max_index => {
            return Err(Error::config(format!(
                "dimension override {d} is smaller than the largest feature index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    let mut features = vec![0.0; rows.len() * d];
    let mut labels = Vec::with_capacity(rows.len());
    for (i, (y, entries)) in rows.iter().enumerate() {
        labels.push(to_pm(*y));
        for &(j, v) in entries {
            features[i * d + j] = v;
        }
    }
    Dataset::new(features, labels, d)
}

/// Serializes to LIBSVM text, omitting zero features.
pub fn write_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    for i in 0..ds.len() {
        out.push_str(if ds.label(i) > 0.0 { "+1" } else { "-1" });
        for (j, v) in ds.row(i).iter().enumerate() {
            if *v != 0.0 {
                out.push_str(&format!(" {}:{}", j + 1, v));
            }
        }
        out.push('\n');
    }
    out
}

/// Reads a LIBSVM file, transparently decompressing `.gz` files.
pub fn load_libsvm(path: &Path, dim_override: Option<usize>) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::new();
    let gz = path.extension().is_some_and(|e| e == "gz");
    let res = if gz {
        flate2::read::GzDecoder::new(file).read_to_string(&mut text)
    } else {
        std::io::BufReader::new(file).read_to_string(&mut text)
    };
    res.map_err(|e| Error::io(path, e))?;
    parse_libsvm(&text, dim_override)
}

/// Per-feature standardization statistics fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
}

/// Floor applied to a feature's standard deviation. Features at or below it
/// are treated as constant and standardized to exactly zero.
pub const STDEV_FLOOR: f64 = 1e-12;

impl NormalizationStats {
    pub fn fit(train: &Dataset) -> Self {
        let d = train.dim();
        let n = train.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for i in 0..train.len() {
            for (m, v) in mean.iter_mut().zip(train.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..train.len() {
            for ((s, v), m) in var.iter_mut().zip(train.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let stdev = var
            .into_iter()
            .map(|s| (s / n).sqrt().max(STDEV_FLOOR))
            .collect();
        Self { mean, stdev }
    }

    pub fn apply(&self, ds: &mut Dataset) {
        let d = ds.d;
        for row in ds.features.chunks_mut(d.max(1)) {
            for ((v, mean), sd) in row.iter_mut().zip(&self.mean).zip(&self.stdev) {
                *v = if *sd <= STDEV_FLOOR {
                    0.0
                } else {
                    (*v - mean) / sd
                };
            }
        }
    }
}

/// Random permutation of `0..n` by Fisher–Yates.
pub(crate) fn permutation(n: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        perm.swap(i, j);
    }
    perm
}

/// Uniform split without replacement; the validation set gets
/// `⌊n·val_fraction⌋` examples. Both halves keep the original example order.
pub fn split_train_val(ds: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::config(format!(
            "val_fraction {val_fraction} must lie in [0, 1)"
        )));
    }
    let n = ds.len();
    let n_val = (n as f64 * val_fraction).floor() as usize;
    let mut rng = RngStream::new(seed, StreamKey::new(Purpose::Split, 0, 0, 0));
    let perm = permutation(n, &mut rng);
    let mut val_idx = perm[..n_val].to_vec();
    let mut train_idx = perm[n_val..].to_vec();
    val_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((ds.subset(&train_idx), ds.subset(&val_idx)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PartitionMode {
    /// Every worker samples from the whole training set.
    Shared,
    /// Disjoint, equally sized i.i.d. shards.
    Shard,
    /// Per-class Dirichlet proportions over workers.
    Dirichlet { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub mode: PartitionMode,
    pub assignments: Vec<Vec<usize>>,
}

impl Partition {
    pub fn workers(&self) -> usize {
        self.assignments.len()
    }

    pub fn empty_workers(&self) -> Vec<usize> {
        (0..self.workers())
            .filter(|&i| self.assignments[i].is_empty())
            .collect()
    }

    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for a in &self.assignments {
            h.update((a.len() as u64).to_le_bytes());
            for &i in a {
                h.update((i as u64).to_le_bytes());
            }
        }
        hex(&h.finalize())
    }
}

pub fn partition_shared(n_train: usize, n_workers: usize) -> Partition {
    Partition {
        mode: PartitionMode::Shared,
        assignments: vec![(0..n_train).collect(); n_workers],
    }
}

pub fn partition_shards(n_train: usize, n_workers: usize, seed: u64) -> Partition {
    let mut rng = RngStream::new(seed, StreamKey::new(Purpose::Partition, 0, 0, 0));
    let perm = permutation(n_train, &mut rng);
    let mut assignments = Vec::with_capacity(n_workers);
    for w in 0..n_workers {
        let lo = w * n_train / n_workers;
        let hi = (w + 1) * n_train / n_workers;
        let mut part = perm[lo..hi].to_vec();
        part.sort_unstable();
        assignments.push(part);
    }
    Partition {
        mode: PartitionMode::Shard,
        assignments,
    }
}

/// Splits `total` items according to `weights` by largest-remainder rounding.
/// Ties in the fractional part go to the lower index.
pub(crate) fn largest_remainder(weights: &[f64], total: usize) -> Vec<usize> {
    let quotas: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Label-Dirichlet partition: for each class, worker proportions are drawn
/// from `Dirichlet(alpha, …, alpha)` and the class's shuffled examples are
/// handed out in contiguous blocks of largest-remainder sizes.
pub fn partition_dirichlet(
    train: &Dataset,
    n_workers: usize,
    alpha: f64,
    seed: u64,
) -> Result<Partition> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::config(format!(
            "dirichlet alpha {alpha} must be positive"
        )));
    }
    if n_workers == 0 {
        return Err(Error::config("at least one worker is required"));
    }
    if train.is_empty() {
        return Err(Error::config("cannot partition an empty training set"));
    }
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::config(e.to_string()))?;
    let mut assignments = vec![Vec::new(); n_workers];
    for (class_no, class) in [-1.0, 1.0].into_iter().enumerate() {
        let members: Vec<usize> = (0..train.len())
            .filter(|&i| train.label(i) == class)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut rng = RngStream::new(
            seed,
            StreamKey::new(Purpose::Partition, 1, class_no as u64, 0),
        );
        let perm = permutation(members.len(), &mut rng);
        let draws: Vec<f64> = (0..n_workers).map(|_| rng.sample(gamma)).collect();
        let total: f64 = draws.iter().sum();
        let weights: Vec<f64> = if total > 0.0 && total.is_finite() {
            draws.iter().map(|g| g / total).collect()
        } else {
            // Every gamma draw underflowed; the class goes to a single worker.
            let pick = rng.below(n_workers as u64) as usize;
            (0..n_workers)
                .map(|w| if w == pick { 1.0 } else { 0.0 })
                .collect()
        };
        let counts = largest_remainder(&weights, members.len());
        let mut cursor = 0;
        for (w, &c) in counts.iter().enumerate() {
            assignments[w].extend(perm[cursor..cursor + c].iter().map(|&p| members[p]));
            cursor += c;
        }
    }
    for a in &mut assignments {
        a.sort_unstable();
    }
    let partition = Partition {
        mode: PartitionMode::Dirichlet { alpha },
        assignments,
    };
    let empty = partition.empty_workers();
    if !empty.is_empty() {
        log::warn!("dirichlet partition left workers {empty:?} without examples");
    }
    Ok(partition)
}

/// Two Gaussian blobs at `±(separation/2)·u` for a random unit direction `u`,
/// unit covariance, alternating labels starting with +1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub d: usize,
    pub n_examples: usize,
    #[serde(default = "default_separation")]
    pub separation: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_separation() -> f64 {
    2.0
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.d == 0 || spec.n_examples == 0 {
        return Err(Error::config(
            "synthetic data needs d >= 1 and n_examples >= 1",
        ));
    }
    if !spec.separation.is_finite() || spec.separation < 0.0 {
        return Err(Error::config(
            "separation must be a finite non-negative number",
        ));
    }
    let mut dir_rng = RngStream::new(spec.seed, StreamKey::new(Purpose::Synthetic, 0, 0, 0));
    let mut u: Vec<f64> = (0..spec.d)
        .map(|_| dir_rng.sample(StandardNormal))
        .collect();
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        u.iter_mut().for_each(|v| *v /= norm);
    } else {
        u[0] = 1.0;
    }
    let half = spec.separation / 2.0;
    let mut features = Vec::with_capacity(spec.d * spec.n_examples);
    let mut labels = Vec::with_capacity(spec.n_examples);
    for k in 0..spec.n_examples {
        let y = if k % 2 == 0 { 1.0 } else { -1.0 };
        let mut rng = RngStream::new(
            spec.seed,
            StreamKey::new(Purpose::Synthetic, 1, k as u64, 0),
        );
        for uj in &u {
            let noise: f64 = rng.sample(StandardNormal);
            features.push(y * half * uj + noise);
        }
        labels.push(y);
    }
    Dataset::new(features, labels, spec.d)
}
