//! Pairwise-accuracy evaluation, learning curves and vote tallies.
//!
//! [`run_protocol`] reserves a fixed evaluation split, then for every
//! training-set size and repeat draws an independent training subset and
//! scores three query variants on the fixed split:
//!
//! * `original`: the base query, unadapted;
//! * `positive`: [`positive_adapt`] toward the training winners;
//! * `bt`: [`adapt`] on the full training pairs.
//!
//! Cells run through [`Execution`], and the report is assembled in a fixed
//! order afterwards, so parallel and sequential runs produce identical
//! reports.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bt::{adapt, positive_adapt, predict_preferred, AdaptConfig, Choice};
use crate::dataio::{split, PreferenceDataset};
use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::seed;

/// Evaluation pairs reserved when the pool is large enough.
pub const DEFAULT_EVAL_RESERVE: usize = 2000;
/// Fraction of the pool reserved otherwise.
pub const FALLBACK_EVAL_FRACTION: f64 = 0.2;

const EVAL_SPLIT_TAG: u64 = 0x6576_616c;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Original,
    Positive,
    Bt,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Original, Variant::Positive, Variant::Bt];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Original => "original",
            Variant::Positive => "positive",
            Variant::Bt => "bt",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown variant '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: Variant,
    pub n_train: usize,
    pub mean: f64,
    /// Population standard deviation over repeats.
    pub std: f64,
    pub accuracies: Vec<f64>,
    /// Training-draw seed of each repeat. Empty for size 0, which draws nothing.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub master_seed: u64,
    pub n_repeats: usize,
    pub eval_size: usize,
    pub config: AdaptConfig,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn row(&self, variant: Variant, n_train: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.variant == variant && r.n_train == n_train)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ProtocolOptions {
    /// Size of the fixed evaluation split; see [`default_eval_reserve`] when `None`.
    pub eval_reserve: Option<usize>,
    pub execution: Execution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Validation(format!("unknown report format '{other}'"))),
        }
    }
}

/// Fraction of pairs whose recorded winner the query also prefers.
pub fn pairwise_accuracy(x: &Embedding, eval_set: &PreferenceDataset) -> Result<f64> {
    if eval_set.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    let mut hits = 0usize;
    for p in eval_set.preference_pairs() {
        if predict_preferred(x, p.winner, p.loser)? == Choice::First {
            hits += 1;
        }
    }
    Ok(hits as f64 / eval_set.len() as f64)
}

/// 2000 pairs when that still leaves room for the largest training size, else 20% of the pool.
pub fn default_eval_reserve(pool_len: usize, max_train: usize) -> usize {
    if pool_len >= DEFAULT_EVAL_RESERVE + max_train {
        DEFAULT_EVAL_RESERVE
    } else {
        (pool_len as f64 * FALLBACK_EVAL_FRACTION).floor() as usize
    }
}

/// Seed of the training draw for one `(size, repeat)` cell.
pub fn cell_seed(master: u64, size: usize, repeat: usize) -> u64 {
    seed::derive(master, &[size as u64, repeat as u64])
}

fn eval_split_seed(master: u64) -> u64 {
    seed::derive(master, &[EVAL_SPLIT_TAG])
}

/// Mean and population std; exactly `(v, 0)` when all values equal `v`.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.windows(2).all(|w| w[0] == w[1]) {
        return (values.first().copied().unwrap_or(0.0), 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct Cell {
    seed: u64,
    positive: f64,
    bt: f64,
}

pub fn run_protocol(
    base_x: &Embedding,
    pool: &PreferenceDataset,
    sizes: &[usize],
    n_repeats: usize,
    cfg: &AdaptConfig,
    seed: u64,
    options: ProtocolOptions,
) -> Result<EvalReport> {
    cfg.validate()?;
    if n_repeats == 0 {
        return Err(Error::InvalidConfig("n_repeats must be at least 1".into()));
    }
    if base_x.dim() != pool.table().dim() {
        return Err(Error::DimensionMismatch {
            expected: pool.table().dim(),
            found: base_x.dim(),
        });
    }
    let max_size = sizes.iter().copied().max().unwrap_or(0);
    let reserve = options
        .eval_reserve
        .unwrap_or_else(|| default_eval_reserve(pool.len(), max_size));
    if reserve == 0 {
        return Err(Error::OutOfRange(format!(
            "pool of {} pairs is too small to reserve an evaluation split",
            pool.len()
        )));
    }
    if reserve + max_size > pool.len() {
        return Err(Error::OutOfRange(format!(
            "training size {max_size} plus {reserve} evaluation pairs exceeds the pool of {}",
            pool.len()
        )));
    }

    let (train_pool, eval_set) = split(pool, pool.len() - reserve, eval_split_seed(seed))?;
    let original = pairwise_accuracy(base_x, &eval_set)?;

    let adapted_sizes: Vec<usize> = sizes.iter().copied().filter(|&s| s > 0).collect();
    let cells = options.execution.try_map(adapted_sizes.len() * n_repeats, |k| {
        let size = adapted_sizes[k / n_repeats];
        let cell = cell_seed(seed, size, k % n_repeats);
        let (train, _) = split(&train_pool, size, cell)?;
        let positive = positive_adapt(base_x, &train.winners(), cfg)?;
        let (bt, _) = adapt(base_x, &train.preference_pairs(), cfg)?;
        Ok::<_, Error>(Cell {
            seed: cell,
            positive: pairwise_accuracy(&positive, &eval_set)?,
            bt: pairwise_accuracy(&bt, &eval_set)?,
        })
    })?;

    let mut rows = Vec::with_capacity(sizes.len() * Variant::ALL.len());
    for &size in sizes {
        let (accs, seeds): (Vec<[f64; 3]>, Vec<u64>) = if size == 0 {
            (vec![[original; 3]; n_repeats], Vec::new())
        } else {
            let start = adapted_sizes.iter().position(|&s| s == size).expect("size listed") * n_repeats;
            cells[start..start + n_repeats]
                .iter()
                .map(|c| ([original, c.positive, c.bt], c.seed))
                .unzip()
        };
        for (vi, variant) in Variant::ALL.into_iter().enumerate() {
            let accuracies: Vec<f64> = accs.iter().map(|a| a[vi]).collect();
            let (mean, std) = mean_std(&accuracies);
            rows.push(ReportRow {
                variant,
                n_train: size,
                mean,
                std,
                accuracies,
                seeds: seeds.clone(),
            });
        }
    }

    Ok(EvalReport {
        master_seed: seed,
        n_repeats,
        eval_size: eval_set.len(),
        config: *cfg,
        rows,
    })
}

/// One annotator's pick among competing variants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub voter: String,
    pub choice: String,
}

/// Share of votes per declared variant, in declaration order.
pub fn win_rate<S: AsRef<str>>(votes: &[Vote], variants: &[S]) -> Result<Vec<(String, f64)>> {
    if votes.is_empty() {
        return Err(Error::Empty("vote list"));
    }
    let mut counts = vec![0usize; variants.len()];
    for v in votes {
        let slot = variants
            .iter()
            .position(|name| name.as_ref() == v.choice)
            .ok_or_else(|| Error::Validation(format!("unknown variant '{}' in vote by '{}'", v.choice, v.voter)))?;
        counts[slot] += 1;
    }
    let total = votes.len() as f64;
    Ok(variants
        .iter()
        .zip(counts)
        .map(|(name, c)| (name.as_ref().to_owned(), c as f64 / total))
        .collect())
}

pub const CSV_HEADER: &str = "variant,n_train,mean,std,n_repeats";

pub fn write_report(mut w: impl Write, report: &EvalReport, format: ReportFormat) -> std::io::Result<()> {
    match format {
        ReportFormat::Json => {
            serde_json::to_writer_pretty(&mut w, report)?;
            writeln!(w)?;
        }
        ReportFormat::Csv => {
            writeln!(w, "{CSV_HEADER}")?;
            for r in &report.rows {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    r.variant,
                    r.n_train,
                    r.mean,
                    r.std,
                    r.accuracies.len()
                )?;
            }
        }
    }
    w.flush()
}

pub fn emit_report(report: &EvalReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_report(&mut buf, report, format).map_err(|e| Error::io(path, e))?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
