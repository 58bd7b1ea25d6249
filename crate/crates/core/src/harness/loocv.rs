//! Leave-one-dataset-out evaluation of the meta-test techniques.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{memory_fraction, run_meta_test, score_fronts, MetaTestContext, MetaTestOptions};
use crate::completion::{softimpute, weighted_softimpute, ImputeConfig};
use crate::io::{write_json, write_rows_csv};
use crate::matrices::{
    apply_mask_values, nonuniform_probs, relative_error, uniform_mask, MeasurementMatrix,
};
use crate::pareto::{choose_random_high_memory, front_from_vectors, ParetoPoint};
use crate::selection::{GpParams, Technique};
use crate::{Error, Matrix, Result};

/// How the meta-training block is observed in each split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetaTrainObservation {
    Full,
    Uniform { ratio: f64 },
    Nonuniform { p_max: f64 },
}

/// Memory cap applied to the held-out dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MemoryCapRule {
    None,
    /// Median of every entry of the input memory matrix.
    MedianOfMemory,
    Bytes { bytes: f64 },
}

impl MemoryCapRule {
    pub fn resolve(&self, memory: &Matrix<f64>) -> Option<f64> {
        match *self {
            MemoryCapRule::None => None,
            MemoryCapRule::Bytes { bytes } => Some(bytes),
            MemoryCapRule::MedianOfMemory => {
                let mut v: Vec<f64> = memory.iter().copied().collect();
                v.sort_by(f64::total_cmp);
                let n = v.len();
                if n == 0 {
                    None
                } else if n % 2 == 1 {
                    Some(v[n / 2])
                } else {
                    Some(0.5 * (v[n / 2 - 1] + v[n / 2]))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoocvSetting {
    pub observation: MetaTrainObservation,
    pub memory_cap: MemoryCapRule,
}

pub const DEFAULT_RATIO: f64 = 0.2;
pub const DEFAULT_P_MAX: f64 = 0.5;

impl LoocvSetting {
    pub fn new(observation: MetaTrainObservation, memory_cap: MemoryCapRule) -> Result<Self> {
        let s = LoocvSetting {
            observation,
            memory_cap,
        };
        s.validate()?;
        Ok(s)
    }

    /// Settings I–VI: {full, uniform(ratio), nonuniform(p_max)} × {no cap,
    /// median cap}.
    pub fn numbered(n: u8, ratio: f64, p_max: f64) -> Result<Self> {
        let observation = match n {
            1 | 2 => MetaTrainObservation::Full,
            3 | 4 => MetaTrainObservation::Uniform { ratio },
            5 | 6 => MetaTrainObservation::Nonuniform { p_max },
            _ => return Err(Error::InvalidArgument(format!("setting must be 1..=6, got {n}"))),
        };
        let memory_cap = if n.is_multiple_of(2) {
            MemoryCapRule::MedianOfMemory
        } else {
            MemoryCapRule::None
        };
        Self::new(observation, memory_cap)
    }

    /// Parses a Roman numeral `I`..`VI` (or `1`..`6`).
    pub fn parse(s: &str, ratio: f64, p_max: f64) -> Result<Self> {
        let n = match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => 1,
            "II" | "2" => 2,
            "III" | "3" => 3,
            "IV" | "4" => 4,
            "V" | "5" => 5,
            "VI" | "6" => 6,
            other => return Err(Error::Parse(format!("unknown setting {other:?}; expected I..VI"))),
        };
        Self::numbered(n, ratio, p_max)
    }

    pub fn validate(&self) -> Result<()> {
        match self.observation {
            MetaTrainObservation::Uniform { ratio } if !(ratio > 0.0 && ratio <= 1.0) => {
                Err(Error::InvalidArgument(format!("ratio must be in (0, 1], got {ratio}")))
            }
            MetaTrainObservation::Nonuniform { p_max } if !(p_max > 0.0 && p_max <= 1.0) => {
                Err(Error::InvalidArgument(format!("p_max must be in (0, 1], got {p_max}")))
            }
            _ => match self.memory_cap {
                MemoryCapRule::Bytes { bytes } if !(bytes > 0.0) => {
                    Err(Error::InvalidArgument(format!("memory cap must be positive, got {bytes}")))
                }
                _ => Ok(()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvConfig {
    pub setting: LoocvSetting,
    pub techniques: Vec<Technique>,
    pub budgets: Vec<usize>,
    pub seeds: Vec<u64>,
    pub rank: usize,
    pub impute: ImputeConfig,
    pub gp: GpParams,
    /// HyperDiff corner in normalized coordinates.
    pub bound: (f64, f64),
}

impl LoocvConfig {
    pub fn new(setting: LoocvSetting, techniques: Vec<Technique>, budgets: Vec<usize>, seeds: Vec<u64>) -> Self {
        LoocvConfig {
            setting,
            techniques,
            budgets,
            seeds,
            rank: 3,
            impute: ImputeConfig::default(),
            gp: GpParams::default(),
            bound: super::DEFAULT_BOUND,
        }
    }

    fn validate(&self) -> Result<()> {
        self.setting.validate()?;
        self.impute.validate()?;
        if self.techniques.is_empty() || self.budgets.is_empty() || self.seeds.is_empty() {
            return Err(Error::InvalidArgument(
                "techniques, budgets and seeds must all be nonempty".into(),
            ));
        }
        if self.rank == 0 {
            return Err(Error::InvalidArgument("rank must be positive".into()));
        }
        if let Some(&l) = self.budgets.iter().find(|&&l| l < self.rank) {
            return Err(Error::InvalidArgument(format!(
                "budget {l} is below the embedding rank {}",
                self.rank
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub test_index: usize,
    pub test_dataset: String,
    pub technique: Technique,
    pub budget: usize,
    pub selected: Vec<usize>,
    pub feasible_count: usize,
    pub memory_fraction: f64,
    pub convergence: f64,
    pub hyperdiff: f64,
    pub relative_error: f64,
    pub chosen_index: usize,
    pub chosen_config: String,
    pub chosen_true_error: f64,
    /// True error of a random highest-memory feasible configuration.
    pub baseline_true_error: f64,
}

/// A split whose meta-test could not run (e.g. fewer feasible
/// configurations than the embedding rank).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedSplit {
    pub seed: u64,
    pub test_index: usize,
    pub test_dataset: String,
    pub technique: Technique,
    pub budget: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Convergence,
    Hyperdiff,
    RelativeError,
    MemoryFraction,
    ChosenTrueError,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Convergence,
        Metric::Hyperdiff,
        Metric::RelativeError,
        Metric::MemoryFraction,
        Metric::ChosenTrueError,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Convergence => "convergence",
            Metric::Hyperdiff => "hyperdiff",
            Metric::RelativeError => "relative_error",
            Metric::MemoryFraction => "memory_fraction",
            Metric::ChosenTrueError => "chosen_true_error",
        }
    }

    pub fn of(&self, r: &RunRecord) -> f64 {
        match self {
            Metric::Convergence => r.convergence,
            Metric::Hyperdiff => r.hyperdiff,
            Metric::RelativeError => r.relative_error,
            Metric::MemoryFraction => r.memory_fraction,
            Metric::ChosenTrueError => r.chosen_true_error,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown metric {s:?}")))
    }
}

/// Mean of a metric with two standard errors: across datasets (after
/// averaging each dataset over seeds) and across individual splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub technique: Technique,
    pub budget: usize,
    pub metric: Metric,
    pub mean: f64,
    pub se_datasets: f64,
    pub se_splits: f64,
    pub n_datasets: usize,
    pub n_splits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: LoocvConfig,
    pub memory_cap: Option<f64>,
    pub records: Vec<RunRecord>,
    pub skipped: Vec<SkippedSplit>,
    pub aggregates: Vec<Aggregate>,
}

fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

fn aggregate(records: &[RunRecord], techniques: &[Technique], budgets: &[usize]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for &technique in techniques {
        for &budget in budgets {
            let cell: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.technique == technique && r.budget == budget)
                .collect();
            if cell.is_empty() {
                continue;
            }
            for metric in Metric::ALL {
                let splits: Vec<f64> = cell.iter().map(|r| metric.of(r)).collect();
                let mut per_dataset: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
                for r in &cell {
                    let e = per_dataset.entry(r.test_index).or_insert((0.0, 0));
                    e.0 += metric.of(r);
                    e.1 += 1;
                }
                let datasets: Vec<f64> = per_dataset.values().map(|&(s, c)| s / c as f64).collect();
                out.push(Aggregate {
                    technique,
                    budget,
                    metric,
                    mean: splits.iter().sum::<f64>() / splits.len() as f64,
                    se_datasets: standard_error(&datasets),
                    se_splits: standard_error(&splits),
                    n_datasets: datasets.len(),
                    n_splits: splits.len(),
                });
            }
        }
    }
    out
}

fn without_row(m: &Matrix<f64>, i: usize) -> Matrix<f64> {
    m.clone().remove_row(i)
}

/// Observes and completes the meta-training block for one split.
fn meta_train_block(
    train: &Matrix<f64>,
    train_memory: &Matrix<f64>,
    observation: MetaTrainObservation,
    impute: &ImputeConfig,
    seed: u64,
) -> Result<Matrix<f64>> {
    let (n, d) = train.shape();
    match observation {
        MetaTrainObservation::Full => Ok(train.clone()),
        MetaTrainObservation::Uniform { ratio } => {
            let mask = uniform_mask(n, d, ratio, seed)?;
            softimpute(&apply_mask_values(train, &mask)?, impute)
        }
        MetaTrainObservation::Nonuniform { p_max } => {
            let probs = nonuniform_probs(train_memory, p_max)?;
            let mask = crate::matrices::sample_mask(&probs, seed)?;
            weighted_softimpute(&apply_mask_values(train, &mask)?, &probs, impute)
        }
    }
}

enum Outcome {
    Record(RunRecord),
    Skipped(SkippedSplit),
}

/// Leave-one-dataset-out evaluation: for every seed and every held-out row,
/// observe and complete the remaining rows per the setting, then run each
/// technique at each budget and score its frontier against the truth.
///
/// Splits run in parallel; the split seed is `seed ^ test_index`, so the
/// report is independent of scheduling.
pub fn run_meta_loocv(
    error: &MeasurementMatrix<f64>,
    memory: &MeasurementMatrix<f64>,
    cfg: &LoocvConfig,
) -> Result<RunReport> {
    cfg.validate()?;
    let (n, d) = error.shape();
    if memory.shape() != (n, d) {
        return Err(Error::shape(format!("{n}×{d}"), format!("{:?}", memory.shape())));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 datasets, got {n}")));
    }
    if cfg.rank > (n - 1).min(d) {
        return Err(Error::InvalidArgument(format!(
            "rank {} exceeds the meta-training block size {}×{d}",
            cfg.rank,
            n - 1
        )));
    }
    let e = error.values();
    let m = memory.values();
    let cap = cfg.setting.memory_cap.resolve(m);

    // With full observation the factorization does not depend on the seed.
    let full_contexts: Option<Vec<MetaTestContext>> = match cfg.setting.observation {
        MetaTrainObservation::Full => Some(
            (0..n)
                .into_par_iter()
                .map(|i| MetaTestContext::new(without_row(e, i), cfg.rank))
                .collect::<Result<Vec<_>>>()?,
        ),
        _ => None,
    };

    let tasks: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| (0..n).map(move |i| (s, i)))
        .collect();

    let results: Vec<Vec<Outcome>> = tasks
        .par_iter()
        .map(|&(seed, i)| {
            let split_seed = seed ^ i as u64;
            let owned;
            let ctx = match &full_contexts {
                Some(c) => &c[i],
                None => {
                    let completed = meta_train_block(
                        &without_row(e, i),
                        &without_row(m, i),
                        cfg.setting.observation,
                        &cfg.impute,
                        split_seed,
                    )?;
                    owned = MetaTestContext::new(completed, cfg.rank)?;
                    &owned
                }
            };
            run_split(error, memory, ctx, cfg, cap, seed, split_seed, i)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for o in results.into_iter().flatten() {
        match o {
            Outcome::Record(r) => records.push(r),
            Outcome::Skipped(s) => skipped.push(s),
        }
    }
    let aggregates = aggregate(&records, &cfg.techniques, &cfg.budgets);
    Ok(RunReport {
        config: cfg.clone(),
        memory_cap: cap,
        records,
        skipped,
        aggregates,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_split(
    error: &MeasurementMatrix<f64>,
    memory: &MeasurementMatrix<f64>,
    ctx: &MetaTestContext,
    cfg: &LoocvConfig,
    cap: Option<f64>,
    seed: u64,
    split_seed: u64,
    i: usize,
) -> Result<Vec<Outcome>> {
    let truth = error.row(i);
    let mem = memory.row(i);
    let true_front = front_from_vectors(&mem, &truth)?;
    let all_points: Vec<ParetoPoint<f64>> = mem
        .iter()
        .zip(&truth)
        .enumerate()
        .map(|(j, (&mj, &ej))| ParetoPoint::new(mj, ej, j))
        .collect();
    let dataset = error.row_ids()[i].clone();
    let opts = MetaTestOptions {
        memory_cap: cap,
        gp: cfg.gp,
        seed: split_seed,
    };
    let mut out = Vec::with_capacity(cfg.techniques.len() * cfg.budgets.len());
    for &technique in &cfg.techniques {
        for &budget in &cfg.budgets {
            let res = run_meta_test(ctx, &mem, technique, budget, &opts, &mut |j| truth[j]);
            let outcome = match res {
                Ok(o) => o,
                Err(err @ (Error::Infeasible(_) | Error::SingularInit { .. } | Error::RetriesExhausted { .. })) => {
                    out.push(Outcome::Skipped(SkippedSplit {
                        seed,
                        test_index: i,
                        test_dataset: dataset.clone(),
                        technique,
                        budget,
                        reason: err.to_string(),
                    }));
                    continue;
                }
                Err(err) => return Err(err),
            };
            let scores = score_fronts(&outcome.front, &true_front, &mem, cfg.bound)?;
            let baseline = choose_random_high_memory(&all_points, cap.unwrap_or(f64::INFINITY), split_seed)?;
            let chosen = outcome.chosen.config_id;
            out.push(Outcome::Record(RunRecord {
                seed,
                test_index: i,
                test_dataset: dataset.clone(),
                technique,
                budget,
                memory_fraction: memory_fraction(&outcome.estimate.selected, &outcome.feasible, &mem)?,
                selected: outcome.estimate.selected,
                feasible_count: outcome.feasible.len(),
                convergence: scores.convergence,
                hyperdiff: scores.hyperdiff,
                relative_error: relative_error(&outcome.estimate.e_hat, &truth)?,
                chosen_index: chosen,
                chosen_config: error.col_ids()[chosen].clone(),
                chosen_true_error: truth[chosen],
                baseline_true_error: baseline.error,
            }));
        }
    }
    Ok(out)
}

/// Ratio of a technique's metric to the baseline technique's on the same
/// seed, dataset and budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RelativeValue {
    Ratio { ratio: f64 },
    /// The baseline scored exactly zero; `value` is the technique's raw
    /// metric (zero means an exact tie).
    ZeroBaseline { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeRecord {
    pub seed: u64,
    pub test_dataset: String,
    pub technique: Technique,
    pub budget: usize,
    pub value: RelativeValue,
}

pub fn relative_performance(
    report: &RunReport,
    baseline: Technique,
    metric: Metric,
) -> Result<Vec<RelativeRecord>> {
    let base: BTreeMap<(u64, usize, usize), f64> = report
        .records
        .iter()
        .filter(|r| r.technique == baseline)
        .map(|r| ((r.seed, r.test_index, r.budget), metric.of(r)))
        .collect();
    if base.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "baseline technique {baseline} is not present in the report"
        )));
    }
    Ok(report
        .records
        .iter()
        .filter_map(|r| {
            let b = *base.get(&(r.seed, r.test_index, r.budget))?;
            let v = metric.of(r);
            let value = if b == 0.0 {
                RelativeValue::ZeroBaseline { value: v }
            } else {
                RelativeValue::Ratio { ratio: v / b }
            };
            Some(RelativeRecord {
                seed: r.seed,
                test_dataset: r.test_dataset.clone(),
                technique: r.technique,
                budget: r.budget,
                value,
            })
        })
        .collect())
}

const RECORD_HEADER: [&str; 15] = [
    "seed",
    "test_index",
    "test_dataset",
    "technique",
    "budget",
    "selected",
    "feasible_count",
    "memory_fraction",
    "convergence",
    "hyperdiff",
    "relative_error",
    "chosen_index",
    "chosen_config",
    "chosen_true_error",
    "baseline_true_error",
];

impl RunReport {
    /// Writes the JSON report plus `<stem>.csv` (one row per record) and
    /// `<stem>_aggregates.csv`.
    pub fn write(&self, json_path: &Path) -> Result<()> {
        write_json(json_path, self)?;
        let rows: Vec<Vec<String>> = self
            .records
            .iter()
            .map(|r| {
                vec![
                    r.seed.to_string(),
                    r.test_index.to_string(),
                    r.test_dataset.clone(),
                    r.technique.to_string(),
                    r.budget.to_string(),
                    r.selected.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
                    r.feasible_count.to_string(),
                    format!("{:?}", r.memory_fraction),
                    format!("{:?}", r.convergence),
                    format!("{:?}", r.hyperdiff),
                    format!("{:?}", r.relative_error),
                    r.chosen_index.to_string(),
                    r.chosen_config.clone(),
                    format!("{:?}", r.chosen_true_error),
                    format!("{:?}", r.baseline_true_error),
                ]
            })
            .collect();
        write_rows_csv(json_path.with_extension("csv"), &RECORD_HEADER, &rows)?;
        let agg: Vec<Vec<String>> = self
            .aggregates
            .iter()
            .map(|a| {
                vec![
                    a.technique.to_string(),
                    a.budget.to_string(),
                    a.metric.to_string(),
                    format!("{:?}", a.mean),
                    format!("{:?}", a.se_datasets),
                    format!("{:?}", a.se_splits),
                    a.n_datasets.to_string(),
                    a.n_splits.to_string(),
                ]
            })
            .collect();
        let stem = json_path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
        write_rows_csv(
            json_path.with_file_name(format!("{stem}_aggregates.csv")),
            &["technique", "budget", "metric", "mean", "se_datasets", "se_splits", "n_datasets", "n_splits"],
            &agg,
        )
    }

    pub fn aggregate_for(&self, technique: Technique, budget: usize, metric: Metric) -> Option<&Aggregate> {
        self.aggregates
            .iter()
            .find(|a| a.technique == technique && a.budget == budget && a.metric == metric)
    }
}
