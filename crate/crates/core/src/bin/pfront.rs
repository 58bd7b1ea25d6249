//! `pfront`: command-line driver for frontier estimation experiments.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use precision_frontier::completion::{low_rank_approximation, softimpute, weighted_softimpute, ImputeConfig};
use precision_frontier::formats::{ArchitectureDescriptor, ConfigList, PrecisionConfig};
use precision_frontier::harness::synth::memory_matrix;
use precision_frontier::harness::{
    meta_test_pipeline, run_meta_loocv, synth_lowrank, LoocvConfig, LoocvSetting, MetaTestOptions,
};
use precision_frontier::io::{
    read_mask_csv, read_matrix_csv, read_measurement_csv, write_dense_csv, write_json,
    write_mask_csv, write_measurement_csv, write_rows_csv, LabeledPartial,
};
use precision_frontier::matrices::{
    nonuniform_probs, sample_mask, uniform_mask, MatrixKind, PartialMatrix,
};
use precision_frontier::pareto::{front_from_vectors, ParetoFront};
use precision_frontier::selection::{GpParams, Technique};
use precision_frontier::Matrix;

#[derive(Parser)]
#[command(name = "pfront", version, about = "Error-memory frontier estimation for low-precision configurations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Uniform,
    Nonuniform,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a meta-training observation mask.
    Sample {
        #[arg(long)]
        error: PathBuf,
        #[arg(long)]
        memory: PathBuf,
        #[arg(long, value_enum, default_value = "uniform")]
        scheme: Scheme,
        #[arg(long, default_value_t = 0.2)]
        ratio: f64,
        #[arg(long, default_value_t = 0.5)]
        pmax: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Complete the masked error matrix.
    Complete {
        #[arg(long)]
        error: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        /// Inverse-propensity weighting; needs probabilities in the mask.
        #[arg(long)]
        weighted: bool,
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        /// Truncation rank of the completed matrix (0 keeps it as is).
        #[arg(long, default_value_t = 5)]
        rank: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pareto frontier of one dataset.
    Pareto {
        #[arg(long)]
        error: PathBuf,
        #[arg(long)]
        memory: PathBuf,
        /// Dataset id or row index.
        #[arg(long)]
        row: String,
        /// Observation mask; cells outside it are flagged as estimated.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Meta-test: pick configurations to measure and estimate the frontier.
    Select {
        #[arg(long)]
        train: PathBuf,
        #[arg(long = "memory-new")]
        memory_new: PathBuf,
        #[arg(long)]
        oracle: PathBuf,
        #[arg(long, default_value = "ed-mf")]
        technique: Technique,
        #[arg(long, default_value_t = 3)]
        budget: usize,
        #[arg(long, default_value_t = 3)]
        rank: usize,
        #[arg(long = "mem-cap")]
        mem_cap: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Leave-one-dataset-out evaluation.
    Loocv {
        #[arg(long)]
        error: PathBuf,
        #[arg(long)]
        memory: PathBuf,
        /// I..VI
        #[arg(long, default_value = "I")]
        setting: String,
        #[arg(long, default_value = "ed-mf,qr-mf,random-mf,bo-mf,bo-full")]
        techniques: String,
        #[arg(long, default_value = "3..8")]
        budgets: String,
        #[arg(long, default_value = "0..199")]
        seeds: String,
        #[arg(long, default_value_t = 0.2)]
        ratio: f64,
        #[arg(long, default_value_t = 0.5)]
        pmax: f64,
        #[arg(long, default_value_t = 3)]
        rank: usize,
        #[arg(long, default_value_t = 0.1)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Synthetic low-rank error matrix with matching memory matrix.
    Synth {
        #[arg(long, default_value_t = 87)]
        n: usize,
        #[arg(long, default_value_t = 99)]
        d: usize,
        #[arg(long, default_value_t = 5)]
        rank: usize,
        #[arg(long, default_value_t = 0.01)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "out-error")]
        out_error: PathBuf,
        #[arg(long = "out-memory")]
        out_memory: PathBuf,
    },
    /// Memory matrix from configurations and architectures.
    Memory {
        #[arg(long)]
        configs: PathBuf,
        #[arg(long)]
        arch: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// `a..b` (inclusive), `a,b,c`, or a single value.
fn parse_range<T>(s: &str) -> anyhow::Result<Vec<T>>
where
    T: std::str::FromStr + Copy + PartialOrd + TryFrom<u64>,
    T::Err: std::fmt::Display,
    u64: TryFrom<T>,
{
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().with_context(|| format!("range start in {s:?}"))?;
        let b: u64 = b.trim().parse().with_context(|| format!("range end in {s:?}"))?;
        if b < a {
            bail!("empty range {s:?}");
        }
        return (a..=b)
            .map(|v| T::try_from(v).map_err(|_| anyhow!("{v} out of range")))
            .collect();
    }
    s.split(',')
        .map(|p| p.trim().parse::<T>().map_err(|e| anyhow!("{p:?}: {e}")))
        .collect()
}

fn dense(m: &LabeledPartial, what: &str) -> anyhow::Result<Matrix<f64>> {
    let (n, d) = m.values.shape();
    let mut out = Matrix::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            out[(i, j)] = m
                .values
                .get(i, j)
                .ok_or_else(|| anyhow!("{what}: cell ({}, {}) is missing", m.row_ids[i], m.col_ids[j]))?;
        }
    }
    Ok(out)
}

fn single_row(path: &Path, what: &str) -> anyhow::Result<LabeledPartial> {
    let m = read_matrix_csv(path).with_context(|| format!("reading {}", path.display()))?;
    if m.values.shape().0 != 1 {
        bail!("{what} must hold exactly one dataset row, found {}", m.values.shape().0);
    }
    Ok(m)
}

#[derive(Clone, Copy, Serialize)]
struct FrontierEntry<'a> {
    config_id: usize,
    config: &'a str,
    memory_bytes: f64,
    memory_normalized: f64,
    error: f64,
    estimated: bool,
}

/// Frontier points with memory scaled by the row's full configuration range.
fn frontier_entries<'a>(
    front: &ParetoFront<f64>,
    memory: &[f64],
    col_ids: &'a [String],
    estimated: impl Fn(usize) -> bool,
) -> Vec<FrontierEntry<'a>> {
    let lo = memory.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = memory.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    front
        .points()
        .iter()
        .map(|p| FrontierEntry {
            config_id: p.config_id,
            config: &col_ids[p.config_id],
            memory_bytes: p.memory,
            memory_normalized: if hi > lo { (p.memory - lo) / (hi - lo) } else { 0.0 },
            error: p.error,
            estimated: estimated(p.config_id),
        })
        .collect()
}

fn write_frontier_csv(path: &Path, points: &[FrontierEntry<'_>]) -> anyhow::Result<()> {
    let rows: Vec<Vec<String>> = points
        .iter()
        .map(|p| {
            vec![
                p.config_id.to_string(),
                p.config.to_owned(),
                format!("{:?}", p.memory_bytes),
                format!("{:?}", p.memory_normalized),
                format!("{:?}", p.error),
                p.estimated.to_string(),
            ]
        })
        .collect();
    write_rows_csv(
        path,
        &["config_id", "config", "memory_bytes", "memory_normalized", "error", "estimated"],
        &rows,
    )?;
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ArchInput {
    One(ArchitectureDescriptor),
    Many(Vec<ArchitectureDescriptor>),
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Sample { error, memory, scheme, ratio, pmax, seed, out } => {
            let e = read_matrix_csv(&error)?;
            let m = read_measurement_csv(&memory, MatrixKind::Memory)?;
            let (n, d) = e.values.shape();
            if m.shape() != (n, d) {
                bail!("error matrix is {n}×{d} but memory matrix is {:?}", m.shape());
            }
            let mask = match scheme {
                Scheme::Uniform => uniform_mask(n, d, ratio, seed)?,
                Scheme::Nonuniform => sample_mask(&nonuniform_probs(m.values(), pmax)?, seed)?,
            };
            let file = std::fs::File::create(&out)?;
            write_mask_csv(std::io::BufWriter::new(file), &mask)?;
            eprintln!("sampled {} of {} cells", mask.len(), n * d);
        }
        Command::Complete { error, mask, weighted, lambda, rank, out } => {
            let e = read_matrix_csv(&error)?;
            let (n, d) = e.values.shape();
            let mask = read_mask_csv(&mask, n, d)?;
            let mut observed = PartialMatrix::missing(n, d);
            for (i, j) in mask.cells() {
                observed.set(i, j, e.values.get(i, j));
            }
            let cfg = ImputeConfig::with_lambda(lambda);
            let mut completed = if weighted {
                let probs = mask
                    .probs()
                    .ok_or_else(|| anyhow!("--weighted needs a mask with a probability column"))?;
                weighted_softimpute(&observed, probs, &cfg)?
            } else {
                softimpute(&observed, &cfg)?
            };
            if rank > 0 {
                completed = low_rank_approximation(&completed, rank.min(n.min(d)))?;
            }
            write_dense_csv(&out, &completed, &e.row_ids, &e.col_ids)?;
        }
        Command::Pareto { error, memory, row, mask, out } => {
            let e = read_measurement_csv(&error, MatrixKind::Estimate)?;
            let m = read_measurement_csv(&memory, MatrixKind::Memory)?;
            if e.shape() != m.shape() {
                bail!("error matrix is {:?} but memory matrix is {:?}", e.shape(), m.shape());
            }
            let (n, d) = e.shape();
            let i = e
                .row_index(&row)
                .or_else(|| row.parse::<usize>().ok().filter(|&i| i < n))
                .ok_or_else(|| anyhow!("unknown dataset {row:?}"))?;
            let mask = mask.map(|p| read_mask_csv(p, n, d)).transpose()?;
            let mem = m.row(i);
            let front = front_from_vectors(&mem, &e.row(i))?;
            let entries = frontier_entries(&front, &mem, e.col_ids(), |j| {
                mask.as_ref().is_some_and(|mk| !mk.contains(i, j))
            });
            write_frontier_csv(&out.with_extension("csv"), &entries)?;
            write_json(&out, &entries)?;
        }
        Command::Select { train, memory_new, oracle, technique, budget, rank, mem_cap, seed, out } => {
            let t = read_matrix_csv(&train)?;
            let train_values = dense(&t, "training matrix")?;
            let m = single_row(&memory_new, "memory-new")?;
            let o = single_row(&oracle, "oracle")?;
            if m.col_ids != t.col_ids || o.col_ids != t.col_ids {
                bail!("memory-new and oracle must share the training matrix's configuration columns");
            }
            let mem = dense(&m, "memory-new")?.row(0).iter().copied().collect::<Vec<_>>();
            let mut missing = None;
            let opts = MetaTestOptions { memory_cap: mem_cap, gp: GpParams::default(), seed };
            let result = meta_test_pipeline(&train_values, &mem, technique, budget, rank, &opts, &mut |j| {
                o.values.get(0, j).unwrap_or_else(|| {
                    missing.get_or_insert(j);
                    f64::NAN
                })
            });
            if let Some(j) = missing {
                bail!("oracle has no measurement for configuration {}", t.col_ids[j]);
            }
            let outcome = result?;
            #[derive(Serialize)]
            struct SelectReport<'a> {
                technique: Technique,
                budget: usize,
                rank: usize,
                memory_cap: Option<f64>,
                seed: u64,
                selected_configs: Vec<&'a str>,
                feasible: &'a [usize],
                estimate: &'a precision_frontier::harness::MetaTestEstimate,
                chosen: FrontierEntry<'a>,
                frontier: Vec<FrontierEntry<'a>>,
            }
            let est = &outcome.estimate;
            let rows: Vec<Vec<String>> = (0..mem.len())
                .map(|j| {
                    vec![
                        j.to_string(),
                        t.col_ids[j].clone(),
                        format!("{:?}", mem[j]),
                        format!("{:?}", est.predicted[j]),
                        format!("{:?}", est.e_hat[j]),
                        est.selected.contains(&j).to_string(),
                        outcome.front.contains_config(j).to_string(),
                    ]
                })
                .collect();
            write_rows_csv(
                out.with_extension("csv"),
                &["config_id", "config", "memory", "predicted", "estimate", "measured", "on_front"],
                &rows,
            )?;
            let measured = |j: usize| est.selected.contains(&j);
            let frontier = frontier_entries(&outcome.front, &mem, &t.col_ids, |j| !measured(j));
            let chosen = frontier
                .iter()
                .find(|p| p.config_id == outcome.chosen.config_id)
                .copied()
                .expect("chosen point lies on the frontier");
            write_json(
                &out,
                &SelectReport {
                    technique,
                    budget,
                    rank,
                    memory_cap: mem_cap,
                    seed,
                    selected_configs: est.selected.iter().map(|&j| t.col_ids[j].as_str()).collect(),
                    feasible: &outcome.feasible,
                    estimate: est,
                    chosen,
                    frontier,
                },
            )?;
        }
        Command::Loocv { error, memory, setting, techniques, budgets, seeds, ratio, pmax, rank, lambda, out } => {
            let e = read_measurement_csv(&error, MatrixKind::Error)?;
            let m = read_measurement_csv(&memory, MatrixKind::Memory)?;
            let techniques = techniques
                .split(',')
                .map(|s| s.parse::<Technique>())
                .collect::<Result<Vec<_>, _>>()?;
            let mut cfg = LoocvConfig::new(
                LoocvSetting::parse(&setting, ratio, pmax)?,
                techniques,
                parse_range::<usize>(&budgets)?,
                parse_range::<u64>(&seeds)?,
            );
            cfg.rank = rank;
            cfg.impute = ImputeConfig::with_lambda(lambda);
            let report = run_meta_loocv(&e, &m, &cfg)?;
            report.write(&out)?;
            eprintln!(
                "{} records, {} skipped",
                report.records.len(),
                report.skipped.len()
            );
        }
        Command::Synth { n, d, rank, noise, seed, out_error, out_memory } => {
            let s = synth_lowrank(n, d, rank, noise, seed)?;
            write_measurement_csv(&out_error, &s.error)?;
            write_measurement_csv(&out_memory, &s.memory)?;
        }
        Command::Memory { configs, arch, out } => {
            let list: ConfigList = precision_frontier::io::read_json(&configs)
                .with_context(|| format!("reading {}", configs.display()))?;
            let configs = list.expand();
            if configs.is_empty() {
                bail!("the configuration list is empty");
            }
            let archs = match precision_frontier::io::read_json::<ArchInput>(&arch)
                .with_context(|| format!("reading {}", arch.display()))?
            {
                ArchInput::One(a) => vec![a],
                ArchInput::Many(v) => v,
            };
            for a in &archs {
                a.validate()?;
            }
            let mm = memory_matrix(&configs, &archs);
            let row_ids: Vec<String> = (0..archs.len()).map(|i| format!("arch{i}")).collect();
            let col_ids: Vec<String> = configs.iter().map(PrecisionConfig::label).collect();
            write_dense_csv(&out, &mm, &row_ids, &col_ids)?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
