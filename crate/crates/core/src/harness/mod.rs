//! End-to-end drivers: meta-training frontier estimation, the meta-test
//! selection pipeline and leave-one-dataset-out evaluation.

mod loocv;
pub mod synth;

use serde::{Deserialize, Serialize};

pub use loocv::{
    relative_performance, run_meta_loocv, Aggregate, LoocvConfig, SkippedSplit, DEFAULT_P_MAX, DEFAULT_RATIO, LoocvSetting, MemoryCapRule,
    Metric, MetaTrainObservation, RelativeRecord, RelativeValue, RunRecord, RunReport,
};
pub use synth::{synth_exact_lowrank, synth_lowrank, SynthData};

use crate::completion::{softimpute, truncated_factorize, weighted_softimpute, EmbeddingModel, ImputeConfig};
use crate::linalg::select_columns;
use crate::matrices::{relative_error, PartialMatrix};
use crate::pareto::{
    choose_config, convergence, front_from_vectors, hyperdiff, normalize_front, ParetoFront,
    ParetoPoint,
};
use crate::selection::{
    bo_select, embed_new, feasible_set, greedy_ed, predict, select_qr, select_random_feasible,
    GpParams, SelectionProblem, Technique,
};
use crate::{Error, Matrix, Result, Vector};

/// Default HyperDiff reference corner in normalized coordinates.
pub const DEFAULT_BOUND: (f64, f64) = (1.0, 1.0);

/// Frontier metrics of an estimate against the truth, with memory scaled by
/// the full configuration range of the dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontScores {
    pub convergence: f64,
    pub hyperdiff: f64,
}

pub fn score_fronts(
    estimated: &ParetoFront<f64>,
    truth: &ParetoFront<f64>,
    memory: &[f64],
    bound: (f64, f64),
) -> Result<FrontScores> {
    let (lo, hi) = memory_range(memory)?;
    let est = normalize_front(estimated, lo, hi)?;
    let tru = normalize_front(truth, lo, hi)?;
    Ok(FrontScores {
        convergence: convergence(&est, &tru)?,
        hyperdiff: hyperdiff(&est, &tru, bound)?,
    })
}

fn memory_range(memory: &[f64]) -> Result<(f64, f64)> {
    let lo = memory.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = memory.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Err(Error::InvalidArgument(format!(
            "memory range [{lo}, {hi}] is degenerate; cannot normalize"
        )));
    }
    Ok((lo, hi))
}

/// `Σ_{j∈S} m_j / Σ_{j∈T} m_j`.
pub fn memory_fraction(selected: &[usize], feasible: &[usize], memory: &[f64]) -> Result<f64> {
    if feasible.is_empty() {
        return Err(Error::Empty("feasible set is empty".into()));
    }
    if let Some(&j) = selected.iter().find(|j| !feasible.contains(j)) {
        return Err(Error::InvalidArgument(format!("selected index {j} is not feasible")));
    }
    let total: f64 = feasible.iter().map(|&j| memory[j]).sum();
    let used: f64 = selected.iter().map(|&j| memory[j]).sum();
    Ok(used / total)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaTrainResult {
    /// Completed (and optionally rank-truncated) error matrix.
    #[serde(skip)]
    pub completed: Matrix<f64>,
    pub fronts: Vec<ParetoFront<f64>>,
    pub relative_errors: Option<Vec<f64>>,
    pub scores: Option<Vec<FrontScores>>,
}

/// Completes the observed error matrix (inverse-propensity weighted when
/// `probs` is given), optionally truncates it to `rank`, and extracts each
/// dataset's estimated frontier against `memory`. With `truth`, also
/// reports per-row relative error and frontier scores.
pub fn meta_train_estimate(
    observed: &PartialMatrix<f64>,
    probs: Option<&Matrix<f64>>,
    memory: &Matrix<f64>,
    cfg: &ImputeConfig,
    rank: Option<usize>,
    truth: Option<&Matrix<f64>>,
) -> Result<MetaTrainResult> {
    let (n, d) = observed.shape();
    if memory.shape() != (n, d) {
        return Err(Error::shape(format!("{n}×{d}"), format!("{:?}", memory.shape())));
    }
    if let Some(i) = (0..n).find(|&i| observed.row_observed_count(i) == 0) {
        return Err(Error::Empty(format!("row {i} has no observed entries")));
    }
    let mut completed = match probs {
        Some(p) => weighted_softimpute(observed, p, cfg)?,
        None => softimpute(observed, cfg)?,
    };
    if let Some(k) = rank {
        completed = truncated_factorize(&completed, k)?.reconstruct();
    }
    let mut fronts = Vec::with_capacity(n);
    for i in 0..n {
        let mem: Vec<f64> = memory.row(i).iter().copied().collect();
        let err: Vec<f64> = completed.row(i).iter().map(|&e| e.clamp(0.0, 1.0)).collect();
        fronts.push(front_from_vectors(&mem, &err)?);
    }
    let (relative_errors, scores) = match truth {
        Some(t) => {
            if t.shape() != (n, d) {
                return Err(Error::shape(format!("{n}×{d}"), format!("{:?}", t.shape())));
            }
            let mut rel = Vec::with_capacity(n);
            let mut sc = Vec::with_capacity(n);
            for (i, front) in fronts.iter().enumerate() {
                let est: Vec<f64> = completed.row(i).iter().copied().collect();
                let tru: Vec<f64> = t.row(i).iter().copied().collect();
                let mem: Vec<f64> = memory.row(i).iter().copied().collect();
                rel.push(relative_error(&est, &tru)?);
                let true_front = front_from_vectors(&mem, &tru)?;
                sc.push(score_fronts(front, &true_front, &mem, DEFAULT_BOUND)?);
            }
            (Some(rel), Some(sc))
        }
        None => (None, None),
    };
    Ok(MetaTrainResult {
        completed,
        fronts,
        relative_errors,
        scores,
    })
}

/// Meta-training state reused across meta-test runs on one split.
#[derive(Debug, Clone)]
pub struct MetaTestContext {
    model: EmbeddingModel<f64>,
    train: Matrix<f64>,
}

impl MetaTestContext {
    /// Factorizes the (completed or full) meta-training error matrix.
    pub fn new(train: Matrix<f64>, rank: usize) -> Result<Self> {
        let model = truncated_factorize(&train, rank)?;
        Ok(MetaTestContext { model, train })
    }

    pub fn model(&self) -> &EmbeddingModel<f64> {
        &self.model
    }

    pub fn rank(&self) -> usize {
        self.model.rank()
    }

    pub fn config_count(&self) -> usize {
        self.train.ncols()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaTestEstimate {
    /// Measured configurations in selection order.
    pub selected: Vec<usize>,
    pub x_new: Vec<f64>,
    /// `Yᵀ x_new` for every configuration.
    pub predicted: Vec<f64>,
    /// Predictions clipped to `[0, 1]` with measured cells replaced by their
    /// measurements.
    pub e_hat: Vec<f64>,
    pub e_obs: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetaTestOutcome {
    pub technique: Technique,
    pub budget: usize,
    pub feasible: Vec<usize>,
    pub estimate: MetaTestEstimate,
    pub front: ParetoFront<f64>,
    pub chosen: ParetoPoint<f64>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MetaTestOptions {
    pub memory_cap: Option<f64>,
    pub gp: GpParams,
    pub seed: u64,
}

/// Selects and measures up to `budget` feasible configurations, embeds the
/// new dataset, predicts every configuration's error and extracts the
/// estimated frontier over all configurations.
pub fn run_meta_test(
    ctx: &MetaTestContext,
    memory_new: &[f64],
    technique: Technique,
    budget: usize,
    opts: &MetaTestOptions,
    oracle: &mut dyn FnMut(usize) -> f64,
) -> Result<MetaTestOutcome> {
    let d = ctx.config_count();
    if memory_new.len() != d {
        return Err(Error::shape(d, memory_new.len()));
    }
    let k = ctx.rank();
    if budget < k {
        return Err(Error::InvalidArgument(format!(
            "budget {budget} is below the embedding rank {k}"
        )));
    }
    let feasible = feasible_set(memory_new, opts.memory_cap);
    if feasible.is_empty() {
        return Err(Error::Infeasible(format!(
            "no configuration within memory cap {:?}",
            opts.memory_cap
        )));
    }
    if feasible.len() < k {
        return Err(Error::Infeasible(format!(
            "only {} feasible configurations, need at least {k}",
            feasible.len()
        )));
    }
    let l = budget.min(feasible.len());
    let y = ctx.model.y();
    let problem = SelectionProblem::new(y.clone(), feasible.clone(), l)?;

    let (selected, e_obs) = match technique {
        Technique::EdMf | Technique::QrMf | Technique::RandomMf => {
            let s = match technique {
                Technique::EdMf => greedy_ed(&problem)?,
                Technique::QrMf => select_qr(&ctx.train, &feasible, l)?,
                _ => select_random_feasible(y, &feasible, l, opts.seed)?,
            };
            let obs = s.iter().map(|&j| oracle(j)).collect();
            (s, obs)
        }
        Technique::BoMf | Technique::BoFull => {
            let source = if technique == Technique::BoMf { y } else { &ctx.train };
            let features: Vec<Vector<f64>> = (0..d).map(|j| source.column(j).into_owned()).collect();
            bo_select(&problem, &features, oracle, &opts.gp, opts.seed)?
        }
    };

    let x_new = embed_new(&select_columns(y, &selected), &e_obs)?;
    let predicted: Vec<f64> = predict(y, &x_new)?.iter().copied().collect();
    let mut e_hat: Vec<f64> = predicted.iter().map(|&e| e.clamp(0.0, 1.0)).collect();
    for (&j, &v) in selected.iter().zip(&e_obs) {
        e_hat[j] = v;
    }
    let front = front_from_vectors(memory_new, &e_hat)?;
    let chosen = choose_config(&front, opts.memory_cap.unwrap_or(f64::INFINITY))?;
    Ok(MetaTestOutcome {
        technique,
        budget,
        feasible,
        estimate: MetaTestEstimate {
            selected,
            x_new: x_new.iter().copied().collect(),
            predicted,
            e_hat,
            e_obs,
        },
        front,
        chosen,
    })
}

/// Factorizes `train` at `rank` and runs [`run_meta_test`].
pub fn meta_test_pipeline(
    train: &Matrix<f64>,
    memory_new: &[f64],
    technique: Technique,
    budget: usize,
    rank: usize,
    opts: &MetaTestOptions,
    oracle: &mut dyn FnMut(usize) -> f64,
) -> Result<MetaTestOutcome> {
    let ctx = MetaTestContext::new(train.clone(), rank)?;
    run_meta_test(&ctx, memory_new, technique, budget, opts, oracle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::uniform_mask;
    use crate::matrices::apply_mask_values;
    use crate::pareto::same_coordinates;

    #[test]
    fn memory_fraction_examples() {
        let mem = [2.0, 2.0, 5.0];
        assert_eq!(memory_fraction(&[0, 1], &[0, 1], &mem).unwrap(), 1.0);
        assert_eq!(memory_fraction(&[], &[0, 1], &mem).unwrap(), 0.0);
        assert_eq!(memory_fraction(&[1], &[0, 1], &mem).unwrap(), 0.5);
        assert!(memory_fraction(&[], &[], &mem).is_err());
        assert!(memory_fraction(&[2], &[0, 1], &mem).is_err());
        let small = memory_fraction(&[0], &[0, 1, 2], &mem).unwrap();
        let big = memory_fraction(&[0, 2], &[0, 1, 2], &mem).unwrap();
        assert!(small <= big);
    }

    #[test]
    fn meta_train_full_observation_recovers_fronts() {
        let s = synth_lowrank(12, 20, 3, 0.0, 4).unwrap();
        let e = s.error.values();
        let cfg = ImputeConfig { lambda: 1e-9, ..Default::default() };
        let res = meta_train_estimate(&PartialMatrix::from_full(e), None, s.memory.values(), &cfg, None, Some(e)).unwrap();
        for (i, front) in res.fronts.iter().enumerate() {
            let mem: Vec<f64> = s.memory.values().row(i).iter().copied().collect();
            let err: Vec<f64> = e.row(i).iter().copied().collect();
            let truth = front_from_vectors(&mem, &err).unwrap();
            assert_eq!(front.config_ids(), truth.config_ids());
        }
        assert!(res.relative_errors.unwrap().iter().all(|&r| r < 1e-6));
    }

    #[test]
    fn meta_train_empty_row_is_an_error() {
        let s = synth_lowrank(5, 8, 2, 0.0, 1).unwrap();
        let mut p = PartialMatrix::from_full(s.error.values());
        for j in 0..8 {
            p.set(2, j, None);
        }
        let err = meta_train_estimate(&p, None, s.memory.values(), &ImputeConfig::default(), None, None);
        assert!(matches!(err, Err(Error::Empty(_))));
    }

    #[test]
    fn meta_train_weighted_path_runs() {
        let s = synth_lowrank(10, 15, 2, 0.0, 3).unwrap();
        let mask = uniform_mask(10, 15, 0.6, 1).unwrap();
        let partial = apply_mask_values(s.error.values(), &mask).unwrap();
        let probs = Matrix::from_element(10, 15, 0.6);
        let res = meta_train_estimate(&partial, Some(&probs), s.memory.values(), &ImputeConfig::default(), Some(2), Some(s.error.values())).unwrap();
        assert_eq!(res.fronts.len(), 10);
        assert_eq!(res.scores.unwrap().len(), 10);
    }

    #[test]
    fn noiseless_closure_every_technique() {
        let s = synth_exact_lowrank(15, 30, 3, 7).unwrap();
        let e = s.error.values();
        let train = e.rows(1, 14).into_owned();
        let mem: Vec<f64> = s.memory.values().row(0).iter().copied().collect();
        let truth: Vec<f64> = e.row(0).iter().copied().collect();
        let true_front = front_from_vectors(&mem, &truth).unwrap();
        let ctx = MetaTestContext::new(train, 3).unwrap();
        for t in Technique::ALL {
            for l in 3..6 {
                let out = run_meta_test(&ctx, &mem, t, l, &MetaTestOptions::default(), &mut |j| truth[j]).unwrap();
                assert_eq!(out.estimate.selected.len(), l);
                let scores = score_fronts(&out.front, &true_front, &mem, DEFAULT_BOUND).unwrap();
                assert!(scores.convergence < 1e-9, "{t} l={l}: {scores:?}");
                assert!(scores.hyperdiff < 1e-9, "{t} l={l}: {scores:?}");
                assert!(same_coordinates(&out.front, &true_front) || scores.convergence < 1e-9);
            }
        }
    }

    #[test]
    fn exhaustive_budget_reproduces_measurements() {
        let s = synth_lowrank(10, 12, 3, 0.01, 2).unwrap();
        let e = s.error.values();
        let train = e.rows(1, 9).into_owned();
        let mem: Vec<f64> = s.memory.values().row(0).iter().copied().collect();
        let truth: Vec<f64> = e.row(0).iter().copied().collect();
        let out = meta_test_pipeline(&train, &mem, Technique::EdMf, 12, 3, &MetaTestOptions::default(), &mut |j| truth[j]).unwrap();
        assert_eq!(out.estimate.e_hat, truth);
    }

    #[test]
    fn memory_cap_limits_measurements() {
        let s = synth_lowrank(10, 30, 3, 0.01, 8).unwrap();
        let e = s.error.values();
        let train = e.rows(1, 9).into_owned();
        let mem: Vec<f64> = s.memory.values().row(0).iter().copied().collect();
        let mut sorted = mem.clone();
        sorted.sort_by(f64::total_cmp);
        let cap = sorted[15];
        let truth: Vec<f64> = e.row(0).iter().copied().collect();
        let opts = MetaTestOptions { memory_cap: Some(cap), ..Default::default() };
        for t in Technique::ALL {
            let out = meta_test_pipeline(&train, &mem, t, 5, 3, &opts, &mut |j| truth[j]).unwrap();
            assert!(out.estimate.selected.iter().all(|&j| mem[j] <= cap));
            assert!(out.chosen.memory <= cap);
        }
        let none = MetaTestOptions { memory_cap: Some(0.0), ..Default::default() };
        assert!(meta_test_pipeline(&train, &mem, Technique::EdMf, 3, 3, &none, &mut |j| truth[j]).is_err());
    }
}
