//! Choosing which configurations to measure on a new dataset.
//!
//! [`greedy_ed`] is the D-optimal experiment-design selector: it starts from
//! the first `k` column-pivoted QR pivots of the configuration embeddings
//! and adds, one at a time, the feasible configuration that maximizes
//! `y_jᵀ X_t⁻¹ y_j` (equivalently the determinant of the information
//! matrix, by the matrix determinant lemma). `X_t⁻¹` is maintained with
//! Sherman–Morrison updates. The remaining selectors are the comparison
//! baselines.

mod bayes;

use std::fmt;
use std::str::FromStr;

use nalgebra::QR;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bayes::{
    bo_select, expected_improvement, gp_posterior, normal_cdf, normal_pdf, GaussianProcess,
    GpParams,
};

use crate::linalg::{gram_of_columns, numerical_rank, select_columns};
use crate::{Error, Matrix, Real, Result, Vector};

/// Redraws allowed when a random subset has rank below `k`.
pub const RANDOM_RETRIES: usize = 100;

/// Denominators of rank-one updates closer to zero than this are rejected.
pub const SINGULAR_UPDATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Technique {
    #[serde(rename = "ed-mf")]
    EdMf,
    #[serde(rename = "qr-mf")]
    QrMf,
    #[serde(rename = "random-mf")]
    RandomMf,
    #[serde(rename = "bo-mf")]
    BoMf,
    #[serde(rename = "bo-full")]
    BoFull,
}

impl Technique {
    pub const ALL: [Technique; 5] = [
        Technique::EdMf,
        Technique::QrMf,
        Technique::RandomMf,
        Technique::BoMf,
        Technique::BoFull,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Technique::EdMf => "ed-mf",
            Technique::QrMf => "qr-mf",
            Technique::RandomMf => "random-mf",
            Technique::BoMf => "bo-mf",
            Technique::BoFull => "bo-full",
        }
    }

    /// Whether the selection depends on the seed.
    pub fn is_randomized(&self) -> bool {
        matches!(self, Technique::RandomMf | Technique::BoMf | Technique::BoFull)
    }
}

impl fmt::Display for Technique {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Technique {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Technique::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Parse(format!("unknown technique {s:?}")))
    }
}

/// Embeddings, feasible set `T` and measurement budget `l`.
#[derive(Debug, Clone)]
pub struct SelectionProblem<T: Real> {
    y: Matrix<T>,
    feasible: Vec<usize>,
    budget: usize,
}

impl<T: Real> SelectionProblem<T> {
    /// `feasible` is sorted and deduplicated; every index must be a column
    /// of `y`.
    pub fn new(y: Matrix<T>, mut feasible: Vec<usize>, budget: usize) -> Result<Self> {
        feasible.sort_unstable();
        feasible.dedup();
        if let Some(&bad) = feasible.iter().find(|&&j| j >= y.ncols()) {
            return Err(Error::OutOfRange {
                index: bad,
                len: y.ncols(),
            });
        }
        if budget > feasible.len() {
            return Err(Error::BudgetExceedsFeasible {
                budget,
                feasible: feasible.len(),
            });
        }
        Ok(SelectionProblem { y, feasible, budget })
    }

    /// All configurations feasible.
    pub fn unconstrained(y: Matrix<T>, budget: usize) -> Result<Self> {
        let d = y.ncols();
        Self::new(y, (0..d).collect(), budget)
    }

    /// Feasible set `{j : memory_j ≤ cap}`.
    pub fn with_memory_cap(y: Matrix<T>, memory: &[T], cap: T, budget: usize) -> Result<Self> {
        if memory.len() != y.ncols() {
            return Err(Error::shape(y.ncols(), memory.len()));
        }
        let feasible = feasible_set(memory, Some(cap));
        if feasible.is_empty() {
            return Err(Error::Infeasible(format!("no configuration fits under memory cap {cap}")));
        }
        Self::new(y, feasible, budget)
    }

    pub fn y(&self) -> &Matrix<T> {
        &self.y
    }

    pub fn feasible(&self) -> &[usize] {
        &self.feasible
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn rank(&self) -> usize {
        self.y.nrows()
    }
}

/// Indices with `memory_j ≤ cap` (all indices without a cap).
pub fn feasible_set<T: Real>(memory: &[T], cap: Option<T>) -> Vec<usize> {
    memory
        .iter()
        .enumerate()
        .filter(|(_, &m)| cap.is_none_or(|c| m <= c))
        .map(|(j, _)| j)
        .collect()
}

/// Column order chosen by Businger–Golub pivoting: at each step the
/// candidate column with the largest residual norm (ties to the lowest
/// index) after projecting out previously chosen columns.
///
/// Returns `count` indices and the number of pivots with non-negligible
/// residual norm.
pub fn pivoted_qr_order<T: Real>(
    a: &Matrix<T>,
    candidates: &[usize],
    count: usize,
) -> Result<(Vec<usize>, usize)> {
    if count > candidates.len() {
        return Err(Error::BudgetExceedsFeasible {
            budget: count,
            feasible: candidates.len(),
        });
    }
    if let Some(&bad) = candidates.iter().find(|&&j| j >= a.ncols()) {
        return Err(Error::OutOfRange {
            index: bad,
            len: a.ncols(),
        });
    }
    let mut residual: Vec<Vector<T>> = candidates.iter().map(|&j| a.column(j).into_owned()).collect();
    let scale = residual.iter().fold(T::zero(), |m, c| m.max(c.norm()));
    let tol = scale * T::default_epsilon() * T::lit((a.nrows().max(candidates.len()) * 10) as f64);
    let mut taken = vec![false; candidates.len()];
    let mut order = Vec::with_capacity(count);
    let mut rank = 0;

    for _ in 0..count {
        let mut best: Option<(usize, T)> = None;
        for (c, r) in residual.iter().enumerate() {
            if taken[c] {
                continue;
            }
            let norm = r.norm_squared();
            if best.is_none_or(|(_, b)| norm > b) {
                best = Some((c, norm));
            }
        }
        let (p, norm_sq) = best.expect("count <= candidates");
        taken[p] = true;
        order.push(candidates[p]);
        let norm = norm_sq.sqrt();
        if norm > tol {
            rank += 1;
            let q = &residual[p] / norm;
            for (c, r) in residual.iter_mut().enumerate() {
                if taken[c] {
                    continue;
                }
                // two passes of Gram–Schmidt keep the residuals orthogonal
                for _ in 0..2 {
                    let proj = q.dot(r);
                    r.axpy(-proj, &q, T::one());
                }
            }
        }
    }
    Ok((order, rank))
}

/// First `k` pivots of column-pivoted QR on the feasible columns of `y`
/// (`k × d`), so that `Σ_{j∈S₀} y_j y_jᵀ` is nonsingular.
pub fn qr_pivot_init<T: Real>(y: &Matrix<T>, feasible: &[usize]) -> Result<Vec<usize>> {
    let k = y.nrows();
    if feasible.len() < k {
        let (_, rank) = pivoted_qr_order(y, feasible, feasible.len())?;
        return Err(Error::SingularInit {
            achieved: rank,
            required: k,
        });
    }
    let (order, rank) = pivoted_qr_order(y, feasible, k)?;
    if rank < k {
        return Err(Error::SingularInit {
            achieved: rank,
            required: k,
        });
    }
    Ok(order)
}

/// `(X + y yᵀ)⁻¹` from `X⁻¹`.
pub fn sherman_morrison_update<T: Real>(x_inv: &Matrix<T>, y: &Vector<T>) -> Result<Matrix<T>> {
    let k = x_inv.nrows();
    if x_inv.ncols() != k || y.len() != k {
        return Err(Error::shape(
            format!("{k}×{k} inverse and length-{k} vector"),
            format!("{}×{} and {}", x_inv.nrows(), x_inv.ncols(), y.len()),
        ));
    }
    let u = x_inv * y;
    let v = x_inv.tr_mul(y);
    let denom = T::one() + y.dot(&u);
    if denom.abs() < T::lit(SINGULAR_UPDATE_TOL) {
        return Err(Error::SingularUpdate(denom.as_f64()));
    }
    let mut out = x_inv.clone();
    out.ger(-T::one() / denom, &u, &v, T::one());
    Ok(out)
}

/// One greedy step: the selected index and the inverse information matrix
/// after adding it.
#[derive(Debug, Clone)]
pub struct GreedyStep<T: Real> {
    pub index: usize,
    pub gain: T,
    pub x_inv: Matrix<T>,
}

/// Greedy D-optimal design with its per-step trace.
#[derive(Debug, Clone)]
pub struct GreedyTrace<T: Real> {
    pub initial: Vec<usize>,
    pub initial_inverse: Matrix<T>,
    pub steps: Vec<GreedyStep<T>>,
}

impl<T: Real> GreedyTrace<T> {
    pub fn selected(&self) -> Vec<usize> {
        self.initial
            .iter()
            .copied()
            .chain(self.steps.iter().map(|s| s.index))
            .collect()
    }
}

pub fn greedy_ed_trace<T: Real>(problem: &SelectionProblem<T>) -> Result<GreedyTrace<T>> {
    let y = problem.y();
    let k = problem.rank();
    let l = problem.budget();
    if l < k {
        return Err(Error::InvalidArgument(format!(
            "budget {l} is below the embedding rank {k}"
        )));
    }
    let initial = qr_pivot_init(y, problem.feasible())?;
    let gram = gram_of_columns(y, &initial);
    let x_inv = gram.clone().try_inverse().ok_or(Error::SingularInit {
        achieved: numerical_rank(&gram),
        required: k,
    })?;
    let mut selected = vec![false; y.ncols()];
    for &j in &initial {
        selected[j] = true;
    }

    let mut current = x_inv.clone();
    let mut steps = Vec::with_capacity(l - k);
    for _ in k..l {
        let mut best: Option<(usize, T)> = None;
        for &j in problem.feasible() {
            if selected[j] {
                continue;
            }
            let col = y.column(j);
            let gain = (&current * col).dot(&col);
            if best.is_none_or(|(_, b)| gain > b) {
                best = Some((j, gain));
            }
        }
        let (j, gain) = best.expect("budget <= |T|");
        selected[j] = true;
        current = sherman_morrison_update(&current, &y.column(j).into_owned())?;
        steps.push(GreedyStep {
            index: j,
            gain,
            x_inv: current.clone(),
        });
    }
    Ok(GreedyTrace {
        initial,
        initial_inverse: x_inv,
        steps,
    })
}

/// Greedy D-optimal selection of `l` feasible configurations.
pub fn greedy_ed<T: Real>(problem: &SelectionProblem<T>) -> Result<Vec<usize>> {
    Ok(greedy_ed_trace(problem)?.selected())
}

/// `log det Σ_{j∈S} y_j y_jᵀ`, or `-inf` when singular.
pub fn log_det_information<T: Real>(y: &Matrix<T>, selected: &[usize]) -> T {
    let gram = gram_of_columns(y, selected);
    match gram.cholesky() {
        Some(c) => {
            let l = c.l();
            (0..l.nrows()).fold(T::zero(), |acc, i| acc + l[(i, i)].ln()) * T::lit(2.0)
        }
        None => T::lit(f64::NEG_INFINITY),
    }
}

/// Least-squares dataset embedding from measurements on the columns `y_s`
/// (`k × |S|`).
pub fn embed_new<T: Real>(y_s: &Matrix<T>, e_obs: &[T]) -> Result<Vector<T>> {
    let (k, s) = y_s.shape();
    if e_obs.len() != s {
        return Err(Error::shape(s, e_obs.len()));
    }
    if s < k {
        return Err(Error::InvalidArgument(format!(
            "need at least {k} measurements to embed, got {s}"
        )));
    }
    let rank = numerical_rank(y_s);
    if rank < k {
        return Err(Error::RankDeficient(format!(
            "selected embeddings have rank {rank} < {k}"
        )));
    }
    let design = y_s.transpose();
    let qr = QR::new(design);
    let rhs = qr.q().tr_mul(&Vector::from_column_slice(e_obs));
    qr.r()
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::RankDeficient("triangular factor is singular".into()))
}

/// `ê = Yᵀ x`.
pub fn predict<T: Real>(y: &Matrix<T>, x_new: &Vector<T>) -> Result<Vector<T>> {
    if x_new.len() != y.nrows() {
        return Err(Error::shape(y.nrows(), x_new.len()));
    }
    Ok(y.tr_mul(x_new))
}

/// Uniform sample of `l` feasible indices without replacement.
pub fn select_random(feasible: &[usize], l: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    draw(feasible, l, &mut rng)
}

fn draw(feasible: &[usize], l: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    if l > feasible.len() {
        return Err(Error::BudgetExceedsFeasible {
            budget: l,
            feasible: feasible.len(),
        });
    }
    Ok(rand::seq::index::sample(rng, feasible.len(), l)
        .into_iter()
        .map(|i| feasible[i])
        .collect())
}

/// Random subset whose embeddings reach rank `min(l, k)`, redrawing up to
/// [`RANDOM_RETRIES`] times from one seeded stream.
pub fn select_random_feasible<T: Real>(
    y: &Matrix<T>,
    feasible: &[usize],
    l: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let need = l.min(y.nrows());
    for _ in 0..RANDOM_RETRIES {
        let s = draw(feasible, l, &mut rng)?;
        if numerical_rank(&select_columns(y, &s)) >= need {
            return Ok(s);
        }
    }
    Err(Error::RetriesExhausted {
        rank: need,
        retries: RANDOM_RETRIES,
    })
}

/// QR-MF: the first `l` pivots of column-pivoted QR on the feasible columns
/// of the meta-training error matrix.
pub fn select_qr<T: Real>(error_matrix: &Matrix<T>, feasible: &[usize], l: usize) -> Result<Vec<usize>> {
    Ok(pivoted_qr_order(error_matrix, feasible, l)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_matrix(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Matrix<f64> {
        Matrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0))
    }

    fn subsets(d: usize, size: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        for mask in 0u32..(1 << d) {
            if mask.count_ones() as usize == size {
                out.push((0..d).filter(|&j| mask & (1 << j) != 0).collect());
            }
        }
        out
    }

    #[test]
    fn technique_names_round_trip() {
        for t in Technique::ALL {
            assert_eq!(t.name().parse::<Technique>().unwrap(), t);
            assert_eq!(serde_json::to_string(&t).unwrap(), format!("\"{}\"", t.name()));
        }
        assert!("ed".parse::<Technique>().is_err());
    }

    #[test]
    fn problem_validation() {
        let y = Matrix::<f64>::identity(2, 4);
        assert!(SelectionProblem::new(y.clone(), vec![0, 5], 1).is_err());
        assert!(SelectionProblem::new(y.clone(), vec![0, 1], 3).is_err());
        let p = SelectionProblem::with_memory_cap(y.clone(), &[1.0, 5.0, 2.0, 9.0], 2.0, 2).unwrap();
        assert_eq!(p.feasible(), &[0, 2]);
        assert!(SelectionProblem::with_memory_cap(y, &[1.0, 5.0, 2.0, 9.0], 0.5, 1).is_err());
    }

    #[test]
    fn qr_init_orthogonal_columns() {
        let y = Matrix::from_row_slice(2, 4, &[3.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 0.0]);
        assert_eq!(qr_pivot_init(&y, &[0, 1, 2, 3]).unwrap(), vec![0, 2]);
    }

    #[test]
    fn qr_init_full_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y = random_matrix(4, 4, &mut rng);
        let mut s = qr_pivot_init(&y, &[0, 1, 2, 3]).unwrap();
        s.sort();
        assert_eq!(s, vec![0, 1, 2, 3]);
    }

    #[test]
    fn qr_first_pivot_is_max_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let y = random_matrix(3, 8, &mut rng);
            let argmax = (0..8)
                .max_by(|&a, &b| y.column(a).norm().partial_cmp(&y.column(b).norm()).unwrap())
                .unwrap();
            assert_eq!(qr_pivot_init(&y, &(0..8).collect::<Vec<_>>()).unwrap()[0], argmax);
        }
    }

    #[test]
    fn qr_init_rank_deficiency_reports_rank() {
        let y = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        match qr_pivot_init(&y, &[0, 1, 2]) {
            Err(Error::SingularInit { achieved, required }) => {
                assert_eq!((achieved, required), (1, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            qr_pivot_init(&Matrix::<f64>::identity(2, 2), &[0]),
            Err(Error::SingularInit { achieved: 1, required: 2 })
        ));
    }

    #[test]
    fn sherman_morrison_examples() {
        let x = Matrix::<f64>::identity(2, 2);
        let same = sherman_morrison_update(&x, &Vector::zeros(2)).unwrap();
        assert_eq!(same, x);
        let upd = sherman_morrison_update(&x, &Vector::from_vec(vec![1.0, 0.0])).unwrap();
        assert_eq!(upd, Matrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn sherman_morrison_singular_denominator() {
        // X⁻¹ = -I makes 1 + yᵀX⁻¹y = 0 for a unit y
        let x_inv = -Matrix::<f64>::identity(2, 2);
        let err = sherman_morrison_update(&x_inv, &Vector::from_vec(vec![1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::SingularUpdate(_)));
        assert!(sherman_morrison_update(&x_inv, &Vector::zeros(3)).is_err());
    }

    #[test]
    fn sherman_morrison_matches_direct_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let a = random_matrix(4, 4, &mut rng);
            let x = &a * a.transpose() + Matrix::identity(4, 4);
            let y = Vector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let fast = sherman_morrison_update(&x.clone().try_inverse().unwrap(), &y).unwrap();
            let direct = (x + &y * y.transpose()).try_inverse().unwrap();
            assert!((fast - direct).amax() < 1e-8);
        }
    }

    #[test]
    fn greedy_orthogonal_example() {
        // orthogonal directions in R^2 with norms 4, 3, 2, 1
        let y = Matrix::from_row_slice(2, 4, &[0.0, 3.0, 0.0, 1.0, 4.0, 0.0, 2.0, 0.0]);
        let p = SelectionProblem::unconstrained(y.clone(), 3).unwrap();
        let s = greedy_ed(&p).unwrap();
        assert_eq!(s, vec![0, 1, 2]);
        let best = subsets(4, 3)
            .into_iter()
            .map(|s| log_det_information(&y, &s))
            .fold(f64::NEG_INFINITY, f64::max);
        assert_abs_diff_eq!(log_det_information(&y, &s), best, epsilon = 1e-12);
    }

    #[test]
    fn greedy_exhaustive_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = random_matrix(3, 6, &mut rng);
        let p = SelectionProblem::new(y, vec![0, 2, 3, 5], 4).unwrap();
        let mut s = greedy_ed(&p).unwrap();
        s.sort();
        assert_eq!(s, vec![0, 2, 3, 5]);
    }

    #[test]
    fn greedy_respects_feasible_set_and_budget_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y = random_matrix(2, 10, &mut rng);
        let p = SelectionProblem::new(y.clone(), vec![1, 3, 4, 7, 8], 4).unwrap();
        let s = greedy_ed(&p).unwrap();
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|j| p.feasible().contains(j)));
        let mut uniq = s.clone();
        uniq.sort();
        uniq.dedup();
        assert_eq!(uniq.len(), 4);
        let low = SelectionProblem::new(y, vec![1, 3, 4], 1).unwrap();
        assert!(greedy_ed(&low).is_err());
    }

    #[test]
    fn greedy_trace_inverse_and_logdet() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let y = random_matrix(3, 12, &mut rng);
            let p = SelectionProblem::unconstrained(y.clone(), 9).unwrap();
            let trace = greedy_ed_trace(&p).unwrap();
            let mut sel = trace.initial.clone();
            let mut prev = log_det_information(&y, &sel);
            assert!(prev.is_finite());
            for step in &trace.steps {
                assert!(step.gain >= 0.0);
                sel.push(step.index);
                let fresh = gram_of_columns(&y, &sel).try_inverse().unwrap();
                assert!((&fresh - &step.x_inv).amax() < 1e-8);
                let ld = log_det_information(&y, &sel);
                assert!(ld >= prev - 1e-12);
                assert_abs_diff_eq!(ld - prev, (1.0 + step.gain).ln(), epsilon = 1e-9);
                prev = ld;
            }
        }
    }

    #[test]
    fn greedy_near_optimal_on_random_instances() {
        let mut top = 0;
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let y = random_matrix(2, 8, &mut rng);
            let p = SelectionProblem::unconstrained(y.clone(), 3).unwrap();
            let got = log_det_information(&y, &greedy_ed(&p).unwrap());
            let mut all: Vec<f64> = subsets(8, 3).iter().map(|s| log_det_information(&y, s)).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let best = *all.last().unwrap();
            let median = all[all.len() / 2];
            assert!(got >= median, "seed {seed}: below median");
            if got >= best - 1e-9 {
                top += 1;
            }
        }
        assert!(top >= 90, "greedy optimal on only {top}/100");
    }

    #[test]
    fn embed_examples() {
        let y_s = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let x = embed_new(&y_s, &[0.0, 2.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y_s = random_matrix(3, 7, &mut rng);
        let x_star = Vector::from_vec(vec![0.3, -1.2, 0.5]);
        let e: Vec<f64> = y_s.tr_mul(&x_star).iter().copied().collect();
        let x = embed_new(&y_s, &e).unwrap();
        assert!((x - x_star).amax() < 1e-9);

        let noisy: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = embed_new(&y_s, &noisy).unwrap();
        let resid = y_s.tr_mul(&x) - Vector::from_column_slice(&noisy);
        assert!((&y_s * resid).amax() < 1e-8);
    }

    #[test]
    fn embed_errors() {
        let y_s = Matrix::<f64>::identity(3, 2);
        assert!(embed_new(&y_s, &[1.0, 2.0]).is_err());
        let flat = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(embed_new(&flat, &[1.0, 2.0, 3.0]), Err(Error::RankDeficient(_))));
        assert!(embed_new(&flat, &[1.0]).is_err());
    }

    #[test]
    fn predict_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let y = random_matrix(3, 5, &mut rng);
        assert_eq!(predict(&y, &Vector::zeros(3)).unwrap(), Vector::zeros(5));
        let x = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        let e = predict(&y, &x).unwrap();
        for j in 0..5 {
            let direct: f64 = (0..3).map(|r| y[(r, j)] * x[r]).sum();
            assert_abs_diff_eq!(e[j], direct, epsilon = 1e-14);
        }
        assert!(predict(&y, &Vector::zeros(2)).is_err());
    }

    #[test]
    fn random_selection_properties() {
        let feasible = vec![2, 4, 6, 8];
        let mut all = select_random(&feasible, 4, 1).unwrap();
        all.sort();
        assert_eq!(all, feasible);
        assert_eq!(select_random(&feasible, 2, 7).unwrap(), select_random(&feasible, 2, 7).unwrap());
        assert!(select_random(&feasible, 5, 1).is_err());

        let trials = 10_000;
        let mut hits = [0usize; 4];
        for seed in 0..trials {
            for j in select_random(&feasible, 2, seed).unwrap() {
                hits[j / 2 - 1] += 1;
            }
        }
        for h in hits {
            assert!((h as f64 / trials as f64 - 0.5).abs() <= 0.02);
        }
    }

    #[test]
    fn random_feasible_retries() {
        // columns 0 and 1 are parallel, so {0, 1} is rank deficient
        let y = Matrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 1.0, 2.0, 1.0]);
        for seed in 0..50 {
            let s = select_random_feasible(&y, &[0, 1, 2], 2, seed).unwrap();
            assert!(s.contains(&2));
        }
        let flat = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(
            select_random_feasible(&flat, &[0, 1], 2, 0),
            Err(Error::RetriesExhausted { .. })
        ));
    }

    #[test]
    fn qr_selection_orders_columns() {
        let e = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 5.0, 0.0, 2.0, 0.0]);
        assert_eq!(select_qr(&e, &[0, 1, 2], 3).unwrap(), vec![2, 1, 0]);
    }
}
