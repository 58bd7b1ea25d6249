//! Error–memory Pareto frontiers and frontier quality metrics.
//!
//! Both objectives are minimized. A point dominates another when it is no
//! worse in both memory and error and differs from it.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint<T: Real> {
    pub memory: T,
    pub error: T,
    pub config_id: usize,
}

impl<T: Real> ParetoPoint<T> {
    pub fn new(memory: T, error: T, config_id: usize) -> Self {
        ParetoPoint {
            memory,
            error,
            config_id,
        }
    }

    /// `self ⪯ other` componentwise with `self ≠ other`.
    pub fn dominates(&self, other: &Self) -> bool {
        self.memory <= other.memory
            && self.error <= other.error
            && (self.memory < other.memory || self.error < other.error)
    }

    fn coords_eq(&self, other: &Self) -> bool {
        self.memory == other.memory && self.error == other.error
    }
}

/// Non-dominated points sorted by increasing memory (and strictly
/// decreasing error).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoFront<T: Real> {
    points: Vec<ParetoPoint<T>>,
}

impl<T: Real> ParetoFront<T> {
    pub fn points(&self) -> &[ParetoPoint<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn config_ids(&self) -> Vec<usize> {
        self.points.iter().map(|p| p.config_id).collect()
    }

    pub fn contains_config(&self, id: usize) -> bool {
        self.points.iter().any(|p| p.config_id == id)
    }
}

fn total_cmp<T: Real>(a: &ParetoPoint<T>, b: &ParetoPoint<T>) -> Ordering {
    a.memory
        .partial_cmp(&b.memory)
        .unwrap_or(Ordering::Equal)
        .then(a.error.partial_cmp(&b.error).unwrap_or(Ordering::Equal))
        .then(a.config_id.cmp(&b.config_id))
}

/// Exactly the non-dominated points; coincident points collapse to the
/// lowest `config_id`. Independent of input order.
pub fn pareto_front<T: Real>(points: &[ParetoPoint<T>]) -> Result<ParetoFront<T>> {
    if points.is_empty() {
        return Err(Error::Empty("no points to build a frontier from".into()));
    }
    if let Some(p) = points.iter().find(|p| !p.memory.is_finite() || !p.error.is_finite()) {
        return Err(Error::Domain(format!(
            "non-finite frontier point for config {}",
            p.config_id
        )));
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(total_cmp);
    let mut front: Vec<ParetoPoint<T>> = Vec::new();
    for p in sorted {
        match front.last() {
            // lower memory already seen; keep only strict error improvements
            Some(last) if p.error >= last.error => continue,
            _ => front.push(p),
        }
    }
    Ok(ParetoFront { points: front })
}

/// Frontier of `(memory[j], error[j], j)` over all configurations.
pub fn front_from_vectors<T: Real>(memory: &[T], error: &[T]) -> Result<ParetoFront<T>> {
    if memory.len() != error.len() {
        return Err(Error::shape(memory.len(), error.len()));
    }
    let points: Vec<_> = memory
        .iter()
        .zip(error)
        .enumerate()
        .map(|(j, (&m, &e))| ParetoPoint::new(m, e, j))
        .collect();
    pareto_front(&points)
}

/// Rescales memory to `(m − m_min) / (m_max − m_min)`; errors unchanged.
pub fn normalize_memory<T: Real>(
    points: &[ParetoPoint<T>],
    m_min: T,
    m_max: T,
) -> Result<Vec<ParetoPoint<T>>> {
    if !(m_max > m_min) {
        return Err(Error::InvalidArgument(format!(
            "degenerate memory range [{m_min}, {m_max}]"
        )));
    }
    let span = m_max - m_min;
    Ok(points
        .iter()
        .map(|p| ParetoPoint::new((p.memory - m_min) / span, p.error, p.config_id))
        .collect())
}

/// Normalizes a frontier; the order and non-domination are preserved.
pub fn normalize_front<T: Real>(front: &ParetoFront<T>, m_min: T, m_max: T) -> Result<ParetoFront<T>> {
    Ok(ParetoFront {
        points: normalize_memory(&front.points, m_min, m_max)?,
    })
}

fn distance<T: Real>(a: &ParetoPoint<T>, b: &ParetoPoint<T>) -> T {
    let dm = a.memory - b.memory;
    let de = a.error - b.error;
    (dm * dm + de * de).sqrt()
}

/// Mean distance from each estimated point to its nearest true point.
pub fn convergence<T: Real>(estimated: &ParetoFront<T>, true_front: &ParetoFront<T>) -> Result<T> {
    if estimated.is_empty() || true_front.is_empty() {
        return Err(Error::Empty("convergence needs two nonempty fronts".into()));
    }
    let total = estimated.points.iter().fold(T::zero(), |acc, p| {
        let nearest = true_front
            .points
            .iter()
            .map(|q| distance(p, q))
            .fold(T::max_value().expect("bounded"), T::min);
        acc + nearest
    });
    Ok(total / T::lit(estimated.len() as f64))
}

/// Area dominated by `front` inside the box bounded by `bound`
/// (`(memory_ub, error_ub)`), by a sweep over increasing memory.
pub fn hypervolume<T: Real>(front: &ParetoFront<T>, bound: (T, T)) -> Result<T> {
    let (mem_ub, err_ub) = bound;
    if let Some(p) = front
        .points
        .iter()
        .find(|p| p.memory > mem_ub || p.error > err_ub)
    {
        return Err(Error::InvalidArgument(format!(
            "point ({}, {}) of config {} lies outside the bound ({mem_ub}, {err_ub})",
            p.memory, p.error, p.config_id
        )));
    }
    let pts = &front.points;
    let mut area = T::zero();
    for (i, p) in pts.iter().enumerate() {
        let next_mem = pts.get(i + 1).map_or(mem_ub, |q| q.memory);
        area += (next_mem - p.memory) * (err_ub - p.error);
    }
    Ok(area)
}

/// `|HV(true) − HV(estimated)|` with respect to `bound`.
pub fn hyperdiff<T: Real>(
    estimated: &ParetoFront<T>,
    true_front: &ParetoFront<T>,
    bound: (T, T),
) -> Result<T> {
    Ok((hypervolume(true_front, bound)? - hypervolume(estimated, bound)?).abs())
}

/// Frontier point with the largest memory not exceeding `m_max`; on a
/// frontier that is also the lowest-error feasible point.
pub fn choose_config<T: Real>(front: &ParetoFront<T>, m_max: T) -> Result<ParetoPoint<T>> {
    if front.is_empty() {
        return Err(Error::Empty("empty frontier".into()));
    }
    front
        .points
        .iter()
        .rev()
        .find(|p| p.memory <= m_max)
        .copied()
        .ok_or_else(|| Error::Infeasible(format!("no frontier point within memory cap {m_max}")))
}

/// Baseline rule: uniformly random among the feasible configurations that
/// attain the largest feasible memory.
pub fn choose_random_high_memory<T: Real>(
    points: &[ParetoPoint<T>],
    m_max: T,
    seed: u64,
) -> Result<ParetoPoint<T>> {
    let top = points
        .iter()
        .filter(|p| p.memory <= m_max)
        .map(|p| p.memory)
        .fold(None, |acc: Option<T>, m| Some(acc.map_or(m, |a| a.max(m))))
        .ok_or_else(|| Error::Infeasible(format!("no configuration within memory cap {m_max}")))?;
    let mut tied: Vec<&ParetoPoint<T>> = points.iter().filter(|p| p.memory == top).collect();
    tied.sort_by_key(|p| p.config_id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(*tied[rng.random_range(0..tied.len())])
}

/// `true` when some point of `points` dominates `p`.
pub fn is_dominated<T: Real>(p: &ParetoPoint<T>, points: &[ParetoPoint<T>]) -> bool {
    points.iter().any(|q| q.dominates(p))
}

/// Whether two fronts hold the same coordinates (config ids ignored).
pub fn same_coordinates<T: Real>(a: &ParetoFront<T>, b: &ParetoFront<T>) -> bool {
    a.len() == b.len() && a.points.iter().zip(&b.points).all(|(p, q)| p.coords_eq(q))
}
