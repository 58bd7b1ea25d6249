//! Synthetic error/memory matrices with a known low-rank structure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::formats::{
    cross_product, format_a_table, format_b_table, memory_bytes, ArchitectureDescriptor,
    PrecisionConfig, PrecisionFormat,
};
use crate::matrices::{MatrixKind, MeasurementMatrix};
use crate::{Error, Matrix, Result};

/// Parameter count of a ResNet-18-sized network.
pub const SYNTH_WEIGHT_COUNT: u64 = 11_173_962;
pub const SYNTH_BATCH_SIZE: u64 = 128;
/// Activation elements per sample at 32×32 input; 64×64 inputs carry 4×.
pub const SYNTH_ACTIVATIONS_32: u64 = 600_000;

#[derive(Debug, Clone)]
pub struct SynthData {
    pub error: MeasurementMatrix<f64>,
    pub memory: MeasurementMatrix<f64>,
    /// Noiseless `AᵀB` before the sigmoid.
    pub logits: Matrix<f64>,
    pub configs: Vec<PrecisionConfig>,
    pub archs: Vec<ArchitectureDescriptor>,
}

/// First `d` configurations of the standard 99-entry grid, extended with
/// wider Format A layouts when `d > 99`.
pub fn synthetic_config_grid(d: usize) -> Vec<PrecisionConfig> {
    let b = format_b_table();
    let mut a = format_a_table();
    let mut mant = 5;
    while a.len() * b.len() < d {
        for exp in 3..=5 {
            a.push(PrecisionFormat::new(exp, mant).expect("valid format"));
        }
        mant += 1;
    }
    let mut grid = cross_product(&a, &b);
    grid.truncate(d);
    grid
}

/// Architecture for a dataset at 32×32 (`high_res = false`) or 64×64.
pub fn synthetic_arch(high_res: bool) -> ArchitectureDescriptor {
    ArchitectureDescriptor {
        weight_count: SYNTH_WEIGHT_COUNT,
        activation_elements_per_sample: if high_res {
            4 * SYNTH_ACTIVATIONS_32
        } else {
            SYNTH_ACTIVATIONS_32
        },
        optimizer_state_multiplier: 2.0,
        batch_size: SYNTH_BATCH_SIZE,
    }
}

/// Memory matrix: one row per architecture, one column per configuration.
pub fn memory_matrix(
    configs: &[PrecisionConfig],
    archs: &[ArchitectureDescriptor],
) -> Matrix<f64> {
    Matrix::from_fn(archs.len(), configs.len(), |i, j| memory_bytes(&configs[j], &archs[i]))
}

/// `E = clip(sigmoid(AᵀB + noise), 0, 1)` with `A` (`rank × n`) and `B`
/// (`rank × d`) i.i.d. `N(0, 1/rank)`; memory from the analytic model over
/// [`synthetic_config_grid`], each dataset drawn at one of two input
/// resolutions.
pub fn synth_lowrank(n: usize, d: usize, rank: usize, noise_sd: f64, seed: u64) -> Result<SynthData> {
    if rank == 0 || rank > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} must be in 1..={}",
            n.min(d)
        )));
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise_sd must be >= 0, got {noise_sd}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (rank as f64).sqrt();
    let mut gaussian = |rows: usize, cols: usize| {
        Matrix::from_fn(rows, cols, |_, _| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * scale
        })
    };
    let a = gaussian(rank, n);
    let b = gaussian(rank, d);
    let logits = a.tr_mul(&b);
    let noisy = if noise_sd > 0.0 {
        let noise = Normal::new(0.0, noise_sd).expect("valid sd");
        logits.map(|v| v + noise.sample(&mut rng))
    } else {
        logits.clone()
    };
    let error = noisy.map(|v| (1.0 / (1.0 + (-v).exp())).clamp(0.0, 1.0));

    let configs = synthetic_config_grid(d);
    let archs: Vec<ArchitectureDescriptor> = (0..n).map(|_| synthetic_arch(rng.random_bool(0.5))).collect();
    let memory = memory_matrix(&configs, &archs);

    let row_ids: Vec<String> = (0..n).map(|i| format!("dataset{i}")).collect();
    let col_ids: Vec<String> = configs.iter().map(PrecisionConfig::label).collect();
    Ok(SynthData {
        error: MeasurementMatrix::new(error, row_ids.clone(), col_ids.clone(), MatrixKind::Error)?,
        memory: MeasurementMatrix::new(memory, row_ids, col_ids, MatrixKind::Memory)?,
        logits,
        configs,
        archs,
    })
}

/// Error matrix that is exactly rank `rank`: products of uniform factors
/// scaled so every entry lies in `[0, 1]`. Memory as in [`synth_lowrank`].
pub fn synth_exact_lowrank(n: usize, d: usize, rank: usize, seed: u64) -> Result<SynthData> {
    if rank == 0 || rank > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} must be in 1..={}",
            n.min(d)
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = Matrix::from_fn(rank, n, |_, _| rng.random_range(0.0..1.0));
    let b = Matrix::from_fn(rank, d, |_, _| rng.random_range(0.0..1.0) / rank as f64);
    let error = a.tr_mul(&b);
    let configs = synthetic_config_grid(d);
    let archs: Vec<ArchitectureDescriptor> = (0..n).map(|_| synthetic_arch(rng.random_bool(0.5))).collect();
    let memory = memory_matrix(&configs, &archs);
    let row_ids: Vec<String> = (0..n).map(|i| format!("dataset{i}")).collect();
    let col_ids: Vec<String> = configs.iter().map(PrecisionConfig::label).collect();
    Ok(SynthData {
        logits: error.clone(),
        error: MeasurementMatrix::new(error, row_ids.clone(), col_ids.clone(), MatrixKind::Error)?,
        memory: MeasurementMatrix::new(memory, row_ids, col_ids, MatrixKind::Memory)?,
        configs,
        archs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrices::{explained_variance, singular_values};

    #[test]
    fn noiseless_logits_have_target_rank() {
        let s = synth_lowrank(30, 40, 4, 0.0, 1).unwrap();
        let sv = singular_values(&s.logits);
        assert!(sv[3] > 1e-6);
        assert!(sv[4..].iter().all(|&x| x < 1e-10));
    }

    #[test]
    fn entries_in_range_and_deterministic() {
        let a = synth_lowrank(20, 30, 3, 0.01, 5).unwrap();
        assert!(a.error.values().iter().all(|&e| (0.0..=1.0).contains(&e)));
        assert!(a.memory.values().iter().all(|&m| m > 0.0));
        let b = synth_lowrank(20, 30, 3, 0.01, 5).unwrap();
        assert_eq!(a.error, b.error);
        assert_eq!(a.memory, b.memory);
        assert_ne!(a.error, synth_lowrank(20, 30, 3, 0.01, 6).unwrap().error);
    }

    #[test]
    fn explained_variance_is_high_at_true_rank() {
        for seed in 0..20 {
            let s = synth_lowrank(87, 99, 5, 0.01, seed).unwrap();
            let ev = explained_variance(&singular_values(s.error.values()), 5).unwrap();
            assert!(ev > 0.7, "seed {seed}: {ev}");
        }
    }

    #[test]
    fn grid_extends_past_standard_tables() {
        assert_eq!(synthetic_config_grid(99).len(), 99);
        let big = synthetic_config_grid(150);
        assert_eq!(big.len(), 150);
        let labels: std::collections::HashSet<_> = big.iter().map(|c| c.label()).collect();
        assert_eq!(labels.len(), 150);
    }

    #[test]
    fn exact_lowrank_is_exact() {
        let s = synth_exact_lowrank(12, 20, 3, 2).unwrap();
        let sv = singular_values(s.error.values());
        assert!(sv[3] < 1e-12 * sv[0]);
        assert!(s.error.values().iter().all(|&e| (0.0..=1.0).contains(&e)));
    }

    #[test]
    fn invalid_arguments() {
        assert!(synth_lowrank(5, 5, 6, 0.0, 0).is_err());
        assert!(synth_lowrank(5, 5, 0, 0.0, 0).is_err());
        assert!(synth_lowrank(5, 5, 2, -1.0, 0).is_err());
    }
}
