//! Relative overestimation of the depthwise DFT bound on random filters.
//!
//! For every resolution n, `trials` standard-normal filters are drawn; each
//! is scored by bound / oracle, where the oracle is a fixed number of
//! matrix-free power iterations on the zero-padded n×…×n convolution.
//! Trial t at size n draws its filter from stream (n, t) of the study seed
//! and its power-method start from a derived seed, so rows do not depend on
//! which other sizes are requested or on the worker count.

use rayon::prelude::*;
use serde::Serialize;
use specnorm_core::dft_norm::depthwise_spectral_bound;
use specnorm_core::oracle::ConvOperator;
use specnorm_core::power::power_iterate_fixed;
use specnorm_core::{
    rng, validate_filter_bank, FeatureGeometry, PaddingMode, SpecNormError, Tensor,
};

use crate::error::{HarnessError, Result};
use crate::output::{fmt_f64, Tabular};

pub const DEFAULT_SIZES: [usize; 6] = [7, 8, 16, 32, 64, 128];
pub const DEFAULT_TRIALS: usize = 200;
pub const DEFAULT_ORACLE_ITERS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub kernel: Vec<usize>,
    pub oracle_iters: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            sizes: DEFAULT_SIZES.to_vec(),
            trials: DEFAULT_TRIALS,
            seed: 1,
            kernel: vec![3, 3],
            oracle_iters: DEFAULT_ORACLE_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    pub size: usize,
    pub trials: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub seed: u64,
}

impl Tabular for StudyRow {
    fn header() -> &'static [&'static str] {
        &["size", "trials", "median", "q1", "q3", "seed"]
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.size.to_string(),
            self.trials.to_string(),
            fmt_f64(self.median),
            fmt_f64(self.q1),
            fmt_f64(self.q3),
            self.seed.to_string(),
        ]
    }
}

/// Linear-interpolation quantile of sorted data (q in [0, 1]).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// bound / oracle for one random filter.
pub fn trial_ratio(size: usize, trial: usize, cfg: &StudyConfig) -> Result<f64> {
    let per: usize = cfg.kernel.iter().product();
    let mut stream = rng::stream(cfg.seed, rng::stream_id(size as u64, trial as u64));
    let filter = Tensor::new(cfg.kernel.clone(), rng::gaussian_vec(&mut stream, per))?;
    let bank = validate_filter_bank(vec![filter])?;
    let spatial = vec![size; cfg.kernel.len()];
    let geometry = FeatureGeometry::zero_padded(&spatial, &bank.half_widths())?;
    let bound = depthwise_spectral_bound(&bank, &geometry)?.value;

    let op = ConvOperator::new(
        bank.filter(0),
        &spatial,
        &vec![1; spatial.len()],
        PaddingMode::Zero,
    )?;
    let oracle_seed = rng::derive_seed(cfg.seed, size as u64, trial as u64);
    let (oracle, _) = power_iterate_fixed(&op, cfg.oracle_iters, oracle_seed)?;
    Ok(bound / oracle.value)
}

pub fn run_size(size: usize, cfg: &StudyConfig) -> Result<StudyRow> {
    if cfg.kernel.iter().any(|&k| k > size) {
        return Err(SpecNormError::TargetTooSmall {
            source_extents: cfg.kernel.clone(),
            target: vec![size; cfg.kernel.len()],
        }
        .into());
    }
    let mut ratios = (0..cfg.trials)
        .into_par_iter()
        .map(|t| trial_ratio(size, t, cfg))
        .collect::<Result<Vec<f64>>>()?;
    ratios.sort_by(f64::total_cmp);
    Ok(StudyRow {
        size,
        trials: cfg.trials,
        median: quantile(&ratios, 0.5),
        q1: quantile(&ratios, 0.25),
        q3: quantile(&ratios, 0.75),
        seed: cfg.seed,
    })
}

pub fn run_study(cfg: &StudyConfig) -> Result<Vec<StudyRow>> {
    if cfg.trials == 0 || cfg.sizes.is_empty() || cfg.oracle_iters == 0 {
        return Err(HarnessError::Usage(
            "study needs at least one size, one trial and one oracle iteration".into(),
        ));
    }
    cfg.sizes.iter().map(|&n| run_size(n, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.75), 3.25);
        assert_eq!(quantile(&[5.0], 0.5), 5.0);
    }

    #[test]
    fn oversized_kernel_rejected() {
        let cfg = StudyConfig {
            sizes: vec![7],
            trials: 1,
            kernel: vec![9, 9],
            ..StudyConfig::default()
        };
        let err = run_study(&cfg).unwrap_err();
        assert!(matches!(
            err,
            HarnessError::Core(SpecNormError::TargetTooSmall { .. })
        ));
    }

    #[test]
    fn rows_are_ordered_and_dominating() {
        let cfg = StudyConfig {
            sizes: vec![7, 9],
            trials: 12,
            ..StudyConfig::default()
        };
        let rows = run_study(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert!(r.q1 <= r.median && r.median <= r.q3);
            assert!(r.q1 >= 1.0 - 1e-9);
        }
    }
}
