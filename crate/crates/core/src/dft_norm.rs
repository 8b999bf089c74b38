//! Spectral norms of depthwise convolutions from filter DFTs.
//!
//! A circulant single-channel convolution is diagonalized by the DFT, so its
//! spectral norm is the largest DFT magnitude of the filter zero-padded to the
//! image size. For zero-padded convolutions the same quantity computed on the
//! padded image shape N+2p is an upper bound, and a depthwise layer's norm is
//! the maximum over its channels.
//!
//! The transform is the unnormalized forward DFT
//! `F[j] = Σ_n f[n] exp(-2πi ⟨n/N, j⟩)`; no scale factor is applied to the
//! magnitudes.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Result, SpecNormError};
use crate::model::{FeatureGeometry, FilterBank, NormEstimate, NormMethod, PaddingMode};
use crate::tensor::{next_index, Tensor};

/// |DFT| of one zero-padded filter.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddedSpectrum {
    pub magnitudes: Tensor,
    pub source_channel: usize,
}

impl PaddedSpectrum {
    pub fn max_magnitude(&self) -> f64 {
        self.magnitudes.data().iter().fold(0.0, |m, &x| m.max(x))
    }
}

/// Reusable FFT plans for repeated spectra at the same shapes.
pub struct SpectrumPlanner {
    planner: FftPlanner<f64>,
}

impl Default for SpectrumPlanner {
    fn default() -> Self {
        Self::new()
    }
}

impl SpectrumPlanner {
    pub fn new() -> Self {
        Self {
            planner: FftPlanner::new(),
        }
    }

    /// In-place unnormalized forward DFT over every axis of `shape`.
    pub fn forward(&mut self, data: &mut [Complex64], shape: &[usize]) {
        debug_assert_eq!(data.len(), shape.iter().product::<usize>());
        let total = data.len();
        let mut lanes = vec![Complex64::new(0.0, 0.0); total];
        for axis in 0..shape.len() {
            let n = shape[axis];
            if n == 1 {
                continue;
            }
            let inner: usize = shape[axis + 1..].iter().product();
            let outer = total / (n * inner);
            let fft = self.planner.plan_fft_forward(n);

            let mut lane = 0;
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * n * inner + i;
                    for k in 0..n {
                        lanes[lane * n + k] = data[base + k * inner];
                    }
                    lane += 1;
                }
            }
            fft.process(&mut lanes);
            lane = 0;
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * n * inner + i;
                    for k in 0..n {
                        data[base + k * inner] = lanes[lane * n + k];
                    }
                    lane += 1;
                }
            }
        }
    }

    pub fn dft(&mut self, tensor: &Tensor) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = tensor
            .data()
            .iter()
            .map(|&x| Complex64::new(x, 0.0))
            .collect();
        self.forward(&mut data, tensor.shape());
        data
    }

    pub fn padded_spectrum(
        &mut self,
        filter: &Tensor,
        target: &[usize],
        source_channel: usize,
    ) -> Result<PaddedSpectrum> {
        let padded = zero_pad_filter(filter, target)?;
        let magnitudes = self.dft(&padded).iter().map(|z| z.norm()).collect();
        Ok(PaddedSpectrum {
            magnitudes: Tensor::new(target.to_vec(), magnitudes)?,
            source_channel,
        })
    }

    fn max_magnitude(&mut self, filter: &Tensor, target: &[usize]) -> Result<f64> {
        let padded = zero_pad_filter(filter, target)?;
        Ok(self.dft(&padded).iter().fold(0.0, |m, z| m.max(z.norm())))
    }
}

/// Unnormalized forward DFT of a real tensor.
pub fn dft(tensor: &Tensor) -> Vec<Complex64> {
    SpectrumPlanner::new().dft(tensor)
}

/// Embeds `filter` at the origin of a zero tensor of shape `target`.
pub fn zero_pad_filter(filter: &Tensor, target: &[usize]) -> Result<Tensor> {
    let shape = filter.shape();
    if target.len() != shape.len() || shape.iter().zip(target).any(|(k, n)| k > n) {
        return Err(SpecNormError::TargetTooSmall {
            source_extents: shape.to_vec(),
            target: target.to_vec(),
        });
    }
    let mut out = Tensor::zeros(target);
    let mut index = vec![0; shape.len()];
    for &value in filter.data() {
        out.set(&index, value);
        next_index(&mut index, shape);
    }
    Ok(out)
}

/// Exact norm of the single-channel circulant convolution on the geometry's
/// spatial grid.
pub fn circulant_spectral_norm(
    filter: &Tensor,
    geometry: &FeatureGeometry,
) -> Result<NormEstimate> {
    if geometry.mode() != PaddingMode::Circulant {
        return Err(SpecNormError::InvalidGeometry(
            "exact DFT norm requires circulant padding".into(),
        ));
    }
    require_unit_stride(geometry)?;
    let value = SpectrumPlanner::new().max_magnitude(filter, geometry.spatial())?;
    Ok(NormEstimate::exact_circulant(value))
}

/// Upper bound on the norm of a zero-padded depthwise convolution:
/// `max_{i,j} |DFT(pad(θ^j))_i|` with the DFT taken at the padded shape N+2p.
pub fn depthwise_spectral_bound(
    bank: &FilterBank,
    geometry: &FeatureGeometry,
) -> Result<NormEstimate> {
    if geometry.mode() != PaddingMode::Zero {
        return Err(SpecNormError::InvalidGeometry(
            "depthwise bound requires zero padding".into(),
        ));
    }
    require_unit_stride(geometry)?;
    geometry.check_bank(bank)?;
    let target = geometry.padded_shape();
    let mut planner = SpectrumPlanner::new();
    let mut value: f64 = 0.0;
    for filter in bank.filters() {
        value = value.max(planner.max_magnitude(filter, &target)?);
    }
    Ok(NormEstimate::dft_bound(value))
}

/// Per-channel spectra at the padded shape, for inspection and reporting.
pub fn depthwise_spectra(
    bank: &FilterBank,
    geometry: &FeatureGeometry,
) -> Result<Vec<PaddedSpectrum>> {
    geometry.check_bank(bank)?;
    let target = geometry.padded_shape();
    let mut planner = SpectrumPlanner::new();
    bank.filters()
        .iter()
        .enumerate()
        .map(|(j, f)| planner.padded_spectrum(f, &target, j))
        .collect()
}

/// Carries a unit-stride bound over to a strided layer.
///
/// Without the heuristic the value is returned as is: subsampling has norm 1,
/// so it remains a valid bound. With the heuristic the value is divided by
/// ∏ √νᵢ, assuming the energy of the unit-stride output spreads evenly over
/// all positions; the result is no longer guaranteed.
pub fn stride_adjusted_estimate(
    bound: NormEstimate,
    stride: &[usize],
    heuristic: bool,
) -> NormEstimate {
    if stride.iter().all(|&s| s == 1) {
        return bound;
    }
    if heuristic {
        let factor: f64 = stride.iter().map(|&s| (s as f64).sqrt()).product();
        NormEstimate {
            method: NormMethod::DftStrideHeuristic,
            is_upper_bound: false,
            value: bound.value / factor,
            ..bound
        }
    } else {
        NormEstimate {
            method: NormMethod::DftUpperBound,
            is_upper_bound: true,
            ..bound
        }
    }
}

fn require_unit_stride(geometry: &FeatureGeometry) -> Result<()> {
    if geometry.is_unit_stride() {
        Ok(())
    } else {
        Err(SpecNormError::InvalidGeometry(
            "DFT norms are computed for unit stride; use stride_adjusted_estimate".into(),
        ))
    }
}
