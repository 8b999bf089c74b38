//! Shared data model: filter banks, connectivity matrices, geometry,
//! norm estimates and scaling policies.

use std::fmt;

use crate::error::{Result, SpecNormError};
use crate::rng;
use crate::tensor::Tensor;

pub const MAX_DIMS: usize = 3;

/// Depthwise filters θ¹…θ^C, all with the same odd extents.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    kernel: Vec<usize>,
    filters: Vec<Tensor>,
}

impl FilterBank {
    /// Builds a bank from `channels` filters stored back to back (channel-major).
    pub fn from_flat(channels: usize, kernel: &[usize], data: Vec<f64>) -> Result<Self> {
        let per: usize = kernel.iter().product();
        if channels == 0 || per == 0 {
            return Err(SpecNormError::EmptyInput);
        }
        if data.len() != channels * per {
            let mut expected = vec![channels];
            expected.extend_from_slice(kernel);
            return Err(SpecNormError::ShapeMismatch {
                expected,
                found: vec![data.len()],
            });
        }
        let raw = data
            .chunks(per)
            .map(|c| Tensor::new(kernel.to_vec(), c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        validate_filter_bank(raw)
    }

    pub fn channels(&self) -> usize {
        self.filters.len()
    }

    pub fn dims(&self) -> usize {
        self.kernel.len()
    }

    pub fn kernel_shape(&self) -> &[usize] {
        &self.kernel
    }

    /// Half-widths p with extents 2p+1.
    pub fn half_widths(&self) -> Vec<usize> {
        self.kernel.iter().map(|k| k / 2).collect()
    }

    pub fn filters(&self) -> &[Tensor] {
        &self.filters
    }

    pub fn filter(&self, channel: usize) -> &Tensor {
        &self.filters[channel]
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.filters
            .iter()
            .flat_map(|f| f.data().iter().copied())
            .collect()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            kernel: self.kernel.clone(),
            filters: self.filters.iter().map(|f| f.scaled(alpha)).collect(),
        }
    }
}

/// Checks extents, shapes and finiteness of raw depthwise filters.
pub fn validate_filter_bank(raw: Vec<Tensor>) -> Result<FilterBank> {
    let first = raw.first().ok_or(SpecNormError::EmptyInput)?;
    let kernel = first.shape().to_vec();
    check_kernel_extents(&kernel)?;
    for filter in &raw {
        if filter.shape() != kernel.as_slice() {
            return Err(SpecNormError::ShapeMismatch {
                expected: kernel,
                found: filter.shape().to_vec(),
            });
        }
    }
    let per = first.len();
    for (c, filter) in raw.iter().enumerate() {
        if let Some(i) = filter.data().iter().position(|x| !x.is_finite()) {
            return Err(SpecNormError::NonFiniteEntry { index: c * per + i });
        }
    }
    Ok(FilterBank {
        kernel,
        filters: raw,
    })
}

fn check_kernel_extents(kernel: &[usize]) -> Result<()> {
    if kernel.is_empty() || kernel.len() > MAX_DIMS {
        return Err(SpecNormError::UnsupportedDimensionality(kernel.len()));
    }
    if let Some((axis, &extent)) = kernel.iter().enumerate().find(|(_, &k)| k % 2 == 0) {
        return Err(SpecNormError::EvenKernelExtent { axis, extent });
    }
    Ok(())
}

/// Standard-normal filter bank; filter j is drawn from stream j of `seed`.
pub fn random_gaussian_filters(count: usize, kernel: &[usize], seed: u64) -> Result<FilterBank> {
    check_kernel_extents(kernel)?;
    if count == 0 {
        return Err(SpecNormError::EmptyInput);
    }
    let per: usize = kernel.iter().product();
    let raw = (0..count)
        .map(|j| {
            let data = rng::gaussian_vec(&mut rng::stream(seed, j as u64), per);
            Tensor::new(kernel.to_vec(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    validate_filter_bank(raw)
}

/// The C_out×C_in matrix of a pointwise convolution, row-major.
///
/// Also used for dense layers, which are the same algebraic object.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl ConnectivityMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(SpecNormError::EmptyInput);
        }
        if entries.len() != rows * cols {
            return Err(SpecNormError::ShapeMismatch {
                expected: vec![rows, cols],
                found: vec![entries.len()],
            });
        }
        if let Some(index) = entries.iter().position(|x| !x.is_finite()) {
            return Err(SpecNormError::NonFiniteEntry { index });
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self {
            rows: n,
            cols: n,
            entries,
        }
    }

    pub fn random_gaussian(rows: usize, cols: usize, seed: u64) -> Result<Self> {
        let entries = rng::gaussian_vec(&mut rng::stream(seed, 0), rows * cols);
        Self::new(rows, cols, entries)
    }

    /// C_out
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// C_in
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols + col]
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|x| x * alpha).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.entries[r * self.cols..(r + 1) * self.cols];
            *o = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }

    pub fn mul_vec_transposed(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (r, &yr) in y.iter().enumerate() {
            let row = &self.entries[r * self.cols..(r + 1) * self.cols];
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yr;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PaddingMode {
    Circulant,
    Zero,
}

/// Spatial extents N, padding p, stride ν and boundary handling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureGeometry {
    spatial: Vec<usize>,
    pad: Vec<usize>,
    stride: Vec<usize>,
    mode: PaddingMode,
}

impl FeatureGeometry {
    pub fn new(
        spatial: Vec<usize>,
        pad: Vec<usize>,
        stride: Vec<usize>,
        mode: PaddingMode,
    ) -> Result<Self> {
        let d = spatial.len();
        if d == 0 || d > MAX_DIMS {
            return Err(SpecNormError::UnsupportedDimensionality(d));
        }
        if pad.len() != d || stride.len() != d {
            return Err(SpecNormError::InvalidGeometry(format!(
                "spatial, pad and stride lengths differ ({}, {}, {})",
                d,
                pad.len(),
                stride.len()
            )));
        }
        if spatial.contains(&0) {
            return Err(SpecNormError::InvalidGeometry(
                "spatial extents must be positive".into(),
            ));
        }
        for (&n, &s) in spatial.iter().zip(&stride) {
            if s == 0 || s > n {
                return Err(SpecNormError::InvalidGeometry(format!(
                    "stride {s} outside 1..={n}"
                )));
            }
        }
        Ok(Self {
            spatial,
            pad,
            stride,
            mode,
        })
    }

    pub fn circulant(spatial: &[usize]) -> Result<Self> {
        let d = spatial.len();
        Self::new(
            spatial.to_vec(),
            vec![0; d],
            vec![1; d],
            PaddingMode::Circulant,
        )
    }

    /// Same-size zero padding for filters with half-widths `pad`.
    pub fn zero_padded(spatial: &[usize], pad: &[usize]) -> Result<Self> {
        Self::new(
            spatial.to_vec(),
            pad.to_vec(),
            vec![1; spatial.len()],
            PaddingMode::Zero,
        )
    }

    pub fn with_stride(self, stride: &[usize]) -> Result<Self> {
        Self::new(self.spatial, self.pad, stride.to_vec(), self.mode)
    }

    pub fn spatial(&self) -> &[usize] {
        &self.spatial
    }

    pub fn pad(&self) -> &[usize] {
        &self.pad
    }

    pub fn stride(&self) -> &[usize] {
        &self.stride
    }

    pub fn mode(&self) -> PaddingMode {
        self.mode
    }

    pub fn dims(&self) -> usize {
        self.spatial.len()
    }

    pub fn is_unit_stride(&self) -> bool {
        self.stride.iter().all(|&s| s == 1)
    }

    /// N + 2p for zero mode, N for circulant mode.
    pub fn padded_shape(&self) -> Vec<usize> {
        match self.mode {
            PaddingMode::Circulant => self.spatial.clone(),
            PaddingMode::Zero => self
                .spatial
                .iter()
                .zip(&self.pad)
                .map(|(n, p)| n + 2 * p)
                .collect(),
        }
    }

    /// Output extents ⌈Nᵢ/νᵢ⌉.
    pub fn output_shape(&self) -> Vec<usize> {
        self.spatial
            .iter()
            .zip(&self.stride)
            .map(|(n, s)| n.div_ceil(*s))
            .collect()
    }

    pub fn check_bank(&self, bank: &FilterBank) -> Result<()> {
        if bank.dims() != self.dims() {
            return Err(SpecNormError::ShapeMismatch {
                expected: self.spatial.clone(),
                found: bank.kernel_shape().to_vec(),
            });
        }
        if self.mode == PaddingMode::Zero && self.pad != bank.half_widths() {
            return Err(SpecNormError::InvalidGeometry(format!(
                "zero padding {:?} does not match filter half-widths {:?}",
                self.pad,
                bank.half_widths()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormMethod {
    ExactCirculantDft,
    DftUpperBound,
    DftStrideHeuristic,
    PowerMethod,
    SvdOracle,
}

impl NormMethod {
    pub fn tag(self) -> &'static str {
        match self {
            NormMethod::ExactCirculantDft => "exact-circulant-dft",
            NormMethod::DftUpperBound => "dft-upper-bound",
            NormMethod::DftStrideHeuristic => "dft-stride-heuristic",
            NormMethod::PowerMethod => "power-method",
            NormMethod::SvdOracle => "svd-oracle",
        }
    }
}

impl fmt::Display for NormMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A spectral-norm value together with how it was obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub method: NormMethod,
    pub iterations: usize,
    pub residual: f64,
    pub is_upper_bound: bool,
}

impl NormEstimate {
    fn closed_form(value: f64, method: NormMethod) -> Self {
        Self {
            value,
            method,
            iterations: 0,
            residual: 0.0,
            is_upper_bound: method == NormMethod::DftUpperBound,
        }
    }

    pub fn exact_circulant(value: f64) -> Self {
        Self::closed_form(value, NormMethod::ExactCirculantDft)
    }

    pub fn dft_bound(value: f64) -> Self {
        Self::closed_form(value, NormMethod::DftUpperBound)
    }

    pub fn stride_heuristic(value: f64) -> Self {
        Self::closed_form(value, NormMethod::DftStrideHeuristic)
    }

    pub fn svd(value: f64) -> Self {
        Self::closed_form(value, NormMethod::SvdOracle)
    }

    pub fn power(value: f64, iterations: usize, residual: f64) -> Self {
        Self {
            value,
            method: NormMethod::PowerMethod,
            iterations,
            residual,
            is_upper_bound: false,
        }
    }
}

/// Post-normalization rescaling: hard (×K) or soft (×K·tanh s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalingPolicy {
    Hard { k: f64 },
    Soft { k: f64, s: f64 },
}

impl ScalingPolicy {
    pub fn hard(k: f64) -> Result<Self> {
        check_scale(k)?;
        Ok(Self::Hard { k })
    }

    pub fn soft(k: f64, s: f64) -> Result<Self> {
        check_scale(k)?;
        if !s.is_finite() {
            return Err(SpecNormError::InvalidConfig(format!(
                "soft parameter must be finite, got {s}"
            )));
        }
        Ok(Self::Soft { k, s })
    }

    pub fn k(&self) -> f64 {
        match *self {
            Self::Hard { k } | Self::Soft { k, .. } => k,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::Hard { .. } => "hard",
            Self::Soft { .. } => "soft",
        }
    }
}

fn check_scale(k: f64) -> Result<()> {
    if k > 0.0 && k.is_finite() {
        Ok(())
    } else {
        Err(SpecNormError::InvalidConfig(format!(
            "scaling constant must be positive and finite, got {k}"
        )))
    }
}
