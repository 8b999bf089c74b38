//! Per-layer spectral-norm table for a kernel bundle.
//!
//! Depthwise layers report the DFT bound. On strided layers the bound is kept
//! as is (still guaranteed) unless the stride heuristic is on, in which case
//! it is divided by ∏√νᵢ and flagged as not an upper bound. Pointwise and
//! dense layers report the connectivity power-method estimate.
//!
//! With `oracle_iters > 0` each row also gets a reference norm: fixed power
//! iterations on every channel's strided zero-padded convolution (max over
//! channels) for depthwise layers, dense SVD of the matrix otherwise.

use rayon::prelude::*;
use serde::Serialize;
use specnorm_core::dft_norm::{depthwise_spectral_bound, stride_adjusted_estimate};
use specnorm_core::normalizer::{layer_norm_estimate, LayerPayload};
use specnorm_core::oracle::{connectivity_dense, exact_norm_svd, ConvOperator};
use specnorm_core::power::power_iterate_fixed;
use specnorm_core::{
    random_gaussian_filters, rng, FeatureGeometry, FilterBank, NormEstimate, PaddingMode,
    PowerConfig,
};

use crate::bundle::{BundleLayer, KernelBundle, LayerEntry, LayerKindTag};
use crate::error::{HarnessError, Result};
use crate::output::{fmt_f64, fmt_opt, Tabular};

#[derive(Debug, Clone, PartialEq)]
pub struct ReportConfig {
    pub heuristic_stride: bool,
    pub oracle_iters: usize,
    pub power: PowerConfig,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            heuristic_stride: false,
            oracle_iters: 0,
            power: PowerConfig::oracle(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub layer: String,
    pub kind: String,
    pub method: String,
    pub value: f64,
    pub upper_bound: bool,
    pub stride: String,
    pub oracle: Option<f64>,
    pub ratio: Option<f64>,
}

impl Tabular for ReportRow {
    fn header() -> &'static [&'static str] {
        &[
            "layer",
            "kind",
            "method",
            "value",
            "upper_bound",
            "stride",
            "oracle",
            "ratio",
        ]
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.layer.clone(),
            self.kind.clone(),
            self.method.clone(),
            fmt_f64(self.value),
            self.upper_bound.to_string(),
            self.stride.clone(),
            fmt_opt(self.oracle),
            fmt_opt(self.ratio),
        ]
    }
}

/// Mean of (ratio − 1) over the rows that have an oracle.
pub fn mean_overestimation(rows: &[ReportRow]) -> Option<f64> {
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    if ratios.is_empty() {
        None
    } else {
        Some(ratios.iter().map(|r| r - 1.0).sum::<f64>() / ratios.len() as f64)
    }
}

fn depthwise_oracle(
    bank: &FilterBank,
    geometry: &FeatureGeometry,
    iters: usize,
    seed: u64,
) -> Result<f64> {
    let values = bank
        .filters()
        .par_iter()
        .enumerate()
        .map(|(j, filter)| {
            let op = ConvOperator::new(
                filter,
                geometry.spatial(),
                geometry.stride(),
                PaddingMode::Zero,
            )?;
            Ok(
                power_iterate_fixed(&op, iters, rng::derive_seed(seed, j as u64, 0))?
                    .0
                    .value,
            )
        })
        .collect::<specnorm_core::Result<Vec<f64>>>()?;
    Ok(values.into_iter().fold(0.0, f64::max))
}

fn stride_label(entry: &LayerEntry) -> String {
    entry
        .stride_or_unit()
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join("x")
}

pub fn report_layer(layer: &BundleLayer, index: usize, cfg: &ReportConfig) -> Result<ReportRow> {
    let name = layer.name();
    let wrap = |e| HarnessError::in_layer(name, e);
    let mut record = layer.to_record()?;
    let (estimate, oracle): (NormEstimate, Option<f64>) = match &record.payload {
        LayerPayload::Depthwise { bank, geometry } => {
            let unit =
                FeatureGeometry::zero_padded(geometry.spatial(), geometry.pad()).map_err(wrap)?;
            let bound = depthwise_spectral_bound(bank, &unit).map_err(wrap)?;
            let estimate = stride_adjusted_estimate(bound, geometry.stride(), cfg.heuristic_stride);
            let oracle = if cfg.oracle_iters > 0 {
                let seed = rng::derive_seed(cfg.power.seed, index as u64, 1);
                Some(
                    depthwise_oracle(bank, geometry, cfg.oracle_iters, seed).map_err(
                        |e| match e {
                            HarnessError::Core(c) => HarnessError::in_layer(name, c),
                            other => other,
                        },
                    )?,
                )
            } else {
                None
            };
            (estimate, oracle)
        }
        LayerPayload::Pointwise(m) | LayerPayload::Dense(m) => {
            let oracle = if cfg.oracle_iters > 0 {
                Some(exact_norm_svd(&connectivity_dense(m)).map_err(wrap)?.value)
            } else {
                None
            };
            let estimate = layer_norm_estimate(&mut record, &cfg.power).map_err(wrap)?;
            (estimate, oracle)
        }
    };
    let ratio = oracle.filter(|&o| o > 0.0).map(|o| estimate.value / o);
    Ok(ReportRow {
        layer: name.to_string(),
        kind: record.kind().tag().to_string(),
        method: estimate.method.tag().to_string(),
        value: estimate.value,
        upper_bound: estimate.is_upper_bound,
        stride: stride_label(&layer.entry),
        oracle,
        ratio,
    })
}

pub fn report_bundle(bundle: &KernelBundle, cfg: &ReportConfig) -> Result<Vec<ReportRow>> {
    bundle
        .layers
        .iter()
        .enumerate()
        .map(|(i, layer)| report_layer(layer, i, cfg))
        .collect()
}

/// (spatial extent, channels) of the unit-stride 3×3 depthwise layers of MobileNetV2 at 224×224 input.
pub const MOBILENET_V2_UNIT: [(usize, usize); 13] = [
    (112, 32),
    (56, 144),
    (28, 192),
    (28, 192),
    (14, 384),
    (14, 384),
    (14, 384),
    (14, 384),
    (14, 576),
    (14, 576),
    (7, 960),
    (7, 960),
    (7, 960),
];

/// (input extent, channels) of the stride-2 depthwise layers.
pub const MOBILENET_V2_STRIDED: [(usize, usize); 4] = [(112, 96), (56, 144), (28, 192), (14, 576)];

/// Depthwise layers with Gaussian 3×3 kernels at the given (extent, channels).
pub fn synthetic_depthwise_bundle(
    layout: &[(usize, usize)],
    stride: usize,
    seed: u64,
) -> Result<KernelBundle> {
    let layers = layout
        .iter()
        .enumerate()
        .map(|(i, &(n, c))| {
            let name = format!("dw{i:02}_{n}x{n}_c{c}");
            let bank = random_gaussian_filters(c, &[3, 3], rng::derive_seed(seed, i as u64, 0))?;
            let entry = LayerEntry {
                name: name.clone(),
                kind: LayerKindTag::Depthwise,
                channels_in: c,
                channels_out: c,
                kernel: vec![3, 3],
                spatial: vec![n, n],
                stride: vec![stride, stride],
                activation_lip: 1.0,
                blob: format!("{name}.f32"),
                bias: None,
                policy: None,
            };
            BundleLayer::new(entry, bank.to_flat().iter().map(|&x| x as f32).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelBundle { layers })
}
