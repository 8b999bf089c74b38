//! Offline normalization of a kernel bundle.
//!
//! Every layer is divided by its norm estimate and, when the manifest gives
//! a policy, multiplied by K (hard) or K·tanh(s) (soft). Biases and manifest
//! entries are carried through unchanged.

use std::path::Path;

use serde::Serialize;
use specnorm_core::normalizer::{layer_norm_estimate, scaling_multiplier, spectral_normalize};
use specnorm_core::PowerConfig;

use crate::bundle::{read_bundle, write_bundle, BundleLayer, KernelBundle};
use crate::error::{HarnessError, Result};
use crate::output::{fmt_f64, Tabular};

/// Offline runs can afford a much tighter residual than training steps.
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalizeRow {
    pub layer: String,
    pub kind: String,
    pub method: String,
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
    pub effective_bound: f64,
}

impl Tabular for NormalizeRow {
    fn header() -> &'static [&'static str] {
        &[
            "layer",
            "kind",
            "method",
            "value",
            "iterations",
            "residual",
            "effective_bound",
        ]
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.layer.clone(),
            self.kind.clone(),
            self.method.clone(),
            fmt_f64(self.value),
            self.iterations.to_string(),
            fmt_f64(self.residual),
            fmt_f64(self.effective_bound),
        ]
    }
}

/// Normalizes one layer. `value` in the returned row is the estimate before
/// normalization; `effective_bound` is |multiplier| · (estimate after
/// normalization) · Lip(activation), with multiplier 1 when no policy is set.
pub fn normalize_layer(
    layer: &BundleLayer,
    config: &PowerConfig,
) -> Result<(BundleLayer, NormalizeRow)> {
    let name = layer.name();
    let wrap = |e| HarnessError::in_layer(name, e);
    let record = layer.to_record()?;
    let (mut normalized, estimate) = spectral_normalize(record, config).map_err(wrap)?;
    let post = layer_norm_estimate(&mut normalized, config).map_err(wrap)?;
    let multiplier = normalized.policy.as_ref().map_or(1.0, scaling_multiplier);
    if multiplier != 1.0 {
        normalized.payload = normalized.payload.scaled(multiplier);
    }
    let row = NormalizeRow {
        layer: name.to_string(),
        kind: normalized.kind().tag().to_string(),
        method: estimate.method.tag().to_string(),
        value: estimate.value,
        iterations: estimate.iterations,
        residual: estimate.residual,
        effective_bound: multiplier.abs() * post.value * normalized.activation_lip,
    };
    Ok((layer.with_record_weights(&normalized), row))
}

pub fn normalize_bundle(
    bundle: &KernelBundle,
    config: &PowerConfig,
) -> Result<(KernelBundle, Vec<NormalizeRow>)> {
    let mut layers = Vec::with_capacity(bundle.layers.len());
    let mut rows = Vec::with_capacity(bundle.layers.len());
    for layer in &bundle.layers {
        let (out, row) = normalize_layer(layer, config)?;
        layers.push(out);
        rows.push(row);
    }
    Ok((KernelBundle { layers }, rows))
}

/// Reads `in_path`, normalizes, writes the result to `out_path`.
pub fn normalize_files(
    in_path: &Path,
    out_path: &Path,
    config: &PowerConfig,
) -> Result<Vec<NormalizeRow>> {
    let bundle = read_bundle(in_path)?;
    let (normalized, rows) = normalize_bundle(&bundle, config)?;
    write_bundle(&normalized, out_path)?;
    Ok(rows)
}
