//! Kernel bundles: a TOML manifest plus one raw little-endian f32 blob per
//! layer (and optionally one per bias), referenced by paths relative to the
//! manifest's directory.
//!
//! ```toml
//! format_version = 1
//!
//! [[layer]]
//! name = "block1.dw"
//! kind = "depthwise"          # depthwise | pointwise | dense
//! channels_in = 32
//! channels_out = 32
//! kernel = [3, 3]
//! spatial = [112, 112]
//! stride = [1, 1]
//! activation_lip = 1.0
//! blob = "block1.dw.f32"
//! bias = "block1.dw.bias.f32" # optional, carried through unchanged
//! policy = { kind = "soft", k = 5.0, s = 3.0 }  # optional
//! ```
//!
//! Blob element order: depthwise channel-major then row-major kernel
//! (C × k₁ × … × k_d); pointwise and dense row-major C_out × C_in.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use specnorm_core::normalizer::{LayerPayload, LayerRecord};
use specnorm_core::{ConnectivityMatrix, FeatureGeometry, FilterBank, ScalingPolicy};

use crate::error::{HarnessError, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKindTag {
    Depthwise,
    Pointwise,
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PolicyEntry {
    Hard { k: f64 },
    Soft { k: f64, s: f64 },
}

impl PolicyEntry {
    pub fn to_policy(self) -> specnorm_core::Result<ScalingPolicy> {
        match self {
            PolicyEntry::Hard { k } => ScalingPolicy::hard(k),
            PolicyEntry::Soft { k, s } => ScalingPolicy::soft(k, s),
        }
    }
}

fn default_lip() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub name: String,
    pub kind: LayerKindTag,
    pub channels_in: usize,
    pub channels_out: usize,
    #[serde(default)]
    pub kernel: Vec<usize>,
    #[serde(default)]
    pub spatial: Vec<usize>,
    #[serde(default)]
    pub stride: Vec<usize>,
    #[serde(default = "default_lip")]
    pub activation_lip: f64,
    pub blob: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<PolicyEntry>,
}

impl LayerEntry {
    /// Element count implied by the declared shape.
    pub fn declared_len(&self) -> usize {
        match self.kind {
            LayerKindTag::Depthwise => self.channels_in * self.kernel.iter().product::<usize>(),
            LayerKindTag::Pointwise | LayerKindTag::Dense => self.channels_in * self.channels_out,
        }
    }

    /// Stride with unit default when omitted.
    pub fn stride_or_unit(&self) -> Vec<usize> {
        if self.stride.is_empty() {
            vec![1; self.spatial.len()]
        } else {
            self.stride.clone()
        }
    }

    pub fn is_strided(&self) -> bool {
        self.stride.iter().any(|&s| s > 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    #[serde(default, rename = "layer")]
    pub layers: Vec<LayerEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleLayer {
    pub entry: LayerEntry,
    pub weights: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl BundleLayer {
    pub fn new(entry: LayerEntry, weights: Vec<f32>) -> Result<Self> {
        let layer = Self {
            entry,
            weights,
            bias: None,
        };
        layer.check_len()?;
        Ok(layer)
    }

    fn check_len(&self) -> Result<()> {
        let declared = self.entry.declared_len();
        if declared != self.weights.len() {
            return Err(HarnessError::ShapeMismatch {
                layer: self.entry.name.clone(),
                declared,
                found: self.weights.len(),
            });
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.entry.name
    }

    /// Converts to a core layer record (f32 → f64).
    pub fn to_record(&self) -> Result<LayerRecord> {
        let e = &self.entry;
        let data: Vec<f64> = self.weights.iter().map(|&x| f64::from(x)).collect();
        let wrap = |err| HarnessError::in_layer(&e.name, err);
        let payload = match e.kind {
            LayerKindTag::Depthwise => {
                if e.channels_in != e.channels_out {
                    return Err(
                        self.parse_error("depthwise layers need channels_in == channels_out")
                    );
                }
                let bank = FilterBank::from_flat(e.channels_in, &e.kernel, data).map_err(wrap)?;
                let geometry = FeatureGeometry::zero_padded(&e.spatial, &bank.half_widths())
                    .and_then(|g| g.with_stride(&e.stride_or_unit()))
                    .map_err(wrap)?;
                LayerPayload::Depthwise { bank, geometry }
            }
            LayerKindTag::Pointwise => LayerPayload::Pointwise(
                ConnectivityMatrix::new(e.channels_out, e.channels_in, data).map_err(wrap)?,
            ),
            LayerKindTag::Dense => LayerPayload::Dense(
                ConnectivityMatrix::new(e.channels_out, e.channels_in, data).map_err(wrap)?,
            ),
        };
        let mut record = LayerRecord::new(payload)
            .with_activation_lip(e.activation_lip)
            .map_err(wrap)?;
        if let Some(policy) = e.policy {
            record = record.with_policy(policy.to_policy().map_err(wrap)?);
        }
        Ok(record)
    }

    /// Replaces the weights with `record`'s payload, rounded to f32.
    pub fn with_record_weights(&self, record: &LayerRecord) -> Self {
        Self {
            entry: self.entry.clone(),
            weights: record.payload.weights().iter().map(|&x| x as f32).collect(),
            bias: self.bias.clone(),
        }
    }

    fn parse_error(&self, message: &str) -> HarnessError {
        HarnessError::BundleParse {
            path: PathBuf::from(&self.entry.blob),
            message: format!("layer {}: {message}", self.entry.name),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelBundle {
    pub layers: Vec<BundleLayer>,
}

impl KernelBundle {
    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: FORMAT_VERSION,
            layers: self.layers.iter().map(|l| l.entry.clone()).collect(),
        }
    }
}

pub fn decode_f32_le(bytes: &[u8]) -> Option<Vec<f32>> {
    if !bytes.len().is_multiple_of(4) {
        return None;
    }
    Some(
        bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    )
}

pub fn encode_f32_le(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn read_blob(dir: &Path, rel: &str) -> Result<Vec<f32>> {
    let path = dir.join(rel);
    let bytes = fs::read(&path).map_err(|e| HarnessError::io(&path, e))?;
    decode_f32_le(&bytes).ok_or_else(|| HarnessError::BundleParse {
        path,
        message: format!("blob length {} is not a multiple of 4", bytes.len()),
    })
}

/// Reads a manifest and all blobs it references.
pub fn read_bundle(manifest_path: &Path) -> Result<KernelBundle> {
    let text = fs::read_to_string(manifest_path).map_err(|e| HarnessError::io(manifest_path, e))?;
    let manifest: Manifest = toml::from_str(&text).map_err(|e| HarnessError::BundleParse {
        path: manifest_path.to_path_buf(),
        message: e.to_string(),
    })?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(HarnessError::BundleParse {
            path: manifest_path.to_path_buf(),
            message: format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                manifest.format_version
            ),
        });
    }
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let layers = manifest
        .layers
        .into_iter()
        .map(|entry| {
            let weights = read_blob(dir, &entry.blob)?;
            let bias = entry
                .bias
                .as_deref()
                .map(|b| read_blob(dir, b))
                .transpose()?;
            let mut layer = BundleLayer::new(entry, weights)?;
            layer.bias = bias;
            Ok(layer)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelBundle { layers })
}

/// Writes the manifest to `manifest_path` and blobs next to it.
pub fn write_bundle(bundle: &KernelBundle, manifest_path: &Path) -> Result<()> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    if !dir.as_os_str().is_empty() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    for layer in &bundle.layers {
        layer.check_len()?;
        let path = dir.join(&layer.entry.blob);
        fs::write(&path, encode_f32_le(&layer.weights)).map_err(|e| HarnessError::io(&path, e))?;
        if let (Some(rel), Some(bias)) = (&layer.entry.bias, &layer.bias) {
            let path = dir.join(rel);
            fs::write(&path, encode_f32_le(bias)).map_err(|e| HarnessError::io(&path, e))?;
        }
    }
    let text =
        toml::to_string(&bundle.manifest()).map_err(|e| HarnessError::Output(e.to_string()))?;
    fs::write(manifest_path, text).map_err(|e| HarnessError::io(manifest_path, e))
}
