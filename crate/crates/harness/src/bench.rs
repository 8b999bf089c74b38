//! Per-layer wall-clock timing of the norm estimators.
//!
//! Depthwise layers time `dft-bound`, `power-cold` and `power-warm` (power
//! method on the full block-diagonal operator). Pointwise layers time
//! `connectivity-power` against `power-cold`/`power-warm` on the full
//! pointwise operator. Dense layers only have `connectivity-power`.
//! Warm runs start from the state the cold run ended in.

use std::time::Instant;

use serde::Serialize;
use specnorm_core::dft_norm::depthwise_spectral_bound;
use specnorm_core::normalizer::LayerPayload;
use specnorm_core::oracle::DepthwiseOperator;
use specnorm_core::power::{power_iterate, PointwiseOperator};
use specnorm_core::{
    random_gaussian_filters, ConnectivityMatrix, FeatureGeometry, FilterBank, LinearOperator,
    NormEstimate, PowerConfig, SpecNormError, WarmStartState,
};

use crate::bundle::KernelBundle;
use crate::error::{HarnessError, Result};
use crate::output::Tabular;

pub const MIN_REPETITIONS: usize = 3;

#[derive(Debug, Clone)]
pub enum BenchTarget {
    Depthwise {
        bank: FilterBank,
        geometry: FeatureGeometry,
    },
    Pointwise {
        theta: ConnectivityMatrix,
        spatial: Vec<usize>,
    },
    Dense {
        weights: ConnectivityMatrix,
    },
}

#[derive(Debug, Clone)]
pub struct BenchLayer {
    pub name: String,
    pub target: BenchTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub layer: String,
    pub method: String,
    pub median_ns: u128,
    pub iterations: usize,
}

impl Tabular for BenchRow {
    fn header() -> &'static [&'static str] {
        &["layer", "method", "median_ns", "iterations"]
    }

    fn record(&self) -> Vec<String> {
        vec![
            self.layer.clone(),
            self.method.clone(),
            self.median_ns.to_string(),
            self.iterations.to_string(),
        ]
    }
}

/// 3×3 depthwise, 32 channels, 64×64; pointwise C_in=128 → C_out=64 at 56×56.
pub fn synthetic_layers(seed: u64) -> Result<Vec<BenchLayer>> {
    let bank = random_gaussian_filters(32, &[3, 3], seed)?;
    let geometry = FeatureGeometry::zero_padded(&[64, 64], &[1, 1])?;
    let theta = ConnectivityMatrix::random_gaussian(64, 128, seed)?;
    Ok(vec![
        BenchLayer {
            name: "dw3x3_c32_64x64".into(),
            target: BenchTarget::Depthwise { bank, geometry },
        },
        BenchLayer {
            name: "pw128to64_56x56".into(),
            target: BenchTarget::Pointwise {
                theta,
                spatial: vec![56, 56],
            },
        },
    ])
}

pub fn layers_from_bundle(bundle: &KernelBundle) -> Result<Vec<BenchLayer>> {
    bundle
        .layers
        .iter()
        .map(|layer| {
            let record = layer.to_record()?;
            let target = match record.payload {
                LayerPayload::Depthwise { bank, geometry } => {
                    BenchTarget::Depthwise { bank, geometry }
                }
                LayerPayload::Pointwise(theta) => BenchTarget::Pointwise {
                    theta,
                    spatial: layer.entry.spatial.clone(),
                },
                LayerPayload::Dense(weights) => BenchTarget::Dense { weights },
            };
            Ok(BenchLayer {
                name: layer.name().to_string(),
                target,
            })
        })
        .collect()
}

/// Hitting the iteration cap still yields a timing; the partial estimate is kept.
fn power_tolerant<A: LinearOperator + ?Sized>(
    op: &A,
    config: &PowerConfig,
    warm: Option<&WarmStartState>,
) -> Result<(NormEstimate, WarmStartState)> {
    match power_iterate(op, config, warm) {
        Err(SpecNormError::NonConvergence { estimate, state }) => Ok((estimate, state)),
        other => Ok(other?),
    }
}

fn median(mut v: Vec<u128>) -> u128 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

/// Times `f` `repetitions` times; returns the median and the iteration count
/// of the last call.
fn time<F: FnMut() -> Result<usize>>(repetitions: usize, mut f: F) -> Result<(u128, usize)> {
    let mut samples = Vec::with_capacity(repetitions);
    let mut iterations = 0;
    for _ in 0..repetitions {
        let start = Instant::now();
        iterations = f()?;
        samples.push(start.elapsed().as_nanos());
    }
    Ok((median(samples), iterations))
}

fn row(layer: &str, method: &str, (median_ns, iterations): (u128, usize)) -> BenchRow {
    BenchRow {
        layer: layer.to_string(),
        method: method.to_string(),
        median_ns,
        iterations,
    }
}

fn bench_operator<A: LinearOperator + ?Sized>(
    name: &str,
    op: &A,
    config: &PowerConfig,
    repetitions: usize,
    rows: &mut Vec<BenchRow>,
) -> Result<()> {
    let mut last = None;
    let cold = time(repetitions, || {
        let (est, state) = power_tolerant(op, config, None)?;
        last = Some(state);
        Ok(est.iterations)
    })?;
    rows.push(row(name, "power-cold", cold));
    let state = last.expect("at least one repetition");
    let warm = time(repetitions, || {
        Ok(power_tolerant(op, config, Some(&state))?.0.iterations)
    })?;
    rows.push(row(name, "power-warm", warm));
    Ok(())
}

pub fn bench_layer(
    layer: &BenchLayer,
    config: &PowerConfig,
    repetitions: usize,
) -> Result<Vec<BenchRow>> {
    if repetitions < MIN_REPETITIONS {
        return Err(HarnessError::Usage(format!(
            "bench needs at least {MIN_REPETITIONS} repetitions, got {repetitions}"
        )));
    }
    let name = layer.name.as_str();
    let wrap = |e| HarnessError::in_layer(name, e);
    let mut rows = Vec::new();
    match &layer.target {
        BenchTarget::Depthwise { bank, geometry } => {
            let unit =
                FeatureGeometry::zero_padded(geometry.spatial(), geometry.pad()).map_err(wrap)?;
            let dft = time(repetitions, || {
                depthwise_spectral_bound(bank, &unit).map_err(wrap)?;
                Ok(0)
            })?;
            rows.push(row(name, "dft-bound", dft));
            let op = DepthwiseOperator::new(bank, geometry).map_err(wrap)?;
            bench_operator(name, &op, config, repetitions, &mut rows)?;
        }
        BenchTarget::Pointwise { theta, spatial } => {
            let conn = time(repetitions, || {
                Ok(power_tolerant(theta, config, None)?.0.iterations)
            })?;
            rows.push(row(name, "connectivity-power", conn));
            let op = PointwiseOperator::new(theta, spatial).map_err(wrap)?;
            bench_operator(name, &op, config, repetitions, &mut rows)?;
        }
        BenchTarget::Dense { weights } => {
            let conn = time(repetitions, || {
                Ok(power_tolerant(weights, config, None)?.0.iterations)
            })?;
            rows.push(row(name, "connectivity-power", conn));
        }
    }
    Ok(rows)
}

pub fn run_bench(
    layers: &[BenchLayer],
    config: &PowerConfig,
    repetitions: usize,
) -> Result<Vec<BenchRow>> {
    if repetitions < MIN_REPETITIONS {
        return Err(HarnessError::Usage(format!(
            "bench needs at least {MIN_REPETITIONS} repetitions, got {repetitions}"
        )));
    }
    let mut rows = Vec::new();
    for layer in layers {
        rows.extend(bench_layer(layer, config, repetitions)?);
    }
    Ok(rows)
}
