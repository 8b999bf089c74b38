//! Spectral normalization, hard/soft scaling and network-level bounds.

use crate::dft_norm::{depthwise_spectral_bound, stride_adjusted_estimate};
use crate::error::{Result, SpecNormError};
use crate::model::{
    ConnectivityMatrix, FeatureGeometry, FilterBank, NormEstimate, PaddingMode, ScalingPolicy,
};
use crate::power::{connectivity_spectral_norm, PowerConfig, WarmStartState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Depthwise,
    Pointwise,
    Dense,
}

impl LayerKind {
    pub fn tag(self) -> &'static str {
        match self {
            LayerKind::Depthwise => "depthwise",
            LayerKind::Pointwise => "pointwise",
            LayerKind::Dense => "dense",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerPayload {
    Depthwise {
        bank: FilterBank,
        geometry: FeatureGeometry,
    },
    Pointwise(ConnectivityMatrix),
    Dense(ConnectivityMatrix),
}

impl LayerPayload {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerPayload::Depthwise { .. } => LayerKind::Depthwise,
            LayerPayload::Pointwise(_) => LayerKind::Pointwise,
            LayerPayload::Dense(_) => LayerKind::Dense,
        }
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        match self {
            LayerPayload::Depthwise { bank, geometry } => LayerPayload::Depthwise {
                bank: bank.scaled(alpha),
                geometry: geometry.clone(),
            },
            LayerPayload::Pointwise(m) => LayerPayload::Pointwise(m.scaled(alpha)),
            LayerPayload::Dense(m) => LayerPayload::Dense(m.scaled(alpha)),
        }
    }

    /// Weights in the global vectorization order.
    pub fn weights(&self) -> Vec<f64> {
        match self {
            LayerPayload::Depthwise { bank, .. } => bank.to_flat(),
            LayerPayload::Pointwise(m) | LayerPayload::Dense(m) => m.entries().to_vec(),
        }
    }
}

/// One linear layer plus the state its normalization needs.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerRecord {
    pub payload: LayerPayload,
    pub warm: Option<WarmStartState>,
    pub policy: Option<ScalingPolicy>,
    pub activation_lip: f64,
}

impl LayerRecord {
    pub fn new(payload: LayerPayload) -> Self {
        Self {
            payload,
            warm: None,
            policy: None,
            activation_lip: 1.0,
        }
    }

    pub fn depthwise(bank: FilterBank, geometry: FeatureGeometry) -> Result<Self> {
        if geometry.mode() != PaddingMode::Zero {
            return Err(SpecNormError::InvalidGeometry(
                "depthwise layers use zero padding".into(),
            ));
        }
        geometry.check_bank(&bank)?;
        Ok(Self::new(LayerPayload::Depthwise { bank, geometry }))
    }

    pub fn pointwise(theta: ConnectivityMatrix) -> Self {
        Self::new(LayerPayload::Pointwise(theta))
    }

    pub fn dense(weights: ConnectivityMatrix) -> Self {
        Self::new(LayerPayload::Dense(weights))
    }

    pub fn with_policy(mut self, policy: ScalingPolicy) -> Self {
        self.policy = Some(policy);
        self
    }

    pub fn with_activation_lip(mut self, lip: f64) -> Result<Self> {
        if !(lip >= 0.0 && lip.is_finite()) {
            return Err(SpecNormError::InvalidConfig(format!(
                "activation Lipschitz constant must be non-negative, got {lip}"
            )));
        }
        self.activation_lip = lip;
        Ok(self)
    }

    pub fn kind(&self) -> LayerKind {
        self.payload.kind()
    }
}

/// Current spectral-norm estimate of a layer's linear part.
///
/// Depthwise layers use the guaranteed DFT bound (valid for any stride);
/// pointwise and dense layers use the power method on their matrix, starting
/// from and updating the layer's warm state.
pub fn layer_norm_estimate(layer: &mut LayerRecord, config: &PowerConfig) -> Result<NormEstimate> {
    match &layer.payload {
        LayerPayload::Depthwise { bank, geometry } => {
            let unit = FeatureGeometry::zero_padded(geometry.spatial(), geometry.pad())?;
            let bound = depthwise_spectral_bound(bank, &unit)?;
            Ok(stride_adjusted_estimate(bound, geometry.stride(), false))
        }
        LayerPayload::Pointwise(m) | LayerPayload::Dense(m) => {
            match connectivity_spectral_norm(m, config, layer.warm.as_ref()) {
                Ok((est, state)) => {
                    layer.warm = Some(state);
                    Ok(est)
                }
                Err(SpecNormError::ZeroVector) => Err(SpecNormError::ZeroNormKernel),
                Err(e) => Err(e),
            }
        }
    }
}

/// Divides the payload by its spectral-norm estimate. Biases are not part of
/// the record and stay untouched.
pub fn spectral_normalize(
    mut layer: LayerRecord,
    config: &PowerConfig,
) -> Result<(LayerRecord, NormEstimate)> {
    let estimate = layer_norm_estimate(&mut layer, config)?;
    if !(estimate.value > 0.0) || !(1.0 / estimate.value).is_finite() {
        return Err(SpecNormError::ZeroNormKernel);
    }
    layer.payload = layer.payload.scaled(1.0 / estimate.value);
    Ok((layer, estimate))
}

/// K for hard scaling, K·tanh(s) for soft scaling.
///
/// tanh rounds to ±1 for |s| beyond about 19; the soft multiplier is then
/// pulled to the nearest float strictly inside (−K, K).
pub fn scaling_multiplier(policy: &ScalingPolicy) -> f64 {
    match *policy {
        ScalingPolicy::Hard { k } => k,
        ScalingPolicy::Soft { k, s } => {
            let m = k * s.tanh();
            if m.abs() < k {
                m
            } else {
                k.next_down().copysign(m)
            }
        }
    }
}

/// Normalizes, then rescales by the layer's policy multiplier.
///
/// Returns the rescaled layer and its effective Lipschitz bound
/// |multiplier| · (post-normalization estimate) · Lip(activation).
pub fn enforce_lipschitz(layer: LayerRecord, config: &PowerConfig) -> Result<(LayerRecord, f64)> {
    let policy = layer.policy.ok_or(SpecNormError::MissingPolicy)?;
    let (mut normalized, _) = spectral_normalize(layer, config)?;
    let post = layer_norm_estimate(&mut normalized, config)?;
    let multiplier = scaling_multiplier(&policy);
    normalized.payload = normalized.payload.scaled(multiplier);
    let bound = multiplier.abs() * post.value * normalized.activation_lip;
    Ok((normalized, bound))
}

/// Chain rule: the composition's Lipschitz constant is at most the product.
pub fn chain_lipschitz_bound(bounds: &[f64]) -> f64 {
    bounds.iter().product()
}

/// Natural log of [`chain_lipschitz_bound`], summed in log space.
pub fn chain_lipschitz_log_bound(bounds: &[f64]) -> f64 {
    bounds.iter().map(|b| b.ln()).sum()
}
