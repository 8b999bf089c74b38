use proptest::prelude::*;
use specnorm_core::normalizer::{
    enforce_lipschitz, layer_norm_estimate, scaling_multiplier, spectral_normalize, LayerRecord,
};
use specnorm_core::oracle::{connectivity_dense, depthwise_oracle_norm, exact_norm_svd};
use specnorm_core::{
    random_gaussian_filters, ConnectivityMatrix, FeatureGeometry, PowerConfig, ScalingPolicy,
};

fn depthwise(channels: usize, n: usize, seed: u64) -> LayerRecord {
    let bank = random_gaussian_filters(channels, &[3, 3], seed).unwrap();
    LayerRecord::depthwise(
        bank,
        FeatureGeometry::zero_padded(&[n, n], &[1, 1]).unwrap(),
    )
    .unwrap()
}

#[test]
fn normalized_depthwise_layer_is_safe() {
    let (out, est) = spectral_normalize(depthwise(4, 16, 5), &PowerConfig::oracle()).unwrap();
    assert!(est.is_upper_bound);
    let mut again = out.clone();
    let recomputed = layer_norm_estimate(&mut again, &PowerConfig::oracle())
        .unwrap()
        .value;
    assert!((recomputed - 1.0).abs() <= 1e-6);
    if let specnorm_core::normalizer::LayerPayload::Depthwise { bank, geometry } = &out.payload {
        let oracle = depthwise_oracle_norm(bank, geometry).unwrap().value;
        assert!(oracle <= 1.0 + 1e-9);
    } else {
        unreachable!();
    }
}

#[test]
fn strided_depthwise_normalization_uses_guaranteed_bound() {
    let bank = random_gaussian_filters(2, &[3, 3], 8).unwrap();
    let g = FeatureGeometry::zero_padded(&[10, 10], &[1, 1])
        .unwrap()
        .with_stride(&[2, 2])
        .unwrap();
    let layer = LayerRecord::depthwise(bank.clone(), g.clone()).unwrap();
    let (out, est) = spectral_normalize(layer, &PowerConfig::oracle()).unwrap();
    assert!(est.is_upper_bound);
    if let specnorm_core::normalizer::LayerPayload::Depthwise { bank, geometry } = &out.payload {
        assert!(depthwise_oracle_norm(bank, geometry).unwrap().value <= 1.0 + 1e-9);
    }
}

#[test]
fn hard_scaled_dense_layer_hits_target_norm() {
    let layer = LayerRecord::dense(ConnectivityMatrix::random_gaussian(8, 8, 4).unwrap())
        .with_policy(ScalingPolicy::hard(5.0).unwrap());
    let cfg = PowerConfig::new(1e-8, 100_000, 0).unwrap();
    let (out, bound) = enforce_lipschitz(layer, &cfg).unwrap();
    let m = match &out.payload {
        specnorm_core::normalizer::LayerPayload::Dense(m) => m.clone(),
        _ => unreachable!(),
    };
    let sigma = exact_norm_svd(&connectivity_dense(&m)).unwrap().value;
    assert!((sigma - 5.0).abs() <= 1e-4);
    assert!((bound - 5.0).abs() <= 1e-4);
}

#[test]
fn idempotence_for_exact_methods() {
    let cfg = PowerConfig::oracle();
    let (once, _) = spectral_normalize(depthwise(3, 9, 17), &cfg).unwrap();
    let (twice, _) = spectral_normalize(once.clone(), &cfg).unwrap();
    for (a, b) in once.payload.weights().iter().zip(twice.payload.weights()) {
        assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-12));
    }
}

#[test]
fn idempotence_for_power_method() {
    let cfg = PowerConfig::new(1e-8, 100_000, 3).unwrap();
    let layer = LayerRecord::pointwise(ConnectivityMatrix::random_gaussian(6, 9, 2).unwrap());
    let (once, _) = spectral_normalize(layer, &cfg).unwrap();
    let (twice, est) = spectral_normalize(once.clone(), &cfg).unwrap();
    assert!((est.value - 1.0).abs() <= 1e-6);
    for (a, b) in once.payload.weights().iter().zip(twice.payload.weights()) {
        assert!((a - b).abs() <= 1e-6 * a.abs().max(1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn soft_multiplier_strictly_below_k(k in 1e-3f64..1e3, s in -50.0f64..50.0) {
        let m = scaling_multiplier(&ScalingPolicy::soft(k, s).unwrap());
        prop_assert!(m.abs() < k);
    }

    #[test]
    fn positive_homogeneity_depthwise(seed in 0u64..1000, alpha in 0.01f64..100.0) {
        let policy = ScalingPolicy::soft(3.0, 1.5).unwrap();
        let cfg = PowerConfig::oracle();
        let base = depthwise(2, 8, seed).with_policy(policy);
        let scaled = LayerRecord { payload: base.payload.scaled(alpha), ..base.clone() };
        let (a, ba) = enforce_lipschitz(base, &cfg).unwrap();
        let (b, bb) = enforce_lipschitz(scaled, &cfg).unwrap();
        for (x, y) in a.payload.weights().iter().zip(b.payload.weights()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-12));
        }
        prop_assert!((ba - bb).abs() <= 1e-9 * ba);
    }

    #[test]
    fn positive_homogeneity_pointwise(seed in 0u64..1000, alpha in 0.01f64..100.0) {
        // ε is absolute; 1e-8 stays above the rounding floor of σ² up to ~1e5.
        let cfg = PowerConfig::new(1e-8, 100_000, 1).unwrap();
        let base = LayerRecord::pointwise(ConnectivityMatrix::random_gaussian(5, 4, seed).unwrap())
            .with_policy(ScalingPolicy::hard(2.0).unwrap());
        let scaled = LayerRecord { payload: base.payload.scaled(alpha), ..base.clone() };
        let (a, _) = enforce_lipschitz(base, &cfg).unwrap();
        let (b, _) = enforce_lipschitz(scaled, &cfg).unwrap();
        for (x, y) in a.payload.weights().iter().zip(b.payload.weights()) {
            prop_assert!((x - y).abs() <= 1e-9 * x.abs().max(1e-6));
        }
    }
}
