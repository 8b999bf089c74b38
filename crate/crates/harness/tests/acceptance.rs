//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails. Tolerances and case counts are fixed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use specnorm_core::dft_norm::{circulant_spectral_norm, depthwise_spectral_bound, dft};
use specnorm_core::normalizer::{layer_norm_estimate, spectral_normalize, LayerRecord};
use specnorm_core::oracle::{
    circulant_cross_correlate, connectivity_dense, depthwise_oracle_norm, exact_norm_svd,
    materialize_circulant, materialize_pointwise, materialize_zero_padded,
};
use specnorm_core::power::connectivity_spectral_norm;
use specnorm_core::tensor::indices;
use specnorm_core::{
    random_gaussian_filters, rng, ConnectivityMatrix, FeatureGeometry, PowerConfig, Tensor,
};
use specnorm_harness::bench::{bench_layer, synthetic_layers};
use specnorm_harness::study::{run_study, StudyConfig};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

/// Uniform pick from lo..=hi, keyed by (case, slot).
fn pick(seed: u64, case: usize, slot: u64, lo: usize, hi: usize) -> usize {
    lo + (rng::derive_seed(seed, case as u64, slot) % (hi - lo + 1) as u64) as usize
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn circulant_exactness() -> Outcome {
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let d = pick(1, case, 0, 1, 2);
        let k = [1, 3, 5][pick(1, case, 1, 0, 2)];
        let spatial: Vec<usize> = (0..d).map(|a| pick(1, case, 2 + a as u64, 6, 12)).collect();
        let filter = random_gaussian_filters(1, &vec![k; d], rng::derive_seed(1, case as u64, 9))
            .map_err(|e| e.to_string())?
            .filter(0)
            .clone();
        let geometry = FeatureGeometry::circulant(&spatial).map_err(|e| e.to_string())?;
        let exact = circulant_spectral_norm(&filter, &geometry)
            .map_err(|e| e.to_string())?
            .value;
        let dense = materialize_circulant(&filter, &spatial).map_err(|e| e.to_string())?;
        let oracle = exact_norm_svd(&dense).map_err(|e| e.to_string())?.value;
        worst = worst.max(rel(exact, oracle));
    }
    check(
        worst <= 1e-6,
        format!("200 filters, max rel err {worst:.3e} (tol 1e-6)"),
    )
}

fn zero_padded_dominance() -> Outcome {
    let mut violations = 0;
    let mut min_ratio = f64::INFINITY;
    for case in 0..500 {
        let c = pick(2, case, 0, 1, 4);
        let n = pick(2, case, 1, 3, 16);
        let bank = random_gaussian_filters(c, &[3, 3], rng::derive_seed(2, case as u64, 9))
            .map_err(|e| e.to_string())?;
        let geometry = FeatureGeometry::zero_padded(&[n, n], &[1, 1]).map_err(|e| e.to_string())?;
        let bound = depthwise_spectral_bound(&bank, &geometry)
            .map_err(|e| e.to_string())?
            .value;
        let oracle = depthwise_oracle_norm(&bank, &geometry)
            .map_err(|e| e.to_string())?
            .value;
        if bound < oracle - 1e-9 * bound {
            violations += 1;
        }
        min_ratio = min_ratio.min(bound / oracle);
    }
    check(
        violations == 0,
        format!("500 banks, {violations} violations, min bound/oracle {min_ratio:.6}"),
    )
}

fn overestimation_study() -> Outcome {
    let cfg = StudyConfig {
        sizes: vec![7, 8, 16, 32, 64, 128],
        trials: 200,
        seed: 1,
        kernel: vec![3, 3],
        oracle_iters: 30,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| e.to_string())?;
    let rows = pool
        .install(|| run_study(&cfg))
        .map_err(|e| e.to_string())?;
    let medians: Vec<f64> = rows.iter().map(|r| r.median).collect();
    let at7 = medians[0];
    let at128 = medians[5];
    let monotone = medians.windows(2).all(|w| w[1] <= w[0]);
    let ok7 = (1.12..=1.22).contains(&at7);
    let ok128 = (1.01..=1.04).contains(&at128);
    let listing = medians
        .iter()
        .map(|m| format!("{m:.4}"))
        .collect::<Vec<_>>()
        .join(" ");
    check(
        ok7 && ok128 && monotone,
        format!(
            "medians [{listing}]; 7x7 {at7:.4} in [1.12,1.22]: {ok7}; 128x128 {at128:.4} in [1.01,1.04]: {ok128}; non-increasing: {monotone}"
        ),
    )
}

fn connectivity_equivalence() -> Outcome {
    let mut worst_svd: f64 = 0.0;
    let mut worst_power: f64 = 0.0;
    for case in 0..100 {
        let c_in = pick(4, case, 0, 1, 8);
        let c_out = pick(4, case, 1, 1, 8);
        let spatial = [pick(4, case, 2, 1, 6), pick(4, case, 3, 1, 6)];
        let theta =
            ConnectivityMatrix::random_gaussian(c_out, c_in, rng::derive_seed(4, case as u64, 9))
                .map_err(|e| e.to_string())?;
        let truth = exact_norm_svd(&connectivity_dense(&theta))
            .map_err(|e| e.to_string())?
            .value;
        let full = materialize_pointwise(&theta, &spatial).map_err(|e| e.to_string())?;
        let full_norm = exact_norm_svd(&full).map_err(|e| e.to_string())?.value;
        let cfg = PowerConfig::new(1e-8, 100_000, case as u64).map_err(|e| e.to_string())?;
        let (power, _) =
            connectivity_spectral_norm(&theta, &cfg, None).map_err(|e| e.to_string())?;
        worst_svd = worst_svd.max(rel(full_norm, truth));
        worst_power = worst_power.max(rel(power.value, truth));
    }
    check(
        worst_svd <= 1e-6 && worst_power <= 1e-5,
        format!("100 cases, operator-vs-Θ rel {worst_svd:.3e} (tol 1e-6), power rel {worst_power:.3e} (tol 1e-5)"),
    )
}

fn warm_start() -> Outcome {
    let mut wins = 0;
    for trial in 0..100u64 {
        let cfg = PowerConfig::new(1e-6, 100_000, trial).map_err(|e| e.to_string())?;
        let theta = ConnectivityMatrix::random_gaussian(16, 24, rng::derive_seed(5, trial, 0))
            .map_err(|e| e.to_string())?;
        let (_, state) =
            connectivity_spectral_norm(&theta, &cfg, None).map_err(|e| e.to_string())?;
        let noise = rng::gaussian_vec(&mut rng::stream(rng::derive_seed(5, trial, 1), 0), 16 * 24);
        let noise_norm = noise.iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = 1e-2 * theta.frobenius_norm() / noise_norm;
        let perturbed: Vec<f64> = theta
            .entries()
            .iter()
            .zip(&noise)
            .map(|(t, n)| t + scale * n)
            .collect();
        let perturbed = ConnectivityMatrix::new(16, 24, perturbed).map_err(|e| e.to_string())?;
        let (cold, _) =
            connectivity_spectral_norm(&perturbed, &cfg, None).map_err(|e| e.to_string())?;
        let (warm, _) = connectivity_spectral_norm(&perturbed, &cfg, Some(&state))
            .map_err(|e| e.to_string())?;
        if warm.iterations <= cold.iterations {
            wins += 1;
        }
    }
    check(
        wins >= 90,
        format!("warm <= cold iterations in {wins}/100 trials (need >= 90)"),
    )
}

fn normalization_safety() -> Outcome {
    let cfg = PowerConfig::new(1e-6, 100_000, 6).map_err(|e| e.to_string())?;
    let mut failures = Vec::new();
    let (mut max_est, mut max_dw_oracle) = (0.0_f64, 0.0_f64);
    let (mut min_mat, mut max_mat) = (f64::INFINITY, 0.0_f64);
    for case in 0..200 {
        let seed = rng::derive_seed(6, case as u64, 0);
        let layer = match case % 3 {
            0 => {
                let c = pick(6, case, 1, 1, 3);
                let n = pick(6, case, 2, 3, 10);
                let stride = pick(6, case, 3, 1, 2);
                let bank = random_gaussian_filters(c, &[3, 3], seed).map_err(|e| e.to_string())?;
                let geometry = FeatureGeometry::zero_padded(&[n, n], &[1, 1])
                    .and_then(|g| g.with_stride(&[stride, stride]))
                    .map_err(|e| e.to_string())?;
                LayerRecord::depthwise(bank, geometry).map_err(|e| e.to_string())?
            }
            1 => LayerRecord::pointwise(
                ConnectivityMatrix::random_gaussian(
                    pick(6, case, 1, 1, 12),
                    pick(6, case, 2, 1, 12),
                    seed,
                )
                .map_err(|e| e.to_string())?,
            ),
            _ => LayerRecord::dense(
                ConnectivityMatrix::random_gaussian(
                    pick(6, case, 1, 1, 12),
                    pick(6, case, 2, 1, 12),
                    seed,
                )
                .map_err(|e| e.to_string())?,
            ),
        };
        let (mut normalized, _) = spectral_normalize(layer, &cfg).map_err(|e| e.to_string())?;
        normalized.warm = None;
        let estimate = layer_norm_estimate(&mut normalized, &cfg)
            .map_err(|e| e.to_string())?
            .value;
        max_est = max_est.max(estimate);
        if estimate > 1.0 + 1e-6 {
            failures.push(format!("case {case}: estimate {estimate}"));
        }
        match &normalized.payload {
            specnorm_core::normalizer::LayerPayload::Depthwise { bank, geometry } => {
                let oracle = depthwise_oracle_norm(bank, geometry)
                    .map_err(|e| e.to_string())?
                    .value;
                max_dw_oracle = max_dw_oracle.max(oracle);
                if oracle > 1.0 + 1e-9 {
                    failures.push(format!("case {case}: depthwise oracle {oracle}"));
                }
            }
            specnorm_core::normalizer::LayerPayload::Pointwise(m)
            | specnorm_core::normalizer::LayerPayload::Dense(m) => {
                let oracle = exact_norm_svd(&connectivity_dense(m))
                    .map_err(|e| e.to_string())?
                    .value;
                min_mat = min_mat.min(oracle);
                max_mat = max_mat.max(oracle);
                if (oracle - 1.0).abs() > 1e-3 {
                    failures.push(format!("case {case}: matrix oracle {oracle}"));
                }
            }
        }
    }
    check(
        failures.is_empty(),
        format!(
            "200 layers, max recomputed estimate {max_est:.9} (<= 1+1e-6), max depthwise oracle {max_dw_oracle:.12} (<= 1+1e-9), matrix oracle in [{min_mat:.6}, {max_mat:.6}] (1±1e-3){}",
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join(", ")) }
        ),
    )
}

fn stride_heuristic() -> Outcome {
    let mut ratios = Vec::new();
    let mut violations = 0;
    for case in 0..100u64 {
        let bank = random_gaussian_filters(1, &[3, 3], rng::derive_seed(7, case, 0))
            .map_err(|e| e.to_string())?;
        let unit = FeatureGeometry::zero_padded(&[16, 16], &[1, 1]).map_err(|e| e.to_string())?;
        let bound = depthwise_spectral_bound(&bank, &unit)
            .map_err(|e| e.to_string())?
            .value;
        let strided =
            materialize_zero_padded(bank.filter(0), &unit, &[2, 2]).map_err(|e| e.to_string())?;
        let oracle = exact_norm_svd(&strided).map_err(|e| e.to_string())?.value;
        if bound < oracle - 1e-9 * bound {
            violations += 1;
        }
        ratios.push(bound / oracle);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    check(
        (1.4..=2.6).contains(&mean) && violations == 0,
        format!("mean unit-stride bound / strided oracle {mean:.4} (in [1.4,2.6]), {violations} dominance violations"),
    )
}

fn performance_floor() -> Outcome {
    let cfg = PowerConfig::training();
    let layers = synthetic_layers(1).map_err(|e| e.to_string())?;
    let median = |rows: &[specnorm_harness::bench::BenchRow], method: &str| {
        rows.iter()
            .find(|r| r.method == method)
            .map(|r| (r.median_ns.max(1) as f64, r.iterations))
    };
    let dw = bench_layer(&layers[0], &cfg, 3).map_err(|e| e.to_string())?;
    let pw = bench_layer(&layers[1], &cfg, 3).map_err(|e| e.to_string())?;
    let (dft, _) = median(&dw, "dft-bound").ok_or("missing dft-bound row")?;
    let (cold, cold_iters) = median(&dw, "power-cold").ok_or("missing power-cold row")?;
    let (conn, _) = median(&pw, "connectivity-power").ok_or("missing connectivity-power row")?;
    let (naive, _) = median(&pw, "power-cold").ok_or("missing power-cold row")?;
    let (r1, r2) = (cold / dft, naive / conn);
    check(
        r1 >= 5.0 && r2 >= 100.0,
        format!(
            "depthwise power-cold/dft-bound {r1:.1}x (>= 5x; dft {:.3} ms, power {:.1} ms over {cold_iters} iterations); naive/connectivity {r2:.0}x (>= 100x)",
            dft / 1e6,
            cold / 1e6
        ),
    )
}

fn cross_correlation_theorem() -> Outcome {
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let d = pick(9, case, 0, 1, 2);
        let k = [1, 3, 5][pick(9, case, 1, 0, 2)];
        let shape: Vec<usize> = (0..d).map(|a| pick(9, case, 2 + a as u64, k, 16)).collect();
        let kernel = vec![k; d];
        let filter = random_gaussian_filters(1, &kernel, rng::derive_seed(9, case as u64, 7))
            .map_err(|e| e.to_string())?
            .filter(0)
            .clone();
        let len: usize = shape.iter().product();
        let x = Tensor::new(
            shape.clone(),
            rng::gaussian_vec(
                &mut rng::stream(rng::derive_seed(9, case as u64, 8), 0),
                len,
            ),
        )
        .map_err(|e| e.to_string())?;
        let g = circulant_cross_correlate(&filter, &x).map_err(|e| e.to_string())?;
        // filter padded to the signal shape with its center tap at the origin
        let mut padded = Tensor::zeros(&shape);
        for m in indices(&kernel) {
            let pos: Vec<usize> = m
                .iter()
                .zip(&shape)
                .map(|(&mi, &n)| (mi as isize - (k / 2) as isize).rem_euclid(n as isize) as usize)
                .collect();
            padded.set(&pos, filter.get(&m));
        }
        let (lhs, ft, fx) = (dft(&g), dft(&padded), dft(&x));
        let rhs: Vec<_> = ft.iter().zip(&fx).map(|(a, b)| a.conj() * b).collect();
        let scale = rhs.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
        for (l, r) in lhs.iter().zip(&rhs) {
            worst = worst.max((l - r).norm() / r.norm().max(1e-12 * scale));
        }
    }
    check(
        worst <= 1e-6,
        format!("100 cases, max entrywise rel err {worst:.3e} (tol 1e-6)"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "1 circulant exactness",
            Duration::from_secs(60),
            circulant_exactness,
        ),
        (
            "2 zero-padded dominance",
            Duration::from_secs(120),
            zero_padded_dominance,
        ),
        (
            "3 overestimation study",
            Duration::from_secs(600),
            overestimation_study,
        ),
        (
            "4 connectivity equivalence",
            Duration::from_secs(30),
            connectivity_equivalence,
        ),
        ("5 warm-start iterations", Duration::MAX, warm_start),
        (
            "6 normalization safety",
            Duration::MAX,
            normalization_safety,
        ),
        ("7 stride heuristic", Duration::MAX, stride_heuristic),
        ("8 performance floor", Duration::MAX, performance_floor),
        (
            "9 cross-correlation theorem",
            Duration::MAX,
            cross_correlation_theorem,
        ),
    ];
    let mut failed = 0;
    for (name, limit, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let timing = if limit == Duration::MAX {
            format!("{:.1}s", elapsed.as_secs_f64())
        } else {
            format!("{:.1}s of {}s", elapsed.as_secs_f64(), limit.as_secs())
        };
        match outcome {
            Ok(detail) if elapsed <= limit => {
                println!("PASS criterion {name}: {detail} [{timing}]")
            }
            Ok(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: over time budget; {detail} [{timing}]");
            }
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {name}: {detail} [{timing}]");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
