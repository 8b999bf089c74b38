//! Power iteration on AᵀA with a residual stopping rule and warm starts.
//!
//! Each step computes w = AᵀAv for the unit iterate v, reads σ = √‖w‖ and
//! stops once ‖w − σ²v‖₂ < ε. The iterate is renormalized every step.
//!
//! For a pointwise convolution the full operator is (up to a permutation)
//! block diagonal with copies of its connectivity matrix Θ, so iterating on
//! Θ alone gives the same norm with a warm-start vector of only C_in entries.

use crate::error::{Result, SpecNormError};
use crate::model::{ConnectivityMatrix, NormEstimate};
use crate::rng;

/// A real linear map R^dim_in → R^dim_out together with its adjoint.
pub trait LinearOperator {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]);
}

impl LinearOperator for ConnectivityMatrix {
    fn dim_in(&self) -> usize {
        self.cols()
    }

    fn dim_out(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.mul_vec(x, out)
    }

    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        self.mul_vec_transposed(y, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    pub seed: u64,
}

impl PowerConfig {
    pub const DEFAULT_MAX_ITERATIONS: usize = 1000;

    pub fn new(epsilon: f64, max_iterations: usize, seed: u64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(SpecNormError::InvalidConfig(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if max_iterations == 0 {
            return Err(SpecNormError::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        Ok(Self {
            epsilon,
            max_iterations,
            seed,
        })
    }

    /// ε = 0.01, the precision used when normalizing during training.
    pub fn training() -> Self {
        Self {
            epsilon: 0.01,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            seed: 0,
        }
    }

    /// ε = 1e-10 for ground-truth comparisons.
    pub fn oracle() -> Self {
        Self {
            epsilon: 1e-10,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            seed: 0,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_max_iterations(self, max_iterations: usize) -> Self {
        Self {
            max_iterations,
            ..self
        }
    }
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self::training()
    }
}

/// Leading right-singular vector estimate carried between normalization steps.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStartState {
    v: Vec<f64>,
    sigma: f64,
}

impl WarmStartState {
    /// Normalizes `v` to unit length.
    pub fn new(v: Vec<f64>, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(SpecNormError::InvalidConfig(format!(
                "sigma must be non-negative, got {sigma}"
            )));
        }
        let v = normalized(v).ok_or(SpecNormError::ZeroVector)?;
        Ok(Self { v, sigma })
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.v.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v.is_empty()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let n = norm(&v);
    if !(n > 0.0 && n.is_finite()) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= n);
    Some(v)
}

fn random_unit(dim: usize, seed: u64, attempt: u64) -> Result<Vec<f64>> {
    normalized(rng::gaussian_vec(&mut rng::stream(seed, attempt), dim))
        .ok_or(SpecNormError::ZeroVector)
}

enum Stop {
    Residual(f64),
    Fixed,
}

struct Outcome {
    estimate: NormEstimate,
    state: WarmStartState,
    converged: bool,
}

fn iterate<A: LinearOperator + ?Sized>(
    op: &A,
    mut v: Vec<f64>,
    seed: u64,
    max_iterations: usize,
    stop: Stop,
) -> Result<Outcome> {
    let mut av = vec![0.0; op.dim_out()];
    let mut w = vec![0.0; op.dim_in()];
    let mut restarted = false;
    let mut sigma = 0.0;
    let mut residual = f64::INFINITY;
    let mut done = 0;

    while done < max_iterations {
        op.apply(&v, &mut av);
        op.apply_adjoint(&av, &mut w);
        let wn = norm(&w);
        if !(wn > 0.0) || !wn.is_finite() {
            if restarted {
                return Err(SpecNormError::ZeroVector);
            }
            restarted = true;
            v = random_unit(op.dim_in(), seed, 1)?;
            continue;
        }
        done += 1;
        sigma = wn.sqrt();
        residual = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - wn * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        w.iter()
            .zip(v.iter_mut())
            .for_each(|(wi, vi)| *vi = wi / wn);
        if let Stop::Residual(eps) = stop {
            if residual < eps {
                return Ok(Outcome {
                    estimate: NormEstimate::power(sigma, done, residual),
                    state: WarmStartState { v, sigma },
                    converged: true,
                });
            }
        }
    }
    Ok(Outcome {
        estimate: NormEstimate::power(sigma, done, residual),
        state: WarmStartState { v, sigma },
        converged: matches!(stop, Stop::Fixed),
    })
}

fn start_vector<A: LinearOperator + ?Sized>(
    op: &A,
    seed: u64,
    warm: Option<&WarmStartState>,
) -> Result<Vec<f64>> {
    match warm {
        Some(state) if state.len() != op.dim_in() => Err(SpecNormError::ShapeMismatch {
            expected: vec![op.dim_in()],
            found: vec![state.len()],
        }),
        Some(state) => Ok(state.v.clone()),
        None => random_unit(op.dim_in(), seed, 0),
    }
}

/// Runs the power method until the residual drops below ε.
///
/// Starts from `warm` if given, otherwise from a seeded Gaussian vector.
/// Hitting `max_iterations` yields [`SpecNormError::NonConvergence`] carrying
/// the last estimate and state.
pub fn power_iterate<A: LinearOperator + ?Sized>(
    op: &A,
    config: &PowerConfig,
    warm: Option<&WarmStartState>,
) -> Result<(NormEstimate, WarmStartState)> {
    let v = start_vector(op, config.seed, warm)?;
    let out = iterate(
        op,
        v,
        config.seed,
        config.max_iterations,
        Stop::Residual(config.epsilon),
    )?;
    if out.converged {
        Ok((out.estimate, out.state))
    } else {
        Err(SpecNormError::NonConvergence {
            estimate: out.estimate,
            state: out.state,
        })
    }
}

/// Runs exactly `iterations` cold-start steps with no stopping test; the
/// final residual is still reported.
pub fn power_iterate_fixed<A: LinearOperator + ?Sized>(
    op: &A,
    iterations: usize,
    seed: u64,
) -> Result<(NormEstimate, WarmStartState)> {
    let v = random_unit(op.dim_in(), seed, 0)?;
    let out = iterate(op, v, seed, iterations, Stop::Fixed)?;
    Ok((out.estimate, out.state))
}

/// ‖Θ‖₂ by power iteration on the C_out×C_in connectivity matrix.
pub fn connectivity_spectral_norm(
    theta: &ConnectivityMatrix,
    config: &PowerConfig,
    warm: Option<&WarmStartState>,
) -> Result<(NormEstimate, WarmStartState)> {
    power_iterate(theta, config, warm)
}

/// Full pointwise convolution on a C_in×N₁×…×N_d input, channel-major.
#[derive(Debug, Clone)]
pub struct PointwiseOperator<'a> {
    theta: &'a ConnectivityMatrix,
    pixels: usize,
}

impl<'a> PointwiseOperator<'a> {
    pub fn new(theta: &'a ConnectivityMatrix, spatial: &[usize]) -> Result<Self> {
        if spatial.is_empty() || spatial.contains(&0) {
            return Err(SpecNormError::InvalidGeometry(
                "spatial extents must be positive".into(),
            ));
        }
        Ok(Self {
            theta,
            pixels: spatial.iter().product(),
        })
    }
}

impl LinearOperator for PointwiseOperator<'_> {
    fn dim_in(&self) -> usize {
        self.theta.cols() * self.pixels
    }

    fn dim_out(&self) -> usize {
        self.theta.rows() * self.pixels
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let p = self.pixels;
        for (o, out_plane) in out.chunks_mut(p).enumerate() {
            out_plane.iter_mut().for_each(|y| *y = 0.0);
            for (c, in_plane) in x.chunks(p).enumerate() {
                let t = self.theta.get(o, c);
                out_plane
                    .iter_mut()
                    .zip(in_plane)
                    .for_each(|(y, xv)| *y += t * xv);
            }
        }
    }

    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        let p = self.pixels;
        for (c, out_plane) in out.chunks_mut(p).enumerate() {
            out_plane.iter_mut().for_each(|v| *v = 0.0);
            for (o, in_plane) in y.chunks(p).enumerate() {
                let t = self.theta.get(o, c);
                out_plane
                    .iter_mut()
                    .zip(in_plane)
                    .for_each(|(v, yv)| *v += t * yv);
            }
        }
    }
}

/// Baseline: power method on the whole pointwise operator, state of size C_in·∏Nᵢ.
pub fn pointwise_operator_norm_naive(
    theta: &ConnectivityMatrix,
    spatial: &[usize],
    config: &PowerConfig,
) -> Result<NormEstimate> {
    let op = PointwiseOperator::new(theta, spatial)?;
    power_iterate(&op, config, None).map(|(est, _)| est)
}
