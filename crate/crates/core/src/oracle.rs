//! Brute-force ground truth for convolution norms.
//!
//! Direct-sum reference correlations (circulant and zero-padded, with
//! stride), their adjoints, dense materialization column by column, and the
//! largest singular value by SVD. Nothing here is fast; it is meant to be
//! obviously right.
//!
//! Correlations are centered: output position n reads x[n·ν + m − p] for
//! filter tap m, so a delta filter is the identity.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Result, SpecNormError};
use crate::model::{ConnectivityMatrix, FeatureGeometry, FilterBank, NormEstimate, PaddingMode};
use crate::power::{LinearOperator, PointwiseOperator};
use crate::tensor::{indices, row_major_strides, Tensor};

/// Largest matrix side handed to the dense SVD.
pub const MAX_SVD_SIDE: usize = 4096;

const NO_SOURCE: usize = usize::MAX;

/// Single-channel correlation with circular or zero continuation and stride.
#[derive(Debug, Clone)]
pub struct ConvOperator {
    taps: Vec<f64>,
    tap_offsets: Vec<usize>,
    // extended-buffer flat index -> input flat index (NO_SOURCE for zeros)
    gather: Vec<usize>,
    out_bases: Vec<usize>,
    spatial: Vec<usize>,
    out_shape: Vec<usize>,
}

impl ConvOperator {
    pub fn new(
        filter: &Tensor,
        spatial: &[usize],
        stride: &[usize],
        mode: PaddingMode,
    ) -> Result<Self> {
        let kernel = filter.shape();
        let d = kernel.len();
        if spatial.len() != d || stride.len() != d {
            return Err(SpecNormError::ShapeMismatch {
                expected: kernel.to_vec(),
                found: spatial.to_vec(),
            });
        }
        if kernel.iter().zip(spatial).any(|(k, n)| k > n) {
            return Err(SpecNormError::TargetTooSmall {
                source_extents: kernel.to_vec(),
                target: spatial.to_vec(),
            });
        }
        if let Some((axis, &extent)) = kernel.iter().enumerate().find(|(_, &k)| k % 2 == 0) {
            return Err(SpecNormError::EvenKernelExtent { axis, extent });
        }
        if stride.iter().zip(spatial).any(|(&s, &n)| s == 0 || s > n) {
            return Err(SpecNormError::InvalidGeometry(format!(
                "stride {stride:?} invalid for extents {spatial:?}"
            )));
        }
        let pad: Vec<usize> = kernel.iter().map(|k| k / 2).collect();
        let ext_shape: Vec<usize> = spatial.iter().zip(&pad).map(|(n, p)| n + 2 * p).collect();
        let ext_strides = row_major_strides(&ext_shape);
        let in_strides = row_major_strides(spatial);

        let gather = indices(&ext_shape)
            .into_iter()
            .map(|e| {
                let mut flat = 0;
                for axis in 0..d {
                    let shifted = e[axis] as isize - pad[axis] as isize;
                    let n = spatial[axis] as isize;
                    let src = match mode {
                        PaddingMode::Circulant => shifted.rem_euclid(n),
                        PaddingMode::Zero if (0..n).contains(&shifted) => shifted,
                        PaddingMode::Zero => return NO_SOURCE,
                    };
                    flat += src as usize * in_strides[axis];
                }
                flat
            })
            .collect();

        let tap_offsets = indices(kernel)
            .into_iter()
            .map(|m| m.iter().zip(&ext_strides).map(|(i, s)| i * s).sum())
            .collect();

        let out_shape: Vec<usize> = spatial
            .iter()
            .zip(stride)
            .map(|(n, s)| n.div_ceil(*s))
            .collect();
        let out_bases = indices(&out_shape)
            .into_iter()
            .map(|o| (0..d).map(|a| o[a] * stride[a] * ext_strides[a]).sum())
            .collect();

        Ok(Self {
            taps: filter.data().to_vec(),
            tap_offsets,
            gather,
            out_bases,
            spatial: spatial.to_vec(),
            out_shape,
        })
    }

    pub fn spatial(&self) -> &[usize] {
        &self.spatial
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.out_shape
    }

    fn correlate_into(&self, x: &[f64], ext: &mut [f64], out: &mut [f64]) {
        for (e, &src) in ext.iter_mut().zip(&self.gather) {
            *e = if src == NO_SOURCE { 0.0 } else { x[src] };
        }
        for (o, &base) in out.iter_mut().zip(&self.out_bases) {
            let window = &ext[base..];
            *o = self
                .taps
                .iter()
                .zip(&self.tap_offsets)
                .map(|(t, &off)| t * window[off])
                .sum();
        }
    }

    fn correlate_adjoint_into(&self, y: &[f64], ext: &mut [f64], out: &mut [f64]) {
        ext.iter_mut().for_each(|e| *e = 0.0);
        for (&yo, &base) in y.iter().zip(&self.out_bases) {
            let window = &mut ext[base..];
            for (t, &off) in self.taps.iter().zip(&self.tap_offsets) {
                window[off] += t * yo;
            }
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for (&e, &src) in ext.iter().zip(&self.gather) {
            if src != NO_SOURCE {
                out[src] += e;
            }
        }
    }
}

impl LinearOperator for ConvOperator {
    fn dim_in(&self) -> usize {
        self.spatial.iter().product()
    }

    fn dim_out(&self) -> usize {
        self.out_shape.iter().product()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let mut ext = vec![0.0; self.gather.len()];
        self.correlate_into(x, &mut ext, out);
    }

    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        let mut ext = vec![0.0; self.gather.len()];
        self.correlate_adjoint_into(y, &mut ext, out);
    }
}

/// Depthwise (block-diagonal) zero-padded or circulant convolution over
/// C×N₁×…×N_d inputs, channel-major.
#[derive(Debug, Clone)]
pub struct DepthwiseOperator {
    channels: Vec<ConvOperator>,
}

impl DepthwiseOperator {
    pub fn new(bank: &FilterBank, geometry: &FeatureGeometry) -> Result<Self> {
        geometry.check_bank(bank)?;
        let channels = bank
            .filters()
            .iter()
            .map(|f| ConvOperator::new(f, geometry.spatial(), geometry.stride(), geometry.mode()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { channels })
    }

    pub fn channel(&self, j: usize) -> &ConvOperator {
        &self.channels[j]
    }
}

impl LinearOperator for DepthwiseOperator {
    fn dim_in(&self) -> usize {
        self.channels.iter().map(|c| c.dim_in()).sum()
    }

    fn dim_out(&self) -> usize {
        self.channels.iter().map(|c| c.dim_out()).sum()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (n_in, n_out) = (self.channels[0].dim_in(), self.channels[0].dim_out());
        for ((op, xc), oc) in self
            .channels
            .iter()
            .zip(x.chunks(n_in))
            .zip(out.chunks_mut(n_out))
        {
            op.apply(xc, oc);
        }
    }

    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        let (n_in, n_out) = (self.channels[0].dim_in(), self.channels[0].dim_out());
        for ((op, yc), oc) in self
            .channels
            .iter()
            .zip(y.chunks(n_out))
            .zip(out.chunks_mut(n_in))
        {
            op.apply_adjoint(yc, oc);
        }
    }
}

/// Direct-sum circulant cross-correlation, same shape as `x`.
pub fn circulant_cross_correlate(filter: &Tensor, x: &Tensor) -> Result<Tensor> {
    let stride = vec![1; x.ndim()];
    let op = ConvOperator::new(filter, x.shape(), &stride, PaddingMode::Circulant)?;
    let mut out = vec![0.0; op.dim_out()];
    op.apply(x.data(), &mut out);
    Tensor::new(x.shape().to_vec(), out)
}

/// Direct-sum zero-padded correlation followed by keeping outputs at
/// multiples of `stride`.
pub fn zero_padded_correlate(filter: &Tensor, x: &Tensor, stride: &[usize]) -> Result<Tensor> {
    let op = ConvOperator::new(filter, x.shape(), stride, PaddingMode::Zero)?;
    let mut out = vec![0.0; op.dim_out()];
    op.apply(x.data(), &mut out);
    Tensor::new(op.output_shape().to_vec(), out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Circulant,
    ZeroPadded,
    Strided,
    PointwiseBlock,
    Generic,
}

/// An operator written out as a dense matrix (rows = output dimension).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    pub matrix: DMatrix<f64>,
    pub kind: OperatorKind,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>, kind: OperatorKind) -> Result<Self> {
        if matrix.nrows() == 0 || matrix.ncols() == 0 {
            return Err(SpecNormError::EmptyInput);
        }
        if let Some(index) = matrix.iter().position(|x| !x.is_finite()) {
            return Err(SpecNormError::NonFiniteEntry { index });
        }
        Ok(Self { matrix, kind })
    }

    /// Materializes any operator column by column from basis vectors.
    pub fn from_operator<A: LinearOperator + ?Sized>(op: &A, kind: OperatorKind) -> Result<Self> {
        let (rows, cols) = (op.dim_out(), op.dim_in());
        let mut matrix = DMatrix::zeros(rows, cols);
        let mut e = vec![0.0; cols];
        let mut col = vec![0.0; rows];
        for k in 0..cols {
            e[k] = 1.0;
            op.apply(&e, &mut col);
            e[k] = 0.0;
            matrix.column_mut(k).copy_from_slice(&col);
        }
        Self::new(matrix, kind)
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let v = nalgebra::DVector::from_column_slice(x);
        (&self.matrix * v).as_slice().to_vec()
    }
}

impl LinearOperator for DenseOperator {
    fn dim_in(&self) -> usize {
        self.cols()
    }

    fn dim_out(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.mul_vec(x));
    }

    fn apply_adjoint(&self, y: &[f64], out: &mut [f64]) {
        let v = nalgebra::DVector::from_column_slice(y);
        out.copy_from_slice((self.matrix.tr_mul(&v)).as_slice());
    }
}

pub fn materialize_circulant(filter: &Tensor, spatial: &[usize]) -> Result<DenseOperator> {
    let stride = vec![1; spatial.len()];
    let op = ConvOperator::new(filter, spatial, &stride, PaddingMode::Circulant)?;
    DenseOperator::from_operator(&op, OperatorKind::Circulant)
}

/// Zero-padded same-size correlation on `geometry.spatial()`, subsampled by `stride`.
pub fn materialize_zero_padded(
    filter: &Tensor,
    geometry: &FeatureGeometry,
    stride: &[usize],
) -> Result<DenseOperator> {
    let half: Vec<usize> = filter.shape().iter().map(|k| k / 2).collect();
    if geometry.mode() != PaddingMode::Zero || geometry.pad() != half.as_slice() {
        return Err(SpecNormError::InvalidGeometry(format!(
            "expected zero padding {half:?}, got {:?} {:?}",
            geometry.mode(),
            geometry.pad()
        )));
    }
    let op = ConvOperator::new(filter, geometry.spatial(), stride, PaddingMode::Zero)?;
    let kind = if stride.iter().all(|&s| s == 1) {
        OperatorKind::ZeroPadded
    } else {
        OperatorKind::Strided
    };
    DenseOperator::from_operator(&op, kind)
}

/// Pointwise convolution as a dense matrix in channel-major order (Θ ⊗ I).
pub fn materialize_pointwise(
    theta: &ConnectivityMatrix,
    spatial: &[usize],
) -> Result<DenseOperator> {
    let op = PointwiseOperator::new(theta, spatial)?;
    DenseOperator::from_operator(&op, OperatorKind::PointwiseBlock)
}

pub fn connectivity_dense(theta: &ConnectivityMatrix) -> DenseOperator {
    DenseOperator {
        matrix: DMatrix::from_row_slice(theta.rows(), theta.cols(), theta.entries()),
        kind: OperatorKind::Generic,
    }
}

/// σ_max by dense SVD.
pub fn exact_norm_svd(op: &DenseOperator) -> Result<NormEstimate> {
    if op.rows().max(op.cols()) > MAX_SVD_SIDE {
        return Err(SpecNormError::InvalidConfig(format!(
            "matrix {}x{} exceeds the dense oracle limit of {MAX_SVD_SIDE}",
            op.rows(),
            op.cols()
        )));
    }
    let svd = op
        .matrix
        .clone()
        .try_svd(false, false, f64::EPSILON, 10_000)
        .ok_or_else(|| SpecNormError::NumericalFailure("SVD did not converge".into()))?;
    let sigma = svd.singular_values.iter().fold(0.0_f64, |m, &s| m.max(s));
    Ok(NormEstimate::svd(sigma))
}

/// √λ_max(KᵀK) from a symmetric eigensolver; independent of the SVD path.
pub fn norm_via_gram_eigen(op: &DenseOperator) -> f64 {
    let gram = op.matrix.tr_mul(&op.matrix);
    let eig = SymmetricEigen::new(gram);
    eig.eigenvalues
        .iter()
        .fold(0.0_f64, |m, &l| m.max(l))
        .sqrt()
}

/// Norm of the zero-padded depthwise operator: the largest of the per-channel
/// dense SVD norms (the operator is block diagonal).
pub fn depthwise_oracle_norm(
    bank: &FilterBank,
    geometry: &FeatureGeometry,
) -> Result<NormEstimate> {
    geometry.check_bank(bank)?;
    let mut value: f64 = 0.0;
    for filter in bank.filters() {
        let op = materialize_zero_padded(filter, geometry, geometry.stride())?;
        value = value.max(exact_norm_svd(&op)?.value);
    }
    Ok(NormEstimate::svd(value))
}
