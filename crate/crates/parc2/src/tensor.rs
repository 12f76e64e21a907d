//! Minimal dense-tensor substrate: NCHW feature maps, 2-D matrices,
//! zero padding, pointwise (1x1) convolution, GELU, channel layer norm,
//! global average pooling, and seeded Gaussian tensors.
//!
//! Layout is row-major NCHW, contiguous; the depthwise lowering in
//! [`crate::perf`] tiles per-channel planes, so planes must be contiguous
//! slices. Reductions run in a fixed row-major order per output element,
//! which makes every operation deterministic regardless of parallelism.

use crate::par::for_each_chunk_mut;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Dense rank-4 activation tensor, shape `(batch, channels, height, width)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T = f32> {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![T::zero(); n * c * h * w],
        }
    }

    pub fn from_vec(shape: (usize, usize, usize, usize), data: Vec<T>) -> Result<Self> {
        let (n, c, h, w) = shape;
        if data.len() != n * c * h * w {
            return Err(Error::DimMismatch(format!(
                "shape {:?} needs {} elements, got {}",
                shape,
                n * c * h * w,
                data.len()
            )));
        }
        Ok(Self { n, c, h, w, data })
    }

    pub fn filled(n: usize, c: usize, h: usize, w: usize, value: T) -> Self {
        Self {
            n,
            c,
            h,
            w,
            data: vec![value; n * c * h * w],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.n, self.c, self.h, self.w)
    }

    pub fn batch(&self) -> usize {
        self.n
    }
    pub fn channels(&self) -> usize {
        self.c
    }
    pub fn height(&self) -> usize {
        self.h
    }
    pub fn width(&self) -> usize {
        self.w
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn plane_len(&self) -> usize {
        self.h * self.w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, i: usize, j: usize) -> T {
        self.data[((n * self.c + c) * self.h + i) * self.w + j]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, i: usize, j: usize, v: T) {
        self.data[((n * self.c + c) * self.h + i) * self.w + j] = v;
    }

    /// Contiguous `(h, w)` plane for one `(batch, channel)` pair.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let start = (n * self.c + c) * self.plane_len();
        &self.data[start..start + self.plane_len()]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [T] {
        let len = self.plane_len();
        let start = (n * self.c + c) * len;
        &mut self.data[start..start + len]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn is_all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimMismatch(format!(
                "add: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = self.clone();
        for (o, r) in out.data.iter_mut().zip(other.data.iter()) {
            *o += *r;
        }
        Ok(out)
    }

    /// Elementwise (Hadamard) product; shapes must match.
    pub fn hadamard(&self, other: &Self) -> Result<Self> {
        if self.shape() != other.shape() {
            return Err(Error::DimMismatch(format!(
                "hadamard: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        let mut out = self.clone();
        for (o, r) in out.data.iter_mut().zip(other.data.iter()) {
            *o *= *r;
        }
        Ok(out)
    }

    /// Converts the element type (used to run f32 cases through the f64
    /// verification path).
    pub fn cast<U: Scalar>(&self) -> FeatureMap<U> {
        FeatureMap {
            n: self.n,
            c: self.c,
            h: self.h,
            w: self.w,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// Dense row-major matrix; also used for per-channel 1-D kernel banks
/// (`rows = channels`).
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix<T = f32> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimMismatch(format!(
                "matrix {}x{} needs {} elements, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m.data[i * dim + i] = T::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        let c = self.cols;
        &mut self.data[r * c..(r + 1) * c]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }
}

/// Weights of a pointwise (1x1) convolution or, equivalently, a linear layer
/// applied per spatial position: `weight` is `(c_out, c_in)`, `bias` has
/// length `c_out`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseParams<T = f32> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> PointwiseParams<T> {
    pub fn new(weight: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if weight.rows() != bias.len() {
            return Err(Error::DimMismatch(format!(
                "pointwise weight rows {} != bias length {}",
                weight.rows(),
                bias.len()
            )));
        }
        Ok(Self { weight, bias })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weight: Matrix::identity(dim),
            bias: vec![T::zero(); dim],
        }
    }

    pub fn zeros(c_out: usize, c_in: usize) -> Self {
        Self {
            weight: Matrix::zeros(c_out, c_in),
            bias: vec![T::zero(); c_out],
        }
    }

    pub fn c_out(&self) -> usize {
        self.weight.rows()
    }

    pub fn c_in(&self) -> usize {
        self.weight.cols()
    }

    /// Seeded init: truncated normal for the weight, zero-mean truncated
    /// normal for the bias as well (same scheme as every other tensor).
    pub fn random(c_out: usize, c_in: usize, rng: &mut Rng, std: f64) -> Self {
        let mut weight = Matrix::zeros(c_out, c_in);
        for v in weight.data_mut() {
            *v = T::from_f64(rng.truncated_normal(std));
        }
        let bias = (0..c_out)
            .map(|_| T::from_f64(rng.truncated_normal(std)))
            .collect();
        Self { weight, bias }
    }

    pub fn num_params(&self) -> usize {
        self.weight.rows() * self.weight.cols() + self.bias.len()
    }
}

/// Zero padding on each side of the spatial extent. Interior values are
/// copied unchanged, the border is exactly zero.
pub fn pad_zero<T: Scalar>(
    x: &FeatureMap<T>,
    top: usize,
    bottom: usize,
    left: usize,
    right: usize,
) -> FeatureMap<T> {
    let (n, c, h, w) = x.shape();
    let mut out = FeatureMap::zeros(n, c, h + top + bottom, w + left + right);
    let ow = w + left + right;
    for ni in 0..n {
        for ci in 0..c {
            let src = x.plane(ni, ci);
            let dst = out.plane_mut(ni, ci);
            for i in 0..h {
                let drow = (i + top) * ow + left;
                dst[drow..drow + w].copy_from_slice(&src[i * w..(i + 1) * w]);
            }
        }
    }
    out
}

/// Pointwise convolution:
/// `out[n,co,h,w] = sum_ci weight[co,ci] * x[n,ci,h,w] + bias[co]`.
/// Accumulation over `ci` runs ascending for every output element.
pub fn pointwise_conv<T: Scalar>(
    x: &FeatureMap<T>,
    p: &PointwiseParams<T>,
) -> Result<FeatureMap<T>> {
    let (n, c, h, w) = x.shape();
    if p.c_in() != c {
        return Err(Error::DimMismatch(format!(
            "pointwise expects {} input channels, feature map has {}",
            p.c_in(),
            c
        )));
    }
    let c_out = p.c_out();
    let mut out = FeatureMap::zeros(n, c_out, h, w);
    let plane = h * w;
    for_each_chunk_mut(out.data_mut(), plane, |idx, dst| {
        let ni = idx / c_out;
        let co = idx % c_out;
        dst.fill(p.bias[co]);
        for ci in 0..c {
            let coeff = p.weight.at(co, ci);
            let src = x.plane(ni, ci);
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += coeff * *s;
            }
        }
    });
    Ok(out)
}

/// Elementwise GELU with the exact-erf formulation:
/// `0.5 * x * (1 + erf(x / sqrt(2)))`.
pub fn gelu<T: Scalar>(x: &FeatureMap<T>) -> FeatureMap<T> {
    let mut out = x.clone();
    let inv_sqrt2 = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    let half = T::from_f64(0.5);
    for v in out.data_mut() {
        *v = half * *v * (T::one() + (*v * inv_sqrt2).erf());
    }
    out
}

/// Scalar GELU, shared definition for per-element checks.
pub fn gelu_scalar<T: Scalar>(v: T) -> T {
    let inv_sqrt2 = T::from_f64(std::f64::consts::FRAC_1_SQRT_2);
    T::from_f64(0.5) * v * (T::one() + (v * inv_sqrt2).erf())
}

/// Normalizes across channels at every `(n, h, w)` position to zero mean and
/// unit variance (biased variance, epsilon inside the square root), then
/// applies the per-channel scale/shift.
pub fn channel_layernorm<T: Scalar>(
    x: &FeatureMap<T>,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> Result<FeatureMap<T>> {
    let (n, c, h, w) = x.shape();
    if gamma.len() != c || beta.len() != c {
        return Err(Error::DimMismatch(format!(
            "layernorm scale/shift length {}/{} != channels {}",
            gamma.len(),
            beta.len(),
            c
        )));
    }
    if eps.to_f64() <= 0.0 {
        return Err(Error::InvalidArgument("layernorm eps must be > 0".into()));
    }
    let mut out = FeatureMap::zeros(n, c, h, w);
    let plane = h * w;
    let sample = c * plane;
    let inv_c = T::from_f64(1.0 / c as f64);
    let xdata = x.data();
    for_each_chunk_mut(out.data_mut(), sample, |ni, dst| {
        let src = &xdata[ni * sample..(ni + 1) * sample];
        for pos in 0..plane {
            let mut mean = T::zero();
            for ci in 0..c {
                mean += src[ci * plane + pos];
            }
            mean *= inv_c;
            let mut var = T::zero();
            for ci in 0..c {
                let d = src[ci * plane + pos] - mean;
                var += d * d;
            }
            var *= inv_c;
            let inv_std = T::one() / (var + eps).sqrt();
            for ci in 0..c {
                dst[ci * plane + pos] =
                    gamma[ci] * ((src[ci * plane + pos] - mean) * inv_std) + beta[ci];
            }
        }
    });
    Ok(out)
}

/// Same normalization over the columns of an `(n, c)` matrix (used by the
/// classifier head after pooling).
pub fn row_layernorm<T: Scalar>(
    x: &Matrix<T>,
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> Result<Matrix<T>> {
    let c = x.cols();
    if gamma.len() != c || beta.len() != c {
        return Err(Error::DimMismatch(format!(
            "layernorm scale/shift length {}/{} != columns {}",
            gamma.len(),
            beta.len(),
            c
        )));
    }
    let mut out = Matrix::zeros(x.rows(), c);
    let inv_c = T::from_f64(1.0 / c as f64);
    for r in 0..x.rows() {
        let src = x.row(r);
        let mut mean = T::zero();
        for v in src {
            mean += *v;
        }
        mean *= inv_c;
        let mut var = T::zero();
        for v in src {
            let d = *v - mean;
            var += d * d;
        }
        var *= inv_c;
        let inv_std = T::one() / (var + eps).sqrt();
        let dst = out.row_mut(r);
        for ci in 0..c {
            dst[ci] = gamma[ci] * ((src[ci] - mean) * inv_std) + beta[ci];
        }
    }
    Ok(out)
}

/// Mean over spatial positions per `(batch, channel)`, row-major
/// accumulation.
pub fn global_avg_pool<T: Scalar>(x: &FeatureMap<T>) -> Matrix<T> {
    let (n, c, h, w) = x.shape();
    let mut out = Matrix::zeros(n, c);
    let inv = T::from_f64(1.0 / (h * w) as f64);
    for ni in 0..n {
        for ci in 0..c {
            let mut acc = T::zero();
            for v in x.plane(ni, ci) {
                acc += *v;
            }
            out.set(ni, ci, acc * inv);
        }
    }
    out
}

/// Linear layer on an `(n, c_in)` matrix: `out = x * weight^T + bias`.
pub fn linear<T: Scalar>(x: &Matrix<T>, p: &PointwiseParams<T>) -> Result<Matrix<T>> {
    if p.c_in() != x.cols() {
        return Err(Error::DimMismatch(format!(
            "linear expects {} inputs, matrix has {} columns",
            p.c_in(),
            x.cols()
        )));
    }
    let mut out = Matrix::zeros(x.rows(), p.c_out());
    for r in 0..x.rows() {
        let src = x.row(r);
        let dst = out.row_mut(r);
        for (co, d) in dst.iter_mut().enumerate() {
            let mut acc = p.bias[co];
            let wrow = p.weight.row(co);
            for (wv, xv) in wrow.iter().zip(src.iter()) {
                acc += *wv * *xv;
            }
            *d = acc;
        }
    }
    Ok(out)
}

/// Deterministic Gaussian tensor. Values are drawn as f64 in NCHW order and
/// converted to `T`, so the f32 and f64 tensors for one seed agree up to
/// rounding. `std == 0` yields zeros without consuming randomness.
pub fn random_normal<T: Scalar>(
    shape: (usize, usize, usize, usize),
    rng: &mut Rng,
    std: f64,
) -> FeatureMap<T> {
    let (n, c, h, w) = shape;
    let mut out = FeatureMap::zeros(n, c, h, w);
    if std == 0.0 {
        return out;
    }
    for v in out.data_mut() {
        *v = T::from_f64(rng.normal(std));
    }
    out
}
