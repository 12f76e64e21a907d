//! Oversized separable depthwise convolution.
//!
//! For a feature map of height `H` the vertical kernel has `2H - 1` taps and
//! is applied with `H - 1` implicit zero padding on both sides, so the output
//! keeps the input size while every output row sees the whole input through a
//! different effective slice of the kernel — a global receptive field that
//! also encodes position. The horizontal pass mirrors this along the width.

use crate::par::for_each_chunk_mut;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::{FeatureMap, Matrix};
use crate::{Error, Result};

use super::local::Dense2DKernel;

/// Per-channel vertical/horizontal oversized kernel pair, center-indexed:
/// logical tap `s in [-(H-1), H-1]` lives at storage slot `s + H - 1`. The
/// optional bias is applied once, after the horizontal pass.
#[derive(Clone, Debug, PartialEq)]
pub struct OversizedKernelPair<T = f32> {
    k_h: Matrix<T>,
    k_w: Matrix<T>,
    bias: Option<Vec<T>>,
}

impl<T: Scalar> OversizedKernelPair<T> {
    pub fn new(k_h: Matrix<T>, k_w: Matrix<T>, bias: Option<Vec<T>>) -> Result<Self> {
        if k_h.rows() != k_w.rows() {
            return Err(Error::DimMismatch(format!(
                "kernel pair channel counts differ: {} vs {}",
                k_h.rows(),
                k_w.rows()
            )));
        }
        if k_h.cols().is_multiple_of(2) || k_w.cols().is_multiple_of(2) {
            return Err(Error::DimMismatch(format!(
                "oversized kernel lengths must be odd, got {}x{}",
                k_h.cols(),
                k_w.cols()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != k_h.rows() {
                return Err(Error::DimMismatch(format!(
                    "bias length {} != channels {}",
                    b.len(),
                    k_h.rows()
                )));
            }
        }
        Ok(Self { k_h, k_w, bias })
    }

    /// Kernel bound to feature size `(h, w)`: lengths `2h-1` and `2w-1`,
    /// all taps zero.
    pub fn zeros(channels: usize, h: usize, w: usize) -> Self {
        Self {
            k_h: Matrix::zeros(channels, 2 * h - 1),
            k_w: Matrix::zeros(channels, 2 * w - 1),
            bias: None,
        }
    }

    /// Identity kernel: 1 at both center taps, no bias.
    pub fn delta_center(channels: usize, h: usize, w: usize) -> Self {
        let mut pair = Self::zeros(channels, h, w);
        for c in 0..channels {
            pair.k_h.set(c, h - 1, T::one());
            pair.k_w.set(c, w - 1, T::one());
        }
        pair
    }

    /// Seeded Gaussian taps (std 1), no bias.
    pub fn random(channels: usize, h: usize, w: usize, rng: &mut Rng) -> Self {
        let mut pair = Self::zeros(channels, h, w);
        for v in pair.k_h.data_mut() {
            *v = T::from_f64(rng.normal(1.0));
        }
        for v in pair.k_w.data_mut() {
            *v = T::from_f64(rng.normal(1.0));
        }
        pair
    }

    /// Taps drawn with magnitude in [0.1, 1), guaranteed nonzero; used by
    /// position/receptive-field probes.
    pub fn random_nonzero(channels: usize, h: usize, w: usize, rng: &mut Rng) -> Self {
        let mut pair = Self::zeros(channels, h, w);
        for v in pair.k_h.data_mut() {
            *v = T::from_f64(rng.nonzero_tap());
        }
        for v in pair.k_w.data_mut() {
            *v = T::from_f64(rng.nonzero_tap());
        }
        pair
    }

    pub fn channels(&self) -> usize {
        self.k_h.rows()
    }
    pub fn len_h(&self) -> usize {
        self.k_h.cols()
    }
    pub fn len_w(&self) -> usize {
        self.k_w.cols()
    }
    /// Feature height this kernel is bound to: `(len_h + 1) / 2`.
    pub fn bound_h(&self) -> usize {
        self.len_h().div_ceil(2)
    }
    pub fn bound_w(&self) -> usize {
        self.len_w().div_ceil(2)
    }

    pub fn k_h(&self) -> &Matrix<T> {
        &self.k_h
    }
    pub fn k_w(&self) -> &Matrix<T> {
        &self.k_w
    }
    pub fn k_h_mut(&mut self) -> &mut Matrix<T> {
        &mut self.k_h
    }
    pub fn k_w_mut(&mut self) -> &mut Matrix<T> {
        &mut self.k_w
    }
    pub fn bias(&self) -> Option<&[T]> {
        self.bias.as_deref()
    }
    pub fn bias_mut(&mut self) -> Option<&mut Vec<T>> {
        self.bias.as_mut()
    }

    pub fn set_bias(&mut self, bias: Option<Vec<T>>) -> Result<()> {
        if let Some(b) = &bias {
            if b.len() != self.channels() {
                return Err(Error::DimMismatch(format!(
                    "bias length {} != channels {}",
                    b.len(),
                    self.channels()
                )));
            }
        }
        self.bias = bias;
        Ok(())
    }

    /// Logical center-indexed tap access: `s in [-(H-1), H-1]`.
    pub fn tap_h(&self, c: usize, s: isize) -> T {
        let center = (self.len_h() - 1) / 2;
        self.k_h.at(c, (s + center as isize) as usize)
    }

    pub fn num_params(&self) -> usize {
        self.k_h.rows() * self.k_h.cols()
            + self.k_w.rows() * self.k_w.cols()
            + self.bias.as_ref().map_or(0, Vec::len)
    }

    pub fn cast<U: Scalar>(&self) -> OversizedKernelPair<U> {
        let conv = |m: &Matrix<T>| {
            Matrix::from_vec(
                m.rows(),
                m.cols(),
                m.data().iter().map(|v| U::from_f64(v.to_f64())).collect(),
            )
            .expect("same shape")
        };
        OversizedKernelPair {
            k_h: conv(&self.k_h),
            k_w: conv(&self.k_w),
            bias: self
                .bias
                .as_ref()
                .map(|b| b.iter().map(|v| U::from_f64(v.to_f64())).collect()),
        }
    }
}

fn check_binding<T: Scalar>(x: &FeatureMap<T>, k: &OversizedKernelPair<T>) -> Result<()> {
    let (_, c, h, w) = x.shape();
    if k.channels() != c {
        return Err(Error::DimMismatch(format!(
            "kernel has {} channels, input has {}",
            k.channels(),
            c
        )));
    }
    if k.len_h() != 2 * h - 1 || k.len_w() != 2 * w - 1 {
        return Err(Error::DimMismatch(format!(
            "kernel lengths {}x{} not bound to feature size {}x{} (need {}x{}); \
             resize the kernel explicitly",
            k.len_h(),
            k.len_w(),
            h,
            w,
            2 * h - 1,
            2 * w - 1
        )));
    }
    Ok(())
}

/// Vertical oversized pass:
/// `Y[n,c,i,j] = sum_{s=-(H-1)}^{H-1} k_h[c,s] * X[n,c,i+s,j]` with `X == 0`
/// outside the valid rows. No bias is applied in this pass. Output shape
/// equals input shape.
pub fn parc_oh<T: Scalar>(x: &FeatureMap<T>, k: &OversizedKernelPair<T>) -> Result<FeatureMap<T>> {
    check_binding(x, k)?;
    let (n, c, h, w) = x.shape();
    let mut out = FeatureMap::zeros(n, c, h, w);
    let plane = h * w;
    for_each_chunk_mut(out.data_mut(), plane, |idx, dst| {
        let ni = idx / c;
        let ci = idx % c;
        let src = x.plane(ni, ci);
        let taps = k.k_h.row(ci);
        for i in 0..h {
            let drow = &mut dst[i * w..(i + 1) * w];
            // Input row r contributes tap s = r - i, stored at r - i + H - 1.
            for r in 0..h {
                let coeff = taps[r + (h - 1) - i];
                let srow = &src[r * w..(r + 1) * w];
                for (d, s) in drow.iter_mut().zip(srow.iter()) {
                    *d += coeff * *s;
                }
            }
        }
    });
    Ok(out)
}

/// Horizontal oversized pass, the width mirror of [`parc_oh`]; the pair's
/// bias (if any) is added after this pass.
pub fn parc_ow<T: Scalar>(y: &FeatureMap<T>, k: &OversizedKernelPair<T>) -> Result<FeatureMap<T>> {
    check_binding(y, k)?;
    let (n, c, h, w) = y.shape();
    let mut out = FeatureMap::zeros(n, c, h, w);
    let plane = h * w;
    for_each_chunk_mut(out.data_mut(), plane, |idx, dst| {
        let ni = idx / c;
        let ci = idx % c;
        let src = y.plane(ni, ci);
        let taps = k.k_w.row(ci);
        let bias = k.bias.as_ref().map_or(T::zero(), |b| b[ci]);
        for i in 0..h {
            let srow = &src[i * w..(i + 1) * w];
            let drow = &mut dst[i * w..(i + 1) * w];
            for (j, d) in drow.iter_mut().enumerate() {
                // Input column u contributes tap t = u - j.
                let mut acc = T::zero();
                for (u, s) in srow.iter().enumerate() {
                    acc += taps[u + (w - 1) - j] * *s;
                }
                *d = acc + bias;
            }
        }
    });
    Ok(out)
}

/// Full oversized convolution: vertical pass then horizontal pass. Equal to
/// the opposite order up to floating-point reassociation.
pub fn parc_oversized<T: Scalar>(
    x: &FeatureMap<T>,
    k: &OversizedKernelPair<T>,
) -> Result<FeatureMap<T>> {
    parc_ow(&parc_oh(x, k)?, k)
}

/// Outer product of the two 1-D kernels per channel:
/// `K[c,s,t] = k_h[c,s] * k_w[c,t]`, extents `(2H-1) x (2W-1)`. The result is
/// rank 1 per channel by construction; the pair's bias is not part of the
/// dense kernel.
pub fn compose_2d<T: Scalar>(k: &OversizedKernelPair<T>) -> Dense2DKernel<T> {
    let c = k.channels();
    let kh = k.len_h();
    let kw = k.len_w();
    let mut taps = vec![T::zero(); c * kh * kw];
    for ci in 0..c {
        for (p, hv) in k.k_h.row(ci).iter().enumerate() {
            for (q, wv) in k.k_w.row(ci).iter().enumerate() {
                taps[(ci * kh + p) * kw + q] = *hv * *wv;
            }
        }
    }
    Dense2DKernel::new(c, kh, kw, taps).expect("constructed consistently")
}

fn resample_align_corners<T: Scalar>(row: &[T], new_len: usize) -> Vec<T> {
    let old_len = row.len();
    if new_len == old_len {
        return row.to_vec();
    }
    if new_len == 1 {
        // Single output tap: keep the center of the old kernel.
        return vec![row[(old_len - 1) / 2]];
    }
    let scale = (old_len - 1) as f64 / (new_len - 1) as f64;
    (0..new_len)
        .map(|i| {
            let src = i as f64 * scale;
            let i0 = src.floor() as usize;
            let frac = src - i0 as f64;
            if frac == 0.0 {
                row[i0]
            } else {
                let i1 = (i0 + 1).min(old_len - 1);
                let f = T::from_f64(frac);
                row[i0] * (T::one() - f) + row[i1] * f
            }
        })
        .collect()
}

/// Zooms the kernel pair to a new bound feature size by align-corners linear
/// interpolation of each 1-D kernel (first and last taps map to first and
/// last taps; the center index remains the midpoint). A same-size resize is
/// an exact identity; the bias is untouched.
pub fn resize_kernel_linear<T: Scalar>(
    k: &OversizedKernelPair<T>,
    new_h: usize,
    new_w: usize,
) -> Result<OversizedKernelPair<T>> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::InvalidArgument(
            "resize target sizes must be >= 1".into(),
        ));
    }
    let c = k.channels();
    let (lh, lw) = (2 * new_h - 1, 2 * new_w - 1);
    let mut k_h = Matrix::zeros(c, lh);
    let mut k_w = Matrix::zeros(c, lw);
    for ci in 0..c {
        k_h.row_mut(ci)
            .copy_from_slice(&resample_align_corners(k.k_h.row(ci), lh));
        k_w.row_mut(ci)
            .copy_from_slice(&resample_align_corners(k.k_w.row(ci), lw));
    }
    OversizedKernelPair::new(k_h, k_w, k.bias.clone())
}
