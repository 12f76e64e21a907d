//! Literal nested-loop convolution oracles. No algorithmic shortcuts: every
//! kernel tap of every output element is visited in declaration order.

use crate::scalar::Scalar;
use crate::tensor::FeatureMap;
use crate::{Error, Result};

/// How out-of-range spatial indices are resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PadMode {
    /// Out-of-range reads are zero; output extent is
    /// `in + pads - kernel + 1` per axis.
    Zero,
    /// Indices wrap modulo the spatial extent; output extent equals the
    /// input and the pads act as the top/left alignment offsets.
    Circular,
}

/// Per-channel depthwise kernel for the oracle: `taps[c][p][q]` stored
/// row-major. Vertical 1-D kernels have `kw == 1`, horizontal ones
/// `kh == 1`, dense kernels both > 1.
#[derive(Clone, Debug)]
pub struct OracleKernel<T = f32> {
    pub channels: usize,
    pub kh: usize,
    pub kw: usize,
    pub taps: Vec<T>,
}

impl<T: Scalar> OracleKernel<T> {
    pub fn new(channels: usize, kh: usize, kw: usize, taps: Vec<T>) -> Result<Self> {
        if taps.len() != channels * kh * kw {
            return Err(Error::DimMismatch(format!(
                "oracle kernel {}x{}x{} needs {} taps, got {}",
                channels,
                kh,
                kw,
                channels * kh * kw,
                taps.len()
            )));
        }
        Ok(Self {
            channels,
            kh,
            kw,
            taps,
        })
    }

    #[inline]
    fn tap(&self, c: usize, p: usize, q: usize) -> T {
        self.taps[(c * self.kh + p) * self.kw + q]
    }
}

/// Direct-sum depthwise convolution (cross-correlation indexing):
///
/// `out[n,c,i,j] = sum_{p,q} k[c,p,q] * X[n,c, i + p - top, j + q - left]`
///
/// where out-of-range reads follow `mode`. Pads are `[top, bottom, left,
/// right]`.
pub fn naive_conv_oracle<T: Scalar>(
    x: &FeatureMap<T>,
    kernel: &OracleKernel<T>,
    pads: [usize; 4],
    mode: PadMode,
) -> Result<FeatureMap<T>> {
    let (n, c, h, w) = x.shape();
    if kernel.channels != c {
        return Err(Error::DimMismatch(format!(
            "oracle kernel has {} channels, input has {}",
            kernel.channels, c
        )));
    }
    let [top, bottom, left, right] = pads;
    let (out_h, out_w) = match mode {
        PadMode::Zero => {
            let oh = (h + top + bottom)
                .checked_sub(kernel.kh - 1)
                .ok_or_else(|| Error::DimMismatch("kernel taller than padded input".into()))?;
            let ow = (w + left + right)
                .checked_sub(kernel.kw - 1)
                .ok_or_else(|| Error::DimMismatch("kernel wider than padded input".into()))?;
            (oh, ow)
        }
        PadMode::Circular => (h, w),
    };
    let mut out = FeatureMap::zeros(n, c, out_h, out_w);
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..out_h {
                for j in 0..out_w {
                    let mut acc = T::zero();
                    for p in 0..kernel.kh {
                        for q in 0..kernel.kw {
                            let src_i = i as isize + p as isize - top as isize;
                            let src_j = j as isize + q as isize - left as isize;
                            let v = match mode {
                                PadMode::Zero => {
                                    if src_i < 0
                                        || src_i >= h as isize
                                        || src_j < 0
                                        || src_j >= w as isize
                                    {
                                        T::zero()
                                    } else {
                                        x.at(ni, ci, src_i as usize, src_j as usize)
                                    }
                                }
                                PadMode::Circular => {
                                    let mi = src_i.rem_euclid(h as isize) as usize;
                                    let mj = src_j.rem_euclid(w as isize) as usize;
                                    x.at(ni, ci, mi, mj)
                                }
                            };
                            acc += kernel.tap(ci, p, q) * v;
                        }
                    }
                    out.set(ni, ci, i, j, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Naive triple-loop pointwise convolution:
/// `out[n,co,i,j] = sum_ci w[co][ci] * x[n,ci,i,j] + b[co]`.
/// `weight` is row-major `(c_out, c_in)`.
pub fn naive_pointwise_oracle<T: Scalar>(
    x: &FeatureMap<T>,
    weight: &[T],
    bias: &[T],
    c_out: usize,
) -> Result<FeatureMap<T>> {
    let (n, c, h, w) = x.shape();
    if weight.len() != c_out * c || bias.len() != c_out {
        return Err(Error::DimMismatch(
            "pointwise oracle weight/bias sizes".into(),
        ));
    }
    let mut out = FeatureMap::zeros(n, c_out, h, w);
    for ni in 0..n {
        for co in 0..c_out {
            for i in 0..h {
                for j in 0..w {
                    let mut acc = bias[co];
                    for ci in 0..c {
                        acc += weight[co * c + ci] * x.at(ni, ci, i, j);
                    }
                    out.set(ni, co, i, j, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Global circular depthwise convolution in the style of the predecessor
/// architecture: a vertical kernel of length exactly `H` followed by a
/// horizontal kernel of length exactly `W`, both indexed modulo the spatial
/// extent. Tap index 0 aligns with the output position (offset 0), so a
/// delta at index 0 is the identity. Exactly cyclic-shift equivariant.
pub fn circular_conv_reference<T: Scalar>(
    x: &FeatureMap<T>,
    k_h: &[T],
    k_w: &[T],
) -> Result<FeatureMap<T>> {
    let (_, c, h, w) = x.shape();
    if k_h.len() != c * h {
        return Err(Error::DimMismatch(format!(
            "circular vertical kernel needs {}x{} taps, got {}",
            c,
            h,
            k_h.len()
        )));
    }
    if k_w.len() != c * w {
        return Err(Error::DimMismatch(format!(
            "circular horizontal kernel needs {}x{} taps, got {}",
            c,
            w,
            k_w.len()
        )));
    }
    let vertical = OracleKernel::new(c, h, 1, k_h.to_vec())?;
    let mid = naive_conv_oracle(x, &vertical, [0, 0, 0, 0], PadMode::Circular)?;
    let horizontal = OracleKernel::new(c, 1, w, k_w.to_vec())?;
    naive_conv_oracle(&mid, &horizontal, [0, 0, 0, 0], PadMode::Circular)
}
