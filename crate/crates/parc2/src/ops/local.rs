//! Local depthwise convolution, dense depthwise kernels, and branch fusion.

use crate::par::for_each_chunk_mut;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::FeatureMap;
use crate::{Error, Result};

/// Per-channel 7x7 depthwise kernel with an optional per-channel bias.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalKernel7<T = f32> {
    channels: usize,
    taps: Vec<T>, // channels * 49, row-major
    bias: Option<Vec<T>>,
}

impl<T: Scalar> LocalKernel7<T> {
    pub const EXTENT: usize = 7;

    pub fn new(channels: usize, taps: Vec<T>, bias: Option<Vec<T>>) -> Result<Self> {
        if taps.len() != channels * 49 {
            return Err(Error::DimMismatch(format!(
                "7x7 kernel needs {} taps, got {}",
                channels * 49,
                taps.len()
            )));
        }
        if let Some(b) = &bias {
            if b.len() != channels {
                return Err(Error::DimMismatch(format!(
                    "bias length {} != channels {}",
                    b.len(),
                    channels
                )));
            }
        }
        Ok(Self {
            channels,
            taps,
            bias,
        })
    }

    pub fn zeros(channels: usize) -> Self {
        Self {
            channels,
            taps: vec![T::zero(); channels * 49],
            bias: None,
        }
    }

    pub fn delta_center(channels: usize) -> Self {
        let mut k = Self::zeros(channels);
        for c in 0..channels {
            k.taps[c * 49 + 24] = T::one(); // (3, 3)
        }
        k
    }

    pub fn random(channels: usize, rng: &mut Rng) -> Self {
        let mut k = Self::zeros(channels);
        for v in &mut k.taps {
            *v = T::from_f64(rng.normal(1.0));
        }
        k
    }

    pub fn random_nonzero(channels: usize, rng: &mut Rng) -> Self {
        let mut k = Self::zeros(channels);
        for v in &mut k.taps {
            *v = T::from_f64(rng.nonzero_tap());
        }
        k
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn taps(&self) -> &[T] {
        &self.taps
    }
    pub fn taps_mut(&mut self) -> &mut [T] {
        &mut self.taps
    }
    pub fn bias(&self) -> Option<&[T]> {
        self.bias.as_deref()
    }
    pub fn bias_mut(&mut self) -> Option<&mut Vec<T>> {
        self.bias.as_mut()
    }

    pub fn set_bias(&mut self, bias: Option<Vec<T>>) -> Result<()> {
        if let Some(b) = &bias {
            if b.len() != self.channels {
                return Err(Error::DimMismatch(format!(
                    "bias length {} != channels {}",
                    b.len(),
                    self.channels
                )));
            }
        }
        self.bias = bias;
        Ok(())
    }

    #[inline]
    pub fn tap(&self, c: usize, p: usize, q: usize) -> T {
        self.taps[(c * 7 + p) * 7 + q]
    }

    pub fn num_params(&self) -> usize {
        self.taps.len() + self.bias.as_ref().map_or(0, Vec::len)
    }

    pub fn cast<U: Scalar>(&self) -> LocalKernel7<U> {
        LocalKernel7 {
            channels: self.channels,
            taps: self.taps.iter().map(|v| U::from_f64(v.to_f64())).collect(),
            bias: self
                .bias
                .as_ref()
                .map(|b| b.iter().map(|v| U::from_f64(v.to_f64())).collect()),
        }
    }
}

/// Per-channel dense depthwise kernel with odd extents, center-indexed.
/// Applied with padding `((kh-1)/2, (kw-1)/2)` so output size equals input
/// size.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense2DKernel<T = f32> {
    channels: usize,
    kh: usize,
    kw: usize,
    taps: Vec<T>,
}

impl<T: Scalar> Dense2DKernel<T> {
    pub fn new(channels: usize, kh: usize, kw: usize, taps: Vec<T>) -> Result<Self> {
        if kh.is_multiple_of(2) || kw.is_multiple_of(2) {
            return Err(Error::DimMismatch(format!(
                "dense kernel extents must be odd, got {kh}x{kw}"
            )));
        }
        if taps.len() != channels * kh * kw {
            return Err(Error::DimMismatch(format!(
                "dense kernel {channels}x{kh}x{kw} needs {} taps, got {}",
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

    pub fn zeros(channels: usize, kh: usize, kw: usize) -> Result<Self> {
        Self::new(channels, kh, kw, vec![T::zero(); channels * kh * kw])
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn kh(&self) -> usize {
        self.kh
    }
    pub fn kw(&self) -> usize {
        self.kw
    }
    pub fn taps(&self) -> &[T] {
        &self.taps
    }
    pub fn taps_mut(&mut self) -> &mut [T] {
        &mut self.taps
    }

    #[inline]
    pub fn tap(&self, c: usize, p: usize, q: usize) -> T {
        self.taps[(c * self.kh + p) * self.kw + q]
    }

    #[inline]
    pub fn tap_mut(&mut self, c: usize, p: usize, q: usize) -> &mut T {
        &mut self.taps[(c * self.kh + p) * self.kw + q]
    }

    /// Re-centers this kernel inside a larger zero kernel. Exact: a kernel
    /// extended by zero taps computes the same convolution.
    pub fn zero_embedded(&self, kh: usize, kw: usize) -> Result<Dense2DKernel<T>> {
        if kh < self.kh || kw < self.kw {
            return Err(Error::DimMismatch(format!(
                "cannot embed {}x{} kernel into {}x{}",
                self.kh, self.kw, kh, kw
            )));
        }
        let mut out = Dense2DKernel::zeros(self.channels, kh, kw)?;
        let off_p = (kh - self.kh) / 2;
        let off_q = (kw - self.kw) / 2;
        for c in 0..self.channels {
            for p in 0..self.kh {
                for q in 0..self.kw {
                    *out.tap_mut(c, p + off_p, q + off_q) = self.tap(c, p, q);
                }
            }
        }
        Ok(out)
    }
}

fn dw_plane<T: Scalar>(
    src: &[T],
    dst: &mut [T],
    taps: &[T],
    kh: usize,
    kw: usize,
    h: usize,
    w: usize,
    bias: T,
) {
    let pad_h = (kh - 1) / 2;
    let pad_w = (kw - 1) / 2;
    for i in 0..h {
        for j in 0..w {
            let mut acc = T::zero();
            for p in 0..kh {
                let si = i as isize + p as isize - pad_h as isize;
                if si < 0 || si >= h as isize {
                    continue;
                }
                let row = &src[si as usize * w..(si as usize + 1) * w];
                let trow = &taps[p * kw..(p + 1) * kw];
                for (q, t) in trow.iter().enumerate() {
                    let sj = j as isize + q as isize - pad_w as isize;
                    if sj < 0 || sj >= w as isize {
                        continue;
                    }
                    acc += *t * row[sj as usize];
                }
            }
            dst[i * w + j] = acc + bias;
        }
    }
}

/// Standard 7x7 depthwise convolution: per-channel cross-correlation with
/// zero padding 3 on all sides; output shape equals input shape.
pub fn dwconv7x7<T: Scalar>(x: &FeatureMap<T>, k: &LocalKernel7<T>) -> Result<FeatureMap<T>> {
    let (n, c, h, w) = x.shape();
    if k.channels() != c {
        return Err(Error::DimMismatch(format!(
            "7x7 kernel has {} channels, input has {}",
            k.channels(),
            c
        )));
    }
    let mut out = FeatureMap::zeros(n, c, h, w);
    let plane = h * w;
    for_each_chunk_mut(out.data_mut(), plane, |idx, dst| {
        let ni = idx / c;
        let ci = idx % c;
        let bias = k.bias().map_or(T::zero(), |b| b[ci]);
        dw_plane(
            x.plane(ni, ci),
            dst,
            &k.taps()[ci * 49..(ci + 1) * 49],
            7,
            7,
            h,
            w,
            bias,
        );
    });
    Ok(out)
}

/// Dense depthwise convolution with a center-indexed odd kernel and same-size
/// zero padding. No bias.
pub fn dense_dwconv<T: Scalar>(x: &FeatureMap<T>, k: &Dense2DKernel<T>) -> Result<FeatureMap<T>> {
    let (n, c, h, w) = x.shape();
    if k.channels() != c {
        return Err(Error::DimMismatch(format!(
            "dense kernel has {} channels, input has {}",
            k.channels(),
            c
        )));
    }
    let mut out = FeatureMap::zeros(n, c, h, w);
    let plane = h * w;
    let kk = k.kh * k.kw;
    for_each_chunk_mut(out.data_mut(), plane, |idx, dst| {
        let ni = idx / c;
        let ci = idx % c;
        dw_plane(
            x.plane(ni, ci),
            dst,
            &k.taps()[ci * kk..(ci + 1) * kk],
            k.kh,
            k.kw,
            h,
            w,
            T::zero(),
        );
    });
    Ok(out)
}

/// Adds the 7x7 kernel into the central window of the dense kernel (centers
/// aligned). Convolving with the fused kernel equals the sum of the two
/// branch outputs; biases are not part of either kernel and must be combined
/// by the caller.
pub fn fuse_local_global<T: Scalar>(
    k2d: &Dense2DKernel<T>,
    k7: &LocalKernel7<T>,
) -> Result<Dense2DKernel<T>> {
    if k2d.channels() != k7.channels() {
        return Err(Error::DimMismatch(format!(
            "fuse: dense kernel has {} channels, local has {}",
            k2d.channels(),
            k7.channels()
        )));
    }
    if k2d.kh() < 7 || k2d.kw() < 7 {
        return Err(Error::DimMismatch(format!(
            "fuse: dense kernel {}x{} smaller than the 7x7 window",
            k2d.kh(),
            k2d.kw()
        )));
    }
    let mut fused = k2d.clone();
    let off_p = (k2d.kh() - 7) / 2;
    let off_q = (k2d.kw() - 7) / 2;
    for c in 0..k7.channels() {
        for p in 0..7 {
            for q in 0..7 {
                *fused.tap_mut(c, p + off_p, q + off_q) += k7.tap(c, p, q);
            }
        }
    }
    Ok(fused)
}
