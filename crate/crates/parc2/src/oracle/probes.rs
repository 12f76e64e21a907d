//! Shift and receptive-field probes.

use crate::ops::{dwconv7x7_vjp, parc_oversized_vjp, LocalKernel7, OversizedKernelPair};
use crate::scalar::Scalar;
use crate::tensor::FeatureMap;
use crate::Result;

/// Cyclic shift of the spatial extent by `(dy, dx)`:
/// `out[i, j] = x[(i - dy) mod H, (j - dx) mod W]`.
pub fn cyclic_roll<T: Scalar>(x: &FeatureMap<T>, dy: isize, dx: isize) -> FeatureMap<T> {
    let (n, c, h, w) = x.shape();
    let mut out = FeatureMap::zeros(n, c, h, w);
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let si = (i as isize - dy).rem_euclid(h as isize) as usize;
                    let sj = (j as isize - dx).rem_euclid(w as isize) as usize;
                    out.set(ni, ci, i, j, x.at(ni, ci, si, sj));
                }
            }
        }
    }
    out
}

/// Plain translation with zero fill (no wrap-around).
pub fn translate_zero<T: Scalar>(x: &FeatureMap<T>, dy: isize, dx: isize) -> FeatureMap<T> {
    let (n, c, h, w) = x.shape();
    let mut out = FeatureMap::zeros(n, c, h, w);
    for ni in 0..n {
        for ci in 0..c {
            for i in 0..h {
                for j in 0..w {
                    let si = i as isize - dy;
                    let sj = j as isize - dx;
                    if si >= 0 && si < h as isize && sj >= 0 && sj < w as isize {
                        out.set(ni, ci, i, j, x.at(ni, ci, si as usize, sj as usize));
                    }
                }
            }
        }
    }
    out
}

/// Operator under the receptive-field probe.
pub enum ProbeOp<'a, T: Scalar> {
    Oversized(&'a OversizedKernelPair<T>),
    Local7(&'a LocalKernel7<T>),
}

/// Boolean sensitivity matrix over (output position x input position) for a
/// single-channel `(1, 1, h, w)` instance: entry `[o][i]` is true iff the
/// derivative of output position `o` with respect to input position `i` is
/// nonzero. Computed analytically by running the operator's VJP against
/// one-hot cotangents.
pub fn receptive_field_probe<T: Scalar>(
    op: &ProbeOp<'_, T>,
    h: usize,
    w: usize,
) -> Result<Vec<Vec<bool>>> {
    let x = FeatureMap::<T>::zeros(1, 1, h, w);
    let mut rows = Vec::with_capacity(h * w);
    for oi in 0..h {
        for oj in 0..w {
            let mut cot = FeatureMap::<T>::zeros(1, 1, h, w);
            cot.set(0, 0, oi, oj, T::one());
            let grad_in = match op {
                ProbeOp::Oversized(k) => parc_oversized_vjp(&cot, &x, k)?.input,
                ProbeOp::Local7(k) => dwconv7x7_vjp(&cot, &x, k)?.input,
            };
            rows.push(
                grad_in
                    .data()
                    .iter()
                    .map(|v| v.abs().to_f64() > 0.0)
                    .collect(),
            );
        }
    }
    Ok(rows)
}
