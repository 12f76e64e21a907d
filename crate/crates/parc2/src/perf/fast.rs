//! Tiled depthwise convolution executor.
//!
//! Per channel plane, each output tile is computed by gathering the tile's
//! receptive fields into a tap-major patch block (`patch_rows = kh * kw`
//! rows, one tile position per column; out-of-range reads are materialized
//! as zeros) and accumulating `out += taps[t] * patch[t, :]` with `t`
//! ascending. The accumulation order per output element is therefore fixed
//! by the plan, outputs are bit-identical at any thread count, and the
//! executed multiply count equals the plan's accounting exactly.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::ops::Dense2DKernel;
use crate::par::{for_each_chunk_mut_mode, ExecMode};
use crate::scalar::Scalar;
use crate::tensor::{FeatureMap, Matrix};
use crate::{Error, Result};

use super::plan::LoweringPlan;

/// Kernel handed to the fast path: one of the two 1-D oversized banks or a
/// dense 2-D depthwise kernel. Biases are never part of the lowered kernel.
#[derive(Clone, Copy, Debug)]
pub enum DwKernel<'a, T = f32> {
    /// Per-channel vertical taps (`kw = 1`); rows are channels.
    Vertical(&'a Matrix<T>),
    /// Per-channel horizontal taps (`kh = 1`); rows are channels.
    Horizontal(&'a Matrix<T>),
    Dense(&'a Dense2DKernel<T>),
}

impl<'a, T: Scalar> DwKernel<'a, T> {
    pub fn channels(&self) -> usize {
        match self {
            DwKernel::Vertical(m) | DwKernel::Horizontal(m) => m.rows(),
            DwKernel::Dense(k) => k.channels(),
        }
    }

    pub fn extents(&self) -> (usize, usize) {
        match self {
            DwKernel::Vertical(m) => (m.cols(), 1),
            DwKernel::Horizontal(m) => (1, m.cols()),
            DwKernel::Dense(k) => (k.kh(), k.kw()),
        }
    }

    fn taps(&self, c: usize) -> &'a [T] {
        match self {
            DwKernel::Vertical(m) | DwKernel::Horizontal(m) => m.row(c),
            DwKernel::Dense(k) => {
                let kk = k.kh() * k.kw();
                &k.taps()[c * kk..(c + 1) * kk]
            }
        }
    }
}

fn check_plan<T: Scalar>(
    x: &FeatureMap<T>,
    kernel: &DwKernel<'_, T>,
    plan: &LoweringPlan,
) -> Result<()> {
    let (_, c, h, w) = x.shape();
    let (kh, kw) = kernel.extents();
    if kernel.channels() != c {
        return Err(Error::DimMismatch(format!(
            "fast path kernel has {} channels, input has {}",
            kernel.channels(),
            c
        )));
    }
    if plan.channels != c || plan.h != h || plan.w != w || plan.kh != kh || plan.kw != kw {
        return Err(Error::DimMismatch(format!(
            "plan is for {}x{}x{} under {}x{}, got {}x{}x{} under {}x{}",
            plan.channels, plan.h, plan.w, plan.kh, plan.kw, c, h, w, kh, kw
        )));
    }
    Ok(())
}

fn run_plane<T: Scalar>(
    src: &[T],
    dst: &mut [T],
    taps: &[T],
    plan: &LoweringPlan,
    ws: &mut [T],
    tile_out: &mut [T],
) -> u64 {
    let (h, w) = (plan.h, plan.w);
    let (kh, kw) = (plan.kh, plan.kw);
    let pad_h = (kh - 1) / 2;
    let pad_w = (kw - 1) / 2;
    let mut macs = 0u64;
    let mut i0 = 0;
    while i0 < h {
        let th = plan.tile_h.min(h - i0);
        let mut j0 = 0;
        while j0 < w {
            let tw = plan.tile_w.min(w - j0);
            let cols = th * tw;
            // Gather: patch row t holds tap t's input values over the tile.
            for p in 0..kh {
                for q in 0..kw {
                    let row = &mut ws[(p * kw + q) * cols..(p * kw + q + 1) * cols];
                    for ti in 0..th {
                        let seg = &mut row[ti * tw..(ti + 1) * tw];
                        let si = (i0 + ti + p) as isize - pad_h as isize;
                        if si < 0 || si >= h as isize {
                            seg.fill(T::zero());
                            continue;
                        }
                        let srow = &src[si as usize * w..(si as usize + 1) * w];
                        let sj0 = (j0 + q) as isize - pad_w as isize;
                        // columns sj0 .. sj0 + tw, clipped against [0, w)
                        let lead = (-sj0).clamp(0, tw as isize) as usize;
                        let valid_end = (w as isize - sj0).clamp(0, tw as isize) as usize;
                        seg[..lead].fill(T::zero());
                        if valid_end > lead {
                            seg[lead..valid_end].copy_from_slice(
                                &srow[(sj0 + lead as isize) as usize
                                    ..(sj0 + valid_end as isize) as usize],
                            );
                        }
                        seg[valid_end..].fill(T::zero());
                    }
                }
            }
            // Accumulate in ascending tap order.
            let out = &mut tile_out[..cols];
            out.fill(T::zero());
            for (t, coeff) in taps.iter().enumerate() {
                let row = &ws[t * cols..(t + 1) * cols];
                for (o, v) in out.iter_mut().zip(row.iter()) {
                    *o += *coeff * *v;
                }
            }
            macs += (taps.len() * cols) as u64;
            // Scatter the tile into the output plane.
            for ti in 0..th {
                let drow = (i0 + ti) * w + j0;
                dst[drow..drow + tw].copy_from_slice(&out[ti * tw..(ti + 1) * tw]);
            }
            j0 += tw;
        }
        i0 += th;
    }
    macs
}

/// Same-size depthwise convolution through the plan's tiling, with the
/// executed multiply-accumulate count (`plan.macs` per batch item).
pub fn fast_dwconv_counting<T: Scalar>(
    x: &FeatureMap<T>,
    kernel: DwKernel<'_, T>,
    plan: &LoweringPlan,
    mode: ExecMode,
) -> Result<(FeatureMap<T>, u64)> {
    check_plan(x, &kernel, plan)?;
    let (n, c, h, w) = x.shape();
    let mut out = FeatureMap::zeros(n, c, h, w);
    let plane = h * w;
    let total_macs = AtomicU64::new(0);
    for_each_chunk_mut_mode(mode, out.data_mut(), plane, |idx, dst| {
        let ni = idx / c;
        let ci = idx % c;
        let mut ws = vec![T::zero(); plan.patch_rows * plan.patch_cols];
        let mut tile_out = vec![T::zero(); plan.patch_cols];
        let macs = run_plane(
            x.plane(ni, ci),
            dst,
            kernel.taps(ci),
            plan,
            &mut ws,
            &mut tile_out,
        );
        total_macs.fetch_add(macs, Ordering::Relaxed);
    });
    Ok((out, total_macs.into_inner()))
}

/// [`fast_dwconv_counting`] without the counter.
pub fn fast_dwconv_with_mode<T: Scalar>(
    x: &FeatureMap<T>,
    kernel: DwKernel<'_, T>,
    plan: &LoweringPlan,
    mode: ExecMode,
) -> Result<FeatureMap<T>> {
    Ok(fast_dwconv_counting(x, kernel, plan, mode)?.0)
}

/// Fast depthwise convolution in the default (parallel-capable) mode.
pub fn fast_dwconv<T: Scalar>(
    x: &FeatureMap<T>,
    kernel: DwKernel<'_, T>,
    plan: &LoweringPlan,
) -> Result<FeatureMap<T>> {
    fast_dwconv_with_mode(x, kernel, plan, ExecMode::Parallel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::OversizedKernelPair;
    use crate::oracle::{check_equivalence, naive_conv_oracle, OracleKernel, PadMode};
    use crate::perf::plan::{plan_lowering, DEFAULT_WORKSPACE_BUDGET};
    use crate::rng::Rng;
    use crate::tensor::random_normal;

    #[test]
    fn delta_center_identity() {
        let mut rng = Rng::new(60);
        let x: FeatureMap<f32> = random_normal((1, 2, 6, 5), &mut rng, 1.0);
        let k = OversizedKernelPair::delta_center(2, 6, 5);
        let plan = plan_lowering(2, 6, 5, 11, 1, DEFAULT_WORKSPACE_BUDGET).unwrap();
        let y = fast_dwconv(&x, DwKernel::Vertical(k.k_h()), &plan).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matches_oracle_on_all_kernel_kinds() {
        let mut rng = Rng::new(61);
        let x: FeatureMap<f32> = random_normal((2, 3, 9, 7), &mut rng, 1.0);
        let pair = OversizedKernelPair::random(3, 9, 7, &mut rng);

        let plan_v = plan_lowering(3, 9, 7, 17, 1, DEFAULT_WORKSPACE_BUDGET).unwrap();
        let fast_v = fast_dwconv(&x, DwKernel::Vertical(pair.k_h()), &plan_v).unwrap();
        let ok_v = OracleKernel::new(3, 17, 1, pair.k_h().data().to_vec()).unwrap();
        let ref_v = naive_conv_oracle(&x, &ok_v, [8, 8, 0, 0], PadMode::Zero).unwrap();
        assert!(check_equivalence(&fast_v, &ref_v, 1e-4).unwrap().pass);

        let plan_h = plan_lowering(3, 9, 7, 1, 13, DEFAULT_WORKSPACE_BUDGET).unwrap();
        let fast_h = fast_dwconv(&x, DwKernel::Horizontal(pair.k_w()), &plan_h).unwrap();
        let ok_h = OracleKernel::new(3, 1, 13, pair.k_w().data().to_vec()).unwrap();
        let ref_h = naive_conv_oracle(&x, &ok_h, [0, 0, 6, 6], PadMode::Zero).unwrap();
        assert!(check_equivalence(&fast_h, &ref_h, 1e-4).unwrap().pass);

        let dense = crate::ops::compose_2d(&pair);
        let plan_d = plan_lowering(3, 9, 7, 17, 13, DEFAULT_WORKSPACE_BUDGET).unwrap();
        let fast_d = fast_dwconv(&x, DwKernel::Dense(&dense), &plan_d).unwrap();
        let ok_d = OracleKernel::new(3, 17, 13, dense.taps().to_vec()).unwrap();
        let ref_d = naive_conv_oracle(&x, &ok_d, [8, 8, 6, 6], PadMode::Zero).unwrap();
        assert!(check_equivalence(&fast_d, &ref_d, 1e-4).unwrap().pass);
    }

    #[test]
    fn separable_fast_equals_dense_fast() {
        let mut rng = Rng::new(62);
        let x: FeatureMap<f32> = random_normal((1, 2, 8, 6), &mut rng, 1.0);
        let pair = OversizedKernelPair::random(2, 8, 6, &mut rng);
        let plan_v = plan_lowering(2, 8, 6, 15, 1, DEFAULT_WORKSPACE_BUDGET).unwrap();
        let plan_h = plan_lowering(2, 8, 6, 1, 11, DEFAULT_WORKSPACE_BUDGET).unwrap();
        let mid = fast_dwconv(&x, DwKernel::Vertical(pair.k_h()), &plan_v).unwrap();
        let separable = fast_dwconv(&mid, DwKernel::Horizontal(pair.k_w()), &plan_h).unwrap();

        let dense = crate::ops::compose_2d(&pair);
        let plan_d = plan_lowering(2, 8, 6, 15, 11, DEFAULT_WORKSPACE_BUDGET).unwrap();
        let fused = fast_dwconv(&x, DwKernel::Dense(&dense), &plan_d).unwrap();
        assert!(check_equivalence(&separable, &fused, 1e-4).unwrap().pass);
    }

    #[test]
    fn sequential_and_parallel_are_bitwise_equal() {
        let mut rng = Rng::new(63);
        let x: FeatureMap<f32> = random_normal((2, 5, 12, 10), &mut rng, 1.0);
        let pair = OversizedKernelPair::random(5, 12, 10, &mut rng);
        let plan = plan_lowering(5, 12, 10, 23, 1, 1024).unwrap(); // force many tiles
        let seq = fast_dwconv_with_mode(
            &x,
            DwKernel::Vertical(pair.k_h()),
            &plan,
            ExecMode::Sequential,
        )
        .unwrap();
        let par = fast_dwconv_with_mode(
            &x,
            DwKernel::Vertical(pair.k_h()),
            &plan,
            ExecMode::Parallel,
        )
        .unwrap();
        assert_eq!(seq, par);
    }

    #[test]
    fn executed_macs_equal_plan() {
        let mut rng = Rng::new(64);
        let x: FeatureMap<f32> = random_normal((1, 3, 7, 9), &mut rng, 1.0);
        let pair = OversizedKernelPair::random(3, 7, 9, &mut rng);
        let plan = plan_lowering(3, 7, 9, 13, 1, 512).unwrap();
        let (_, macs) = fast_dwconv_counting(
            &x,
            DwKernel::Vertical(pair.k_h()),
            &plan,
            ExecMode::Sequential,
        )
        .unwrap();
        assert_eq!(macs, plan.macs);
    }

    #[test]
    fn plan_shape_mismatch_rejected() {
        let x = FeatureMap::<f32>::zeros(1, 2, 6, 6);
        let pair = OversizedKernelPair::<f32>::zeros(2, 6, 6);
        let plan = plan_lowering(2, 6, 5, 11, 1, 1024).unwrap();
        assert!(fast_dwconv(&x, DwKernel::Vertical(pair.k_h()), &plan).is_err());
    }
}
