//! Exact vector-Jacobian products of the forward operators, used for
//! gradient verification against central finite differences.

use crate::scalar::Scalar;
use crate::tensor::{FeatureMap, Matrix, PointwiseParams};
use crate::{Error, Result};

use super::local::LocalKernel7;
use super::oversized::{parc_oh, OversizedKernelPair};

/// Gradients of one 1-D oversized pass.
#[derive(Clone, Debug)]
pub struct PassGrads<T = f32> {
    pub input: FeatureMap<T>,
    /// Per-channel tap gradients, same layout as the kernel bank.
    pub taps: Matrix<T>,
    /// Present iff the pass applied a bias (only the horizontal pass does).
    pub bias: Option<Vec<T>>,
}

/// Gradients of the composed oversized convolution.
#[derive(Clone, Debug)]
pub struct OversizedGrads<T = f32> {
    pub input: FeatureMap<T>,
    pub k_h: Matrix<T>,
    pub k_w: Matrix<T>,
    pub bias: Option<Vec<T>>,
}

/// Gradients of the 7x7 depthwise convolution.
#[derive(Clone, Debug)]
pub struct DwconvGrads<T = f32> {
    pub input: FeatureMap<T>,
    pub taps: Vec<T>,
    pub bias: Option<Vec<T>>,
}

/// Gradients of the pointwise convolution.
#[derive(Clone, Debug)]
pub struct PointwiseGrads<T = f32> {
    pub input: FeatureMap<T>,
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

fn check_same_shape<T: Scalar>(a: &FeatureMap<T>, b: &FeatureMap<T>, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimMismatch(format!(
            "{what}: cotangent shape {:?} != forward output shape {:?}",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

/// Backward of [`parc_oh`]: the input gradient is the correlation of the
/// cotangent with the index-flipped kernel under the same zero-extension
/// rule; `grad_taps[c, s] = sum_{n,i,j} g[n,c,i,j] * X[n,c,i+s,j]`.
pub fn parc_oh_vjp<T: Scalar>(
    grad_out: &FeatureMap<T>,
    x: &FeatureMap<T>,
    k: &OversizedKernelPair<T>,
) -> Result<PassGrads<T>> {
    check_same_shape(grad_out, x, "parc_oh_vjp")?;
    let (n, c, h, w) = x.shape();
    if k.channels() != c || k.len_h() != 2 * h - 1 {
        return Err(Error::DimMismatch("parc_oh_vjp: kernel binding".into()));
    }
    let mut grad_in = FeatureMap::zeros(n, c, h, w);
    let mut grad_taps = Matrix::zeros(c, k.len_h());
    for ni in 0..n {
        for ci in 0..c {
            let g = grad_out.plane(ni, ci);
            let src = x.plane(ni, ci);
            let taps = k.k_h().row(ci);
            let gi = grad_in.plane_mut(ni, ci);
            // d out[i] / d x[r] = taps[r - i + H - 1]; always in range.
            for r in 0..h {
                let grow = &mut gi[r * w..(r + 1) * w];
                for i in 0..h {
                    let coeff = taps[r + (h - 1) - i];
                    let gorow = &g[i * w..(i + 1) * w];
                    for (d, s) in grow.iter_mut().zip(gorow.iter()) {
                        *d += coeff * *s;
                    }
                }
            }
            let trow = grad_taps.row_mut(ci);
            for (slot, t) in trow.iter_mut().enumerate() {
                let s = slot as isize - (h as isize - 1);
                let mut acc = T::zero();
                for i in 0..h {
                    let r = i as isize + s;
                    if r < 0 || r >= h as isize {
                        continue;
                    }
                    let gorow = &g[i * w..(i + 1) * w];
                    let xrow = &src[r as usize * w..(r as usize + 1) * w];
                    for (gv, xv) in gorow.iter().zip(xrow.iter()) {
                        acc += *gv * *xv;
                    }
                }
                *t += acc;
            }
        }
    }
    Ok(PassGrads {
        input: grad_in,
        taps: grad_taps,
        bias: None,
    })
}

/// Backward of [`super::parc_ow`], including the bias gradient when the pair
/// carries one.
pub fn parc_ow_vjp<T: Scalar>(
    grad_out: &FeatureMap<T>,
    y: &FeatureMap<T>,
    k: &OversizedKernelPair<T>,
) -> Result<PassGrads<T>> {
    check_same_shape(grad_out, y, "parc_ow_vjp")?;
    let (n, c, h, w) = y.shape();
    if k.channels() != c || k.len_w() != 2 * w - 1 {
        return Err(Error::DimMismatch("parc_ow_vjp: kernel binding".into()));
    }
    let mut grad_in = FeatureMap::zeros(n, c, h, w);
    let mut grad_taps = Matrix::zeros(c, k.len_w());
    let mut grad_bias = k.bias().map(|_| vec![T::zero(); c]);
    for ni in 0..n {
        for ci in 0..c {
            let g = grad_out.plane(ni, ci);
            let src = y.plane(ni, ci);
            let taps = k.k_w().row(ci);
            let gi = grad_in.plane_mut(ni, ci);
            for i in 0..h {
                let grow = &g[i * w..(i + 1) * w];
                let irow = &mut gi[i * w..(i + 1) * w];
                for (u, d) in irow.iter_mut().enumerate() {
                    let mut acc = T::zero();
                    for (j, gv) in grow.iter().enumerate() {
                        acc += taps[u + (w - 1) - j] * *gv;
                    }
                    *d = acc;
                }
            }
            let trow = grad_taps.row_mut(ci);
            for (slot, t) in trow.iter_mut().enumerate() {
                let s = slot as isize - (w as isize - 1);
                let mut acc = T::zero();
                for i in 0..h {
                    let grow = &g[i * w..(i + 1) * w];
                    for (j, gv) in grow.iter().enumerate() {
                        let u = j as isize + s;
                        if u < 0 || u >= w as isize {
                            continue;
                        }
                        acc += *gv * src[i * w + u as usize];
                    }
                }
                *t += acc;
            }
            if let Some(gb) = grad_bias.as_mut() {
                let mut acc = T::zero();
                for gv in g {
                    acc += *gv;
                }
                gb[ci] += acc;
            }
        }
    }
    Ok(PassGrads {
        input: grad_in,
        taps: grad_taps,
        bias: grad_bias,
    })
}

/// Backward of the composed oversized convolution; recomputes the
/// intermediate vertical-pass output and chains the two pass VJPs.
pub fn parc_oversized_vjp<T: Scalar>(
    grad_out: &FeatureMap<T>,
    x: &FeatureMap<T>,
    k: &OversizedKernelPair<T>,
) -> Result<OversizedGrads<T>> {
    let mid = parc_oh(x, k)?;
    let ow = parc_ow_vjp(grad_out, &mid, k)?;
    let oh = parc_oh_vjp(&ow.input, x, k)?;
    Ok(OversizedGrads {
        input: oh.input,
        k_h: oh.taps,
        k_w: ow.taps,
        bias: ow.bias,
    })
}

/// Backward of [`super::dwconv7x7`].
pub fn dwconv7x7_vjp<T: Scalar>(
    grad_out: &FeatureMap<T>,
    x: &FeatureMap<T>,
    k: &LocalKernel7<T>,
) -> Result<DwconvGrads<T>> {
    check_same_shape(grad_out, x, "dwconv7x7_vjp")?;
    let (n, c, h, w) = x.shape();
    if k.channels() != c {
        return Err(Error::DimMismatch("dwconv7x7_vjp: channel count".into()));
    }
    let mut grad_in = FeatureMap::zeros(n, c, h, w);
    let mut grad_taps = vec![T::zero(); c * 49];
    let mut grad_bias = k.bias().map(|_| vec![T::zero(); c]);
    for ni in 0..n {
        for ci in 0..c {
            let g = grad_out.plane(ni, ci);
            let src = x.plane(ni, ci);
            let gi = grad_in.plane_mut(ni, ci);
            for r in 0..h {
                for t in 0..w {
                    let mut acc = T::zero();
                    for p in 0..7usize {
                        let i = r as isize - (p as isize - 3);
                        if i < 0 || i >= h as isize {
                            continue;
                        }
                        for q in 0..7usize {
                            let j = t as isize - (q as isize - 3);
                            if j < 0 || j >= w as isize {
                                continue;
                            }
                            acc += k.tap(ci, p, q) * g[i as usize * w + j as usize];
                        }
                    }
                    gi[r * w + t] = acc;
                }
            }
            for p in 0..7usize {
                for q in 0..7usize {
                    let mut acc = T::zero();
                    for i in 0..h {
                        let si = i as isize + p as isize - 3;
                        if si < 0 || si >= h as isize {
                            continue;
                        }
                        for j in 0..w {
                            let sj = j as isize + q as isize - 3;
                            if sj < 0 || sj >= w as isize {
                                continue;
                            }
                            acc += g[i * w + j] * src[si as usize * w + sj as usize];
                        }
                    }
                    grad_taps[(ci * 7 + p) * 7 + q] += acc;
                }
            }
            if let Some(gb) = grad_bias.as_mut() {
                let mut acc = T::zero();
                for gv in g {
                    acc += *gv;
                }
                gb[ci] += acc;
            }
        }
    }
    Ok(DwconvGrads {
        input: grad_in,
        taps: grad_taps,
        bias: grad_bias,
    })
}

/// Backward of [`crate::tensor::pointwise_conv`].
pub fn pointwise_vjp<T: Scalar>(
    grad_out: &FeatureMap<T>,
    x: &FeatureMap<T>,
    p: &PointwiseParams<T>,
) -> Result<PointwiseGrads<T>> {
    let (n, c, h, w) = x.shape();
    let (gn, gc, gh, gw) = grad_out.shape();
    if gn != n || gh != h || gw != w || gc != p.c_out() || p.c_in() != c {
        return Err(Error::DimMismatch(
            "pointwise_vjp: cotangent/parameter shapes".into(),
        ));
    }
    let c_out = p.c_out();
    let mut grad_in = FeatureMap::zeros(n, c, h, w);
    let mut grad_w = Matrix::zeros(c_out, c);
    let mut grad_b = vec![T::zero(); c_out];
    for ni in 0..n {
        for co in 0..c_out {
            let g = grad_out.plane(ni, co);
            for ci in 0..c {
                let coeff = p.weight.at(co, ci);
                let gi = grad_in.plane_mut(ni, ci);
                let src = x.plane(ni, ci);
                let mut waccum = T::zero();
                for ((d, gv), xv) in gi.iter_mut().zip(g.iter()).zip(src.iter()) {
                    *d += coeff * *gv;
                    waccum += *gv * *xv;
                }
                let cur = grad_w.at(co, ci);
                grad_w.set(co, ci, cur + waccum);
            }
            let mut acc = T::zero();
            for gv in g {
                acc += *gv;
            }
            grad_b[co] += acc;
        }
    }
    Ok(PointwiseGrads {
        input: grad_in,
        weight: grad_w,
        bias: grad_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{dwconv7x7, parc_oversized};
    use crate::oracle::{finite_diff_grad, finite_diff_params, max_rel_err};
    use crate::rng::Rng;
    use crate::tensor::{pointwise_conv, random_normal};

    fn weighted_sum(out: &FeatureMap<f64>, weights: &FeatureMap<f64>) -> f64 {
        out.data()
            .iter()
            .zip(weights.data().iter())
            .map(|(a, b)| a * b)
            .sum()
    }

    #[test]
    fn delta_kernel_passes_cotangent_through() {
        let mut rng = Rng::new(20);
        let x: FeatureMap<f32> = random_normal((1, 2, 4, 3), &mut rng, 1.0);
        let g: FeatureMap<f32> = random_normal((1, 2, 4, 3), &mut rng, 1.0);
        let k = OversizedKernelPair::delta_center(2, 4, 3);
        let oh = parc_oh_vjp(&g, &x, &k).unwrap();
        assert_eq!(oh.input, g);
        let ow = parc_ow_vjp(&g, &x, &k).unwrap();
        assert_eq!(ow.input, g);
        let dw = dwconv7x7_vjp(&g, &x, &LocalKernel7::delta_center(2)).unwrap();
        assert_eq!(dw.input, g);
    }

    #[test]
    fn zero_cotangent_zero_grads() {
        let mut rng = Rng::new(21);
        let x: FeatureMap<f32> = random_normal((1, 2, 3, 3), &mut rng, 1.0);
        let g = FeatureMap::zeros(1, 2, 3, 3);
        let k = OversizedKernelPair::random(2, 3, 3, &mut rng);
        let grads = parc_oversized_vjp(&g, &x, &k).unwrap();
        assert!(grads.input.data().iter().all(|v| *v == 0.0));
        assert!(grads.k_h.data().iter().all(|v| *v == 0.0));
        assert!(grads.k_w.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn oversized_matches_finite_differences() {
        let mut rng = Rng::new(22);
        let x: FeatureMap<f64> = random_normal((1, 2, 4, 3), &mut rng, 1.0);
        let mut k: OversizedKernelPair<f64> = OversizedKernelPair::random(2, 4, 3, &mut rng);
        k.set_bias(Some(vec![0.3, -0.4])).unwrap();
        let cot: FeatureMap<f64> = random_normal((1, 2, 4, 3), &mut rng, 1.0);

        let grads = parc_oversized_vjp(&cot, &x, &k).unwrap();

        let fd_input = finite_diff_grad(
            |probe| weighted_sum(&parc_oversized(probe, &k).unwrap(), &cot),
            &x,
            1e-5,
        )
        .unwrap();
        let analytic: Vec<f64> = grads.input.data().to_vec();
        let numeric: Vec<f64> = fd_input.data().to_vec();
        assert!(max_rel_err(&analytic, &numeric) <= 1e-6);

        let kh_flat: Vec<f64> = k.k_h().data().to_vec();
        let fd_kh = finite_diff_params(
            |taps| {
                let mut kk = k.clone();
                kk.k_h_mut().data_mut().copy_from_slice(taps);
                weighted_sum(&parc_oversized(&x, &kk).unwrap(), &cot)
            },
            &kh_flat,
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(grads.k_h.data(), &fd_kh) <= 1e-6);

        let bias_flat: Vec<f64> = k.bias().unwrap().to_vec();
        let fd_bias = finite_diff_params(
            |b| {
                let mut kk = k.clone();
                kk.set_bias(Some(b.to_vec())).unwrap();
                weighted_sum(&parc_oversized(&x, &kk).unwrap(), &cot)
            },
            &bias_flat,
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(grads.bias.as_ref().unwrap(), &fd_bias) <= 1e-6);
    }

    #[test]
    fn dwconv_matches_finite_differences() {
        let mut rng = Rng::new(23);
        let x: FeatureMap<f64> = random_normal((1, 2, 4, 3), &mut rng, 1.0);
        let k: LocalKernel7<f64> = LocalKernel7::random(2, &mut rng);
        let cot: FeatureMap<f64> = random_normal((1, 2, 4, 3), &mut rng, 1.0);
        let grads = dwconv7x7_vjp(&cot, &x, &k).unwrap();
        let fd_input = finite_diff_grad(
            |probe| weighted_sum(&dwconv7x7(probe, &k).unwrap(), &cot),
            &x,
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(grads.input.data(), fd_input.data()) <= 1e-6);

        let fd_taps = finite_diff_params(
            |taps| {
                let kk = LocalKernel7::new(2, taps.to_vec(), None).unwrap();
                weighted_sum(&dwconv7x7(&x, &kk).unwrap(), &cot)
            },
            k.taps(),
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(&grads.taps, &fd_taps) <= 1e-6);
    }

    #[test]
    fn pointwise_matches_finite_differences() {
        let mut rng = Rng::new(24);
        let x: FeatureMap<f64> = random_normal((1, 3, 3, 2), &mut rng, 1.0);
        let p: PointwiseParams<f64> = PointwiseParams::random(4, 3, &mut rng, 1.0);
        let cot: FeatureMap<f64> = random_normal((1, 4, 3, 2), &mut rng, 1.0);
        let grads = pointwise_vjp(&cot, &x, &p).unwrap();
        let fd_input = finite_diff_grad(
            |probe| weighted_sum(&pointwise_conv(probe, &p).unwrap(), &cot),
            &x,
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(grads.input.data(), fd_input.data()) <= 1e-6);

        let w_flat: Vec<f64> = p.weight.data().to_vec();
        let fd_w = finite_diff_params(
            |wv| {
                let pp = PointwiseParams::new(
                    Matrix::from_vec(4, 3, wv.to_vec()).unwrap(),
                    p.bias.clone(),
                )
                .unwrap();
                weighted_sum(&pointwise_conv(&x, &pp).unwrap(), &cot)
            },
            &w_flat,
            1e-5,
        )
        .unwrap();
        assert!(max_rel_err(grads.weight.data(), &fd_w) <= 1e-6);
    }
}
