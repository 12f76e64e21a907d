//! Whole-model kernel reparameterization for inference: every block's
//! (local 7x7 + oversized pair) branch pair collapses into one dense
//! depthwise kernel executed through the fast path.

use crate::blocks::{FusedMixer, Model};
use crate::ops::{compose_2d, fuse_local_global};
use crate::Result;

use super::plan::{plan_lowering, DEFAULT_WORKSPACE_BUDGET};

/// Returns a model whose spatial mixing runs through fused dense kernels.
/// Per block: the oversized pair composes to its rank-1 dense kernel
/// (zero-embedded up to 7x7 when the stage feature size makes it smaller),
/// the 7x7 window is added in, and the two branch biases combine into one
/// per-channel bias. Logits match the separable model within reassociation
/// error.
pub fn reparam_inference_mode(m: &Model) -> Result<Model> {
    let mut out = m.clone();
    let sizes = out.config.stage_sizes();
    let mut fused_stages = Vec::with_capacity(out.stages.len());
    for (s, blocks) in out.stages.iter().enumerate() {
        let (h, w) = sizes[s];
        let mut fused_blocks = Vec::with_capacity(blocks.len());
        for blk in blocks {
            let c = blk.width();
            let global = compose_2d(&blk.spatial.oversized);
            let global = if global.kh() < 7 || global.kw() < 7 {
                global.zero_embedded(global.kh().max(7), global.kw().max(7))?
            } else {
                global
            };
            let kernel = fuse_local_global(&global, &blk.spatial.local)?;
            let mut bias = vec![0.0f32; c];
            if let Some(lb) = blk.spatial.local.bias() {
                for (b, v) in bias.iter_mut().zip(lb.iter()) {
                    *b += *v;
                }
            }
            if let Some(ob) = blk.spatial.oversized.bias() {
                for (b, v) in bias.iter_mut().zip(ob.iter()) {
                    *b += *v;
                }
            }
            let plan = plan_lowering(c, h, w, kernel.kh(), kernel.kw(), DEFAULT_WORKSPACE_BUDGET)?;
            fused_blocks.push(FusedMixer { kernel, bias, plan });
        }
        fused_stages.push(fused_blocks);
    }
    out.fused = Some(fused_stages);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::{build_model, model_forward, Variant};
    use crate::rng::Rng;
    use crate::tensor::{random_normal, FeatureMap};

    #[test]
    fn fused_model_matches_separable_logits() {
        let cfg = Variant::Xt.config((64, 64)).unwrap();
        let model = build_model(&cfg, &mut Rng::new(42)).unwrap();
        let fused = reparam_inference_mode(&model).unwrap();
        assert!(fused.is_fused());

        let mut rng = Rng::new(7);
        let x: FeatureMap<f32> = random_normal((4, 3, 64, 64), &mut rng, 1.0);
        let base = model_forward(&model, &x).unwrap();
        let rep = model_forward(&fused, &x).unwrap();
        let mut max_diff = 0.0f32;
        for (a, b) in base.data().iter().zip(rep.data().iter()) {
            max_diff = max_diff.max((a - b).abs());
        }
        assert!(max_diff <= 1e-3, "max logit diff {max_diff}");
        for r in 0..4 {
            let argmax = |row: &[f32]| {
                row.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0
            };
            assert_eq!(argmax(base.row(r)), argmax(rep.row(r)));
        }
    }

    #[test]
    fn small_stage_kernels_are_embedded_to_window_size() {
        // At 64x64 the last stage feature is 2x2, so the composed kernel is
        // 3x3 and must grow to 7x7 for the local window.
        let cfg = Variant::Xt.config((64, 64)).unwrap();
        let model = build_model(&cfg, &mut Rng::new(1)).unwrap();
        let fused = reparam_inference_mode(&model).unwrap();
        let cache = fused.fused.as_ref().unwrap();
        assert_eq!(cache[3][0].kernel.kh(), 7);
        assert_eq!(cache[3][0].kernel.kw(), 7);
        // stage 1 at 16x16 composes to 31x31 and keeps that extent
        assert_eq!(cache[0][0].kernel.kh(), 31);
    }

    #[test]
    fn fused_kernel_has_rank_one_plus_window_structure() {
        let cfg = Variant::Xt.config((64, 64)).unwrap();
        let model = build_model(&cfg, &mut Rng::new(3)).unwrap();
        let fused = reparam_inference_mode(&model).unwrap();
        let cache = fused.fused.as_ref().unwrap();
        // Outside the central 7x7 window the fused kernel must factor as the
        // outer product of the pair's 1-D kernels.
        let blk = &model.stages[0][0];
        let kernel = &cache[0][0].kernel;
        let (kh, kw) = (kernel.kh(), kernel.kw());
        let (off_p, off_q) = ((kh - 7) / 2, (kw - 7) / 2);
        for c in 0..2 {
            for p in 0..kh {
                for q in 0..kw {
                    let in_window =
                        (off_p..off_p + 7).contains(&p) && (off_q..off_q + 7).contains(&q);
                    if in_window {
                        continue;
                    }
                    let expect =
                        blk.spatial.oversized.k_h().at(c, p) * blk.spatial.oversized.k_w().at(c, q);
                    let got = kernel.tap(c, p, q);
                    assert!((expect - got).abs() < 1e-6);
                }
            }
        }
    }
}
