//! Four-stage model: patchify stem, stacked blocks, norm + strided-conv
//! downsampling between stages, pooled classifier head.

use crate::ops::{resize_kernel_linear, Dense2DKernel};
use crate::par::for_each_chunk_mut;
use crate::perf::{fast_dwconv, DwKernel, LoweringPlan};
use crate::rng::Rng;
use crate::tensor::{
    global_avg_pool, linear, pointwise_conv, row_layernorm, FeatureMap, Matrix, PointwiseParams,
};
use crate::{Error, Result};

use super::{
    add_scaled, channel_bgu, spatial_bgu, BlockParams, ModelConfig, NormParams, STEM_CHANNELS_IN,
};

/// Dense `k x k` convolution with stride and symmetric padding; used for the
/// 4x4/4 stem and the 3x3/2 downsampling layers. Weight layout is
/// `(c_out, c_in, k, k)` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchConv {
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
    pub c_out: usize,
    pub c_in: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl PatchConv {
    pub fn zeros(c_out: usize, c_in: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self {
            weight: vec![0.0; c_out * c_in * k * k],
            bias: vec![0.0; c_out],
            c_out,
            c_in,
            k,
            stride,
            pad,
        }
    }

    pub fn out_size(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }

    pub fn forward(&self, x: &FeatureMap<f32>) -> Result<FeatureMap<f32>> {
        let (n, c_in, h, w) = x.shape();
        if c_in != self.c_in {
            return Err(Error::DimMismatch(format!(
                "patch conv expects {} input channels, got {}",
                self.c_in, c_in
            )));
        }
        if h + 2 * self.pad < self.k || w + 2 * self.pad < self.k {
            return Err(Error::DimMismatch(format!(
                "patch conv {}x{} cannot cover input {}x{}",
                self.k, self.k, h, w
            )));
        }
        let (oh, ow) = self.out_size(h, w);
        let mut out = FeatureMap::zeros(n, self.c_out, oh, ow);
        let (c_out, k, stride, pad) = (self.c_out, self.k, self.stride, self.pad);
        for_each_chunk_mut(out.data_mut(), oh * ow, |idx, dst| {
            let ni = idx / c_out;
            let co = idx % c_out;
            for oi in 0..oh {
                for oj in 0..ow {
                    let mut acc = self.bias[co];
                    for ci in 0..c_in {
                        for p in 0..k {
                            let si = (oi * stride + p) as isize - pad as isize;
                            if si < 0 || si >= h as isize {
                                continue;
                            }
                            for q in 0..k {
                                let sj = (oj * stride + q) as isize - pad as isize;
                                if sj < 0 || sj >= w as isize {
                                    continue;
                                }
                                acc += self.weight[((co * c_in + ci) * k + p) * k + q]
                                    * x.at(ni, ci, si as usize, sj as usize);
                            }
                        }
                    }
                    dst[oi * ow + oj] = acc;
                }
            }
        });
        Ok(out)
    }

    pub fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn init(&mut self, rng: &mut Rng, std: f64) {
        for v in &mut self.weight {
            *v = rng.truncated_normal(std) as f32;
        }
        for v in &mut self.bias {
            *v = rng.truncated_normal(std) as f32;
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stem {
    pub conv: PatchConv,
    pub norm: NormParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Downsample {
    pub norm: NormParams,
    pub conv: PatchConv,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub norm: NormParams,
    pub fc: PointwiseParams,
}

/// Offline-fused replacement for one block's local + oversized branch pair:
/// a single dense depthwise kernel (rank-1 global part plus the embedded 7x7
/// window), the combined per-channel bias, and its lowering plan.
#[derive(Clone, Debug)]
pub struct FusedMixer {
    pub kernel: Dense2DKernel<f32>,
    pub bias: Vec<f32>,
    pub plan: LoweringPlan,
}

/// A built model: immutable weights, pure forward passes. When `fused` is
/// populated (see [`crate::perf::reparam_inference_mode`]) the spatial mixing
/// of every block runs through the fast depthwise path instead of the
/// separable branches.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub stem: Stem,
    pub stages: Vec<Vec<BlockParams>>,
    pub downsamples: Vec<Downsample>,
    pub head: Head,
    pub(crate) fused: Option<Vec<Vec<FusedMixer>>>,
}

pub const INIT_STD: f64 = 0.02;

/// Builds a model with truncated-normal(std 0.02) weights, unit norms, and
/// unit residual scales. Initialization order equals the checkpoint manifest
/// order, so a seed pins every tensor.
pub fn build_model(cfg: &ModelConfig, rng: &mut Rng) -> Result<Model> {
    cfg.validate()?;
    let sizes = cfg.stage_sizes();
    let mut stem_conv = PatchConv::zeros(cfg.channels[0], STEM_CHANNELS_IN, 4, 4, 0);
    stem_conv.init(rng, INIT_STD);
    let stem = Stem {
        conv: stem_conv,
        norm: NormParams::unit(cfg.channels[0]),
    };
    let mut stages = Vec::with_capacity(4);
    let mut downsamples = Vec::with_capacity(3);
    for s in 0..4 {
        let (h, w) = sizes[s];
        let c = cfg.channels[s];
        let blocks = (0..cfg.blocks[s])
            .map(|_| BlockParams::random(c, h, w, cfg.alpha_tilde, rng, INIT_STD))
            .collect();
        stages.push(blocks);
        if s < 3 {
            let mut conv = PatchConv::zeros(cfg.channels[s + 1], c, 3, 2, 1);
            conv.init(rng, INIT_STD);
            downsamples.push(Downsample {
                norm: NormParams::unit(c),
                conv,
            });
        }
    }
    let head = Head {
        norm: NormParams::unit(cfg.channels[3]),
        fc: PointwiseParams::random(cfg.num_classes, cfg.channels[3], rng, INIT_STD),
    };
    Ok(Model {
        config: cfg.clone(),
        stem,
        stages,
        downsamples,
        head,
        fused: None,
    })
}

impl Model {
    pub fn is_fused(&self) -> bool {
        self.fused.is_some()
    }

    pub fn num_params(&self) -> u64 {
        let mut total = 0u64;
        self.visit_tensors(&mut |_, _, data| total += data.len() as u64);
        total
    }

    /// Walks every learnable tensor in manifest order.
    pub fn visit_tensors(&self, f: &mut dyn FnMut(&str, &[usize], &[f32])) {
        let c0 = self.config.channels[0];
        f(
            "stem.conv.weight",
            &[c0, STEM_CHANNELS_IN, 4, 4],
            &self.stem.conv.weight,
        );
        f("stem.conv.bias", &[c0], &self.stem.conv.bias);
        f("stem.norm.gamma", &[c0], &self.stem.norm.gamma);
        f("stem.norm.beta", &[c0], &self.stem.norm.beta);
        for (s, blocks) in self.stages.iter().enumerate() {
            let c = self.config.channels[s];
            let hidden = self.config.hidden_width(c);
            for (b, blk) in blocks.iter().enumerate() {
                let p = |leaf: &str| format!("stages.{s}.blocks.{b}.{leaf}");
                f(&p("norm1.gamma"), &[c], &blk.norm1.gamma);
                f(&p("norm1.beta"), &[c], &blk.norm1.beta);
                f(
                    &p("spatial.pw_in.weight"),
                    &[c, c],
                    blk.spatial.pw_in.weight.data(),
                );
                f(&p("spatial.pw_in.bias"), &[c], &blk.spatial.pw_in.bias);
                f(
                    &p("spatial.local.weight"),
                    &[c, 7, 7],
                    blk.spatial.local.taps(),
                );
                f(
                    &p("spatial.local.bias"),
                    &[c],
                    blk.spatial
                        .local
                        .bias()
                        .expect("model local kernels carry bias"),
                );
                let kh_len = blk.spatial.oversized.len_h();
                let kw_len = blk.spatial.oversized.len_w();
                f(
                    &p("spatial.oversized.k_h"),
                    &[c, kh_len],
                    blk.spatial.oversized.k_h().data(),
                );
                f(
                    &p("spatial.oversized.k_w"),
                    &[c, kw_len],
                    blk.spatial.oversized.k_w().data(),
                );
                f(
                    &p("spatial.oversized.bias"),
                    &[c],
                    blk.spatial
                        .oversized
                        .bias()
                        .expect("model oversized kernels carry bias"),
                );
                f(
                    &p("spatial.pw_gate.weight"),
                    &[c, c],
                    blk.spatial.pw_gate.weight.data(),
                );
                f(&p("spatial.pw_gate.bias"), &[c], &blk.spatial.pw_gate.bias);
                f(
                    &p("spatial.pw_out.weight"),
                    &[c, c],
                    blk.spatial.pw_out.weight.data(),
                );
                f(&p("spatial.pw_out.bias"), &[c], &blk.spatial.pw_out.bias);
                f(&p("norm2.gamma"), &[c], &blk.norm2.gamma);
                f(&p("norm2.beta"), &[c], &blk.norm2.beta);
                f(
                    &p("channel.w1.weight"),
                    &[hidden, c],
                    blk.channel.w1.weight.data(),
                );
                f(&p("channel.w1.bias"), &[hidden], &blk.channel.w1.bias);
                f(
                    &p("channel.w2.weight"),
                    &[hidden, c],
                    blk.channel.w2.weight.data(),
                );
                f(&p("channel.w2.bias"), &[hidden], &blk.channel.w2.bias);
                f(
                    &p("channel.w3.weight"),
                    &[c, hidden],
                    blk.channel.w3.weight.data(),
                );
                f(&p("channel.w3.bias"), &[c], &blk.channel.w3.bias);
                f(&p("res_scale1"), &[c], &blk.res_scale1);
                f(&p("res_scale2"), &[c], &blk.res_scale2);
            }
            if s < 3 {
                let ds = &self.downsamples[s];
                let cn = self.config.channels[s + 1];
                let p = |leaf: &str| format!("downsamples.{s}.{leaf}");
                f(&p("norm.gamma"), &[c], &ds.norm.gamma);
                f(&p("norm.beta"), &[c], &ds.norm.beta);
                f(&p("conv.weight"), &[cn, c, 3, 3], &ds.conv.weight);
                f(&p("conv.bias"), &[cn], &ds.conv.bias);
            }
        }
        let c3 = self.config.channels[3];
        f("head.norm.gamma", &[c3], &self.head.norm.gamma);
        f("head.norm.beta", &[c3], &self.head.norm.beta);
        f(
            "head.fc.weight",
            &[self.config.num_classes, c3],
            self.head.fc.weight.data(),
        );
        f(
            "head.fc.bias",
            &[self.config.num_classes],
            &self.head.fc.bias,
        );
    }

    /// Overwrites every tensor from `provider` in manifest order. The
    /// provider receives the tensor name and expected shape and must return
    /// exactly that many values.
    pub fn fill_tensors(
        &mut self,
        provider: &mut dyn FnMut(&str, &[usize]) -> Result<Vec<f32>>,
    ) -> Result<()> {
        fn pull(
            provider: &mut dyn FnMut(&str, &[usize]) -> Result<Vec<f32>>,
            name: &str,
            shape: &[usize],
            dst: &mut [f32],
        ) -> Result<()> {
            let vals = provider(name, shape)?;
            if vals.len() != dst.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name}: expected {} values, got {}",
                    dst.len(),
                    vals.len()
                )));
            }
            dst.copy_from_slice(&vals);
            Ok(())
        }

        let c0 = self.config.channels[0];
        pull(
            provider,
            "stem.conv.weight",
            &[c0, STEM_CHANNELS_IN, 4, 4],
            &mut self.stem.conv.weight,
        )?;
        pull(provider, "stem.conv.bias", &[c0], &mut self.stem.conv.bias)?;
        pull(
            provider,
            "stem.norm.gamma",
            &[c0],
            &mut self.stem.norm.gamma,
        )?;
        pull(provider, "stem.norm.beta", &[c0], &mut self.stem.norm.beta)?;
        let channels = self.config.channels;
        let hidden_of = |c: usize| super::hidden_width(c, self.config.alpha_tilde);
        for (s, blocks) in self.stages.iter_mut().enumerate() {
            let c = channels[s];
            let hidden = hidden_of(c);
            for (b, blk) in blocks.iter_mut().enumerate() {
                let p = |leaf: &str| format!("stages.{s}.blocks.{b}.{leaf}");
                pull(provider, &p("norm1.gamma"), &[c], &mut blk.norm1.gamma)?;
                pull(provider, &p("norm1.beta"), &[c], &mut blk.norm1.beta)?;
                pull(
                    provider,
                    &p("spatial.pw_in.weight"),
                    &[c, c],
                    blk.spatial.pw_in.weight.data_mut(),
                )?;
                pull(
                    provider,
                    &p("spatial.pw_in.bias"),
                    &[c],
                    &mut blk.spatial.pw_in.bias,
                )?;
                pull(
                    provider,
                    &p("spatial.local.weight"),
                    &[c, 7, 7],
                    blk.spatial.local.taps_mut(),
                )?;
                pull(
                    provider,
                    &p("spatial.local.bias"),
                    &[c],
                    blk.spatial
                        .local
                        .bias_mut()
                        .expect("model local kernels carry bias"),
                )?;
                let kh_len = blk.spatial.oversized.len_h();
                let kw_len = blk.spatial.oversized.len_w();
                pull(
                    provider,
                    &p("spatial.oversized.k_h"),
                    &[c, kh_len],
                    blk.spatial.oversized.k_h_mut().data_mut(),
                )?;
                pull(
                    provider,
                    &p("spatial.oversized.k_w"),
                    &[c, kw_len],
                    blk.spatial.oversized.k_w_mut().data_mut(),
                )?;
                pull(
                    provider,
                    &p("spatial.oversized.bias"),
                    &[c],
                    blk.spatial
                        .oversized
                        .bias_mut()
                        .expect("model oversized kernels carry bias"),
                )?;
                pull(
                    provider,
                    &p("spatial.pw_gate.weight"),
                    &[c, c],
                    blk.spatial.pw_gate.weight.data_mut(),
                )?;
                pull(
                    provider,
                    &p("spatial.pw_gate.bias"),
                    &[c],
                    &mut blk.spatial.pw_gate.bias,
                )?;
                pull(
                    provider,
                    &p("spatial.pw_out.weight"),
                    &[c, c],
                    blk.spatial.pw_out.weight.data_mut(),
                )?;
                pull(
                    provider,
                    &p("spatial.pw_out.bias"),
                    &[c],
                    &mut blk.spatial.pw_out.bias,
                )?;
                pull(provider, &p("norm2.gamma"), &[c], &mut blk.norm2.gamma)?;
                pull(provider, &p("norm2.beta"), &[c], &mut blk.norm2.beta)?;
                pull(
                    provider,
                    &p("channel.w1.weight"),
                    &[hidden, c],
                    blk.channel.w1.weight.data_mut(),
                )?;
                pull(
                    provider,
                    &p("channel.w1.bias"),
                    &[hidden],
                    &mut blk.channel.w1.bias,
                )?;
                pull(
                    provider,
                    &p("channel.w2.weight"),
                    &[hidden, c],
                    blk.channel.w2.weight.data_mut(),
                )?;
                pull(
                    provider,
                    &p("channel.w2.bias"),
                    &[hidden],
                    &mut blk.channel.w2.bias,
                )?;
                pull(
                    provider,
                    &p("channel.w3.weight"),
                    &[c, hidden],
                    blk.channel.w3.weight.data_mut(),
                )?;
                pull(
                    provider,
                    &p("channel.w3.bias"),
                    &[c],
                    &mut blk.channel.w3.bias,
                )?;
                pull(provider, &p("res_scale1"), &[c], &mut blk.res_scale1)?;
                pull(provider, &p("res_scale2"), &[c], &mut blk.res_scale2)?;
            }
            if s < 3 {
                let ds = &mut self.downsamples[s];
                let cn = channels[s + 1];
                let p = |leaf: &str| format!("downsamples.{s}.{leaf}");
                pull(provider, &p("norm.gamma"), &[c], &mut ds.norm.gamma)?;
                pull(provider, &p("norm.beta"), &[c], &mut ds.norm.beta)?;
                pull(
                    provider,
                    &p("conv.weight"),
                    &[cn, c, 3, 3],
                    &mut ds.conv.weight,
                )?;
                pull(provider, &p("conv.bias"), &[cn], &mut ds.conv.bias)?;
            }
        }
        let c3 = channels[3];
        pull(
            provider,
            "head.norm.gamma",
            &[c3],
            &mut self.head.norm.gamma,
        )?;
        pull(provider, "head.norm.beta", &[c3], &mut self.head.norm.beta)?;
        pull(
            provider,
            "head.fc.weight",
            &[self.config.num_classes, c3],
            self.head.fc.weight.data_mut(),
        )?;
        pull(
            provider,
            "head.fc.bias",
            &[self.config.num_classes],
            &mut self.head.fc.bias,
        )?;
        self.fused = None;
        Ok(())
    }
}

fn block_forward(
    x: &FeatureMap<f32>,
    p: &BlockParams,
    fused: Option<&FusedMixer>,
) -> Result<FeatureMap<f32>> {
    let u = p.norm1.apply(x)?;
    let spatial_out = match fused {
        None => spatial_bgu(&u, &p.spatial)?,
        Some(fm) => {
            let a = pointwise_conv(&u, &p.spatial.pw_in)?;
            let mut mixed = fast_dwconv(&a, DwKernel::Dense(&fm.kernel), &fm.plan)?;
            let (n, c, _, _) = mixed.shape();
            for ni in 0..n {
                for ci in 0..c {
                    let b = fm.bias[ci];
                    for v in mixed.plane_mut(ni, ci) {
                        *v += b;
                    }
                }
            }
            let gate = pointwise_conv(&u, &p.spatial.pw_gate)?;
            pointwise_conv(&mixed.hadamard(&gate)?, &p.spatial.pw_out)?
        }
    };
    let mid = add_scaled(x, &spatial_out, &p.res_scale1)?;
    let channel_out = channel_bgu(&p.norm2.apply(&mid)?, &p.channel)?;
    add_scaled(&mid, &channel_out, &p.res_scale2)
}

/// Full forward pass to `(batch, num_classes)` logits. The input spatial
/// size must equal the size the model's oversized kernels are bound to.
pub fn model_forward(m: &Model, x: &FeatureMap<f32>) -> Result<Matrix<f32>> {
    let (_, c, h, w) = x.shape();
    if c != STEM_CHANNELS_IN {
        return Err(Error::DimMismatch(format!(
            "model expects {STEM_CHANNELS_IN} input channels, got {c}"
        )));
    }
    if (h, w) != m.config.input_size {
        return Err(Error::InvalidArgument(format!(
            "input {}x{} does not match the bound size {}x{}; run adapt_to_resolution first",
            h, w, m.config.input_size.0, m.config.input_size.1
        )));
    }
    let mut cur = m.stem.norm.apply(&m.stem.conv.forward(x)?)?;
    for (s, blocks) in m.stages.iter().enumerate() {
        for (b, blk) in blocks.iter().enumerate() {
            let fused = m.fused.as_ref().map(|f| &f[s][b]);
            cur = block_forward(&cur, blk, fused)?;
        }
        if s < 3 {
            let ds = &m.downsamples[s];
            cur = ds.conv.forward(&ds.norm.apply(&cur)?)?;
        }
    }
    let pooled = global_avg_pool(&cur);
    let normed = row_layernorm(
        &pooled,
        &m.head.norm.gamma,
        &m.head.norm.beta,
        m.head.norm.eps,
    )?;
    let logits = linear(&normed, &m.head.fc)?;
    if !logits.data().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("model logits".into()));
    }
    Ok(logits)
}

/// Rebinds the model to a new input resolution by zooming every oversized
/// kernel to its stage's new feature size; all other weights are untouched.
/// Sizes must be multiples of 32. Any fused cache is dropped (re-fuse after
/// adapting).
pub fn adapt_to_resolution(m: &Model, h: usize, w: usize) -> Result<Model> {
    if h == 0 || w == 0 || !h.is_multiple_of(32) || !w.is_multiple_of(32) {
        return Err(Error::InvalidArgument(format!(
            "target size {h}x{w} must be a positive multiple of 32"
        )));
    }
    let mut out = m.clone();
    out.config.input_size = (h, w);
    out.fused = None;
    let sizes = out.config.stage_sizes();
    for (s, blocks) in out.stages.iter_mut().enumerate() {
        let (sh, sw) = sizes[s];
        for blk in blocks.iter_mut() {
            blk.spatial.oversized = resize_kernel_linear(&blk.spatial.oversized, sh, sw)?;
        }
    }
    Ok(out)
}
