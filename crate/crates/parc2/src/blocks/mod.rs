//! Block assembly: the spatial and channel bifurcate gate units, the uniform
//! local-global block, the four-stage model, and parameter/MAC accounting.
//!
//! A block is pre-norm with two residual sub-blocks, each scaled by a
//! per-channel residual weight initialized to 1:
//!
//! ```text
//! h   = x + res_scale1 * spatial_bgu(norm1(x))
//! out = h + res_scale2 * channel_bgu(norm2(h))
//! ```
//!
//! The spatial gate unit feeds the input through a pointwise convolution,
//! mixes a local 7x7 depthwise branch with the oversized global branch by
//! addition, gates the result with a second pointwise branch, and projects
//! once:
//!
//! ```text
//! u   = pw_in(x)
//! m   = dwconv7x7(u) + oversized(u)
//! out = pw_out(m * pw_gate(x))
//! ```
//!
//! The single `pw_out` serves as both the branch projection and the gate
//! fusion; with a constant gate of 1 the unit reduces to `pw_out(parc_branch)`
//! exactly.

mod count;
mod model;

pub use count::{
    channel_bgu_param_formula, count_params_and_macs, ffn_param_formula, reference_counts,
    CountReport, ItemCount, PerBlockCount, ReferenceCount, StageCount,
};
pub use model::{
    adapt_to_resolution, build_model, model_forward, Downsample, FusedMixer, Head, Model,
    PatchConv, Stem, INIT_STD,
};

use crate::ops::{dwconv7x7, parc_oversized, LocalKernel7, OversizedKernelPair};
use crate::rng::Rng;
use crate::tensor::{channel_layernorm, gelu, pointwise_conv, FeatureMap, PointwiseParams};
use crate::{Error, Result};

/// Channel layer-norm scale/shift with its epsilon (1e-6 throughout the
/// model).
#[derive(Clone, Debug, PartialEq)]
pub struct NormParams {
    pub gamma: Vec<f32>,
    pub beta: Vec<f32>,
    pub eps: f32,
}

pub const NORM_EPS: f32 = 1e-6;

impl NormParams {
    pub fn unit(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            eps: NORM_EPS,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn apply(&self, x: &FeatureMap<f32>) -> Result<FeatureMap<f32>> {
        channel_layernorm(x, &self.gamma, &self.beta, self.eps)
    }

    pub fn num_params(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

/// Learnable tensors of one spatial gate unit. All channel dimensions equal
/// the block width.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialBguParams {
    /// Leading pointwise convolution fusing channel information.
    pub pw_in: PointwiseParams,
    /// Local 7x7 depthwise branch.
    pub local: LocalKernel7,
    /// Global oversized branch, bound to the stage feature size.
    pub oversized: OversizedKernelPair,
    /// Gate branch.
    pub pw_gate: PointwiseParams,
    /// Shared output projection after the gate product.
    pub pw_out: PointwiseParams,
}

impl SpatialBguParams {
    pub fn width(&self) -> usize {
        self.pw_in.c_out()
    }

    fn check(&self) -> Result<()> {
        let c = self.width();
        let ok = self.pw_in.c_in() == c
            && self.local.channels() == c
            && self.oversized.channels() == c
            && self.pw_gate.c_in() == c
            && self.pw_gate.c_out() == c
            && self.pw_out.c_in() == c
            && self.pw_out.c_out() == c;
        if !ok {
            return Err(Error::DimMismatch(
                "spatial gate unit widths disagree".into(),
            ));
        }
        Ok(())
    }

    pub fn random(c: usize, h: usize, w: usize, rng: &mut Rng, std: f64) -> Self {
        let pw_in = PointwiseParams::random(c, c, rng, std);
        let mut local = LocalKernel7::zeros(c);
        for v in local.taps_mut() {
            *v = rng.truncated_normal(std) as f32;
        }
        local
            .set_bias(Some(
                (0..c).map(|_| rng.truncated_normal(std) as f32).collect(),
            ))
            .expect("length matches");
        let mut oversized = OversizedKernelPair::zeros(c, h, w);
        for v in oversized.k_h_mut().data_mut() {
            *v = rng.truncated_normal(std) as f32;
        }
        for v in oversized.k_w_mut().data_mut() {
            *v = rng.truncated_normal(std) as f32;
        }
        oversized
            .set_bias(Some(
                (0..c).map(|_| rng.truncated_normal(std) as f32).collect(),
            ))
            .expect("length matches");
        let pw_gate = PointwiseParams::random(c, c, rng, std);
        let pw_out = PointwiseParams::random(c, c, rng, std);
        Self {
            pw_in,
            local,
            oversized,
            pw_gate,
            pw_out,
        }
    }

    pub fn num_params(&self) -> usize {
        self.pw_in.num_params()
            + self.local.num_params()
            + self.oversized.num_params()
            + self.pw_gate.num_params()
            + self.pw_out.num_params()
    }
}

/// The multiscale local-global feature: pointwise in, then the sum of the
/// 7x7 depthwise and oversized branches. The output projection is shared
/// with the gate fusion and lives in [`spatial_bgu`].
pub fn parc_branch(x: &FeatureMap<f32>, p: &SpatialBguParams) -> Result<FeatureMap<f32>> {
    p.check()?;
    let u = pointwise_conv(x, &p.pw_in)?;
    let local = dwconv7x7(&u, &p.local)?;
    let global = parc_oversized(&u, &p.oversized)?;
    local.add(&global)
}

/// Spatial gate unit: `pw_out(parc_branch(x) * pw_gate(x))`.
pub fn spatial_bgu(x: &FeatureMap<f32>, p: &SpatialBguParams) -> Result<FeatureMap<f32>> {
    let transformed = parc_branch(x, p)?;
    let gate = pointwise_conv(x, &p.pw_gate)?;
    pointwise_conv(&transformed.hadamard(&gate)?, &p.pw_out)
}

/// Learnable tensors of one channel gate unit. The hidden width is
/// `round(alpha_tilde * c)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelBguParams {
    pub w1: PointwiseParams,
    pub w2: PointwiseParams,
    pub w3: PointwiseParams,
    pub alpha_tilde: f64,
}

impl ChannelBguParams {
    pub fn width(&self) -> usize {
        self.w1.c_in()
    }

    pub fn hidden(&self) -> usize {
        self.w1.c_out()
    }

    fn check(&self) -> Result<()> {
        let c = self.width();
        let hidden = self.hidden();
        let ok = self.w2.c_in() == c
            && self.w2.c_out() == hidden
            && self.w3.c_in() == hidden
            && self.w3.c_out() == c;
        if !ok {
            return Err(Error::DimMismatch(
                "channel gate unit widths disagree".into(),
            ));
        }
        Ok(())
    }

    pub fn random(c: usize, alpha_tilde: f64, rng: &mut Rng, std: f64) -> Self {
        let hidden = hidden_width(c, alpha_tilde);
        Self {
            w1: PointwiseParams::random(hidden, c, rng, std),
            w2: PointwiseParams::random(hidden, c, rng, std),
            w3: PointwiseParams::random(c, hidden, rng, std),
            alpha_tilde,
        }
    }

    pub fn num_params(&self) -> usize {
        self.w1.num_params() + self.w2.num_params() + self.w3.num_params()
    }
}

/// Hidden width of the channel gate unit: `alpha_tilde * c` rounded to the
/// nearest integer.
pub fn hidden_width(c: usize, alpha_tilde: f64) -> usize {
    (alpha_tilde * c as f64).round() as usize
}

/// Channel gate unit: `w3(gelu(w1(x)) * w2(x))`.
pub fn channel_bgu(x: &FeatureMap<f32>, p: &ChannelBguParams) -> Result<FeatureMap<f32>> {
    p.check()?;
    let x1 = gelu(&pointwise_conv(x, &p.w1)?);
    let x2 = pointwise_conv(x, &p.w2)?;
    pointwise_conv(&x1.hadamard(&x2)?, &p.w3)
}

/// Plain two-layer feed-forward baseline: `w2(gelu(w1(x)))`. Exists as the
/// parameter-count and behavior baseline for the channel gate unit.
pub fn ffn_reference(
    x: &FeatureMap<f32>,
    w1: &PointwiseParams,
    w2: &PointwiseParams,
) -> Result<FeatureMap<f32>> {
    pointwise_conv(&gelu(&pointwise_conv(x, w1)?), w2)
}

/// All learnable tensors of one block.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockParams {
    pub norm1: NormParams,
    pub spatial: SpatialBguParams,
    pub norm2: NormParams,
    pub channel: ChannelBguParams,
    pub res_scale1: Vec<f32>,
    pub res_scale2: Vec<f32>,
}

impl BlockParams {
    pub fn width(&self) -> usize {
        self.spatial.width()
    }

    pub fn random(c: usize, h: usize, w: usize, alpha_tilde: f64, rng: &mut Rng, std: f64) -> Self {
        Self {
            norm1: NormParams::unit(c),
            spatial: SpatialBguParams::random(c, h, w, rng, std),
            norm2: NormParams::unit(c),
            channel: ChannelBguParams::random(c, alpha_tilde, rng, std),
            res_scale1: vec![1.0; c],
            res_scale2: vec![1.0; c],
        }
    }

    pub fn num_params(&self) -> usize {
        self.norm1.num_params()
            + self.spatial.num_params()
            + self.norm2.num_params()
            + self.channel.num_params()
            + self.res_scale1.len()
            + self.res_scale2.len()
    }
}

fn add_scaled(
    x: &FeatureMap<f32>,
    branch: &FeatureMap<f32>,
    scale: &[f32],
) -> Result<FeatureMap<f32>> {
    if x.shape() != branch.shape() {
        return Err(Error::DimMismatch("residual add: shapes differ".into()));
    }
    if scale.len() != x.channels() {
        return Err(Error::DimMismatch("residual scale length".into()));
    }
    let mut out = x.clone();
    let (n, c, _, _) = x.shape();
    for ni in 0..n {
        for ci in 0..c {
            let s = scale[ci];
            let dst = out.plane_mut(ni, ci);
            let src = branch.plane(ni, ci);
            for (d, v) in dst.iter_mut().zip(src.iter()) {
                *d += s * *v;
            }
        }
    }
    Ok(out)
}

/// One full block: two pre-norm residual sub-blocks with per-channel
/// residual scales.
pub fn parcv2_block(x: &FeatureMap<f32>, p: &BlockParams) -> Result<FeatureMap<f32>> {
    let h = add_scaled(
        x,
        &spatial_bgu(&p.norm1.apply(x)?, &p.spatial)?,
        &p.res_scale1,
    )?;
    add_scaled(
        &h,
        &channel_bgu(&p.norm2.apply(&h)?, &p.channel)?,
        &p.res_scale2,
    )
}

/// Per-stage channel/block counts plus the global knobs of a model instance.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    /// Optional named-variant tag, echoed into checkpoints.
    pub variant: Option<String>,
    pub channels: [usize; 4],
    pub blocks: [usize; 4],
    /// `(height, width)` the oversized kernels are bound to; both must be
    /// multiples of 32 so every stage size is integral.
    pub input_size: (usize, usize),
    pub alpha_tilde: f64,
    pub num_classes: usize,
}

pub const DEFAULT_ALPHA_TILDE: f64 = 2.5;
pub const DEFAULT_NUM_CLASSES: usize = 1000;
pub const STEM_CHANNELS_IN: usize = 3;

impl ModelConfig {
    pub fn new(
        channels: [usize; 4],
        blocks: [usize; 4],
        input_size: (usize, usize),
    ) -> Result<Self> {
        let cfg = Self {
            variant: None,
            channels,
            blocks,
            input_size,
            alpha_tilde: DEFAULT_ALPHA_TILDE,
            num_classes: DEFAULT_NUM_CLASSES,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.input_size;
        if h == 0 || w == 0 || h % 32 != 0 || w % 32 != 0 {
            return Err(Error::InvalidArgument(format!(
                "input size {h}x{w} must be a positive multiple of 32 so all four \
                 stage sizes are integral"
            )));
        }
        if self.channels.contains(&0) || self.blocks.contains(&0) {
            return Err(Error::InvalidArgument(
                "channel and block counts must be positive".into(),
            ));
        }
        if self.alpha_tilde <= 0.0 {
            return Err(Error::InvalidArgument("alpha_tilde must be > 0".into()));
        }
        if self.num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be > 0".into()));
        }
        Ok(())
    }

    /// Feature sizes of the four stages: input / 4, 8, 16, 32.
    pub fn stage_sizes(&self) -> [(usize, usize); 4] {
        let (h, w) = self.input_size;
        [
            (h / 4, w / 4),
            (h / 8, w / 8),
            (h / 16, w / 16),
            (h / 32, w / 32),
        ]
    }

    pub fn hidden_width(&self, c: usize) -> usize {
        hidden_width(c, self.alpha_tilde)
    }

    pub fn with_input_size(mut self, input_size: (usize, usize)) -> Result<Self> {
        self.input_size = input_size;
        self.validate()?;
        Ok(self)
    }
}

/// The four published model scales.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Xt,
    T,
    S,
    B,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Xt, Variant::T, Variant::S, Variant::B];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Xt => "XT",
            Variant::T => "T",
            Variant::S => "S",
            Variant::B => "B",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_uppercase().as_str() {
            "XT" => Some(Variant::Xt),
            "T" => Some(Variant::T),
            "S" => Some(Variant::S),
            "B" => Some(Variant::B),
            _ => None,
        }
    }

    pub fn channels(self) -> [usize; 4] {
        match self {
            Variant::Xt => [48, 96, 192, 320],
            Variant::T => [64, 128, 320, 512],
            Variant::S => [64, 128, 320, 512],
            Variant::B => [96, 192, 384, 576],
        }
    }

    pub fn blocks(self) -> [usize; 4] {
        match self {
            Variant::Xt => [3, 3, 9, 2],
            Variant::T => [3, 3, 12, 3],
            Variant::S => [3, 9, 24, 3],
            Variant::B => [3, 9, 24, 3],
        }
    }

    pub fn config(self, input_size: (usize, usize)) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::new(self.channels(), self.blocks(), input_size)?;
        cfg.variant = Some(self.name().to_string());
        Ok(cfg)
    }
}
