//! Exact parameter and multiply-accumulate accounting by enumerating the
//! model structure. One MAC per weight tap per output element; elementwise
//! work (norms, activations, gates, residuals) is excluded.

use serde::Serialize;

use super::{hidden_width, ModelConfig, Variant, STEM_CHANNELS_IN};
use crate::Result;

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct ItemCount {
    pub params: u64,
    pub macs: u64,
}

impl ItemCount {
    fn add(&mut self, other: ItemCount) {
        self.params += other.params;
        self.macs += other.macs;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PerBlockCount {
    /// Spatial gate unit: three pointwise layers, the 7x7 depthwise kernel,
    /// and the oversized pair.
    pub spatial: ItemCount,
    pub channel_bgu: ItemCount,
    /// Norm scale/shift vectors and the two residual scales (no MACs).
    pub norms_and_scales: ItemCount,
    pub total: ItemCount,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageCount {
    pub channels: usize,
    pub feature: (usize, usize),
    pub blocks: usize,
    pub per_block: PerBlockCount,
    pub total: ItemCount,
}

#[derive(Clone, Debug, Serialize)]
pub struct CountReport {
    pub variant: Option<String>,
    pub input_size: (usize, usize),
    pub stem: ItemCount,
    pub stages: Vec<StageCount>,
    pub downsamples: Vec<ItemCount>,
    pub head: ItemCount,
    pub total: ItemCount,
}

impl CountReport {
    pub fn params_millions(&self) -> f64 {
        self.total.params as f64 / 1e6
    }

    pub fn macs_billions(&self) -> f64 {
        self.total.macs as f64 / 1e9
    }
}

/// Published reference size for a named variant at 224x224.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ReferenceCount {
    pub params_m: f64,
    pub macs_g: f64,
}

pub fn reference_counts(variant: Variant) -> ReferenceCount {
    let (params_m, macs_g) = match variant {
        Variant::Xt => (7.4, 1.6),
        Variant::T => (25.0, 4.3),
        Variant::S => (39.0, 7.8),
        Variant::B => (56.0, 12.5),
    };
    ReferenceCount { params_m, macs_g }
}

/// Closed-form channel gate unit parameter count:
/// `3 * alpha_tilde * C^2 + 2 * alpha_tilde * C + C` (exact whenever
/// `alpha_tilde * C` is integral).
pub fn channel_bgu_param_formula(c: usize, alpha_tilde: f64) -> u64 {
    let hidden = hidden_width(c, alpha_tilde) as u64;
    let c = c as u64;
    3 * hidden * c + 2 * hidden + c
}

/// Baseline feed-forward parameter count: `2 * alpha * C^2 + alpha * C + C`.
pub fn ffn_param_formula(c: usize, alpha: f64) -> u64 {
    let hidden = hidden_width(c, alpha) as u64;
    let c = c as u64;
    2 * hidden * c + hidden + c
}

fn pointwise(c_out: u64, c_in: u64, hw: u64) -> ItemCount {
    ItemCount {
        params: c_out * c_in + c_out,
        macs: c_out * c_in * hw,
    }
}

fn block_count(c: usize, h: usize, w: usize, alpha_tilde: f64) -> PerBlockCount {
    let hw = (h * w) as u64;
    let cu = c as u64;
    let hidden = hidden_width(c, alpha_tilde) as u64;

    let mut spatial = ItemCount::default();
    spatial.add(pointwise(cu, cu, hw)); // pw_in
    spatial.add(ItemCount {
        params: cu * 49 + cu,
        macs: cu * 49 * hw,
    }); // local 7x7 + bias
    let kh = (2 * h - 1) as u64;
    let kw = (2 * w - 1) as u64;
    spatial.add(ItemCount {
        params: cu * kh + cu * kw + cu,
        macs: cu * kh * hw + cu * kw * hw,
    }); // oversized pair + bias
    spatial.add(pointwise(cu, cu, hw)); // pw_gate
    spatial.add(pointwise(cu, cu, hw)); // pw_out

    let mut channel_bgu = ItemCount::default();
    channel_bgu.add(pointwise(hidden, cu, hw)); // w1
    channel_bgu.add(pointwise(hidden, cu, hw)); // w2
    channel_bgu.add(pointwise(cu, hidden, hw)); // w3

    let norms_and_scales = ItemCount {
        params: 4 * cu + 2 * cu,
        macs: 0,
    };

    let mut total = ItemCount::default();
    total.add(spatial);
    total.add(channel_bgu);
    total.add(norms_and_scales);
    PerBlockCount {
        spatial,
        channel_bgu,
        norms_and_scales,
        total,
    }
}

/// Enumerates every layer of the model the config describes.
pub fn count_params_and_macs(cfg: &ModelConfig) -> Result<CountReport> {
    cfg.validate()?;
    let sizes = cfg.stage_sizes();
    let mut total = ItemCount::default();

    let (h1, w1) = sizes[0];
    let c0 = cfg.channels[0] as u64;
    let stem = ItemCount {
        params: c0 * STEM_CHANNELS_IN as u64 * 16 + c0 + 2 * c0,
        macs: c0 * STEM_CHANNELS_IN as u64 * 16 * (h1 * w1) as u64,
    };
    total.add(stem);

    let mut stages = Vec::with_capacity(4);
    let mut downsamples = Vec::with_capacity(3);
    for s in 0..4 {
        let (h, w) = sizes[s];
        let per_block = block_count(cfg.channels[s], h, w, cfg.alpha_tilde);
        let blocks = cfg.blocks[s] as u64;
        let stage_total = ItemCount {
            params: per_block.total.params * blocks,
            macs: per_block.total.macs * blocks,
        };
        total.add(stage_total);
        stages.push(StageCount {
            channels: cfg.channels[s],
            feature: (h, w),
            blocks: cfg.blocks[s],
            per_block,
            total: stage_total,
        });
        if s < 3 {
            let c = cfg.channels[s] as u64;
            let cn = cfg.channels[s + 1] as u64;
            let (hn, wn) = sizes[s + 1];
            let ds = ItemCount {
                params: 2 * c + cn * c * 9 + cn,
                macs: cn * c * 9 * (hn * wn) as u64,
            };
            total.add(ds);
            downsamples.push(ds);
        }
    }

    let c3 = cfg.channels[3] as u64;
    let classes = cfg.num_classes as u64;
    let head = ItemCount {
        params: 2 * c3 + classes * c3 + classes,
        macs: classes * c3,
    };
    total.add(head);

    Ok(CountReport {
        variant: cfg.variant.clone(),
        input_size: cfg.input_size,
        stem,
        stages,
        downsamples,
        head,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::build_model;
    use crate::rng::Rng;

    fn report(v: Variant) -> CountReport {
        count_params_and_macs(&v.config((224, 224)).unwrap()).unwrap()
    }

    #[test]
    fn enumeration_matches_built_model() {
        let cfg = Variant::Xt.config((64, 64)).unwrap();
        let report = count_params_and_macs(&cfg).unwrap();
        let model = build_model(&cfg, &mut Rng::new(0)).unwrap();
        assert_eq!(report.total.params, model.num_params());
    }

    #[test]
    fn channel_bgu_item_equals_formula() {
        for v in Variant::ALL {
            let r = report(v);
            for stage in &r.stages {
                assert_eq!(
                    stage.per_block.channel_bgu.params,
                    channel_bgu_param_formula(stage.channels, 2.5)
                );
            }
        }
    }

    #[test]
    fn xt_reference_window() {
        let r = report(Variant::Xt);
        let params_m = r.params_millions();
        let macs_g = r.macs_billions();
        assert!((params_m - 7.4).abs() / 7.4 <= 0.05, "params {params_m}M");
        assert!((macs_g - 1.6).abs() / 1.6 <= 0.10, "macs {macs_g}G");
    }

    #[test]
    fn all_variant_reference_windows() {
        for v in Variant::ALL {
            let r = report(v);
            let re = reference_counts(v);
            let dp = (r.params_millions() - re.params_m).abs() / re.params_m;
            let dm = (r.macs_billions() - re.macs_g).abs() / re.macs_g;
            assert!(
                dp <= 0.05,
                "{}: params {}M vs {}M",
                v.name(),
                r.params_millions(),
                re.params_m
            );
            assert!(
                dm <= 0.10,
                "{}: macs {}G vs {}G",
                v.name(),
                r.macs_billions(),
                re.macs_g
            );
        }
    }

    #[test]
    fn stage_one_kernel_lengths_in_counts() {
        // T at 224 binds stage-1 oversized kernels of length 111 = 2*56-1;
        // its per-block oversized params are c * (111 + 111) + c.
        let r = report(Variant::T);
        assert_eq!(r.stages[0].feature, (56, 56));
        let c = r.stages[0].channels as u64;
        let expected_oversized = c * 111 + c * 111 + c;
        let spatial = r.stages[0].per_block.spatial.params;
        // subtract the three pointwise layers and the local kernel
        let pw = 3 * (c * c + c);
        let local = c * 49 + c;
        assert_eq!(spatial - pw - local, expected_oversized);
    }
}
