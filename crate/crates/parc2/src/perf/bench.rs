//! Verified micro-benchmarks: outputs are checked against an independent
//! reference before any timing is reported.

use std::time::Instant;

use serde::Serialize;

use crate::ops::{compose_2d, dense_dwconv, parc_oversized, OversizedKernelPair};
use crate::oracle::{check_equivalence, naive_conv_oracle, OracleKernel, PadMode};
use crate::par::ExecMode;
use crate::rng::Rng;
use crate::tensor::{random_normal, FeatureMap};
use crate::{Error, Result};

use super::fast::{fast_dwconv_with_mode, DwKernel};
use super::plan::{plan_lowering, DEFAULT_WORKSPACE_BUDGET};

/// Benchmarkable operations over a feature-size-bound oversized kernel pair:
/// the separable two-pass form and the dense composed kernel, each via the
/// naive direct-sum reference or the tiled fast path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchOp {
    SeparableFast,
    SeparableNaive,
    DenseFast,
    DenseNaive,
}

impl BenchOp {
    pub fn label(self) -> &'static str {
        match self {
            BenchOp::SeparableFast => "separable-fast",
            BenchOp::SeparableNaive => "separable-naive",
            BenchOp::DenseFast => "dense-fast",
            BenchOp::DenseNaive => "dense-naive",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "separable-fast" => Some(BenchOp::SeparableFast),
            "separable-naive" => Some(BenchOp::SeparableNaive),
            "dense-fast" => Some(BenchOp::DenseFast),
            "dense-naive" => Some(BenchOp::DenseNaive),
            _ => None,
        }
    }

    fn is_fast(self) -> bool {
        matches!(self, BenchOp::SeparableFast | BenchOp::DenseFast)
    }
}

/// One timing record. CSV columns and the JSON mirror carry exactly the
/// serialized fields below.
#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub label: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "C")]
    pub c: usize,
    #[serde(rename = "H")]
    pub h: usize,
    #[serde(rename = "W")]
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub path: String,
    pub median_ns: u64,
    pub p10_ns: u64,
    pub p90_ns: u64,
    pub verified: bool,
    #[serde(skip)]
    pub warmup: usize,
    #[serde(skip)]
    pub iters: usize,
}

fn quantile(sorted: &[u64], q: f64) -> u64 {
    let idx = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx]
}

struct Case {
    x: FeatureMap<f32>,
    pair: OversizedKernelPair<f32>,
}

impl Case {
    fn run(&self, op: BenchOp, mode: ExecMode) -> Result<FeatureMap<f32>> {
        let (_, c, h, w) = self.x.shape();
        match op {
            BenchOp::SeparableFast => {
                let plan_v = plan_lowering(c, h, w, 2 * h - 1, 1, DEFAULT_WORKSPACE_BUDGET)?;
                let plan_h = plan_lowering(c, h, w, 1, 2 * w - 1, DEFAULT_WORKSPACE_BUDGET)?;
                let mid = fast_dwconv_with_mode(
                    &self.x,
                    DwKernel::Vertical(self.pair.k_h()),
                    &plan_v,
                    mode,
                )?;
                fast_dwconv_with_mode(&mid, DwKernel::Horizontal(self.pair.k_w()), &plan_h, mode)
            }
            BenchOp::SeparableNaive => {
                let kv = OracleKernel::new(c, 2 * h - 1, 1, self.pair.k_h().data().to_vec())?;
                let mid = naive_conv_oracle(&self.x, &kv, [h - 1, h - 1, 0, 0], PadMode::Zero)?;
                let kw = OracleKernel::new(c, 1, 2 * w - 1, self.pair.k_w().data().to_vec())?;
                naive_conv_oracle(&mid, &kw, [0, 0, w - 1, w - 1], PadMode::Zero)
            }
            BenchOp::DenseFast => {
                let dense = compose_2d(&self.pair);
                let plan =
                    plan_lowering(c, h, w, dense.kh(), dense.kw(), DEFAULT_WORKSPACE_BUDGET)?;
                fast_dwconv_with_mode(&self.x, DwKernel::Dense(&dense), &plan, mode)
            }
            BenchOp::DenseNaive => {
                let dense = compose_2d(&self.pair);
                let ok = OracleKernel::new(c, dense.kh(), dense.kw(), dense.taps().to_vec())?;
                naive_conv_oracle(&self.x, &ok, [h - 1, h - 1, w - 1, w - 1], PadMode::Zero)
            }
        }
    }

    /// Independent reference for verification: the naive oracle for fast
    /// paths, the production operators for the naive paths.
    fn reference(&self, op: BenchOp) -> Result<FeatureMap<f32>> {
        if op.is_fast() {
            match op {
                BenchOp::SeparableFast => self.run(BenchOp::SeparableNaive, ExecMode::Sequential),
                _ => self.run(BenchOp::DenseNaive, ExecMode::Sequential),
            }
        } else {
            match op {
                BenchOp::SeparableNaive => parc_oversized(&self.x, &self.pair),
                _ => dense_dwconv(&self.x, &compose_2d(&self.pair)),
            }
        }
    }
}

/// Times `op` on a seeded random instance of `shape`. The output is verified
/// once before timing; a failed check aborts with no report. Timing runs
/// single-threaded unless `mode` is [`ExecMode::Parallel`].
pub fn bench(
    op: BenchOp,
    shape: (usize, usize, usize, usize),
    warmup: usize,
    iters: usize,
    rng: &mut Rng,
    mode: ExecMode,
) -> Result<BenchReport> {
    if iters < 10 {
        return Err(Error::InvalidArgument(format!(
            "bench needs at least 10 iterations, got {iters}"
        )));
    }
    if warmup < 3 {
        return Err(Error::InvalidArgument(format!(
            "bench needs at least 3 warmup runs, got {warmup}"
        )));
    }
    let (n, c, h, w) = shape;
    if n == 0 || c == 0 || h == 0 || w == 0 {
        return Err(Error::InvalidArgument("degenerate bench shape".into()));
    }
    let case = Case {
        x: random_normal(shape, rng, 1.0),
        pair: OversizedKernelPair::random(c, h, w, rng),
    };

    let once = case.run(op, mode)?;
    let reference = case.reference(op)?;
    let report = check_equivalence(&once, &reference, 1e-4)?;
    if !report.pass {
        return Err(Error::Verification(format!(
            "{} output differs from reference by {} at {:?}",
            op.label(),
            report.max_abs_diff,
            report.argmax_location
        )));
    }

    for _ in 0..warmup {
        std::hint::black_box(case.run(op, mode)?);
    }
    let mut samples = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = Instant::now();
        std::hint::black_box(case.run(op, mode)?);
        samples.push(start.elapsed().as_nanos() as u64);
    }
    samples.sort_unstable();
    Ok(BenchReport {
        label: op.label().to_string(),
        n,
        c,
        h,
        w,
        kh: 2 * h - 1,
        kw: 2 * w - 1,
        path: match (op.is_fast(), mode) {
            (false, _) => "naive".to_string(),
            (true, ExecMode::Sequential) => "fast-seq".to_string(),
            (true, ExecMode::Parallel) => "fast-par".to_string(),
        },
        median_ns: samples[samples.len() / 2],
        p10_ns: quantile(&samples, 0.10),
        p90_ns: quantile(&samples, 0.90),
        verified: true,
        warmup,
        iters,
    })
}

pub const CSV_HEADER: &str = "label,N,C,H,W,kh,kw,path,median_ns,p10_ns,p90_ns,verified";

/// Serializes reports with the documented column set.
pub fn reports_to_csv(reports: &[BenchReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.label,
            r.n,
            r.c,
            r.h,
            r.w,
            r.kh,
            r.kw,
            r.path,
            r.median_ns,
            r.p10_ns,
            r.p90_ns,
            r.verified
        ));
    }
    out
}

/// JSON mirror of the CSV with identical field names.
pub fn reports_to_json(reports: &[BenchReport]) -> Result<String> {
    Ok(serde_json::to_string_pretty(reports)?)
}
