//! Accelerated execution path: depthwise convolution lowered to blocked
//! patch-matrix x kernel-vector products, a verified benchmark harness, and
//! whole-model kernel reparameterization.

mod bench;
mod fast;
mod plan;
mod reparam;

pub use crate::par::ExecMode;
pub use bench::{bench, reports_to_csv, reports_to_json, BenchOp, BenchReport};
pub use fast::{fast_dwconv, fast_dwconv_counting, fast_dwconv_with_mode, DwKernel};
pub use plan::{plan_lowering, LoweringPlan, DEFAULT_WORKSPACE_BUDGET};
pub use reparam::reparam_inference_mode;
