//! Core operators: oversized vertical/horizontal depthwise passes, local 7x7
//! depthwise convolution, rank-1 kernel composition, branch fusion,
//! multi-resolution kernel zooming, and analytic backward passes.
//!
//! Convolution convention throughout is cross-correlation (no kernel flip).
//! Parallelism is permitted across `(batch, channel)` plane pairs only;
//! within a plane accumulation order is fixed, so results are deterministic
//! at any thread count.

mod grad;
mod local;
mod oversized;

pub use grad::{
    dwconv7x7_vjp, parc_oh_vjp, parc_oversized_vjp, parc_ow_vjp, pointwise_vjp, DwconvGrads,
    OversizedGrads, PassGrads, PointwiseGrads,
};
pub use local::{dense_dwconv, dwconv7x7, fuse_local_global, Dense2DKernel, LocalKernel7};
pub use oversized::{
    compose_2d, parc_oh, parc_oversized, parc_ow, resize_kernel_linear, OversizedKernelPair,
};
