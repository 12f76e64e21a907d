//! Operator library for a four-stage convolutional classifier built around
//! oversized separable depthwise convolutions and bifurcate gate units.
//!
//! The crate is organized in layers:
//!
//! * [`tensor`] — a minimal dense NCHW tensor substrate (padding, pointwise
//!   convolution, GELU, channel layer norm, pooling) plus a seeded
//!   deterministic RNG.
//! * [`ops`] — the core operators: the oversized vertical/horizontal passes,
//!   local 7x7 depthwise convolution, rank-1 kernel composition, branch
//!   fusion, kernel zooming, and analytic backward passes.
//! * [`blocks`] — spatial/channel gate units, the uniform local-global block,
//!   full model assembly, and parameter/MAC accounting.
//! * [`oracle`] — independent ground-truth implementations: naive direct-sum
//!   convolutions, a circular reference convolution, finite differences, and
//!   equivalence reporting. The oracle inner loops share no code with the
//!   production operators.
//! * [`perf`] — depthwise convolution lowered to blocked patch-matrix x
//!   kernel-vector products, a verified benchmark harness, and whole-model
//!   kernel reparameterization for inference.
//! * [`verify`] — seeded verification suites wiring the above together.
//! * [`checkpoint`] — a self-describing binary tensor container.
//!
//! Every operation fixes its per-output-element accumulation order, so
//! results are bit-identical at any thread count. Parallel execution across
//! independent (batch, channel) planes is enabled by the `parallel` feature
//! (on by default); without it the same loops run sequentially.

pub mod blocks;
pub mod checkpoint;
pub mod ops;
pub mod oracle;
pub(crate) mod par;
pub mod perf;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod verify;

pub use rng::Rng;
pub use scalar::Scalar;
pub use tensor::{FeatureMap, Matrix, PointwiseParams};

use thiserror::Error;

/// Library error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Shape or channel-count disagreement between operands.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    /// A precondition on an argument value was violated.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A NaN or infinity was produced where finite values are required.
    #[error("non-finite value: {0}")]
    NonFinite(String),
    /// Checkpoint container errors (bad magic, bounds, missing tensors, ...).
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    /// An output failed its oracle check (benchmarks refuse to time
    /// unverified code).
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Caps the worker-thread count for data-parallel loops. `0` keeps the
/// default (one worker per logical CPU). Later calls are ignored once a pool
/// exists; call this before any parallel work runs.
#[cfg(feature = "parallel")]
pub fn configure_thread_cap(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
}

/// Sequential build: thread caps are meaningless, accepted for CLI parity.
#[cfg(not(feature = "parallel"))]
pub fn configure_thread_cap(_threads: usize) {}
