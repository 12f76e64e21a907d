//! Independent ground truth: naive direct-sum convolutions, a circular
//! reference convolution, finite-difference gradients, equivalence reports,
//! and receptive-field probes.
//!
//! The convolution oracles here are written as literal nested-loop sums and
//! deliberately share no inner-loop code with the production operators in
//! [`crate::ops`] and [`crate::perf`]; independence is the point. They are
//! single-threaded by design.

mod fd;
mod naive;
mod probes;
mod report;

pub use fd::{finite_diff_grad, finite_diff_params};
pub use naive::{
    circular_conv_reference, naive_conv_oracle, naive_pointwise_oracle, OracleKernel, PadMode,
};
pub use probes::{cyclic_roll, receptive_field_probe, translate_zero, ProbeOp};
pub use report::{check_equivalence, max_rel_err, rel_err, EquivalenceReport};
