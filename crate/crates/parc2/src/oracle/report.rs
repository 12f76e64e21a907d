//! Equivalence reporting between two feature maps.

use serde::Serialize;

use crate::scalar::Scalar;
use crate::tensor::FeatureMap;
use crate::{Error, Result};

/// Floor for the relative-error denominator, avoiding near-zero blowups.
pub const REL_FLOOR: f64 = 1e-8;

/// Relative error with denominator `max(|a|, |b|, REL_FLOOR)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Maximum relative error over two equally sized slices.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| rel_err(*x, *y))
        .fold(0.0, f64::max)
}

/// Outcome of comparing two tensors against an absolute tolerance.
#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub max_abs_diff: f64,
    pub max_rel_diff: f64,
    /// `(n, c, h, w)` index of the largest absolute difference.
    pub argmax_location: [usize; 4],
    pub tolerance: f64,
    pub pass: bool,
}

/// Compares `a` and `b` elementwise; `pass` iff `max_abs_diff <= tol`.
pub fn check_equivalence<T: Scalar>(
    a: &FeatureMap<T>,
    b: &FeatureMap<T>,
    tol: f64,
) -> Result<EquivalenceReport> {
    if a.shape() != b.shape() {
        return Err(Error::DimMismatch(format!(
            "equivalence check: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (_, c, h, w) = a.shape();
    let mut max_abs = 0.0f64;
    let mut max_rel = 0.0f64;
    let mut arg = [0usize; 4];
    for (idx, (va, vb)) in a.data().iter().zip(b.data().iter()).enumerate() {
        let fa = va.to_f64();
        let fb = vb.to_f64();
        let abs = (fa - fb).abs();
        max_rel = max_rel.max(rel_err(fa, fb));
        if abs > max_abs {
            max_abs = abs;
            let j = idx % w;
            let i = (idx / w) % h;
            let ci = (idx / (w * h)) % c;
            let ni = idx / (w * h * c);
            arg = [ni, ci, i, j];
        }
    }
    Ok(EquivalenceReport {
        max_abs_diff: max_abs,
        max_rel_diff: max_rel,
        argmax_location: arg,
        tolerance: tol,
        pass: max_abs <= tol,
    })
}
