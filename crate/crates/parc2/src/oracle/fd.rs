//! Central finite differences, in f64 only.

use crate::tensor::FeatureMap;
use crate::{Error, Result};

fn check_eps(eps: f64) -> Result<()> {
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference eps {eps} outside [1e-6, 1e-4]"
        )));
    }
    Ok(())
}

/// Central-difference gradient of a scalar function of a tensor:
/// `(f(x + eps e) - f(x - eps e)) / (2 eps)` per element. Errors if any
/// evaluation of `f` is non-finite.
pub fn finite_diff_grad<F>(mut f: F, x: &FeatureMap<f64>, eps: f64) -> Result<FeatureMap<f64>>
where
    F: FnMut(&FeatureMap<f64>) -> f64,
{
    check_eps(eps)?;
    let mut grad = FeatureMap::zeros(x.batch(), x.channels(), x.height(), x.width());
    let mut probe = x.clone();
    for idx in 0..x.len() {
        let orig = probe.data()[idx];
        probe.data_mut()[idx] = orig + eps;
        let plus = f(&probe);
        probe.data_mut()[idx] = orig - eps;
        let minus = f(&probe);
        probe.data_mut()[idx] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite-difference evaluation at flat index {idx}"
            )));
        }
        grad.data_mut()[idx] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// Same scheme over a flat parameter slice (kernel taps, biases, weights).
pub fn finite_diff_params<F>(mut f: F, params: &[f64], eps: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    check_eps(eps)?;
    let mut probe = params.to_vec();
    let mut grad = vec![0.0; params.len()];
    for (idx, g) in grad.iter_mut().enumerate() {
        let orig = probe[idx];
        probe[idx] = orig + eps;
        let plus = f(&probe);
        probe[idx] = orig - eps;
        let minus = f(&probe);
        probe[idx] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite-difference evaluation at parameter {idx}"
            )));
        }
        *g = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}
