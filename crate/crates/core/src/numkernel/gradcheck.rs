//! Central finite differences, used as an independent oracle for [`Tape::backward`].
//!
//! [`Tape::backward`]: super::Tape::backward

use super::tensor::{Element, Tensor};
use crate::error::{Error, Result};

/// `(f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h` for every coordinate `i` of `x`.
pub fn finite_difference_gradient<E, F>(f: F, x: &Tensor<E>, h: f64) -> Result<Tensor<E>>
where
    E: Element,
    F: Fn(&Tensor<E>) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("step size must be positive, got {h}")));
    }
    let base = x.to_vec();
    let mut probe = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        probe[i] = E::lit(base[i].as_f64() + h);
        let plus = f(&Tensor::new(x.shape(), probe.clone())?)?;
        probe[i] = E::lit(base[i].as_f64() - h);
        let minus = f(&Tensor::new(x.shape(), probe.clone())?)?;
        probe[i] = base[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "objective at coordinate {i}: f(x+h) = {plus}, f(x-h) = {minus}"
            )));
        }
        out.push(E::lit((plus - minus) / (2.0 * h)));
    }
    Tensor::new(x.shape(), out)
}

/// Largest `|a − b| / max(|a|, |b|, floor)` over all coordinates.
pub fn max_relative_error<E: Element>(analytic: &Tensor<E>, numeric: &Tensor<E>, floor: f64) -> f64 {
    analytic
        .values()
        .iter()
        .zip(numeric.values())
        .map(|(a, n)| {
            let (a, n) = (a.as_f64(), n.as_f64());
            (a - n).abs() / a.abs().max(n.abs()).max(floor)
        })
        .fold(0.0, f64::max)
}
