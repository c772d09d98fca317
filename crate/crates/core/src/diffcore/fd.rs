use super::{MlpParams, ParamGrads};
use crate::{Error, Result};

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` over a flat vector.
pub fn finite_difference_flat<F>(mut loss: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if h.is_nan() || h <= 0.0 {
        return Err(Error::Usage(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = loss(&probe);
        probe[i] = orig - h;
        let down = loss(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numerical(format!(
                "loss is non-finite when perturbing flat index {i}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Finite-difference gradient of `loss` with respect to every parameter of `params`.
pub fn finite_difference_gradient<F>(mut loss: F, params: &MlpParams, h: f64) -> Result<ParamGrads>
where
    F: FnMut(&MlpParams) -> f64,
{
    let mut scratch = params.clone();
    let flat = finite_difference_flat(
        |x| {
            scratch.set_flat(x).expect("length preserved");
            loss(&scratch)
        },
        &params.to_flat(),
        h,
    )?;
    let mut grads = ParamGrads::zeros_like(params);
    grads.values_mut().zip(flat).for_each(|(g, v)| *g = v);
    Ok(grads)
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over paired entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
