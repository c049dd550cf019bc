//! Central finite-difference gradient checking.

use crate::{Error, Result};

/// Outcome of [`finite_diff_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest per-coordinate relative error.
    pub max_rel_error: f64,
    /// Coordinate at which `max_rel_error` occurred.
    pub worst_index: usize,
    /// Largest error with the denominator floored at
    /// `SCALE_FLOOR · max |analytic|`, so entries far below the gradient's
    /// magnitude are judged against it rather than against round-off.
    pub max_scaled_error: f64,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

pub const SCALE_FLOOR: f64 = 1e-5;

/// Relative error `|a - c| / max(1e-12, |a| + |c|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-12)
}

/// Compares the analytic gradient returned by `f` against central differences.
///
/// `f` maps a parameter vector to `(value, analytic gradient)`. It is evaluated
/// twice at `params`; differing values are reported as
/// [`Error::NonDeterministic`].
pub fn finite_diff_check<F>(mut f: F, params: &[f64], step: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("finite_diff_check", "step must be positive"));
    }
    let (value, analytic) = f(params)?;
    let (again, _) = f(params)?;
    if value.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic { first: value, second: again });
    }
    if analytic.len() != params.len() {
        return Err(Error::shape("finite_diff_check", &[params.len()], &[analytic.len()]));
    }

    let mut x = params.to_vec();
    let mut numeric = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = x[i];
        x[i] = orig + step;
        let (plus, _) = f(&x)?;
        x[i] = orig - step;
        let (minus, _) = f(&x)?;
        x[i] = orig;
        numeric.push((plus - minus) / (2.0 * step));
    }

    let (worst_index, max_rel_error) = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &c)| relative_error(a, c))
        .enumerate()
        .fold((0, 0.0), |best, (i, e)| if e > best.1 { (i, e) } else { best });

    let scale = analytic.iter().fold(0.0f64, |m, v| m.max(v.abs())) * SCALE_FLOOR;
    let max_scaled_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(&a, &c)| (a - c).abs() / (a.abs() + c.abs()).max(scale).max(1e-12))
        .fold(0.0, f64::max);

    Ok(GradCheckReport {
        max_rel_error,
        worst_index,
        max_scaled_error,
        analytic,
        numeric,
    })
}
