//! Directional-derivative checks of adjoint gradients.

use serde::Serialize;

use crate::error::Result;
use crate::lattice::dot;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DirectionalCheck {
    /// `grad . d` from the adjoint gradient.
    pub adjoint: f64,
    /// `(J(x + h d) - J(x - h d)) / 2h`.
    pub finite_difference: f64,
    pub relative_error: f64,
}

/// Compares the gradient returned by `eval` with a central difference along
/// `direction` with step `h`.
pub fn directional_check<F>(eval: F, x: &[f64], direction: &[f64], h: f64) -> Result<DirectionalCheck>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let (_, grad) = eval(x)?;
    let shifted = |sign: f64| -> Vec<f64> { x.iter().zip(direction).map(|(a, d)| a + sign * h * d).collect() };
    let (plus, _) = eval(&shifted(1.0))?;
    let (minus, _) = eval(&shifted(-1.0))?;
    let adjoint = dot(&grad, direction);
    let finite_difference = (plus - minus) / (2.0 * h);
    let scale = adjoint.abs().max(finite_difference.abs());
    Ok(DirectionalCheck {
        adjoint,
        finite_difference,
        relative_error: if scale > 0.0 { (adjoint - finite_difference).abs() / scale } else { 0.0 },
    })
}
