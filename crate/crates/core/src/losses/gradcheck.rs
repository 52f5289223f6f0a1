//! Central finite-difference gradient checking.

/// Outcome of comparing an analytic gradient against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// `max_i |analytic_i − numeric_i| / max_i max(|analytic_i|, |numeric_i|)`.
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
    /// Coordinate with the largest absolute discrepancy.
    pub worst_index: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Central-difference gradient of `f` at `x`.
pub fn numerical_gradient<F>(f: F, x: &[f64], step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let up = f(&probe);
            probe[i] = orig - step;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Checks `analytic` against central differences of `f` with the given
/// step. The error is measured relative to the largest gradient component,
/// so near-zero coordinates do not dominate; an all-zero pair of gradients
/// has error 0.
pub fn check_gradient<F>(
    f: F,
    x: &[f64],
    analytic: &[f64],
    step: f64,
    tolerance: f64,
) -> GradCheckReport
where
    F: Fn(&[f64]) -> f64,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    assert_eq!(x.len(), analytic.len(), "gradient length must match input");
    let numeric = numerical_gradient(f, x, step);
    let mut worst_index = 0;
    let mut max_abs = 0.0f64;
    let mut scale = 0.0f64;
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let diff = (a - n).abs();
        if diff > max_abs || diff.is_nan() {
            max_abs = diff;
            worst_index = i;
        }
        scale = scale.max(a.abs()).max(n.abs());
    }
    let rel = if max_abs == 0.0 { 0.0 } else { max_abs / scale };
    GradCheckReport {
        max_relative_error: rel,
        max_absolute_error: max_abs,
        worst_index,
        tolerance,
        passed: rel < tolerance,
    }
}
