/// Outcome of a central-difference gradient comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_relative_error: f64,
    pub max_absolute_error: f64,
}

/// Compares `f`'s analytic gradient at `point` with central differences of
/// step `eps`. `f` returns the value and its gradient.
pub fn finite_diff_check<F>(f: F, point: &[f64], eps: f64) -> GradCheck
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    assert!(eps > 0.0, "finite-difference step must be positive");
    let (_, analytic) = f(point);
    assert_eq!(analytic.len(), point.len(), "gradient length must match the point");
    let mut x = point.to_vec();
    let mut check = GradCheck { max_relative_error: 0.0, max_absolute_error: 0.0 };
    for k in 0..x.len() {
        let orig = x[k];
        x[k] = orig + eps;
        let plus = f(&x).0;
        x[k] = orig - eps;
        let minus = f(&x).0;
        x[k] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let abs = (analytic[k] - numeric).abs();
        let rel = abs / analytic[k].abs().max(numeric.abs()).max(1e-8);
        check.max_absolute_error = check.max_absolute_error.max(abs);
        check.max_relative_error = check.max_relative_error.max(rel);
    }
    check
}
