use crate::{Error, Result};

/// Outcome of [`gradient_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    /// Parameter index where the worst error occurred.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    /// Components compared.
    pub checked: usize,
    /// Components skipped because a probe crossed a non-differentiable point.
    pub excluded: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`; zero when both gradients vanish.
///
/// `floor` keeps components that are negligible next to the largest gradient
/// from dominating through cancellation noise.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares analytic gradients with central differences.
///
/// `f` maps a parameter vector to `(loss, gradient)`. The gradient is taken at
/// `params`; every component is then re-estimated as
/// `(f(p + h e_i) - f(p - h e_i)) / 2h`. Components whose analytic gradient is
/// below `1e-6` of the largest one are compared against that scale rather than
/// their own magnitude.
pub fn gradient_check<F>(mut f: F, params: &[f64], h: f64) -> Result<GradCheck>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    gradient_check_excluding_ties(|p| f(p).map(|(l, g)| (l, g, 0)), params, h)
}

/// [`gradient_check`] for piecewise-smooth functions.
///
/// `f` also returns a regime tag identifying the smooth piece it was
/// evaluated on (for instance a hash of ReLU masks and max-pool choices).
/// A component whose `+h` or `-h` probe lands in a different regime than the
/// base point straddles a tie and is excluded from the comparison.
pub fn gradient_check_excluding_ties<F>(mut f: F, params: &[f64], h: f64) -> Result<GradCheck>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>, u64)>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Parameter(format!("finite-difference step {h}")));
    }
    let (loss, analytic, regime) = f(params)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss} at the base point")));
    }
    if analytic.len() != params.len() {
        return Err(Error::Parameter(format!(
            "{} gradient components for {} parameters",
            analytic.len(),
            params.len()
        )));
    }
    let scale = analytic.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let floor = (scale * 1e-6).max(f64::MIN_POSITIVE);
    let mut probe = params.to_vec();
    let mut report = GradCheck {
        max_relative_error: 0.0,
        worst_index: 0,
        analytic: analytic.first().copied().unwrap_or(0.0),
        numeric: 0.0,
        checked: 0,
        excluded: 0,
    };
    for i in 0..params.len() {
        probe[i] = params[i] + h;
        let (plus, _, r_plus) = f(&probe)?;
        probe[i] = params[i] - h;
        let (minus, _, r_minus) = f(&probe)?;
        probe[i] = params[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("loss while perturbing parameter {i}")));
        }
        if r_plus != regime || r_minus != regime {
            report.excluded += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(analytic[i], numeric, floor);
        if report.checked == 0 || err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
        report.checked += 1;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let w = [0.5, -2.0, 3.25, 1e-3];
        let f = |p: &[f64]| Ok((p.iter().zip(&w).map(|(a, b)| a * b).sum(), w.to_vec()));
        let r = gradient_check(f, &[0.1, 0.2, -0.3, 4.0], 1e-3).unwrap();
        assert!(r.max_relative_error < 1e-7, "{r:?}");
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let f = |p: &[f64]| Ok((7.0, vec![0.0; p.len()]));
        let r = gradient_check(f, &[1.0, 2.0], 1e-3).unwrap();
        assert_eq!(r.max_relative_error, 0.0);
        assert_eq!(r.numeric, 0.0);
    }

    #[test]
    fn wrong_gradient_detected() {
        let f = |p: &[f64]| Ok((p[0] * p[0], vec![3.0 * p[0]]));
        let r = gradient_check(f, &[1.0], 1e-3).unwrap();
        assert!(r.max_relative_error > 0.3);
    }

    #[test]
    fn kinks_are_excluded() {
        // |x| probed across its kink at 0
        let f = |p: &[f64]| Ok((p[0].abs() + p[1] * p[1], vec![p[0].signum(), 2.0 * p[1]], (p[0] > 0.0) as u64));
        let r = gradient_check_excluding_ties(f, &[1e-4, 0.5], 1e-3).unwrap();
        assert_eq!((r.checked, r.excluded), (1, 1));
        assert!(r.max_relative_error < 1e-9);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let f = |p: &[f64]| Ok((1.0 / p[0], vec![0.0]));
        assert!(matches!(gradient_check(f, &[0.0], 1e-3), Err(Error::NonFinite(_))));
    }
}
