use crate::error::{Error, Result};

/// Gradients smaller than this are compared in absolute rather than relative
/// terms; analytically-zero coordinates otherwise turn finite-difference
/// rounding noise into huge relative errors.
pub const DEFAULT_REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct CoordError {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub coords: usize,
    pub max_rel_error: f64,
    /// Up to five coordinates with the largest relative error, worst first.
    pub worst: Vec<CoordError>,
}

/// Compares reverse-mode gradients against central finite differences.
///
/// `f` returns the function value and its analytic gradient at a point.
pub fn grad_check<F>(f: F, x: &[f64], h: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    grad_check_with_floor(f, x, h, tol, DEFAULT_REL_FLOOR)
}

pub fn grad_check_with_floor<F>(f: F, x: &[f64], h: f64, tol: f64, floor: f64) -> Result<GradCheckReport>
where
    F: Fn(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = f(x);
    if analytic.len() != x.len() {
        return Err(Error::shape(format!(
            "gradient has {} entries for {} coordinates",
            analytic.len(),
            x.len()
        )));
    }
    let mut errors = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let up = f(&probe).0;
        probe[i] = x[i] - h;
        let down = f(&probe).0;
        probe[i] = x[i];
        let numeric = (up - down) / (2.0 * h);
        let a = analytic[i];
        let denom = a.abs().max(numeric.abs()).max(floor);
        let rel_error = (a - numeric).abs() / denom;
        errors.push(CoordError {
            index: i,
            analytic: a,
            numeric,
            rel_error: if rel_error.is_nan() { f64::INFINITY } else { rel_error },
        });
    }
    errors.sort_by(|a, b| b.rel_error.total_cmp(&a.rel_error));
    let max_rel_error = errors.first().map_or(0.0, |e| e.rel_error);
    errors.truncate(5);
    let report = GradCheckReport {
        coords: x.len(),
        max_rel_error,
        worst: errors,
    };
    if max_rel_error > tol {
        let listing: Vec<String> = report
            .worst
            .iter()
            .map(|e| format!("#{}: analytic {:.6e}, numeric {:.6e}, rel {:.3e}", e.index, e.analytic, e.numeric, e.rel_error))
            .collect();
        return Err(Error::Verification(format!(
            "max relative error {max_rel_error:.3e} exceeds {tol:.1e}; worst: {}",
            listing.join("; ")
        )));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn squared_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x: Vec<f64> = (0..10).map(|_| rng.random_range(-2.0..2.0)).collect();
        let f = |x: &[f64]| (x.iter().map(|v| v * v).sum(), x.iter().map(|v| 2.0 * v).collect());
        let report = grad_check(f, &x, 1e-5, 1e-7).unwrap();
        assert!(report.max_rel_error < 1e-7);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let f = |x: &[f64]| (4.2, vec![0.0; x.len()]);
        let report = grad_check(f, &[1.0, 2.0, 3.0], 1e-5, 1e-12).unwrap();
        assert_eq!(report.max_rel_error, 0.0);
        assert!(report.worst.iter().all(|e| e.numeric == 0.0));
    }

    #[test]
    fn wrong_gradient_is_reported() {
        let f = |x: &[f64]| (x[0] * x[0] + x[1], vec![2.0 * x[0], 2.0]);
        let err = grad_check(f, &[0.5, 0.5], 1e-5, 1e-4).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("#1"), "{msg}");
    }
}
