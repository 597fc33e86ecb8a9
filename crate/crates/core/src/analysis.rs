//! Small least-squares fits used to read convergence rates off numerical data.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Least-squares coefficients of `y ≈ X c`.
fn least_squares(design: DMatrix<f64>, y: DVector<f64>) -> Result<DVector<f64>> {
    let (points, parameters) = design.shape();
    if points < parameters {
        return Err(Error::UnderdeterminedFit { points, parameters });
    }
    if design.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("fit data must be finite".into()));
    }
    let svd = design.svd(true, true);
    let rank = svd.rank(1e-12 * svd.singular_values.max());
    if rank < parameters {
        return Err(Error::UnderdeterminedFit { points: rank, parameters });
    }
    svd.solve(&y, 0.0).map_err(|e| Error::InvalidArgument(e.to_string()))
}

/// Coefficients `(a, b)` of the best fit `a + b / sqrt(N)` to `sqrt(N) * (e_N - limit)`.
pub fn fit_sqrt_n(ns: &[u64], expectations: &[f64], limit: f64) -> Result<(f64, f64)> {
    if ns.len() != expectations.len() {
        return Err(Error::DimensionMismatch {
            expected: ns.len(),
            found: expectations.len(),
        });
    }
    if ns.contains(&0) {
        return Err(Error::InvalidArgument("population sizes must be positive".into()));
    }
    let design = DMatrix::from_fn(ns.len(), 2, |k, c| if c == 0 { 1.0 } else { 1.0 / (ns[k] as f64).sqrt() });
    let y = DVector::from_fn(ns.len(), |k, _| (ns[k] as f64).sqrt() * (expectations[k] - limit));
    let c = least_squares(design, y)?;
    Ok((c[0], c[1]))
}

/// Slope of the least-squares line through `(ln x, ln y)`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            found: ys.len(),
        });
    }
    if xs.iter().chain(ys).any(|&v| v <= 0.0) {
        return Err(Error::InvalidArgument("log-log fit needs positive data".into()));
    }
    let design = DMatrix::from_fn(xs.len(), 2, |k, c| if c == 0 { 1.0 } else { xs[k].ln() });
    let y = DVector::from_fn(ys.len(), |k, _| ys[k].ln());
    Ok(least_squares(design, y)?[1])
}
