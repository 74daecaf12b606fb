//! Least-squares line fits for scaling diagnostics.

use crate::error::{DkgError, Result};
use crate::scalar::{r, Real};

/// Slope/intercept of a least-squares line, with the slope's standard error.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct FitResult<T: Real> {
    pub slope: T,
    pub intercept: T,
    /// standard error of the slope (0 when only two points)
    pub stderr: T,
}

impl<T: Real> FitResult<T> {
    pub fn eval(&self, x: T) -> T {
        self.slope * x + self.intercept
    }
}

/// Ordinary least squares `y = slope x + intercept`.
pub fn linear_fit<T: Real>(x: &[T], y: &[T]) -> Result<FitResult<T>> {
    if x.len() != y.len() {
        return Err(DkgError::InvalidParam("fit inputs differ in length".into()));
    }
    let n = x.len();
    if n < 2 {
        return Err(DkgError::InvalidParam("a line fit needs at least two points".into()));
    }
    let nf = r::<T>(n as f64);
    let mx = x.iter().fold(T::zero(), |a, &b| a + b) / nf;
    let my = y.iter().fold(T::zero(), |a, &b| a + b) / nf;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (&xi, &yi) in x.iter().zip(y.iter()) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if !(sxx > T::zero()) {
        return Err(DkgError::InvalidParam("fit abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n == 2 {
        T::zero()
    } else {
        let mut ss = T::zero();
        for (&xi, &yi) in x.iter().zip(y.iter()) {
            let e = yi - (slope * xi + intercept);
            ss += e * e;
        }
        (ss / (nf - r::<T>(2.0)) / sxx).sqrt()
    };
    Ok(FitResult { slope, intercept, stderr })
}

/// Least squares on `(ln x, ln y)`: the slope is the power-law exponent.
/// Non-positive entries are rejected.
pub fn loglog_fit<T: Real>(x: &[T], y: &[T]) -> Result<FitResult<T>> {
    let lx: Vec<T> = x
        .iter()
        .map(|&v| {
            if v > T::zero() {
                Ok(v.ln())
            } else {
                Err(DkgError::InvalidParam("log-log fit needs positive abscissae".into()))
            }
        })
        .collect::<Result<_>>()?;
    let ly: Vec<T> = y
        .iter()
        .map(|&v| {
            if v > T::zero() {
                Ok(v.ln())
            } else {
                Err(DkgError::InvalidParam("log-log fit needs positive ordinates".into()))
            }
        })
        .collect::<Result<_>>()?;
    linear_fit(&lx, &ly)
}

/// A measured power law: raw points plus their log-log fit.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PowerLaw<T: Real> {
    pub xs: Vec<T>,
    pub ys: Vec<T>,
    pub fit: FitResult<T>,
}

impl<T: Real> PowerLaw<T> {
    pub fn loglog(xs: Vec<T>, ys: Vec<T>) -> Result<Self> {
        let fit = loglog_fit(&xs, &ys)?;
        Ok(PowerLaw { xs, ys, fit })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = [1.0f64, 2.0, 3.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope - 2.5).abs() < 1e-14);
        assert!((f.intercept + 1.0).abs() < 1e-14);
        assert!(f.stderr < 1e-13);
    }

    #[test]
    fn power_law_slope() {
        let x = [1.0f64, 2.0, 4.0, 8.0, 16.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v.powf(-0.5)).collect();
        let f = loglog_fit(&x, &y).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-13);
        assert!((f.intercept - 3.0f64.ln()).abs() < 1e-13);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(linear_fit(&[1.0f64], &[2.0]).is_err());
        assert!(linear_fit(&[1.0f64, 1.0], &[2.0, 3.0]).is_err());
        assert!(loglog_fit(&[1.0f64, -2.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn stderr_reflects_scatter() {
        let x = [1.0f64, 2.0, 3.0, 4.0, 5.0];
        let y = [1.1f64, 1.9, 3.2, 3.8, 5.1];
        let f = linear_fit(&x, &y).unwrap();
        assert!(f.stderr > 0.0 && f.stderr < 0.2);
        assert!((f.slope - 1.0).abs() < 0.1);
    }
}
