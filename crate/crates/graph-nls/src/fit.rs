//! Least-squares rate fitting for decay exponents.
//!
//! Every asymptotic statement exercised by this crate has the shape
//! `quantity(t) ≈ c·t^{slope}`; fits are ordinary least squares of
//! `log(value)` against `log(time)` over a stated window, so sampling times
//! logarithmically keeps the regression well conditioned.

use crate::error::{CoreError, Result};

/// Result of a log-log decay fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    /// Fitted exponent of `t`.
    pub slope: f64,
    /// Fitted `log(c)` (natural log).
    pub intercept: f64,
    /// Coefficient of determination in `[0, 1]`.
    pub r_squared: f64,
    /// The `[t_lo, t_hi]` window actually used.
    pub window: (f64, f64),
    /// Number of samples inside the window.
    pub n_points: usize,
}

/// Result of a plain linear fit against an arbitrary abscissa.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    /// Fitted slope.
    pub slope: f64,
    /// Fitted intercept.
    pub intercept: f64,
    /// Coefficient of determination in `[0, 1]`.
    pub r_squared: f64,
    /// Number of samples used.
    pub n_points: usize,
}

fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    // Residual sum of squares. A spread that is pure rounding noise relative
    // to the magnitude of the data (constant input, up to ULPs introduced by
    // the mean) counts as an exact fit: r² = 1.
    let ss_res = syy - slope * sxy;
    let scale = ys.iter().map(|y| y * y).sum::<f64>();
    let r2 = if syy > 1e-24 * scale.max(f64::MIN_POSITIVE) {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    } else {
        1.0
    };
    (slope, intercept, r2)
}

/// Ordinary least squares of `log(value)` against `log(time)`, restricted to
/// `window = [t_lo, t_hi]` (inclusive).
///
/// Values must be strictly positive inside the window — except that an exact
/// zero (a residual that collapsed to rounding) is reported as the sentinel
/// `slope = −∞` rather than an error. Negative, NaN, or non-finite values,
/// nonpositive times, or fewer than 5 points in the window are errors.
pub fn fit_decay_exponent(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<FitResult> {
    if times.len() != values.len() {
        return Err(CoreError::Precondition(format!(
            "times ({}) and values ({}) differ in length",
            times.len(),
            values.len()
        )));
    }
    if !(window.0.is_finite() && window.1.is_finite()) || window.0 > window.1 {
        return Err(CoreError::Domain(format!(
            "invalid fit window [{}, {}]",
            window.0, window.1
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut n_zero = 0usize;
    for (&t, &v) in times.iter().zip(values) {
        if t < window.0 || t > window.1 {
            continue;
        }
        if !(t.is_finite() && t > 0.0) {
            return Err(CoreError::Domain(format!(
                "fit requires positive finite times, got t = {t}"
            )));
        }
        if !v.is_finite() || v < 0.0 {
            return Err(CoreError::Domain(format!(
                "fit requires nonnegative finite values, got {v} at t = {t}"
            )));
        }
        if v == 0.0 {
            n_zero += 1;
            continue;
        }
        xs.push(t.ln());
        ys.push(v.ln());
    }
    let n_points = xs.len() + n_zero;
    if n_points < 5 {
        return Err(CoreError::Precondition(format!(
            "fit window [{}, {}] holds {} points; need ≥ 5",
            window.0, window.1, n_points
        )));
    }
    if n_zero > 0 {
        return Ok(FitResult {
            slope: f64::NEG_INFINITY,
            intercept: 0.0,
            r_squared: 0.0,
            window,
            n_points,
        });
    }
    let (slope, intercept, r_squared) = ols(&xs, &ys);
    Ok(FitResult {
        slope,
        intercept,
        r_squared,
        window,
        n_points,
    })
}

/// Ordinary least squares of `ys` against an arbitrary abscissa `xs` (no
/// logs) — used for divergence diagnostics where the natural axis is `log τ`
/// or a fractional power of τ rather than a power law.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(CoreError::Precondition(format!(
            "abscissa ({}) and ordinate ({}) differ in length",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 2 {
        return Err(CoreError::Precondition(
            "linear fit needs at least 2 points".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(CoreError::Domain("linear fit requires finite data".into()));
    }
    let (slope, intercept, r_squared) = ols(xs, ys);
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        n_points: xs.len(),
    })
}
