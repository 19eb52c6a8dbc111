//! Not-a-knot cubic spline interpolation on a uniform grid (complex samples).
//!
//! Used by the dilation operator `D(t)f(x) = (2it)^{-1/2} f(x/2t)` and its
//! inverse, where resampling off the grid is unavoidable. The end conditions
//! matter here: `D(t)` with large `t` reads its input inside the *first* grid
//! interval (arguments `x/2t` near zero), so a natural spline's forced
//! `s'' = 0` at the ends would inject an `O(h²)` error exactly where the
//! vertex sits. Not-a-knot conditions (the third derivative is continuous
//! across the second and second-to-last nodes) keep the end intervals at the
//! same `O(h⁴)` accuracy as the interior.

use crate::C64;

/// Precomputed not-a-knot cubic spline through `values[m]` at `x_m = x0 + m·h`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x0: f64,
    h: f64,
    values: Vec<C64>,
    /// Second derivatives at the nodes.
    second: Vec<C64>,
}

impl CubicSpline {
    /// Build the spline. `values.len() ≥ 2`, `h > 0`.
    pub fn new(x0: f64, h: f64, values: &[C64]) -> Self {
        assert!(values.len() >= 2, "spline needs at least two nodes");
        assert!(h > 0.0 && h.is_finite(), "spline spacing must be positive");
        let n = values.len();
        let mut second = vec![C64::new(0.0, 0.0); n];
        // Interior rows of the standard system on a uniform grid read
        // M_{i−1} + 4·M_i + M_{i+1} = d_i with d_i = 6·Δ²y_i/h². Not-a-knot
        // prescribes Δ²M = 0 at both ends (M₀ = 2M₁ − M₂ and its mirror);
        // substituting into the first and last interior rows collapses them
        // to 6·M₁ = d₁ and 6·M_{n−2} = d_{n−2}, so those two values are the
        // plain second differences and the rest stays tridiagonal.
        let inv_h2 = 1.0 / (h * h);
        let d2 = |i: usize| (values[i - 1] - 2.0 * values[i] + values[i + 1]) * inv_h2;
        match n {
            2 => {} // straight line: all second derivatives zero
            3 => {
                // Quadratic through three points: constant second derivative.
                let m1 = d2(1);
                second[0] = m1;
                second[1] = m1;
                second[2] = m1;
            }
            _ => {
                second[1] = d2(1);
                second[n - 2] = d2(n - 2);
                let m = n - 4; // unknowns M₂ … M_{n−3}
                if m > 0 {
                    let mut diag = vec![4.0_f64; m];
                    let mut rhs = vec![C64::new(0.0, 0.0); m];
                    for i in 0..m {
                        rhs[i] = d2(i + 2) * 6.0;
                    }
                    rhs[0] -= second[1];
                    rhs[m - 1] -= second[n - 2];
                    for i in 1..m {
                        let w = 1.0 / diag[i - 1];
                        diag[i] -= w;
                        let carried = rhs[i - 1] * w;
                        rhs[i] -= carried;
                    }
                    second[m + 1] = rhs[m - 1] / diag[m - 1];
                    for i in (0..m - 1).rev() {
                        second[i + 2] = (rhs[i] - second[i + 3]) / diag[i];
                    }
                }
                second[0] = 2.0 * second[1] - second[2];
                second[n - 1] = 2.0 * second[n - 2] - second[n - 3];
            }
        }
        Self {
            x0,
            h,
            values: values.to_vec(),
            second,
        }
    }

    /// Lower end of the interpolation range.
    pub fn x_min(&self) -> f64 {
        self.x0
    }

    /// Upper end of the interpolation range.
    pub fn x_max(&self) -> f64 {
        self.x0 + self.h * (self.values.len() - 1) as f64
    }

    /// Evaluate inside the range; `None` outside.
    pub fn eval(&self, x: f64) -> Option<C64> {
        if !x.is_finite() || x < self.x_min() || x > self.x_max() {
            return None;
        }
        let t = (x - self.x0) / self.h;
        let mut i = t.floor() as usize;
        if i + 1 >= self.values.len() {
            i = self.values.len() - 2;
        }
        let s = t - i as f64;
        let a = 1.0 - s;
        let h2 = self.h * self.h / 6.0;
        Some(
            self.values[i] * a
                + self.values[i + 1] * s
                + (self.second[i] * (a * a * a - a) + self.second[i + 1] * (s * s * s - s)) * h2,
        )
    }

    /// Evaluate with zero extension outside the range (the resampled
    /// functions are supported well inside it; see the support monitor).
    pub fn eval_or_zero(&self, x: f64) -> C64 {
        self.eval(x).unwrap_or(C64::new(0.0, 0.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_nodes_exactly_and_linears_everywhere() {
        let xs: Vec<f64> = (0..=32).map(|m| 0.25 * m as f64).collect();
        let vals: Vec<C64> = xs
            .iter()
            .map(|&x| C64::new(2.0 * x - 1.0, -0.5 * x + 3.0))
            .collect();
        let sp = CubicSpline::new(0.0, 0.25, &vals);
        for (m, &x) in xs.iter().enumerate() {
            assert!((sp.eval(x).unwrap() - vals[m]).norm() < 1e-13);
        }
        // A linear function has zero second differences, so the spline is the
        // function itself at every point, not just the nodes.
        for k in 0..200 {
            let x = 8.0 * k as f64 / 199.0;
            let exact = C64::new(2.0 * x - 1.0, -0.5 * x + 3.0);
            assert!((sp.eval(x).unwrap() - exact).norm() < 1e-12);
        }
    }

    #[test]
    fn reproduces_cubics_exactly() {
        // Not-a-knot with ≥ 4 nodes represents a global cubic exactly; the
        // natural end condition would not (it forces s'' = 0 at the ends).
        let cubic = |x: f64| C64::new(x * x * x - 2.0 * x, 0.5 * x * x);
        let vals: Vec<C64> = (0..=16).map(|m| cubic(0.5 * m as f64)).collect();
        let sp = CubicSpline::new(0.0, 0.5, &vals);
        for k in 0..100 {
            let x = 8.0 * k as f64 / 99.0;
            assert!(
                (sp.eval(x).unwrap() - cubic(x)).norm() < 1e-11,
                "x = {x}"
            );
        }
    }

    #[test]
    fn fourth_order_accuracy_on_oscillatory_data() {
        // e^{iωx} sampled at ~20 points per wavelength: midpoint interpolation
        // error of a cubic spline is ≈ (ωh)⁴/384 ≈ 2.6e-5 at ωh = 0.315.
        let omega = 2.0;
        let h = std::f64::consts::PI / 20.0 / omega * 2.0; // ωh ≈ 0.314
        let n = 256;
        let vals: Vec<C64> = (0..=n)
            .map(|m| C64::from_polar(1.0, omega * h * m as f64))
            .collect();
        let sp = CubicSpline::new(0.0, h, &vals);
        let mut worst = 0.0_f64;
        let mut worst_end = 0.0_f64;
        for m in 0..n {
            let x = h * (m as f64 + 0.5);
            let err = (sp.eval(x).unwrap() - C64::from_polar(1.0, omega * x)).norm();
            if m < 2 || m > n - 3 {
                worst_end = worst_end.max(err);
            } else {
                worst = worst.max(err);
            }
        }
        assert!(worst < 5e-5, "worst interior {worst}");
        assert!(worst > 1e-7, "suspiciously exact: {worst}");
        // End intervals stay fourth-order under not-a-knot; a natural spline
        // would sit near (ωh)²/8 ≈ 1.2e-2 here.
        assert!(worst_end < 1e-3, "worst end-interval {worst_end}");
    }

    #[test]
    fn out_of_range_policy() {
        let vals = vec![C64::from(1.0); 9];
        let sp = CubicSpline::new(1.0, 0.5, &vals);
        assert_eq!(sp.eval(0.99), None);
        assert_eq!(sp.eval(5.01), None);
        assert_eq!(sp.eval_or_zero(7.0), C64::new(0.0, 0.0));
        assert!((sp.eval_or_zero(3.14) - C64::from(1.0)).norm() < 1e-13);
        assert_eq!(sp.eval(f64::NAN), None);
    }
}
