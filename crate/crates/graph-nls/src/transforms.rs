//! The distorted Fourier transform adapted to the Kirchhoff Laplacian.
//!
//! With the half-line kernels
//! `[F^± g](ξ) = (2π)^{-1/2} ∫_0^∞ e^{±ixξ} g(x) dx`, the transform pair
//! diagonalizing `Δ_K` on an `n`-star and its conjugate family are
//!
//! ```text
//! F      = (F⁻ − F⁺) I_n + (2/n) F⁺ J_n        F⁻¹    = (F⁺ − F⁻) I_n + (2/n) F⁻ J_n
//! F_c    = (F⁻ + F⁺) I_n − (2/n) F⁺ J_n        F_c⁻¹  = (F⁺ + F⁻) I_n − (2/n) F⁻ J_n
//! ```
//!
//! (`J_n` = all-ones matrix). Splitting `f_j = avg + perp_j` by
//! [`symmetric_decompose`] reduces everything to scalar sine and cosine
//! transforms `S[g] = √(2/π)∫ sin(xξ)g`, `C[g] = √(2/π)∫ cos(xξ)g`:
//!
//! ```text
//! (F f)_j     = −i S[perp_j] + C[avg]          (F⁻¹ φ)_j   = +i S[perp_j] + C[avg]
//! (F_c f)_j   =    C[perp_j] − i S[avg]        (F_c⁻¹ φ)_j =    C[perp_j] + i S[avg]
//! ```
//!
//! # Discrete realization
//!
//! On the grid `x_m = mh` (`h = L/N`) against `ξ_k = kπ/L` the kernel argument
//! is `πkm/N`, so each scalar transform is a trapezoid sum realized exactly by
//! a length-`2N` FFT of the even/odd extension. Because `h·Δξ = π/N`, the
//! discrete cosine pair is *exactly* inverse (`BC∘FC = FC∘BC = I`) and the
//! sine pair is exactly inverse on interior nodes (endpoint samples of the
//! sine family are structurally zero). Consequently `F`, `F⁻¹` are exactly
//! unitary on vertex-continuous data supported away from the far wall, and all
//! transform identities in this module hold to rounding on such data.
//!
//! Every continuum operator gets **two** directed discrete realizations: one
//! eating x-grid samples (quadrature weight `h`) and one eating ξ-grid samples
//! (weight `Δξ = π/L`). Compositions such as `F (M−1) F⁻¹` applied to an
//! x-sampled function alternate between them.

use std::cell::RefCell;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::{Fft, FftPlanner};

use crate::error::{CoreError, Result};
use crate::graph::{
    fd_derivative, kirchhoff_residual, l2_norm, lp_norm, symmetric_decompose, weighted_norms,
    GraphFunction, StarGraph,
};
use crate::spline::CubicSpline;
use crate::C64;

/// `√(2/π)`, the normalization of the scalar sine/cosine transforms.
pub const SQRT_2_OVER_PI: f64 = 0.7978845608028654;

/// Relative vertex-continuity threshold for the series/finite-difference
/// dispatch in [`spectral_derivative`].
pub const SERIES_CONTINUITY_TOL: f64 = 1e-10;

/// Relative vertex-flux threshold for the series/finite-difference dispatch.
pub const SERIES_FLUX_TOL: f64 = 1e-4;

/// Function sampled on the spectral grid `ξ_k = kπ/L`, `k = 0..=N`, one row
/// per edge — the image side of [`TransformPlan::forward_f`].
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFunction {
    graph: StarGraph,
    values: Array2<C64>,
}

impl SpectralFunction {
    /// The zero spectral function.
    pub fn zeros(graph: StarGraph) -> Self {
        Self {
            graph,
            values: Array2::zeros((graph.n_edges(), graph.n_samples())),
        }
    }

    /// Sample `φ_j(ξ) = profile(j, ξ)` on the spectral grid.
    pub fn from_profile_fn(graph: StarGraph, mut profile: impl FnMut(usize, f64) -> C64) -> Self {
        let mut values = Array2::zeros((graph.n_edges(), graph.n_samples()));
        for j in 0..graph.n_edges() {
            for k in 0..graph.n_samples() {
                values[[j, k]] = profile(j, graph.xi(k));
            }
        }
        Self { graph, values }
    }

    /// Wrap existing samples (shape `n_edges × (N+1)`).
    pub fn from_values(graph: StarGraph, values: Array2<C64>) -> Result<Self> {
        if values.shape() != [graph.n_edges(), graph.n_samples()] {
            return Err(CoreError::GridMismatch(format!(
                "expected {} × {} spectral samples, got {:?}",
                graph.n_edges(),
                graph.n_samples(),
                values.shape()
            )));
        }
        Ok(Self { graph, values })
    }

    /// Underlying (physical) graph this spectral function is dual to.
    pub fn graph(&self) -> StarGraph {
        self.graph
    }

    /// Sample array, edges as rows.
    pub fn values(&self) -> &Array2<C64> {
        &self.values
    }

    /// Mutable sample array.
    pub fn values_mut(&mut self) -> &mut Array2<C64> {
        &mut self.values
    }

    /// The dual grid geometry: an interval `[0, ξ_max]` with the same number
    /// of intervals, so that graph-side quadrature helpers apply verbatim to
    /// spectral samples.
    pub fn dual_graph(&self) -> StarGraph {
        StarGraph::new(
            self.graph.n_edges(),
            self.graph.xi_max(),
            self.graph.grid_points(),
        )
        .expect("dual grid of a valid graph is valid")
    }

    /// Reinterpret the samples as a function on the dual grid (cheap clone of
    /// the value array) — used for norms and vertex diagnostics in ξ.
    pub fn as_dual_function(&self) -> GraphFunction {
        GraphFunction::from_values(self.dual_graph(), self.values.clone())
            .expect("dual samples have matching shape")
    }

    /// `self − g`.
    pub fn sub(&self, g: &SpectralFunction) -> Result<SpectralFunction> {
        if self.graph != g.graph {
            return Err(CoreError::GridMismatch(
                "spectral operands on different graphs".into(),
            ));
        }
        Ok(SpectralFunction {
            graph: self.graph,
            values: &self.values - &g.values,
        })
    }

    /// Apply `op` to every sample.
    pub fn map(&self, op: impl Fn(C64) -> C64) -> SpectralFunction {
        SpectralFunction {
            graph: self.graph,
            values: self.values.mapv(op),
        }
    }
}

/// `‖φ‖_{L²(dξ)}` on the spectral grid (trapezoid, all edges).
pub fn spectral_l2_norm(phi: &SpectralFunction) -> f64 {
    l2_norm(&phi.as_dual_function())
}

/// Grid sup norm of a spectral function over all edges.
pub fn spectral_sup_norm(phi: &SpectralFunction) -> f64 {
    phi.values().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Which direction a kernel quadrature eats samples from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    /// x-grid input (weight `h`).
    Physical,
    /// ξ-grid input (weight `Δξ`).
    Spectral,
}

/// FFT-backed sine/cosine transform engine for one graph geometry.
///
/// Holds the length-`2N` FFT plan and scratch buffers; all public transform
/// entry points live here so plans are built once per graph.
pub struct TransformPlan {
    graph: StarGraph,
    fft: Arc<dyn Fft<f64>>,
    buf: RefCell<Vec<C64>>,
    scratch: RefCell<Vec<C64>>,
}

impl TransformPlan {
    /// Build the plan for `graph`.
    pub fn new(graph: StarGraph) -> Self {
        let n2 = 2 * graph.grid_points();
        let fft = FftPlanner::new().plan_fft_forward(n2);
        let scratch_len = fft.get_inplace_scratch_len();
        Self {
            graph,
            fft,
            buf: RefCell::new(vec![C64::new(0.0, 0.0); n2]),
            scratch: RefCell::new(vec![C64::new(0.0, 0.0); scratch_len]),
        }
    }

    /// The graph this plan realizes transforms for.
    pub fn graph(&self) -> StarGraph {
        self.graph
    }

    fn weight(&self, side: Side) -> f64 {
        match side {
            Side::Physical => self.graph.h(),
            Side::Spectral => self.graph.dxi(),
        }
    }

    /// `√(2/π) · weight · Σ''_m cos(πkm/N) g_m` for `k = 0..=N`
    /// (trapezoid-weighted discrete cosine analysis/synthesis).
    fn cos_kernel(&self, g: &[C64], side: Side) -> Vec<C64> {
        let n = self.graph.grid_points();
        debug_assert_eq!(g.len(), n + 1);
        let mut buf = self.buf.borrow_mut();
        let mut scratch = self.scratch.borrow_mut();
        // Even extension: y_m = g_m (m = 0..N), y_{2N−m} = g_m (m = 1..N−1);
        // then Σ''_m cos(πkm/N) g_m = Y_k / 2.
        buf[0] = g[0];
        buf[n] = g[n];
        for m in 1..n {
            buf[m] = g[m];
            buf[2 * n - m] = g[m];
        }
        self.fft.process_with_scratch(&mut buf, &mut scratch);
        let c = 0.5 * SQRT_2_OVER_PI * self.weight(side);
        (0..=n).map(|k| c * buf[k]).collect()
    }

    /// `√(2/π) · weight · Σ_{m=1}^{N−1} sin(πkm/N) g_m` for `k = 0..=N`; the
    /// `k = 0` and `k = N` outputs are structurally zero and returned as such.
    fn sin_kernel(&self, g: &[C64], side: Side) -> Vec<C64> {
        let n = self.graph.grid_points();
        debug_assert_eq!(g.len(), n + 1);
        let mut buf = self.buf.borrow_mut();
        let mut scratch = self.scratch.borrow_mut();
        // Odd extension: y_0 = y_N = 0, y_m = g_m, y_{2N−m} = −g_m;
        // then Σ_m sin(πkm/N) g_m = i·Y_k / 2.
        buf[0] = C64::new(0.0, 0.0);
        buf[n] = C64::new(0.0, 0.0);
        for m in 1..n {
            buf[m] = g[m];
            buf[2 * n - m] = -g[m];
        }
        self.fft.process_with_scratch(&mut buf, &mut scratch);
        let c = 0.5 * SQRT_2_OVER_PI * self.weight(side);
        let i = C64::new(0.0, 1.0);
        let mut out: Vec<C64> = (0..=n).map(|k| c * (i * buf[k])).collect();
        out[0] = C64::new(0.0, 0.0);
        out[n] = C64::new(0.0, 0.0);
        out
    }

    /// Literal trapezoid-sum cosine kernel (O(N²)) — reference path.
    fn cos_kernel_slow(&self, g: &[C64], side: Side) -> Vec<C64> {
        let n = self.graph.grid_points();
        let c = SQRT_2_OVER_PI * self.weight(side);
        let pi_over_n = std::f64::consts::PI / n as f64;
        (0..=n)
            .map(|k| {
                let mut acc = 0.5 * (g[0] + g[n] * C64::from((pi_over_n * (k * n) as f64).cos()));
                for (m, gm) in g.iter().enumerate().take(n).skip(1) {
                    acc += gm * C64::from((pi_over_n * (k * m) as f64).cos());
                }
                c * acc
            })
            .collect()
    }

    /// Literal trapezoid-sum sine kernel (O(N²)) — reference path.
    fn sin_kernel_slow(&self, g: &[C64], side: Side) -> Vec<C64> {
        let n = self.graph.grid_points();
        let c = SQRT_2_OVER_PI * self.weight(side);
        let pi_over_n = std::f64::consts::PI / n as f64;
        (0..=n)
            .map(|k| {
                let mut acc = C64::new(0.0, 0.0);
                for (m, gm) in g.iter().enumerate().take(n).skip(1) {
                    acc += gm * C64::from((pi_over_n * (k * m) as f64).sin());
                }
                c * acc
            })
            .collect()
    }

    fn assemble_from_parts(
        &self,
        perp_coef: C64,
        perp_parts: &[Vec<C64>],
        avg_coef: C64,
        avg_part: &[C64],
    ) -> Array2<C64> {
        let n_edges = self.graph.n_edges();
        let ns = self.graph.n_samples();
        let mut values = Array2::zeros((n_edges, ns));
        for j in 0..n_edges {
            for k in 0..ns {
                values[[j, k]] = perp_coef * perp_parts[j][k] + avg_coef * avg_part[k];
            }
        }
        values
    }

    /// Core assembly: applies one of the four operators given the sine/cosine
    /// placement. `perp_uses_sin` selects `S[perp]`+`C[avg]` (the `F` family)
    /// vs `C[perp]`+`S[avg]` (the `F_c` family).
    fn apply_operator(
        &self,
        values: &Array2<C64>,
        side: Side,
        perp_uses_sin: bool,
        perp_coef: C64,
        avg_coef: C64,
        slow: bool,
    ) -> Array2<C64> {
        let graph = self.graph;
        let tmp = GraphFunction::from_values(graph, values.clone())
            .expect("operator input shape already validated");
        let (avg, perp) = symmetric_decompose(&tmp);
        let avg_slice: Vec<C64> = avg.to_vec();
        let kernel = |g: &[C64], want_sin: bool| -> Vec<C64> {
            match (want_sin, slow) {
                (true, false) => self.sin_kernel(g, side),
                (true, true) => self.sin_kernel_slow(g, side),
                (false, false) => self.cos_kernel(g, side),
                (false, true) => self.cos_kernel_slow(g, side),
            }
        };
        let perp_parts: Vec<Vec<C64>> = (0..graph.n_edges())
            .map(|j| {
                let row: Vec<C64> = perp.edge(j).to_vec();
                kernel(&row, perp_uses_sin)
            })
            .collect();
        let avg_part = kernel(&avg_slice, !perp_uses_sin);
        self.assemble_from_parts(perp_coef, &perp_parts, avg_coef, &avg_part)
    }

    /// `F f` — x-grid samples in, ξ-grid samples out:
    /// `(Ff)_j = −i S[perp_j] + C[avg]`.
    pub fn forward_f(&self, f: &GraphFunction) -> Result<SpectralFunction> {
        self.check(f.graph())?;
        let values = self.apply_operator(
            f.values(),
            Side::Physical,
            true,
            C64::new(0.0, -1.0),
            C64::new(1.0, 0.0),
            false,
        );
        SpectralFunction::from_values(self.graph, values)
    }

    /// `F⁻¹ φ` — ξ-grid samples in, x-grid samples out:
    /// `(F⁻¹φ)_j = +i S[perp_j] + C[avg]`.
    pub fn inverse_f(&self, phi: &SpectralFunction) -> Result<GraphFunction> {
        self.check(phi.graph())?;
        let values = self.apply_operator(
            phi.values(),
            Side::Spectral,
            true,
            C64::new(0.0, 1.0),
            C64::new(1.0, 0.0),
            false,
        );
        GraphFunction::from_values(self.graph, values)
    }

    /// `F_c f` — x-grid in, ξ-grid out: `(F_c f)_j = C[perp_j] − i S[avg]`.
    pub fn forward_fc(&self, f: &GraphFunction) -> Result<SpectralFunction> {
        self.check(f.graph())?;
        let values = self.apply_operator(
            f.values(),
            Side::Physical,
            false,
            C64::new(1.0, 0.0),
            C64::new(0.0, -1.0),
            false,
        );
        SpectralFunction::from_values(self.graph, values)
    }

    /// `F_c⁻¹ φ` — ξ-grid in, x-grid out: `(F_c⁻¹φ)_j = C[perp_j] + i S[avg]`.
    pub fn inverse_fc(&self, phi: &SpectralFunction) -> Result<GraphFunction> {
        self.check(phi.graph())?;
        let values = self.apply_operator(
            phi.values(),
            Side::Spectral,
            false,
            C64::new(1.0, 0.0),
            C64::new(0.0, 1.0),
            false,
        );
        GraphFunction::from_values(self.graph, values)
    }

    /// The *same* continuum operator `F⁻¹`, realized on x-grid samples with
    /// output on the ξ-grid — used inside compositions like `F (M−1) F⁻¹ f`
    /// where `f` arrives as a physical function.
    pub fn inverse_f_from_physical(&self, f: &GraphFunction) -> Result<SpectralFunction> {
        self.check(f.graph())?;
        let values = self.apply_operator(
            f.values(),
            Side::Physical,
            true,
            C64::new(0.0, 1.0),
            C64::new(1.0, 0.0),
            false,
        );
        SpectralFunction::from_values(self.graph, values)
    }

    /// The operator `F` realized on ξ-grid samples with output on the x-grid
    /// (dual direction of [`Self::forward_f`]).
    pub fn forward_f_from_spectral(&self, phi: &SpectralFunction) -> Result<GraphFunction> {
        self.check(phi.graph())?;
        let values = self.apply_operator(
            phi.values(),
            Side::Spectral,
            true,
            C64::new(0.0, -1.0),
            C64::new(1.0, 0.0),
            false,
        );
        GraphFunction::from_values(self.graph, values)
    }

    /// O(N²) literal-quadrature realization of `F` (reference for the FFT
    /// path; use only for `N ≤ 256`-scale grids).
    pub fn forward_f_slow(&self, f: &GraphFunction) -> Result<SpectralFunction> {
        self.check(f.graph())?;
        let values = self.apply_operator(
            f.values(),
            Side::Physical,
            true,
            C64::new(0.0, -1.0),
            C64::new(1.0, 0.0),
            true,
        );
        SpectralFunction::from_values(self.graph, values)
    }

    /// O(N²) literal-quadrature realization of `F⁻¹`.
    pub fn inverse_f_slow(&self, phi: &SpectralFunction) -> Result<GraphFunction> {
        self.check(phi.graph())?;
        let values = self.apply_operator(
            phi.values(),
            Side::Spectral,
            true,
            C64::new(0.0, 1.0),
            C64::new(1.0, 0.0),
            true,
        );
        GraphFunction::from_values(self.graph, values)
    }

    /// O(N²) literal-quadrature realization of `F_c`.
    pub fn forward_fc_slow(&self, f: &GraphFunction) -> Result<SpectralFunction> {
        self.check(f.graph())?;
        let values = self.apply_operator(
            f.values(),
            Side::Physical,
            false,
            C64::new(1.0, 0.0),
            C64::new(0.0, -1.0),
            true,
        );
        SpectralFunction::from_values(self.graph, values)
    }

    fn check(&self, g: StarGraph) -> Result<()> {
        if g != self.graph {
            return Err(CoreError::GridMismatch(format!(
                "plan built for {:?}, got {:?}",
                self.graph, g
            )));
        }
        Ok(())
    }
}

/// Scalar half-line transform `[F^± g](ξ_k) = (2π)^{-1/2} ∫_0^∞ e^{±ixξ} g dx`
/// by literal trapezoid quadrature on `[0, L]` (reference oracle; O(N²)).
///
/// `sign = +1` selects `F⁺` (kernel `e^{+ixξ}`), `sign = −1` selects `F⁻`.
pub fn half_line_transform(graph: StarGraph, sign: i32, g: &[C64]) -> Result<Vec<C64>> {
    if sign != 1 && sign != -1 {
        return Err(CoreError::Domain(format!(
            "half-line kernel sign must be ±1, got {sign}"
        )));
    }
    if g.len() != graph.n_samples() {
        return Err(CoreError::GridMismatch(format!(
            "expected {} samples, got {}",
            graph.n_samples(),
            g.len()
        )));
    }
    let n = graph.grid_points();
    let h = graph.h();
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut out = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let xi = graph.xi(k);
        let mut acc = C64::new(0.0, 0.0);
        for (m, gm) in g.iter().enumerate() {
            let w = if m == 0 || m == n { 0.5 * h } else { h };
            let phase = sign as f64 * graph.x(m) * xi;
            acc += w * gm * C64::from_polar(1.0, phase);
        }
        out.push(norm * acc);
    }
    Ok(out)
}

/// Quadratic modulation `M(t) f = e^{i|x|²/4t} f` on physical samples.
///
/// `inverse = true` applies `M(t)⁻¹ = e^{−i|x|²/4t}`. Requires `t > 0`.
pub fn apply_m(t: f64, f: &GraphFunction, inverse: bool) -> Result<GraphFunction> {
    if !(t.is_finite() && t > 0.0) {
        return Err(CoreError::Domain(format!(
            "modulation M(t) requires t > 0, got {t}"
        )));
    }
    let graph = f.graph();
    let sign = if inverse { -1.0 } else { 1.0 };
    let mut out = f.clone();
    for j in 0..graph.n_edges() {
        for m in 0..graph.n_samples() {
            let x = graph.x(m);
            out.values_mut()[[j, m]] *= C64::from_polar(1.0, sign * x * x / (4.0 * t));
        }
    }
    Ok(out)
}

/// `M(t)` acting on ξ-grid samples (the variable is read as the graph
/// coordinate of the sampled function, per the single-space formalism).
pub fn apply_m_spectral(t: f64, phi: &SpectralFunction, inverse: bool) -> Result<SpectralFunction> {
    if !(t.is_finite() && t > 0.0) {
        return Err(CoreError::Domain(format!(
            "modulation M(t) requires t > 0, got {t}"
        )));
    }
    let graph = phi.graph();
    let sign = if inverse { -1.0 } else { 1.0 };
    let mut out = phi.clone();
    for j in 0..graph.n_edges() {
        for k in 0..graph.n_samples() {
            let xi = graph.xi(k);
            out.values_mut()[[j, k]] *= C64::from_polar(1.0, sign * xi * xi / (4.0 * t));
        }
    }
    Ok(out)
}

/// Dilation `D(t) φ (x) = (2it)^{-1/2} φ(x/2t)`, resampling ξ-grid samples
/// onto the x-grid by cubic spline with zero extension. Requires `t > 0`.
///
/// `(2it)^{-1/2} = e^{-iπ/4} (2t)^{-1/2}` on the principal branch.
pub fn apply_d(t: f64, phi: &SpectralFunction) -> Result<GraphFunction> {
    if !(t.is_finite() && t > 0.0) {
        return Err(CoreError::Domain(format!(
            "dilation D(t) requires t > 0, got {t}"
        )));
    }
    let graph = phi.graph();
    let amp = C64::from_polar((2.0 * t).powf(-0.5), -std::f64::consts::FRAC_PI_4);
    let mut out = GraphFunction::zeros(graph);
    for j in 0..graph.n_edges() {
        let row: Vec<C64> = phi.values().row(j).to_vec();
        let sp = CubicSpline::new(0.0, graph.dxi(), &row);
        for m in 0..graph.n_samples() {
            out.values_mut()[[j, m]] = amp * sp.eval_or_zero(graph.x(m) / (2.0 * t));
        }
    }
    Ok(out)
}

/// Inverse dilation `D(t)⁻¹ f (ξ) = (2it)^{1/2} f(2tξ)`, resampling x-grid
/// samples onto the ξ-grid (zero extension past the wall). Requires `t > 0`.
pub fn apply_d_inverse(t: f64, f: &GraphFunction) -> Result<SpectralFunction> {
    if !(t.is_finite() && t > 0.0) {
        return Err(CoreError::Domain(format!(
            "dilation D(t)⁻¹ requires t > 0, got {t}"
        )));
    }
    let graph = f.graph();
    let amp = C64::from_polar((2.0 * t).sqrt(), std::f64::consts::FRAC_PI_4);
    let mut out = SpectralFunction::zeros(graph);
    for j in 0..graph.n_edges() {
        let row: Vec<C64> = f.values().row(j).to_vec();
        let sp = CubicSpline::new(0.0, graph.h(), &row);
        for k in 0..graph.n_samples() {
            out.values_mut()[[j, k]] = amp * sp.eval_or_zero(2.0 * t * graph.xi(k));
        }
    }
    Ok(out)
}

/// Cross-grid dilation: `D(t)` applied to a function sampled on the x-grid of
/// `src`, emitted on the x-grid of `target` — the bridge between the fine
/// profile grid and the long trajectory grid in the final-state machinery.
pub fn apply_d_cross(t: f64, src: &GraphFunction, target: StarGraph) -> Result<GraphFunction> {
    if !(t.is_finite() && t > 0.0) {
        return Err(CoreError::Domain(format!(
            "dilation D(t) requires t > 0, got {t}"
        )));
    }
    if src.graph().n_edges() != target.n_edges() {
        return Err(CoreError::GridMismatch(
            "cross-grid dilation requires matching edge counts".into(),
        ));
    }
    let amp = C64::from_polar((2.0 * t).powf(-0.5), -std::f64::consts::FRAC_PI_4);
    let mut out = GraphFunction::zeros(target);
    for j in 0..target.n_edges() {
        let row: Vec<C64> = src.values().row(j).to_vec();
        let sp = CubicSpline::new(0.0, src.graph().h(), &row);
        for m in 0..target.n_samples() {
            out.values_mut()[[j, m]] = amp * sp.eval_or_zero(target.x(m) / (2.0 * t));
        }
    }
    Ok(out)
}

/// Spatial weight `X^{power} f = x^{power} f_j(x)`, `power ∈ [0, 1]`.
pub fn apply_x(f: &GraphFunction, power: f64) -> Result<GraphFunction> {
    if !(0.0..=1.0).contains(&power) || power.is_nan() {
        return Err(CoreError::Domain(format!(
            "weight power must lie in [0, 1], got {power}"
        )));
    }
    Ok(crate::graph::x_weighted(f, power))
}

/// Spectral-side weight `ξ^{power} φ`, same domain restriction as [`apply_x`].
pub fn apply_x_spectral(phi: &SpectralFunction, power: f64) -> Result<SpectralFunction> {
    if !(0.0..=1.0).contains(&power) || power.is_nan() {
        return Err(CoreError::Domain(format!(
            "weight power must lie in [0, 1], got {power}"
        )));
    }
    let graph = phi.graph();
    let mut out = phi.clone();
    for j in 0..graph.n_edges() {
        for k in 0..graph.n_samples() {
            out.values_mut()[[j, k]] *= C64::from(graph.xi(k).powf(power));
        }
    }
    Ok(out)
}

/// Which derivative realization [`spectral_derivative`] selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativePath {
    /// Sine/cosine series differentiation (exact on the compatible subspace).
    Series,
    /// Fourth-order finite differences (fallback for vertex-incompatible data).
    FiniteDifference,
}

/// Series differentiation on the compatible subspace: the average is a cosine
/// series (`avg' = −BS[ξ ⊙ FC avg]`), the remainder a sine series
/// (`perp' = BC[ξ ⊙ FS perp]`).
pub fn spectral_derivative_series(plan: &TransformPlan, f: &GraphFunction) -> Result<GraphFunction> {
    plan.check(f.graph())?;
    let graph = f.graph();
    let (avg, perp) = symmetric_decompose(f);
    let avg_slice: Vec<C64> = avg.to_vec();

    // avg' = −Σ ξ_k A_k sin(ξ_k x): analyze with weight h, synthesize with Δξ.
    let mut a = plan.cos_kernel(&avg_slice, Side::Physical);
    for (k, ak) in a.iter_mut().enumerate() {
        *ak *= C64::from(graph.xi(k));
    }
    let davg = plan.sin_kernel(&a, Side::Spectral);

    let mut values = Array2::zeros((graph.n_edges(), graph.n_samples()));
    for j in 0..graph.n_edges() {
        let row: Vec<C64> = perp.edge(j).to_vec();
        let mut p = plan.sin_kernel(&row, Side::Physical);
        for (k, pk) in p.iter_mut().enumerate() {
            *pk *= C64::from(graph.xi(k));
        }
        let dperp = plan.cos_kernel(&p, Side::Spectral);
        for m in 0..graph.n_samples() {
            values[[j, m]] = dperp[m] - davg[m];
        }
    }
    GraphFunction::from_values(graph, values)
}

/// Edgewise derivative with automatic dispatch: series differentiation when
/// the data satisfies the Kirchhoff conditions within tolerance (relative to
/// `max(1, ‖f‖_∞)`), fourth-order finite differences otherwise. Returns the
/// derivative and the path taken.
pub fn spectral_derivative(
    plan: &TransformPlan,
    f: &GraphFunction,
) -> Result<(GraphFunction, DerivativePath)> {
    plan.check(f.graph())?;
    let scale = lp_norm(f, f64::INFINITY)?.max(1.0);
    let res = kirchhoff_residual(f);
    if res.continuity_defect <= SERIES_CONTINUITY_TOL * scale
        && res.flux_defect <= SERIES_FLUX_TOL * scale
    {
        Ok((spectral_derivative_series(plan, f)?, DerivativePath::Series))
    } else {
        Ok((fd_derivative(f), DerivativePath::FiniteDifference))
    }
}

/// ξ-derivative of a spectral function, applied on the dual grid. The
/// edge-average of a spectral image is even in ξ (cosine series with
/// x-wavenumbers), the remainder odd (sine series).
///
/// Dispatch here is continuity-only: the cosine interpolant is the canonical
/// representation of the average part of spectral samples (the discrete
/// analysis/synthesis pair is exactly inverse), so series differentiation is
/// always faithful for it — and a vertex-flux stencil is meaningless on this
/// side, since transform images oscillate at rates up to `x ~ L`, i.e.
/// `O(1)` radians per ξ-sample, where one-sided stencils see huge phantom
/// flux on perfectly even data. Only a jump of the zero-sum part at `ξ = 0`
/// (which sine synthesis cannot represent) forces finite differences.
pub fn spectral_derivative_xi(
    plan: &TransformPlan,
    phi: &SpectralFunction,
) -> Result<(SpectralFunction, DerivativePath)> {
    plan.check(phi.graph())?;
    let graph = phi.graph();
    let dual = phi.as_dual_function();
    let scale = lp_norm(&dual, f64::INFINITY)?.max(1.0);
    let res = kirchhoff_residual(&dual);
    if res.continuity_defect > SERIES_CONTINUITY_TOL * scale {
        let d = fd_derivative(&dual);
        return Ok((
            SpectralFunction::from_values(graph, d.values().clone())?,
            DerivativePath::FiniteDifference,
        ));
    }

    let (avg, perp) = symmetric_decompose(&dual);
    let avg_slice: Vec<C64> = avg.to_vec();
    // avg(ξ) = Σ'' A_m cos(x_m ξ): analyze with weight Δξ, synthesize with h.
    let mut a = plan.cos_kernel(&avg_slice, Side::Spectral);
    for (m, am) in a.iter_mut().enumerate() {
        *am *= C64::from(graph.x(m));
    }
    let davg = plan.sin_kernel(&a, Side::Physical);

    let mut values = Array2::zeros((graph.n_edges(), graph.n_samples()));
    for j in 0..graph.n_edges() {
        let row: Vec<C64> = perp.edge(j).to_vec();
        let mut p = plan.sin_kernel(&row, Side::Spectral);
        for (m, pm) in p.iter_mut().enumerate() {
            *pm *= C64::from(graph.x(m));
        }
        let dperp = plan.cos_kernel(&p, Side::Physical);
        for k in 0..graph.n_samples() {
            values[[j, k]] = dperp[k] - davg[k];
        }
    }
    Ok((
        SpectralFunction::from_values(graph, values)?,
        DerivativePath::Series,
    ))
}

/// Normalized residuals of the three commutation identities tying `X`, `∂`,
/// `F`, `F_c` together (each `‖·‖_{L²}` divided by `‖f‖_Σ`):
///
/// 1. `X F⁻¹ φ − i F_c⁻¹ ∂_ξ φ` — vanishes on vertex-continuous data; for
///    data with a vertex jump the residual is the constant boundary term
///    `i √(2/π) perp_φ,j(0)` on edge `j`.
/// 2. `F_c ∂_x f − i ξ F f`.
/// 3. `∂_ξ (F f) + i F_c (X f)` — boundary-term free.
///
/// Identity 1 is evaluated on `φ` = the profile of `f` resampled onto the
/// ξ-grid (cubic spline, zero extension past `x = L`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommutationResiduals {
    /// Residual of identity 1 (weight vs. inverse transform).
    pub weight_vs_inverse: f64,
    /// Residual of identity 2 (derivative vs. forward transform).
    pub derivative_vs_forward: f64,
    /// Residual of identity 3 (spectral derivative vs. weight).
    pub xi_derivative_vs_weight: f64,
    /// The normalization `‖f‖_Σ` used.
    pub sigma_norm: f64,
}

/// Resample the profile of `f` onto the ξ-grid (spline, zero extension).
pub fn resample_to_spectral(f: &GraphFunction) -> SpectralFunction {
    let graph = f.graph();
    let mut out = SpectralFunction::zeros(graph);
    for j in 0..graph.n_edges() {
        let row: Vec<C64> = f.values().row(j).to_vec();
        let sp = CubicSpline::new(0.0, graph.h(), &row);
        for k in 0..graph.n_samples() {
            out.values_mut()[[j, k]] = sp.eval_or_zero(graph.xi(k));
        }
    }
    out
}

/// Evaluate the three commutation identities for `f`; see
/// [`CommutationResiduals`].
pub fn check_commutation_identities(
    plan: &TransformPlan,
    f: &GraphFunction,
) -> Result<CommutationResiduals> {
    plan.check(f.graph())?;
    let sigma = weighted_norms(f).sigma;
    if sigma == 0.0 {
        return Err(CoreError::Precondition(
            "commutation identities need a nonzero function".into(),
        ));
    }

    // Identity 1: X F⁻¹ φ = i F_c⁻¹ ∂_ξ φ + boundary term.
    let phi = resample_to_spectral(f);
    let lhs1 = apply_x(&plan.inverse_f(&phi)?, 1.0)?;
    let (dphi, _) = spectral_derivative_xi(plan, &phi)?;
    let rhs1 = plan.inverse_fc(&dphi)?.scale(C64::new(0.0, 1.0));
    let r1 = l2_norm(&lhs1.sub(&rhs1)?);

    // Identity 2: F_c ∂_x f = i ξ F f.
    let (df, _) = spectral_derivative(plan, f)?;
    let lhs2 = plan.forward_fc(&df)?;
    let rhs2 = apply_x_spectral(&plan.forward_f(f)?, 1.0)?.map(|z| C64::new(0.0, 1.0) * z);
    let r2 = spectral_l2_norm(&lhs2.sub(&rhs2)?);

    // Identity 3: ∂_ξ (F f) = −i F_c (X f).
    let ff = plan.forward_f(f)?;
    let (dff, _) = spectral_derivative_xi(plan, &ff)?;
    let rhs3 = plan.forward_fc(&apply_x(f, 1.0)?)?.map(|z| C64::new(0.0, -1.0) * z);
    let r3 = spectral_l2_norm(&dff.sub(&rhs3)?);

    Ok(CommutationResiduals {
        weight_vs_inverse: r1 / sigma,
        derivative_vs_forward: r2 / sigma,
        xi_derivative_vs_weight: r3 / sigma,
        sigma_norm: sigma,
    })
}
