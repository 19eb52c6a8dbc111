//! The three asymptotic experiments: the final-state construction (prescribe
//! the profile, build the solution by Picard iteration on a time-weighted
//! space), modified-scattering data extraction from an initial-value
//! trajectory (the gauge that removes the long-range phase), and the
//! pairing functional that detects failure of plain scattering for
//! `1 ≤ p ≤ 2`.
//!
//! Conventions shared by everything here:
//!
//! * profiles in the similarity variable `ξ = x/2t` are [`SpectralFunction`]s
//!   on the trajectory graph's dual grid (spacing `π/L`, which for the long
//!   graphs used by these experiments is far finer than the profile scale);
//! * `N(u) = −λ|u|²u` is the cubic nonlinearity; the gauge and all phase
//!   bookkeeping use the same `λ`;
//! * `λ = 0` is accepted everywhere as the "nonlinearity off" switch — it
//!   turns the Picard map into the exact identity `Φ(v) = u_ap + R_w` and
//!   the gauge into `B ≡ 1`, which the tests exploit as closed-form cases.

use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::fit::fit_decay_exponent;
use crate::graph::{l2_norm, lp_norm, weighted_norms, GraphFunction, StarGraph};
use crate::propagator::free_evolve_spectral;
use crate::transforms::{
    apply_d, apply_d_inverse, apply_m, spectral_l2_norm, spectral_sup_norm, SpectralFunction,
    TransformPlan,
};
use crate::C64;

/// Residual series smaller than this (relative to the data scale) are
/// reported as "negligible": no slope is fitted and the verdict passes.
const NEGLIGIBLE_RESIDUAL: f64 = 1e-11;

/// Relative Richardson discrepancy above which the Duhamel quadrature is
/// declared untrustworthy on the given node grid.
const DUHAMEL_DISCREPANCY_LIMIT: f64 = 0.05;

// ---------------------------------------------------------------------------
// Norm helpers on single edges
// ---------------------------------------------------------------------------

fn row_l2(values: &Array2<C64>, j: usize, step: f64) -> f64 {
    let n = values.ncols() - 1;
    let mut acc = 0.0;
    for (m, z) in values.row(j).iter().enumerate() {
        let w = if m == 0 || m == n { 0.5 * step } else { step };
        acc += w * z.norm_sqr();
    }
    acc.max(0.0).sqrt()
}

fn row_sup(values: &Array2<C64>, j: usize) -> f64 {
    values.row(j).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Per-edge `L²` norm of a graph function (trapezoid weights).
pub fn edge_l2_norm(f: &GraphFunction, j: usize) -> f64 {
    row_l2(f.values(), j, f.graph().h())
}

/// Per-edge sup norm of a graph function.
pub fn edge_sup_norm(f: &GraphFunction, j: usize) -> f64 {
    row_sup(f.values(), j)
}

/// Per-edge `L²` norm of a spectral function (trapezoid weights in `ξ`).
pub fn edge_spectral_l2_norm(phi: &SpectralFunction, j: usize) -> f64 {
    row_l2(phi.values(), j, phi.graph().dxi())
}

/// Per-edge sup norm of a spectral function.
pub fn edge_spectral_sup_norm(phi: &SpectralFunction, j: usize) -> f64 {
    row_sup(phi.values(), j)
}

/// `⟨a, b⟩ = Σ_j ∫ a_j conj(b_j) dξ` on the dual grid (trapezoid weights),
/// linear in the first slot.
fn spectral_inner(a: &SpectralFunction, b: &SpectralFunction) -> Result<C64> {
    if a.graph() != b.graph() {
        return Err(CoreError::GridMismatch(
            "spectral inner product needs matching graphs".into(),
        ));
    }
    let graph = a.graph();
    let n = graph.grid_points();
    let dxi = graph.dxi();
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..graph.n_edges() {
        for (k, (x, y)) in a.values().row(j).iter().zip(b.values().row(j)).enumerate() {
            let w = if k == 0 || k == n { 0.5 * dxi } else { dxi };
            acc += w * x * y.conj();
        }
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Scatter reports
// ---------------------------------------------------------------------------

/// Residual history of an asymptotic comparison plus the fitted decay rate
/// and its verdict. `residual_l2[j][i]`/`residual_linf[j][i]` are the edge-`j`
/// residual norms at `times[i]`; `fitted_exponent` is the log-log slope of
/// the combined (whole-graph) residual named in `fit_norm` over `fit_window`.
#[derive(Debug, Clone)]
pub struct ScatterReport {
    pub times: Vec<f64>,
    pub residual_l2: Vec<Vec<f64>>,
    pub residual_linf: Vec<Vec<f64>>,
    pub fitted_exponent: f64,
    pub fit_r2: f64,
    pub fit_window: (f64, f64),
    pub fit_norm: &'static str,
    pub slope_target: f64,
    /// True when `fitted_exponent ≤ slope_target`, or when the residual is
    /// negligible relative to `scale` (nothing left to fit).
    pub verdict: bool,
    pub negligible: bool,
}

/// Assemble a report from per-edge residual series and the combined series
/// the slope is fitted on. `scale` is the natural magnitude of the compared
/// quantity (used only for the negligible-residual shortcut).
fn build_report(
    times: &[f64],
    residual_l2: Vec<Vec<f64>>,
    residual_linf: Vec<Vec<f64>>,
    fit_values: &[f64],
    fit_norm: &'static str,
    fit_window: (f64, f64),
    slope_target: f64,
    scale: f64,
) -> Result<ScatterReport> {
    if times.windows(2).any(|p| p[1] <= p[0]) {
        return Err(CoreError::Precondition(
            "report times must be strictly increasing".into(),
        ));
    }
    for series in residual_l2.iter().chain(residual_linf.iter()) {
        if series.len() != times.len() || series.iter().any(|r| !(*r >= 0.0)) {
            return Err(CoreError::Precondition(
                "residual series must be nonnegative and aligned with times".into(),
            ));
        }
    }
    let floor = NEGLIGIBLE_RESIDUAL * scale.max(1e-300);
    let negligible = fit_values.iter().all(|r| *r <= floor);
    let (fitted_exponent, fit_r2) = if negligible {
        (f64::NEG_INFINITY, 1.0)
    } else {
        let fit = fit_decay_exponent(times, fit_values, fit_window)?;
        (fit.slope, fit.r_squared)
    };
    Ok(ScatterReport {
        times: times.to_vec(),
        residual_l2,
        residual_linf,
        fitted_exponent,
        fit_r2,
        fit_window,
        fit_norm,
        slope_target,
        verdict: negligible || fitted_exponent <= slope_target,
        negligible,
    })
}

fn per_edge_series(graph: StarGraph) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    (
        vec![Vec::new(); graph.n_edges()],
        vec![Vec::new(); graph.n_edges()],
    )
}

// ---------------------------------------------------------------------------
// Final-state profile
// ---------------------------------------------------------------------------

/// Prescribed asymptotic profile `φ` together with its time-dressed form
/// `w(t) = φ·exp(iλ/2 |φ|² log t)` and the explicit approximate solution
/// `u_ap(t) = M(t) D(t) w(t)`, materialized at the reference time `t`.
///
/// `w_at`/`u_ap_at` re-evaluate both at any other positive time; the stored
/// fields are the snapshot at construction time.
#[derive(Debug, Clone)]
pub struct FinalStateProfile {
    /// The profile in the similarity variable, per edge.
    pub phi: SpectralFunction,
    /// Coupling `λ ∈ {−1, 0, +1}` (0 = nonlinearity off, for closed-form tests).
    pub lambda: f64,
    /// Target decay exponent `α ∈ (1/4, 1/2)` of the residual `u − u_ap`.
    pub alpha: f64,
    /// Reference time of the materialized snapshot below.
    pub t: f64,
    /// `w(t) = φ·exp(iλ/2 |φ|² log t)`; `|w| = |φ|` pointwise.
    pub w: SpectralFunction,
    /// `u_ap(t) = M(t) D(t) w(t)` on the x-grid.
    pub u_ap: GraphFunction,
    /// When false the logarithmic phase is dropped (`w ≡ φ`): the ablation
    /// profile that demonstrates the phase correction is load-bearing.
    log_phase: bool,
}

/// Build a [`FinalStateProfile`] at reference time `t`.
///
/// Errors: `λ ∉ {−1, 0, 1}`, `α ∉ (1/4, 1/2)`, or nonpositive `t` are domain
/// errors; an edge family whose values at `ξ = 0` disagree (a profile outside
/// the vertex-continuous class) is a precondition error.
pub fn build_final_profile(
    phi: &SpectralFunction,
    lambda: f64,
    alpha: f64,
    t: f64,
) -> Result<FinalStateProfile> {
    if !(lambda == 0.0 || lambda == 1.0 || lambda == -1.0) {
        return Err(CoreError::Domain(format!(
            "coupling must be −1, 0 (off), or +1, got {lambda}"
        )));
    }
    if !(alpha > 0.25 && alpha < 0.5) {
        return Err(CoreError::Domain(format!(
            "decay exponent alpha must lie in (1/4, 1/2), got {alpha}"
        )));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(CoreError::Domain(format!(
            "profile reference time must be positive, got {t}"
        )));
    }
    if phi.values().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(CoreError::Domain(
            "profile contains non-finite samples".into(),
        ));
    }
    let sup = spectral_sup_norm(phi);
    let mut vertex_gap = 0.0_f64;
    for j in 0..phi.graph().n_edges() {
        for k in 0..phi.graph().n_edges() {
            vertex_gap = vertex_gap.max((phi.values()[[j, 0]] - phi.values()[[k, 0]]).norm());
        }
    }
    if vertex_gap > 1e-8 * sup.max(1.0) {
        return Err(CoreError::Precondition(format!(
            "final profile is vertex-discontinuous (gap {vertex_gap:.3e}); \
             the construction needs a vertex-continuous profile"
        )));
    }
    let mut profile = FinalStateProfile {
        phi: phi.clone(),
        lambda,
        alpha,
        t,
        w: phi.clone(),
        u_ap: GraphFunction::zeros(phi.graph()),
        log_phase: true,
    };
    profile.w = profile.w_at(t);
    profile.u_ap = profile.u_ap_at(t)?;
    Ok(profile)
}

impl FinalStateProfile {
    /// `w(t) = φ·exp(iλ/2 |φ|² log t)` (or `φ` itself with the log phase
    /// disabled). `|w| = |φ|` pointwise by construction.
    pub fn w_at(&self, t: f64) -> SpectralFunction {
        let c = 0.5 * self.lambda * t.ln();
        if !self.log_phase || c == 0.0 {
            return self.phi.clone();
        }
        self.phi
            .map(|z| z * C64::from_polar(1.0, c * z.norm_sqr()))
    }

    /// `u_ap(t) = M(t) D(t) w(t)`: the dilated profile dressed with the free
    /// quadratic phase. Requires `t > 0`.
    pub fn u_ap_at(&self, t: f64) -> Result<GraphFunction> {
        apply_m(t, &apply_d(t, &self.w_at(t))?, false)
    }

    /// The ablation variant: identical data with the logarithmic phase
    /// dropped from `w` (so `w ≡ φ`). Used to show the phase is necessary.
    pub fn without_log_phase(&self) -> Result<FinalStateProfile> {
        let mut ablated = self.clone();
        ablated.log_phase = false;
        ablated.w = ablated.w_at(ablated.t);
        ablated.u_ap = ablated.u_ap_at(ablated.t)?;
        Ok(ablated)
    }

    /// Same profile scaled by `c` and re-referenced to time `t`.
    pub fn rescaled(&self, c: f64, t: f64) -> Result<FinalStateProfile> {
        let scaled = self.phi.map(|z| z * c);
        build_final_profile(&scaled, self.lambda, self.alpha, t)
    }
}

// ---------------------------------------------------------------------------
// Linear remainder and Picard machinery
// ---------------------------------------------------------------------------

/// The linear remainder `R_f(t) = M D F (M − 1) F⁻¹ f`.
///
/// Evaluated through the factorization `U(t) = M D F M`: expanding
/// `M = 1 + (M − 1)` gives the exact identity `R_f = U(t) F⁻¹ f − M D f`,
/// which needs one fewer resampling pass and keeps both terms first-class
/// discrete operators. Requires `t > 0`.
pub fn linear_remainder(
    plan: &TransformPlan,
    f: &SpectralFunction,
    t: f64,
) -> Result<GraphFunction> {
    let psi = plan.inverse_f(f)?;
    let exact = free_evolve_spectral(plan, &psi, t)?;
    let leading = apply_m(t, &apply_d(t, f)?, false)?;
    exact.sub(&leading)
}

/// Log-uniform time grid from `t0` to `t1` with at least `per_octave` nodes
/// per octave; both endpoints are grid nodes.
pub fn log_time_grid(t0: f64, t1: f64, per_octave: usize) -> Result<Vec<f64>> {
    if !(t0.is_finite() && t1.is_finite() && t0 > 0.0 && t1 > t0) {
        return Err(CoreError::Domain(format!(
            "time grid needs 0 < t0 < t1, got [{t0}, {t1}]"
        )));
    }
    if per_octave == 0 {
        return Err(CoreError::Domain("per_octave must be at least 1".into()));
    }
    let octaves = (t1 / t0).log2();
    let m = (octaves * per_octave as f64).ceil().max(1.0) as usize;
    let mut grid: Vec<f64> = (0..=m)
        .map(|i| t0 * 2f64.powf(octaves * i as f64 / m as f64))
        .collect();
    grid[0] = t0;
    grid[m] = t1;
    Ok(grid)
}

fn cube_graph(f: &GraphFunction, lambda: f64) -> GraphFunction {
    f.map(|z| -lambda * z.norm_sqr() * z)
}

fn cube_spectral(phi: &SpectralFunction, lambda: f64) -> SpectralFunction {
    phi.map(|z| -lambda * z.norm_sqr() * z)
}

/// Quadrature health measured during a Picard step.
#[derive(Debug, Clone, Copy)]
pub struct PicardDiagnostics {
    /// Relative Richardson discrepancy of the Duhamel trapezoid (full grid
    /// vs. every second node); small values mean the node grid resolves the
    /// integrand.
    pub duhamel_discrepancy: f64,
    /// Estimated size of the discarded `[t_max, ∞)` tail, extrapolated from
    /// the integrand norm at the top node under `‖G(τ)‖ ~ τ^{−1−α}` decay.
    pub tail_estimate: f64,
}

/// One application of the Picard map
/// `Φ(v)(t) = u_ap(t) + R_w(t) + i ∫_t^{T_max} U(t−τ) {N(v) − N(u_ap) −
/// (2τ)⁻¹ N(w)-remainder} dτ`, evaluated on the whole node grid.
///
/// The integral is accumulated top-down as a suffix trapezoid of the
/// gauge-frame integrand `G(τ) = U(−τ){…}`, which varies on `Δτ/τ` scales
/// (the free oscillation is removed by the `U(−τ)` conjugation), so the
/// log-spaced trapezoid converges. A Richardson comparison against the
/// half-density grid guards the claim: a discrepancy above 5% aborts with a
/// refinement suggestion.
pub fn picard_step(
    plan: &TransformPlan,
    profile: &FinalStateProfile,
    grid: &[f64],
    v: &[GraphFunction],
) -> Result<(Vec<GraphFunction>, PicardDiagnostics)> {
    if grid.len() != v.len() || grid.len() < 3 {
        return Err(CoreError::Precondition(format!(
            "Picard step needs matching grid/trajectory of length ≥ 3, got {} / {}",
            grid.len(),
            v.len()
        )));
    }
    if grid.windows(2).any(|p| !(p[1] > p[0] && p[0] > 0.0)) {
        return Err(CoreError::Domain(
            "Picard grid must be positive and strictly increasing".into(),
        ));
    }
    let graph = plan.graph();
    if profile.phi.graph() != graph || v.iter().any(|s| s.graph() != graph) {
        return Err(CoreError::GridMismatch(
            "Picard inputs must share the plan's graph".into(),
        ));
    }
    let lambda = profile.lambda;
    let n = grid.len();

    // G(τ) at one node: the gauge-frame Duhamel integrand.
    let integrand = |i: usize, w_i: &SpectralFunction, u_ap_i: &GraphFunction| -> Result<GraphFunction> {
        let tau = grid[i];
        let r_nw = linear_remainder(plan, &cube_spectral(w_i, lambda), tau)?;
        let mut body = cube_graph(&v[i], lambda).sub(&cube_graph(u_ap_i, lambda))?;
        body = body.sub(&r_nw.scale(C64::from(0.5 / tau)))?;
        free_evolve_spectral(plan, &body, -tau)
    };

    let mut out: Vec<GraphFunction> = Vec::with_capacity(n);
    let mut s = GraphFunction::zeros(graph);

    // Top node: empty integral.
    let w_top = profile.w_at(grid[n - 1]);
    let u_ap_top = profile.u_ap_at(grid[n - 1])?;
    let r_w_top = free_evolve_spectral(plan, &plan.inverse_f(&w_top)?, grid[n - 1])?
        .sub(&u_ap_top)?;
    let g_top = integrand(n - 1, &w_top, &u_ap_top)?;
    let tail_estimate = l2_norm(&g_top) * grid[n - 1] / profile.alpha;
    out.push(u_ap_top.add(&r_w_top)?);

    // Rolling window of the last three integrand values for the Richardson
    // check (the full-grid two-interval sum vs. one coarse interval).
    let mut g_next = g_top; // G(τ_{i+1})
    let mut pair: Option<(f64, GraphFunction, GraphFunction)> = None; // (τ_{i+2}, G_{i+2}, partial)
    let mut disc = 0.0_f64;
    let mut disc_scale = 0.0_f64;

    for i in (0..n - 1).rev() {
        let t_i = grid[i];
        let w_i = profile.w_at(t_i);
        let u_ap_i = profile.u_ap_at(t_i)?;
        let g_i = integrand(i, &w_i, &u_ap_i)?;
        let local = g_i.add(&g_next)?.scale(C64::from(0.5 * (grid[i + 1] - t_i)));
        s = s.add(&local)?;
        match pair.take() {
            None => pair = Some((grid[i + 1], g_next.clone(), local)),
            Some((tau_hi, g_hi, partial)) => {
                let full = partial.add(&local)?;
                let coarse = g_i.add(&g_hi)?.scale(C64::from(0.5 * (tau_hi - t_i)));
                disc += l2_norm(&full.sub(&coarse)?);
                disc_scale += l2_norm(&full);
            }
        }
        let r_w_i = free_evolve_spectral(plan, &plan.inverse_f(&w_i)?, t_i)?.sub(&u_ap_i)?;
        let duhamel = free_evolve_spectral(plan, &s, t_i)?.scale(C64::new(0.0, 1.0));
        out.push(u_ap_i.add(&r_w_i)?.add(&duhamel)?);
        g_next = g_i;
    }
    out.reverse();

    let duhamel_discrepancy = if disc_scale > 1e-300 { disc / disc_scale } else { 0.0 };
    if duhamel_discrepancy > DUHAMEL_DISCREPANCY_LIMIT {
        return Err(CoreError::GridTooCoarse(format!(
            "Duhamel quadrature self-check failed: Richardson discrepancy {:.3e} \
             exceeds {:.1e}; double the nodes per octave of the time grid",
            duhamel_discrepancy, DUHAMEL_DISCREPANCY_LIMIT
        )));
    }
    Ok((
        out,
        PicardDiagnostics {
            duhamel_discrepancy,
            tail_estimate,
        },
    ))
}

/// The trajectory norm the contraction is measured in:
/// `sup_i t_i^α (‖f(t_i)‖_{L²} + (∫_{t_i}^{T_max} ‖f‖⁴_{L∞} ds)^{1/4})`,
/// with the time integral truncated at the top of the grid.
pub fn weighted_trajectory_norm(
    grid: &[f64],
    states: &[GraphFunction],
    alpha: f64,
) -> Result<f64> {
    if grid.len() != states.len() || grid.is_empty() {
        return Err(CoreError::Precondition(
            "trajectory norm needs aligned nonempty grid/states".into(),
        ));
    }
    let sup4: Vec<f64> = states
        .iter()
        .map(|f| {
            let s = lp_norm(f, f64::INFINITY)?;
            Ok(s * s * s * s)
        })
        .collect::<Result<_>>()?;
    let mut tail = vec![0.0_f64; grid.len()];
    for i in (0..grid.len() - 1).rev() {
        tail[i] = tail[i + 1] + 0.5 * (grid[i + 1] - grid[i]) * (sup4[i + 1] + sup4[i]);
    }
    let mut x = 0.0_f64;
    for (i, f) in states.iter().enumerate() {
        let y = l2_norm(f) + tail[i].max(0.0).powf(0.25);
        x = x.max(grid[i].powf(alpha) * y);
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Final-state driver
// ---------------------------------------------------------------------------

/// Everything a final-state run produces: the residual report against the
/// modified profile, the same residuals against the log-phase-free profile
/// (the ablation control), the contraction history, and the converged
/// trajectory itself.
#[derive(Debug, Clone)]
pub struct FinalStateOutcome {
    pub report: ScatterReport,
    pub ablation: ScatterReport,
    /// X-norm of successive Picard increments.
    pub increment_history: Vec<f64>,
    /// Ratios of successive increments; the last entry is the measured κ.
    pub kappa_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub tail_estimate: f64,
    pub duhamel_discrepancy: f64,
    /// Residual slope fitted on `[T, 4T]` and `[4T, T_max]` separately; the
    /// asymptotic regime must not be slower (late ≤ early + 0.05).
    pub early_slope: f64,
    pub late_slope: f64,
    pub grid: Vec<f64>,
    pub trajectory: Vec<GraphFunction>,
}

impl FinalStateOutcome {
    /// Measured contraction factor (last increment ratio), NaN before two
    /// increments exist.
    pub fn kappa(&self) -> f64 {
        self.kappa_history.last().copied().unwrap_or(f64::NAN)
    }
}

fn residual_report(
    grid: &[f64],
    trajectory: &[GraphFunction],
    profile: &FinalStateProfile,
    window: (f64, f64),
    target: f64,
) -> Result<ScatterReport> {
    let graph = profile.phi.graph();
    let (mut l2s, mut sups) = per_edge_series(graph);
    let mut combined = Vec::with_capacity(grid.len());
    let mut scale = 0.0_f64;
    for (i, state) in trajectory.iter().enumerate() {
        let u_ap = profile.u_ap_at(grid[i])?;
        scale = scale.max(l2_norm(&u_ap));
        let d = state.sub(&u_ap)?;
        for j in 0..graph.n_edges() {
            l2s[j].push(edge_l2_norm(&d, j));
            sups[j].push(edge_sup_norm(&d, j));
        }
        combined.push(l2_norm(&d));
    }
    build_report(grid, l2s, sups, &combined, "L2", window, target, scale)
}

/// Run the final-state Picard iteration from `v⁰ = u_ap` until the X-norm of
/// the increment drops below `tol` (or `max_iters` is exhausted — that is a
/// failed verdict, not an error), then fit the per-edge residuals
/// `‖u(t) − u_ap(t)‖` over `[t_start, t_max]` and run the log-phase ablation
/// on the same converged trajectory.
///
/// `t_max ≥ 16 t_start` is required so the discarded tail of the Duhamel
/// integral is genuinely asymptotic.
pub fn run_final_state(
    plan: &TransformPlan,
    profile: &FinalStateProfile,
    t_start: f64,
    t_max: f64,
    nodes_per_octave: usize,
    max_iters: usize,
    tol: f64,
) -> Result<FinalStateOutcome> {
    if !(t_max >= 16.0 * t_start) {
        return Err(CoreError::Precondition(format!(
            "final-state window [{t_start}, {t_max}] too short: need t_max ≥ 16·t_start"
        )));
    }
    if max_iters == 0 || !(tol > 0.0) {
        return Err(CoreError::Domain(
            "need max_iters ≥ 1 and a positive tolerance".into(),
        ));
    }
    let grid = log_time_grid(t_start, t_max, nodes_per_octave)?;
    let mut v: Vec<GraphFunction> = grid
        .iter()
        .map(|&t| profile.u_ap_at(t))
        .collect::<Result<_>>()?;

    let mut increments = Vec::new();
    let mut kappas = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut tail_estimate = 0.0;
    let mut duhamel_discrepancy = 0.0;
    for _ in 0..max_iters {
        let (next, diag) = picard_step(plan, profile, &grid, &v)?;
        tail_estimate = diag.tail_estimate;
        duhamel_discrepancy = duhamel_discrepancy.max(diag.duhamel_discrepancy);
        let diff: Vec<GraphFunction> = next
            .iter()
            .zip(&v)
            .map(|(a, b)| a.sub(b))
            .collect::<Result<_>>()?;
        let inc = weighted_trajectory_norm(&grid, &diff, profile.alpha)?;
        if let Some(prev) = increments.last() {
            kappas.push(if *prev > 0.0 { inc / prev } else { 0.0 });
        }
        increments.push(inc);
        v = next;
        iterations += 1;
        if inc < tol {
            converged = true;
            break;
        }
    }

    let target = -profile.alpha + 0.1;
    let window = (t_start, t_max);
    let report = residual_report(&grid, &v, profile, window, target)?;
    let ablation = residual_report(&grid, &v, &profile.without_log_phase()?, window, target)?;

    let combined: Vec<f64> = (0..grid.len())
        .map(|i| {
            (0..plan.graph().n_edges())
                .map(|j| report.residual_l2[j][i].powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let early = fit_decay_exponent(&grid, &combined, (t_start, 4.0 * t_start));
    let late = fit_decay_exponent(&grid, &combined, (4.0 * t_start, t_max));

    Ok(FinalStateOutcome {
        report,
        ablation,
        increment_history: increments,
        kappa_history: kappas,
        iterations,
        converged,
        tail_estimate,
        duhamel_discrepancy,
        early_slope: early.map(|f| f.slope).unwrap_or(f64::NAN),
        late_slope: late.map(|f| f.slope).unwrap_or(f64::NAN),
        grid,
        trajectory: v,
    })
}

/// One row of the smallness/largeness calibration sweep.
#[derive(Debug, Clone, Copy)]
pub struct CalibrationRow {
    pub t_start: f64,
    pub amplitude_scale: f64,
    pub sup_phi: f64,
    pub kappa: f64,
}

/// Measure the contraction factor of the Picard map over a grid of profile
/// amplitudes and start times (two steps on a short span each). The sweep is
/// how the smallness threshold `ε₀` and the start time are *found*; callers
/// record the rows instead of hard-coding either.
pub fn calibrate_contraction(
    plan: &TransformPlan,
    profile: &FinalStateProfile,
    t_starts: &[f64],
    amplitude_scales: &[f64],
    nodes_per_octave: usize,
    span_octaves: f64,
) -> Result<Vec<CalibrationRow>> {
    let mut rows = Vec::new();
    for &t0 in t_starts {
        for &scale in amplitude_scales {
            let p = profile.rescaled(scale, t0)?;
            let grid = log_time_grid(t0, t0 * 2f64.powf(span_octaves), nodes_per_octave)?;
            let v0: Vec<GraphFunction> = grid
                .iter()
                .map(|&t| p.u_ap_at(t))
                .collect::<Result<_>>()?;
            let (v1, _) = picard_step(plan, &p, &grid, &v0)?;
            let (v2, _) = picard_step(plan, &p, &grid, &v1)?;
            let d10: Vec<GraphFunction> = v1
                .iter()
                .zip(&v0)
                .map(|(a, b)| a.sub(b))
                .collect::<Result<_>>()?;
            let d21: Vec<GraphFunction> = v2
                .iter()
                .zip(&v1)
                .map(|(a, b)| a.sub(b))
                .collect::<Result<_>>()?;
            let n10 = weighted_trajectory_norm(&grid, &d10, p.alpha)?;
            let n21 = weighted_trajectory_norm(&grid, &d21, p.alpha)?;
            rows.push(CalibrationRow {
                t_start: t0,
                amplitude_scale: scale,
                sup_phi: spectral_sup_norm(&p.phi),
                kappa: if n10 > 0.0 { n21 / n10 } else { 0.0 },
            });
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Initial-value gauge state
// ---------------------------------------------------------------------------

/// The gauge bookkeeping along an initial-value trajectory: the interaction
/// image `Fv(t) = F U(−t) u(t)`, the accumulated phase integral
/// `P_j(t) = ∫_1^t |(Fv)_j|² dτ/τ` (trapezoid in `log τ`), and through them
/// the unimodular gauge `B = exp(−iλ/2 P)` and the gauged image `Fw = B·Fv`.
#[derive(Debug, Clone)]
pub struct ModifiedPhaseState {
    t: f64,
    lambda: f64,
    fv: SpectralFunction,
    phase_integral: Array2<f64>,
}

impl ModifiedPhaseState {
    /// Open the bookkeeping at time `t ≥ 1` from the solution value `u(t)`.
    pub fn new(plan: &TransformPlan, u: &GraphFunction, t: f64, lambda: f64) -> Result<Self> {
        if !(t.is_finite() && t >= 1.0) {
            return Err(CoreError::Domain(format!(
                "gauge bookkeeping starts at t ≥ 1, got {t}"
            )));
        }
        if !(lambda == 0.0 || lambda == 1.0 || lambda == -1.0) {
            return Err(CoreError::Domain(format!(
                "coupling must be −1, 0, or +1, got {lambda}"
            )));
        }
        let fv = plan.forward_f(&free_evolve_spectral(plan, u, -t)?)?;
        let dim = fv.values().raw_dim();
        Ok(Self {
            t,
            lambda,
            fv,
            phase_integral: Array2::zeros(dim),
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `Fv(t) = F U(−t) u(t)`.
    pub fn fv(&self) -> &SpectralFunction {
        &self.fv
    }

    /// `P_j(t) = ∫_1^t |(Fv)_j|² dτ/τ`.
    pub fn phase_integral(&self) -> &Array2<f64> {
        &self.phase_integral
    }

    /// The unimodular gauge `B = exp(−iλ/2 P)`.
    pub fn b(&self) -> SpectralFunction {
        let graph = self.fv.graph();
        let mut out = SpectralFunction::zeros(graph);
        for (o, p) in out
            .values_mut()
            .iter_mut()
            .zip(self.phase_integral.iter())
        {
            *o = C64::from_polar(1.0, -0.5 * self.lambda * p);
        }
        out
    }

    /// `Fw = B·Fv`; `|Fw| = |Fv|` pointwise.
    pub fn fw(&self) -> SpectralFunction {
        let b = self.b();
        let mut out = self.fv.clone();
        for (o, bb) in out.values_mut().iter_mut().zip(b.values().iter()) {
            *o *= bb;
        }
        out
    }

    /// `Θ(t) = (λ/2)(P(t) − |Fv(t)|² log t)`: the phase that survives in the
    /// limit after the `|W|² log t` part is split off.
    pub fn theta(&self) -> Array2<f64> {
        let log_t = self.t.ln();
        let mut out = self.phase_integral.clone();
        for (o, z) in out.iter_mut().zip(self.fv.values().iter()) {
            *o = 0.5 * self.lambda * (*o - z.norm_sqr() * log_t);
        }
        out
    }

    /// The interaction-frame state `v(t) = U(−t) u(t) = F⁻¹ Fv`.
    pub fn velocity(&self, plan: &TransformPlan) -> Result<GraphFunction> {
        plan.inverse_f(&self.fv)
    }

    /// Advance the bookkeeping to `t_next > t` using the solution value
    /// `u(t_next)`; the phase integral gains one trapezoid panel in `log τ`.
    pub fn gauge_advance(
        &self,
        plan: &TransformPlan,
        u_next: &GraphFunction,
        t_next: f64,
    ) -> Result<Self> {
        if !(t_next.is_finite() && t_next > self.t) {
            return Err(CoreError::Precondition(format!(
                "gauge times must increase: t = {}, requested {t_next}",
                self.t
            )));
        }
        let fv_next = plan.forward_f(&free_evolve_spectral(plan, u_next, -t_next)?)?;
        let half_panel = 0.5 * (t_next / self.t).ln();
        let mut phase = self.phase_integral.clone();
        for ((p, a), b) in phase
            .iter_mut()
            .zip(self.fv.values().iter())
            .zip(fv_next.values().iter())
        {
            *p += half_panel * (a.norm_sqr() + b.norm_sqr());
        }
        Ok(Self {
            t: t_next,
            lambda: self.lambda,
            fv: fv_next,
            phase_integral: phase,
        })
    }
}

// ---------------------------------------------------------------------------
// Scattering-data extraction
// ---------------------------------------------------------------------------

/// The extracted modified-scattering data and the three residual histories
/// that certify it: gauged-image convergence `‖Fw(t) − W‖`, the composite
/// log-phase reconstruction of `Fv`, and the physical-space profile
/// comparison.
#[derive(Debug, Clone)]
pub struct IvpExtraction {
    /// `W = Fw(T_max)`: the scattering amplitude.
    pub w: SpectralFunction,
    /// `Ψ = Θ(T_max)`: the residual phase profile.
    pub psi: Array2<f64>,
    /// `W₊ = W·e^{iΨ}`: the profile entering the physical-space expansion.
    pub w_plus: SpectralFunction,
    /// `‖Fw(t) − W‖` per edge; slope fitted on the sup norm.
    pub fw_report: ScatterReport,
    /// `‖Fv(t) − e^{i(λ/2)|W|² log t + iΨ} W‖` per edge; slope on `L²`.
    pub composite_report: ScatterReport,
    /// `‖u(t) − M(t) D(t)[W₊ e^{i(λ/2)|W₊|² log t}]‖` per edge; slope on sup.
    pub physical_report: ScatterReport,
    /// Dyadic Cauchy differences `(t, ‖Fw(2t) − Fw(t)‖_{L∞})`.
    pub cauchy: Vec<(f64, f64)>,
}

/// The composite model `e^{i(λ/2)|W|² log t + iΨ} W` that `Fv(t)` converges
/// to, evaluated at time `t`.
pub fn composite_model(
    w: &SpectralFunction,
    psi: &Array2<f64>,
    lambda: f64,
    t: f64,
) -> SpectralFunction {
    let log_t = t.ln();
    let mut out = w.clone();
    for (o, p) in out.values_mut().iter_mut().zip(psi.iter()) {
        let phase = 0.5 * lambda * o.norm_sqr() * log_t + p;
        *o *= C64::from_polar(1.0, phase);
    }
    out
}

/// The physical-space model
/// `M(t) D(t) [W₊ · e^{i(λ/2)|W₊|² log t}]`, i.e.
/// `(2it)^{−1/2} W₊(x/2t) exp(i x²/4t + i(λ/2)|W₊(x/2t)|² log t)` before
/// resampling error.
pub fn physical_model(w_plus: &SpectralFunction, lambda: f64, t: f64) -> Result<GraphFunction> {
    let c = 0.5 * lambda * t.ln();
    let dressed = w_plus.map(|z| z * C64::from_polar(1.0, c * z.norm_sqr()));
    apply_m(t, &apply_d(t, &dressed)?, false)
}

/// Walk a trajectory `(times[i], states[i])` of the nonlinear flow, advance
/// the gauge, and extract `(W, Ψ)` plus the three certification reports.
/// `times[0] ≥ 1`; `fit_window` must span at least two decades (shorter
/// trajectories cannot support the rate claims).
pub fn extract_scattering_data(
    plan: &TransformPlan,
    times: &[f64],
    states: &[GraphFunction],
    lambda: f64,
    fit_window: (f64, f64),
) -> Result<IvpExtraction> {
    if times.len() != states.len() || times.len() < 5 {
        return Err(CoreError::Precondition(format!(
            "extraction needs aligned times/states with ≥ 5 snapshots, got {} / {}",
            times.len(),
            states.len()
        )));
    }
    if times.windows(2).any(|p| p[1] <= p[0]) {
        return Err(CoreError::Precondition(
            "trajectory times must be strictly increasing".into(),
        ));
    }
    if !(fit_window.1 >= 100.0 * fit_window.0) {
        return Err(CoreError::Precondition(format!(
            "fit window [{}, {}] spans less than two decades; the trajectory \
             is too short to certify a rate",
            fit_window.0, fit_window.1
        )));
    }

    let mut state = ModifiedPhaseState::new(plan, &states[0], times[0], lambda)?;
    let mut fws: Vec<SpectralFunction> = vec![state.fw()];
    let mut fvs: Vec<SpectralFunction> = vec![state.fv().clone()];
    for i in 1..times.len() {
        state = state.gauge_advance(plan, &states[i], times[i])?;
        fws.push(state.fw());
        fvs.push(state.fv().clone());
    }
    let w = fws.last().expect("nonempty").clone();
    let psi = state.theta();
    let mut w_plus = w.clone();
    for (o, p) in w_plus.values_mut().iter_mut().zip(psi.iter()) {
        *o *= C64::from_polar(1.0, *p);
    }
    let scale = spectral_l2_norm(&w).max(spectral_sup_norm(&w));
    let graph = plan.graph();

    // Gauged-image convergence.
    let (mut l2s, mut sups) = per_edge_series(graph);
    let mut fit_sup = Vec::with_capacity(times.len());
    for fw in &fws {
        let d = fw.sub(&w)?;
        for j in 0..graph.n_edges() {
            l2s[j].push(edge_spectral_l2_norm(&d, j));
            sups[j].push(edge_spectral_sup_norm(&d, j));
        }
        fit_sup.push(spectral_sup_norm(&d));
    }
    let fw_report = build_report(
        times, l2s, sups, &fit_sup, "Linf", fit_window, -0.25 + 0.1, scale,
    )?;

    // Composite reconstruction of Fv.
    let (mut l2s, mut sups) = per_edge_series(graph);
    let mut fit_l2 = Vec::with_capacity(times.len());
    for (i, fv) in fvs.iter().enumerate() {
        let model = composite_model(&w, &psi, lambda, times[i]);
        let d = fv.sub(&model)?;
        for j in 0..graph.n_edges() {
            l2s[j].push(edge_spectral_l2_norm(&d, j));
            sups[j].push(edge_spectral_sup_norm(&d, j));
        }
        fit_l2.push(spectral_l2_norm(&d));
    }
    let composite_report = build_report(
        times, l2s, sups, &fit_l2, "L2", fit_window, -0.25 + 0.15, scale,
    )?;

    // Physical-space profile comparison.
    let (mut l2s, mut sups) = per_edge_series(graph);
    let mut fit_sup = Vec::with_capacity(times.len());
    for (i, u) in states.iter().enumerate() {
        let model = physical_model(&w_plus, lambda, times[i])?;
        let d = u.sub(&model)?;
        for j in 0..graph.n_edges() {
            l2s[j].push(edge_l2_norm(&d, j));
            sups[j].push(edge_sup_norm(&d, j));
        }
        fit_sup.push(lp_norm(&d, f64::INFINITY)?);
    }
    let physical_report = build_report(
        times, l2s, sups, &fit_sup, "Linf", fit_window, -0.75 + 0.15, scale,
    )?;

    // Dyadic Cauchy differences of the gauged image.
    let mut cauchy = Vec::new();
    for (i, &t) in times.iter().enumerate() {
        if let Some(j) = times
            .iter()
            .position(|&s| (s - 2.0 * t).abs() <= 0.01 * t)
        {
            cauchy.push((t, spectral_sup_norm(&fws[j].sub(&fws[i])?)));
        }
    }

    Ok(IvpExtraction {
        w,
        psi,
        w_plus,
        fw_report,
        composite_report,
        physical_report,
        cauchy,
    })
}

// ---------------------------------------------------------------------------
// Remainder diagnostics
// ---------------------------------------------------------------------------

/// Norms of the two cubic remainders that measure how far the interaction
/// image is from the resonant model at time `t`.
#[derive(Debug, Clone, Copy)]
pub struct RemainderNorms {
    pub i1_l2: f64,
    pub i1_linf: f64,
    pub i2_l2: f64,
    pub i2_linf: f64,
}

/// Evaluate `I₁ = F (M(−t) − 1) F⁻¹ [ |F M v|² F M v ]` and
/// `I₂ = |F M v|² F M v − |F v|² F v` for the interaction-frame state `v`,
/// literally through the transform stack. Requires `t ≥ 1`.
pub fn compute_remainders(
    plan: &TransformPlan,
    v: &GraphFunction,
    t: f64,
) -> Result<RemainderNorms> {
    if !(t.is_finite() && t >= 1.0) {
        return Err(CoreError::Domain(format!(
            "remainders are tracked for t ≥ 1, got {t}"
        )));
    }
    let cube = |phi: &SpectralFunction| phi.map(|z| z.norm_sqr() * z);
    let fmv = plan.forward_f(&apply_m(t, v, false)?)?;
    let c = cube(&fmv);
    let i2 = c.sub(&cube(&plan.forward_f(v)?))?;
    let psi = plan.inverse_f(&c)?;
    let i1 = plan.forward_f(&apply_m(t, &psi, true)?.sub(&psi)?)?;
    Ok(RemainderNorms {
        i1_l2: spectral_l2_norm(&i1),
        i1_linf: spectral_sup_norm(&i1),
        i2_l2: spectral_l2_norm(&i2),
        i2_linf: spectral_sup_norm(&i2),
    })
}

/// The two terms of the dispersive sup-norm decomposition
/// `‖u‖_{L∞} ≲ t^{−1/2} ‖F U(−t) u‖_{L∞} + t^{−1/2−α} ‖U(−t) u‖_{H^{0,1}}`.
#[derive(Debug, Clone, Copy)]
pub struct LinftySplit {
    pub lhs: f64,
    pub free_term: f64,
    pub weighted_term: f64,
}

/// Evaluate both sides of the decomposition at time `t ≥ 1` for
/// `alpha ∈ [0, 1/4)` (`alpha = 0` is the unweighted edge case).
pub fn check_linfty_decomposition(
    plan: &TransformPlan,
    u: &GraphFunction,
    t: f64,
    alpha: f64,
) -> Result<LinftySplit> {
    if !(t.is_finite() && t >= 1.0) {
        return Err(CoreError::Domain(format!(
            "decomposition holds for t ≥ 1, got {t}"
        )));
    }
    if !(alpha >= 0.0 && alpha < 0.25) {
        return Err(CoreError::Domain(format!(
            "decomposition weight alpha must lie in [0, 1/4), got {alpha}"
        )));
    }
    let v = free_evolve_spectral(plan, u, -t)?;
    let fv = plan.forward_f(&v)?;
    Ok(LinftySplit {
        lhs: lp_norm(u, f64::INFINITY)?,
        free_term: t.powf(-0.5) * spectral_sup_norm(&fv),
        weighted_term: t.powf(-0.5 - alpha) * weighted_norms(&v).h01,
    })
}

// ---------------------------------------------------------------------------
// Failure-of-scattering functional
// ---------------------------------------------------------------------------

/// Test function for the pairing functional: the negatively-aligned image of
/// the nonlinearity of the interaction state at time `t`, mollified in `ξ`
/// and normalized to unit `L²`. By construction the pairing
/// `Re⟨λ|ũ|^p ũ, F M φ⟩` starts out negative, and `F⁻¹` of a smooth decaying
/// spectral profile is automatically vertex-compatible.
pub fn build_failure_test_function(
    plan: &TransformPlan,
    u_at_t: &GraphFunction,
    t: f64,
    p: f64,
    lambda: f64,
) -> Result<GraphFunction> {
    if !(p.is_finite() && p > 0.0) {
        return Err(CoreError::Domain(format!(
            "nonlinearity power must be positive and finite, got {p}"
        )));
    }
    if !(t.is_finite() && t > 0.0) {
        return Err(CoreError::Domain(format!(
            "test-function anchor time must be positive, got {t}"
        )));
    }
    let v_plus = free_evolve_spectral(plan, u_at_t, -t)?;
    let fv = plan.forward_f(&v_plus)?;
    let graph = fv.graph();
    let cutoff = 0.6 * graph.xi_max();
    let mut g = fv.map(|z| lambda * z.norm().powf(p) * z);
    for j in 0..graph.n_edges() {
        for k in 0..graph.n_samples() {
            let damp = (-(graph.xi(k) / cutoff).powi(8)).exp();
            g.values_mut()[[j, k]] *= C64::from(damp);
        }
    }
    let norm = spectral_l2_norm(&g);
    if norm <= 1e-300 {
        return Err(CoreError::Precondition(
            "nonlinear image vanishes; cannot build a test function from it".into(),
        ));
    }
    let phi_hat = g.map(|z| -z / norm);
    plan.inverse_f(&phi_hat)
}

/// History of the pairing functional along a trajectory.
#[derive(Debug, Clone)]
pub struct FailureRecord {
    pub times: Vec<f64>,
    /// `Re⟨λ|ũ|^p ũ, w̃⟩` at each time, with `ũ = D⁻¹M⁻¹u`, `w̃ = F M φ`.
    pub pairing: Vec<f64>,
    /// Accumulated `∫_T^τ t^{−p/2} (−pairing) dt` (trapezoid), per snapshot.
    pub integral: Vec<f64>,
    /// `‖u(t)‖_{L²}` history (conserved by the flow).
    pub mass_u: Vec<f64>,
    /// `‖w̃(t)‖_{L²}` history (conserved because `F` is unitary and `M`
    /// unimodular).
    pub mass_w: Vec<f64>,
}

impl FailureRecord {
    /// Final value of the accumulated functional.
    pub fn final_value(&self) -> f64 {
        self.integral.last().copied().unwrap_or(0.0)
    }
}

/// Evaluate the pairing functional along a trajectory of the power-`p` flow:
/// at each snapshot, `ũ = D⁻¹ M⁻¹ u` and `w̃ = F M φ_test` are formed and
/// `Re⟨λ|ũ|^p ũ, w̃⟩` recorded; the returned integral accumulates
/// `t^{−p/2}·(−pairing)`. Unbounded growth of the integral (logarithmic at
/// `p = 2`, like `τ^{1−p/2}` below) is the failure-of-scattering signature;
/// for `p > 2` the same integral stays bounded.
pub fn failure_functional(
    plan: &TransformPlan,
    times: &[f64],
    states: &[GraphFunction],
    phi_test: &GraphFunction,
    p: f64,
    lambda: f64,
) -> Result<FailureRecord> {
    if !(p.is_finite() && p > 0.0) {
        return Err(CoreError::Domain(format!(
            "nonlinearity power must be positive and finite, got {p}"
        )));
    }
    if times.len() != states.len() || times.len() < 2 {
        return Err(CoreError::Precondition(format!(
            "pairing functional needs aligned times/states with ≥ 2 snapshots, got {} / {}",
            times.len(),
            states.len()
        )));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) || times[0] <= 0.0 {
        return Err(CoreError::Precondition(
            "trajectory times must be positive and strictly increasing".into(),
        ));
    }
    let mut pairing = Vec::with_capacity(times.len());
    let mut integral = Vec::with_capacity(times.len());
    let mut mass_u = Vec::with_capacity(times.len());
    let mut mass_w = Vec::with_capacity(times.len());
    let mut acc = 0.0_f64;
    let mut prev: Option<(f64, f64)> = None;
    for (&t, u) in times.iter().zip(states) {
        let u_tilde = apply_d_inverse(t, &apply_m(t, u, true)?)?;
        let w_tilde = plan.forward_f(&apply_m(t, phi_test, false)?)?;
        let image = u_tilde.map(|z| lambda * z.norm().powf(p) * z);
        let pair = spectral_inner(&image, &w_tilde)?.re;
        let weighted = t.powf(-0.5 * p) * (-pair);
        if let Some((t_prev, w_prev)) = prev {
            acc += 0.5 * (t - t_prev) * (weighted + w_prev);
        }
        prev = Some((t, weighted));
        pairing.push(pair);
        integral.push(acc);
        mass_u.push(l2_norm(u));
        mass_w.push(spectral_l2_norm(&w_tilde));
    }
    Ok(FailureRecord {
        times: times.to_vec(),
        pairing,
        integral,
        mass_u,
        mass_w,
    })
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::kirchhoff_residual;
    use crate::propagator::{nls_evolve, EvolutionConfig};
    use approx::assert_relative_eq;

    /// Smooth compactly supported bump `exp(1 − 1/(1 − s²))` on `|s| < 1`,
    /// `s = (ξ − center)/width`, with per-edge amplitudes.
    fn bump_profile(
        graph: StarGraph,
        center: f64,
        width: f64,
        amps: &[f64],
    ) -> SpectralFunction {
        SpectralFunction::from_profile_fn(graph, |j, xi| {
            let s = (xi - center) / width;
            if s.abs() < 1.0 {
                C64::from(amps[j] * (1.0 - 1.0 / (1.0 - s * s)).exp())
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    fn compatible_gaussian(graph: StarGraph, c: f64, w: f64, amps: &[f64]) -> GraphFunction {
        GraphFunction::from_profile_fn(graph, |j, x| {
            C64::from(amps[j] * (-((x - c) / w).powi(2) / 2.0).exp())
        })
    }

    #[test]
    fn final_profile_contract() {
        let g = StarGraph::new(3, 64.0, 512).unwrap();
        let phi = bump_profile(g, 1.2, 0.8, &[0.1, 0.08, 0.06]);

        // Reference time 1: the log phase vanishes and w = φ exactly.
        let p1 = build_final_profile(&phi, 1.0, 0.3, 1.0).unwrap();
        assert_eq!(spectral_l2_norm(&p1.w.sub(&phi).unwrap()), 0.0);

        // |u_ap| = (2t)^{-1/2} |φ(x/2t)| pointwise: at t = 1 the dressed
        // profile equals φ, so |u_ap| and |D φ| agree exactly.
        let d_phi = apply_d(1.0, &phi).unwrap();
        for (a, b) in p1.u_ap.values().iter().zip(d_phi.values().iter()) {
            assert!((a.norm() - b.norm()).abs() < 1e-15);
        }

        // At t > 1 the moduli still agree to resampling accuracy (the log
        // phase is unimodular and slowly varying).
        let p3 = build_final_profile(&phi, 1.0, 0.3, 3.0).unwrap();
        let d_phi3 = apply_d(3.0, &phi).unwrap();
        let mut worst = 0.0_f64;
        for (a, b) in p3.u_ap.values().iter().zip(d_phi3.values().iter()) {
            worst = worst.max((a.norm() - b.norm()).abs());
        }
        assert!(worst < 1e-6, "modulus deviation {worst}");

        // Zero profile → zero w and u_ap.
        let zero = SpectralFunction::zeros(g);
        let p0 = build_final_profile(&zero, -1.0, 0.35, 2.0).unwrap();
        assert_eq!(spectral_l2_norm(&p0.w), 0.0);
        assert_eq!(l2_norm(&p0.u_ap), 0.0);

        // Vertex-discontinuous profile rejected.
        let mut bad = phi.clone();
        bad.values_mut()[[0, 0]] = C64::from(0.1);
        assert!(matches!(
            build_final_profile(&bad, 1.0, 0.3, 1.0),
            Err(CoreError::Precondition(_))
        ));

        // Domain validation.
        assert!(build_final_profile(&phi, 0.5, 0.3, 1.0).is_err());
        assert!(build_final_profile(&phi, 1.0, 0.25, 1.0).is_err());
        assert!(build_final_profile(&phi, 1.0, 0.5, 1.0).is_err());
        assert!(build_final_profile(&phi, 1.0, 0.3, 0.0).is_err());
    }

    #[test]
    fn picard_map_is_exact_with_nonlinearity_off() {
        // λ = 0 kills every nonlinear term, so Φ(v) = u_ap + R_w for any v:
        // the map no longer depends on the trajectory at all.
        let g = StarGraph::new(3, 320.0, 1024).unwrap();
        let plan = TransformPlan::new(g);
        let phi = bump_profile(g, 1.2, 0.8, &[0.1, 0.08, 0.06]);
        let profile = build_final_profile(&phi, 0.0, 0.3, 4.0).unwrap();
        let grid = log_time_grid(4.0, 32.0, 8).unwrap();
        let v0: Vec<GraphFunction> = grid
            .iter()
            .map(|&t| profile.u_ap_at(t).unwrap())
            .collect();
        let v_perturbed: Vec<GraphFunction> = v0
            .iter()
            .map(|f| f.map(|z| z + C64::new(0.01, -0.005)))
            .collect();

        let (phi_v0, diag) = picard_step(&plan, &profile, &grid, &v0).unwrap();
        let (phi_vp, _) = picard_step(&plan, &profile, &grid, &v_perturbed).unwrap();
        assert_eq!(diag.tail_estimate, 0.0);
        for (i, &t) in grid.iter().enumerate() {
            let expected = profile
                .u_ap_at(t)
                .unwrap()
                .add(&linear_remainder(&plan, &profile.w_at(t), t).unwrap())
                .unwrap();
            assert!(l2_norm(&phi_v0[i].sub(&expected).unwrap()) < 1e-13);
            assert!(l2_norm(&phi_v0[i].sub(&phi_vp[i]).unwrap()) < 1e-13);
        }
    }

    #[test]
    fn linear_remainder_decays_like_inverse_sqrt() {
        // ‖R_w(t)‖_{L²} ~ t^{-1/2} up to the slow logarithmic dressing of w.
        let g = StarGraph::new(3, 2560.0, 8192).unwrap();
        let plan = TransformPlan::new(g);
        let phi = bump_profile(g, 1.4, 1.3, &[0.1, 0.08, 0.06]);
        let profile = build_final_profile(&phi, 1.0, 0.3, 10.0).unwrap();
        let times = log_time_grid(10.0, 1000.0, 4).unwrap();
        let series: Vec<f64> = times
            .iter()
            .map(|&t| l2_norm(&linear_remainder(&plan, &profile.w_at(t), t).unwrap()))
            .collect();
        let fit = fit_decay_exponent(&times, &series, (10.0, 1000.0)).unwrap();
        assert!(
            (-0.6..=-0.4).contains(&fit.slope),
            "R_w slope {} (r² {})",
            fit.slope,
            fit.r_squared
        );
        assert!(fit.r_squared > 0.98, "r² {}", fit.r_squared);
    }

    #[test]
    fn picard_iteration_contracts_and_certifies_profile() {
        // Small-amplitude profile on a grid long enough for t ≤ 512: the
        // iteration must contract, the residual must decay at the target
        // rate, and dropping the log phase must visibly degrade the rate.
        let g = StarGraph::new(3, 1280.0, 4096).unwrap();
        let plan = TransformPlan::new(g);
        let phi = bump_profile(g, 0.45, 0.35, &[0.1, 0.08, 0.06]);
        let profile = build_final_profile(&phi, 1.0, 0.3, 8.0).unwrap();
        let outcome = run_final_state(&plan, &profile, 8.0, 512.0, 8, 8, 1e-7).unwrap();

        assert!(outcome.converged, "increments {:?}", outcome.increment_history);
        assert!(
            outcome.kappa() < 0.9,
            "kappa history {:?}",
            outcome.kappa_history
        );
        assert!(outcome.duhamel_discrepancy < 0.05);
        assert!(outcome.tail_estimate.is_finite());
        assert!(
            outcome.report.fitted_exponent <= -0.2,
            "residual slope {}",
            outcome.report.fitted_exponent
        );
        assert!(outcome.report.verdict);
        // Late-window rate at least as good as the early window.
        assert!(
            outcome.late_slope <= outcome.early_slope + 0.05,
            "early {} late {}",
            outcome.early_slope,
            outcome.late_slope
        );
        // Ablation: the log-phase-free profile fits visibly worse.
        assert!(
            outcome.ablation.fitted_exponent >= outcome.report.fitted_exponent + 0.1,
            "modified {} ablated {}",
            outcome.report.fitted_exponent,
            outcome.ablation.fitted_exponent
        );

        // The fixed point is a genuine solution: advancing one grid panel
        // with the split-step integrator reproduces the next node.
        let i = outcome.grid.len() / 2;
        let (t0, t1) = (outcome.grid[i], outcome.grid[i + 1]);
        let cfg = EvolutionConfig {
            lambda: 1.0,
            power: 2.0,
            t_start: t0,
            t_end: t1,
            dt: 0.02,
            tol_support: 1e-6,
        };
        let evolved = nls_evolve(&plan, &outcome.trajectory[i], &cfg, &[t1]).unwrap();
        let dev = l2_norm(&evolved.final_state.sub(&outcome.trajectory[i + 1]).unwrap());
        let scale = l2_norm(&outcome.trajectory[i + 1]);
        assert!(
            dev < 5e-4 * scale.max(1e-300),
            "split-step consistency dev {dev} vs scale {scale}"
        );
    }

    #[test]
    fn calibration_sweep_reports_contraction_factors() {
        let g = StarGraph::new(3, 1280.0, 4096).unwrap();
        let plan = TransformPlan::new(g);
        let phi = bump_profile(g, 0.45, 0.35, &[0.1, 0.08, 0.06]);
        let profile = build_final_profile(&phi, 1.0, 0.3, 8.0).unwrap();
        let rows =
            calibrate_contraction(&plan, &profile, &[8.0, 16.0], &[0.5, 1.0], 6, 2.0).unwrap();
        assert_eq!(rows.len(), 4);
        for row in &rows {
            assert!(row.kappa.is_finite() && row.kappa >= 0.0);
            assert!(row.sup_phi > 0.0);
        }
        // Halving the amplitude must not worsen the contraction (the map is
        // cubic in the data): compare at fixed t_start.
        assert!(rows[0].kappa <= rows[1].kappa + 1e-12);
    }

    #[test]
    fn gauge_state_contract() {
        let g = StarGraph::new(3, 64.0, 512).unwrap();
        let plan = TransformPlan::new(g);
        let u = compatible_gaussian(g, 20.0, 2.0, &[0.1, 0.1, 0.1]);

        // A free trajectory has Fv constant, so the phase integral is
        // exactly |Fv|² log t (trapezoid of a constant in log τ).
        let mut state = ModifiedPhaseState::new(&plan, &u, 1.0, -1.0).unwrap();
        let fv0 = state.fv().clone();
        for &t in &[2.0, 4.0, 8.0] {
            let u_t = free_evolve_spectral(&plan, &u, t).unwrap();
            state = state.gauge_advance(&plan, &u_t, t).unwrap();
        }
        assert!(spectral_sup_norm(&state.fv().sub(&fv0).unwrap()) < 1e-10);
        let log_t = 8.0_f64.ln();
        let mut worst = 0.0_f64;
        for (p, z) in state.phase_integral().iter().zip(fv0.values().iter()) {
            worst = worst.max((p - z.norm_sqr() * log_t).abs());
        }
        assert!(worst < 1e-12, "phase integral defect {worst}");
        let theta = state.theta();
        assert!(theta.iter().all(|v| v.abs() < 1e-12));

        // Gauge unimodularity and modulus preservation.
        let b = state.b();
        assert!(b.values().iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
        let fw = state.fw();
        for (a, c) in fw.values().iter().zip(state.fv().values().iter()) {
            assert!((a.norm() - c.norm()).abs() < 1e-14);
        }

        // λ = 0: B ≡ 1 and Fw = Fv bitwise.
        let free = ModifiedPhaseState::new(&plan, &u, 1.0, 0.0).unwrap();
        assert!(free
            .b()
            .values()
            .iter()
            .all(|z| *z == C64::new(1.0, 0.0)));
        assert_eq!(
            spectral_l2_norm(&free.fw().sub(free.fv()).unwrap()),
            0.0
        );

        // Zero data stays zero.
        let zero_state =
            ModifiedPhaseState::new(&plan, &GraphFunction::zeros(g), 1.0, 1.0).unwrap();
        assert_eq!(spectral_l2_norm(&zero_state.fw()), 0.0);

        // Monotonicity and domain errors.
        assert!(state.gauge_advance(&plan, &u, 7.9).is_err());
        assert!(ModifiedPhaseState::new(&plan, &u, 0.5, 1.0).is_err());
        assert!(ModifiedPhaseState::new(&plan, &u, 1.0, 0.3).is_err());
    }

    #[test]
    fn extraction_is_exact_on_a_free_trajectory() {
        // λ = 0: the gauge is trivial, Fv ≡ F u₀ by the discrete group law,
        // so W = F u₀, Ψ = 0, and the image residuals vanish identically.
        let g = StarGraph::new(3, 256.0, 1024).unwrap();
        let plan = TransformPlan::new(g);
        let u0 = compatible_gaussian(g, 20.0, 2.0, &[0.2, 0.2, 0.2]);
        let times = log_time_grid(1.0, 1024.0, 1).unwrap();
        let states: Vec<GraphFunction> = times
            .iter()
            .map(|&t| free_evolve_spectral(&plan, &u0, t).unwrap())
            .collect();
        let data =
            extract_scattering_data(&plan, &times, &states, 0.0, (10.0, 1024.0)).unwrap();

        let fu0 = plan.forward_f(&u0).unwrap();
        assert!(spectral_sup_norm(&data.w.sub(&fu0).unwrap()) < 1e-10);
        assert!(data.psi.iter().all(|v| v.abs() < 1e-12));
        assert!(data.fw_report.negligible && data.fw_report.verdict);
        assert!(data.composite_report.negligible && data.composite_report.verdict);
        assert!(!data.cauchy.is_empty());
        assert!(data.cauchy.iter().all(|&(_, d)| d < 1e-10));

        // Short windows are rejected.
        assert!(matches!(
            extract_scattering_data(&plan, &times, &states, 0.0, (10.0, 500.0)),
            Err(CoreError::Precondition(_))
        ));
    }

    #[test]
    fn remainders_contract() {
        let g = StarGraph::new(3, 64.0, 1024).unwrap();
        let plan = TransformPlan::new(g);

        // Zero state → zero remainders.
        let zero = compute_remainders(&plan, &GraphFunction::zeros(g), 2.0).unwrap();
        assert_eq!(zero.i1_l2, 0.0);
        assert_eq!(zero.i2_linf, 0.0);

        // Degree-3 homogeneity: v → 2v scales both remainders by 8.
        let v = compatible_gaussian(g, 20.0, 2.0, &[0.3, 0.24, 0.18]);
        let one = compute_remainders(&plan, &v, 3.0).unwrap();
        let two = compute_remainders(&plan, &v.scale(C64::from(2.0)), 3.0).unwrap();
        assert_relative_eq!(two.i1_l2, 8.0 * one.i1_l2, max_relative = 1e-12);
        assert_relative_eq!(two.i2_l2, 8.0 * one.i2_l2, max_relative = 1e-12);
        assert_relative_eq!(two.i2_linf, 8.0 * one.i2_linf, max_relative = 1e-12);

        // Both remainders decay in t for fixed v: the modulation converges
        // to the identity on the fixed support.
        let times = log_time_grid(1.0, 128.0, 2).unwrap();
        let (mut i1s, mut i2s) = (Vec::new(), Vec::new());
        for &t in &times {
            let r = compute_remainders(&plan, &v, t).unwrap();
            i1s.push(r.i1_linf);
            i2s.push(r.i2_linf);
        }
        let f1 = fit_decay_exponent(&times, &i1s, (1.0, 100.0)).unwrap();
        let f2 = fit_decay_exponent(&times, &i2s, (1.0, 100.0)).unwrap();
        assert!(f1.slope <= -0.2, "I₁ slope {}", f1.slope);
        assert!(f2.slope <= -0.2, "I₂ slope {}", f2.slope);

        assert!(compute_remainders(&plan, &v, 0.5).is_err());
    }

    #[test]
    fn linfty_decomposition_contract() {
        let g = StarGraph::new(3, 512.0, 2048).unwrap();
        let plan = TransformPlan::new(g);

        let zero = check_linfty_decomposition(&plan, &GraphFunction::zeros(g), 1.0, 0.0).unwrap();
        assert_eq!(zero.lhs, 0.0);
        assert_eq!(zero.free_term, 0.0);
        assert_eq!(zero.weighted_term, 0.0);

        // Free Gaussian evolution: the ratio lhs/(rhs₁+rhs₂) stays bounded
        // across two decades of time (measured ≈ 0.2–0.7 on this data).
        let u0 = compatible_gaussian(g, 30.0, 2.0, &[1.0, 0.8, 0.6]);
        for &t in &[1.0, 10.0, 100.0] {
            let u_t = free_evolve_spectral(&plan, &u0, t).unwrap();
            let split = check_linfty_decomposition(&plan, &u_t, t, 0.2).unwrap();
            let ratio = split.lhs / (split.free_term + split.weighted_term);
            assert!(
                ratio > 1e-3 && ratio < 1.2,
                "t = {t}: ratio {ratio} (lhs {}, free {}, weighted {})",
                split.lhs,
                split.free_term,
                split.weighted_term
            );
        }

        // α = 0 accepted; out-of-range α and t rejected.
        assert!(check_linfty_decomposition(&plan, &u0, 5.0, 0.0).is_ok());
        assert!(check_linfty_decomposition(&plan, &u0, 5.0, 0.25).is_err());
        assert!(check_linfty_decomposition(&plan, &u0, 5.0, -0.1).is_err());
        assert!(check_linfty_decomposition(&plan, &u0, 0.9, 0.1).is_err());
    }

    #[test]
    fn failure_functional_contract() {
        let g = StarGraph::new(3, 704.0, 2048).unwrap();
        let plan = TransformPlan::new(g);
        let u0 = compatible_gaussian(g, 12.0, 3.0, &[0.25, 0.2, 0.15]);
        let t_anchor = 8.0;
        let u_t = free_evolve_spectral(&plan, &u0, t_anchor).unwrap();

        // Test function: unit L², vertex-compatible, negatively aligned.
        let phi_test = build_failure_test_function(&plan, &u_t, t_anchor, 2.0, -1.0).unwrap();
        assert!((l2_norm(&phi_test) - 1.0).abs() < 1e-6);
        let res = kirchhoff_residual(&phi_test);
        assert!(res.continuity_defect < 1e-8, "{:?}", res);

        // A free trajectory from the anchor: the pairing starts negative by
        // construction, so the accumulated integral rises from zero.
        let times = log_time_grid(t_anchor, 64.0, 2).unwrap();
        let states: Vec<GraphFunction> = times
            .iter()
            .map(|&t| {
                free_evolve_spectral(&plan, &u_t, t - t_anchor).unwrap()
            })
            .collect();
        let record =
            failure_functional(&plan, &times, &states, &phi_test, 2.0, -1.0).unwrap();
        assert!(record.pairing[0] < 0.0, "pairing[0] = {}", record.pairing[0]);
        assert_eq!(record.integral[0], 0.0);
        assert!(record.integral[1] > 0.0);
        // w̃ mass is conserved exactly (unitary transform of a unimodular
        // dressing of a fixed function).
        let w0 = record.mass_w[0];
        assert!(record
            .mass_w
            .iter()
            .all(|m| (m - w0).abs() < 1e-8 * w0.max(1e-300)));

        // Zero trajectory → identically zero record.
        let zeros: Vec<GraphFunction> =
            times.iter().map(|_| GraphFunction::zeros(g)).collect();
        let zr = failure_functional(&plan, &times, &zeros, &phi_test, 1.5, -1.0).unwrap();
        assert!(zr.pairing.iter().all(|p| *p == 0.0));
        assert_eq!(zr.final_value(), 0.0);

        // Domain errors.
        assert!(failure_functional(&plan, &times, &states, &phi_test, 0.0, -1.0).is_err());
        assert!(
            failure_functional(&plan, &times, &states, &phi_test, f64::NAN, -1.0).is_err()
        );
        assert!(build_failure_test_function(&plan, &u_t, t_anchor, -1.0, -1.0).is_err());
        // p = 3 is a legal control power.
        assert!(failure_functional(&plan, &times, &states, &phi_test, 3.0, -1.0).is_ok());
    }

    #[test]
    fn report_validation_rejects_malformed_series() {
        let times = [1.0, 2.0, 4.0, 8.0, 16.0];
        let good = vec![vec![1.0, 0.5, 0.25, 0.125, 0.0625]];
        let bad_times = [1.0, 2.0, 2.0, 8.0, 16.0];
        assert!(build_report(
            &bad_times,
            good.clone(),
            good.clone(),
            &good[0],
            "L2",
            (1.0, 16.0),
            -0.5,
            1.0
        )
        .is_err());
        let negative = vec![vec![1.0, -0.5, 0.25, 0.125, 0.0625]];
        assert!(build_report(
            &times,
            negative.clone(),
            good.clone(),
            &good[0],
            "L2",
            (1.0, 16.0),
            -0.5,
            1.0
        )
        .is_err());
        let report = build_report(
            &times,
            good.clone(),
            good.clone(),
            &good[0],
            "L2",
            (1.0, 16.0),
            -0.5,
            1.0,
        )
        .unwrap();
        assert!(report.verdict);
        assert_relative_eq!(report.fitted_exponent, -1.0, epsilon = 1e-12);
    }
}
