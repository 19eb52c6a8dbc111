//! Star-graph grids, sampled functions, norms, and vertex diagnostics.
//!
//! A [`StarGraph`] is `n ≥ 2` copies of the interval `[0, L]` (each edge a
//! truncated half-line) glued at `x = 0`. Samples live on the closed uniform
//! grid `x_m = m·L/N`, `m = 0..=N`, so a [`GraphFunction`] is an `n × (N+1)`
//! complex array. All integrals are trapezoid rules on that grid; the
//! companion spectral grid `ξ_k = kπ/L` is described in [`crate::transforms`].

use crate::error::{CoreError, Result};
use crate::C64;
use ndarray::{Array1, Array2, ArrayView1};

/// Fraction of the edge (measured from the far wall) watched by the support
/// monitor: mass in `[0.9L, L]` counts as a truncation-boundary breach.
pub const SUPPORT_TAIL_FRACTION: f64 = 0.1;

/// Discretized star graph: `n_edges` half-lines truncated to `[0, edge_length]`
/// with `grid_points + 1` samples per edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarGraph {
    n_edges: usize,
    edge_length: f64,
    grid_points: usize,
}

impl StarGraph {
    /// Create a graph, validating `n_edges ≥ 2`, `edge_length > 0` (finite),
    /// and `grid_points ≥ 8`.
    pub fn new(n_edges: usize, edge_length: f64, grid_points: usize) -> Result<Self> {
        if n_edges < 2 {
            return Err(CoreError::Domain(format!(
                "star graph needs at least 2 edges, got {n_edges}"
            )));
        }
        if !(edge_length.is_finite() && edge_length > 0.0) {
            return Err(CoreError::Domain(format!(
                "edge length must be positive and finite, got {edge_length}"
            )));
        }
        if grid_points < 8 {
            return Err(CoreError::Domain(format!(
                "grid needs at least 8 intervals per edge, got {grid_points}"
            )));
        }
        Ok(Self {
            n_edges,
            edge_length,
            grid_points,
        })
    }

    /// Number of edges `n`.
    pub fn n_edges(&self) -> usize {
        self.n_edges
    }

    /// Truncation length `L` of each edge.
    pub fn edge_length(&self) -> f64 {
        self.edge_length
    }

    /// Number of grid *intervals* `N` per edge (samples per edge = `N + 1`).
    pub fn grid_points(&self) -> usize {
        self.grid_points
    }

    /// Samples per edge, `N + 1`.
    pub fn n_samples(&self) -> usize {
        self.grid_points + 1
    }

    /// Grid spacing `h = L/N`.
    pub fn h(&self) -> f64 {
        self.edge_length / self.grid_points as f64
    }

    /// Physical grid node `x_m = m·h`.
    pub fn x(&self, m: usize) -> f64 {
        self.h() * m as f64
    }

    /// Spectral grid node `ξ_k = kπ/L` (dual trapezoid grid; see transforms).
    pub fn xi(&self, k: usize) -> f64 {
        std::f64::consts::PI / self.edge_length * k as f64
    }

    /// Spectral grid spacing `Δξ = π/L`.
    pub fn dxi(&self) -> f64 {
        std::f64::consts::PI / self.edge_length
    }

    /// Largest represented frequency `ξ_N = Nπ/L`.
    pub fn xi_max(&self) -> f64 {
        self.xi(self.grid_points)
    }
}

/// Complex-valued function sampled on every edge of a [`StarGraph`].
///
/// Row `j` of [`values`](Self::values) holds the samples of `f_j` at
/// `x_0, …, x_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFunction {
    graph: StarGraph,
    values: Array2<C64>,
}

impl GraphFunction {
    /// The zero function.
    pub fn zeros(graph: StarGraph) -> Self {
        Self {
            graph,
            values: Array2::zeros((graph.n_edges(), graph.n_samples())),
        }
    }

    /// Sample `f_j(x) = profile(j, x)` on the grid.
    pub fn from_profile_fn(graph: StarGraph, mut profile: impl FnMut(usize, f64) -> C64) -> Self {
        let mut values = Array2::zeros((graph.n_edges(), graph.n_samples()));
        for j in 0..graph.n_edges() {
            for m in 0..graph.n_samples() {
                values[[j, m]] = profile(j, graph.x(m));
            }
        }
        Self { graph, values }
    }

    /// Wrap an existing sample array; the shape must be `n_edges × (N+1)` and
    /// every sample finite.
    pub fn from_values(graph: StarGraph, values: Array2<C64>) -> Result<Self> {
        if values.shape() != [graph.n_edges(), graph.n_samples()] {
            return Err(CoreError::GridMismatch(format!(
                "expected {} × {} samples, got {:?}",
                graph.n_edges(),
                graph.n_samples(),
                values.shape()
            )));
        }
        if !values.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(CoreError::Domain(
                "graph function contains non-finite samples".into(),
            ));
        }
        Ok(Self { graph, values })
    }

    /// Underlying graph.
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

    /// View of edge `j`'s samples.
    pub fn edge(&self, j: usize) -> ArrayView1<'_, C64> {
        self.values.row(j)
    }

    /// `self + g`.
    pub fn add(&self, g: &GraphFunction) -> Result<GraphFunction> {
        check_same_graph(self, g)?;
        Ok(GraphFunction {
            graph: self.graph,
            values: &self.values + &g.values,
        })
    }

    /// `self − g`.
    pub fn sub(&self, g: &GraphFunction) -> Result<GraphFunction> {
        check_same_graph(self, g)?;
        Ok(GraphFunction {
            graph: self.graph,
            values: &self.values - &g.values,
        })
    }

    /// `c · self`.
    pub fn scale(&self, c: C64) -> GraphFunction {
        GraphFunction {
            graph: self.graph,
            values: self.values.mapv(|z| c * z),
        }
    }

    /// Apply `op` to every sample.
    pub fn map(&self, op: impl Fn(C64) -> C64) -> GraphFunction {
        GraphFunction {
            graph: self.graph,
            values: self.values.mapv(op),
        }
    }

    /// True if every sample is finite.
    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

fn check_same_graph(f: &GraphFunction, g: &GraphFunction) -> Result<()> {
    if f.graph != g.graph {
        return Err(CoreError::GridMismatch(format!(
            "operands live on different graphs: {:?} vs {:?}",
            f.graph, g.graph
        )));
    }
    Ok(())
}

/// Trapezoid weight of node `m` on an `N`-interval grid of spacing `h`.
#[inline]
fn trapezoid_weight(m: usize, n_intervals: usize, h: f64) -> f64 {
    if m == 0 || m == n_intervals {
        0.5 * h
    } else {
        h
    }
}

/// Trapezoid quadrature of a sampled complex integrand.
pub(crate) fn trapezoid_c64(samples: ArrayView1<'_, C64>, h: f64) -> C64 {
    let n = samples.len() - 1;
    let mut acc = C64::new(0.0, 0.0);
    for (m, z) in samples.iter().enumerate() {
        acc += trapezoid_weight(m, n, h) * z;
    }
    acc
}

/// Trapezoid quadrature of a sampled real integrand.
pub(crate) fn trapezoid_f64(samples: &[f64], h: f64) -> f64 {
    let n = samples.len() - 1;
    samples
        .iter()
        .enumerate()
        .map(|(m, v)| trapezoid_weight(m, n, h) * v)
        .sum()
}

/// Graph inner product `⟨f, g⟩ = Σ_j ∫_0^L f_j(x) conj(g_j(x)) dx`
/// (linear in the first slot, conjugate-linear in the second), realized by the
/// trapezoid rule.
pub fn inner_product(f: &GraphFunction, g: &GraphFunction) -> Result<C64> {
    check_same_graph(f, g)?;
    let graph = f.graph();
    let h = graph.h();
    let n = graph.grid_points();
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..graph.n_edges() {
        let fr = f.edge(j);
        let gr = g.edge(j);
        for m in 0..graph.n_samples() {
            acc += trapezoid_weight(m, n, h) * fr[m] * gr[m].conj();
        }
    }
    Ok(acc)
}

/// `‖f‖_{L²}` via [`inner_product`].
pub fn l2_norm(f: &GraphFunction) -> f64 {
    inner_product(f, f)
        .expect("inner product of a function with itself cannot mismatch")
        .re
        .max(0.0)
        .sqrt()
}

/// `‖f‖_{L^p}` for `p ∈ [1, ∞]`; `p = ∞` is the grid sup over all edges.
///
/// `p < 1` (where `‖·‖_p` is not a norm) is a domain error, as is a NaN `p`.
pub fn lp_norm(f: &GraphFunction, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(CoreError::Domain(format!(
            "lp_norm requires p ∈ [1, ∞], got {p}"
        )));
    }
    if p.is_infinite() {
        return Ok(f
            .values()
            .iter()
            .map(|z| z.norm())
            .fold(0.0_f64, f64::max));
    }
    let graph = f.graph();
    let h = graph.h();
    let n = graph.grid_points();
    let mut acc = 0.0;
    for j in 0..graph.n_edges() {
        for (m, z) in f.edge(j).iter().enumerate() {
            acc += trapezoid_weight(m, n, h) * z.norm().powf(p);
        }
    }
    Ok(acc.powf(1.0 / p))
}

/// One-sided vertex data of a graph function.
///
/// `edge_derivatives` uses the fixed second-order one-sided stencil
/// `f'(0+) ≈ (−3 f(x_0) + 4 f(x_1) − f(x_2)) / (2h)`, exact on quadratics;
/// its truncation error is `(h²/3) f'''(0) + O(h³)`. The stencil is part of
/// the public contract so that reported flux defects are reproducible
/// bit-for-bit.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexTrace {
    /// `f_j(0)` per edge.
    pub edge_values: Vec<C64>,
    /// Stencil approximation of `f_j'(0+)` per edge.
    pub edge_derivatives: Vec<C64>,
}

/// Compute the [`VertexTrace`] of `f`.
pub fn vertex_trace(f: &GraphFunction) -> VertexTrace {
    let h = f.graph().h();
    let mut edge_values = Vec::with_capacity(f.graph().n_edges());
    let mut edge_derivatives = Vec::with_capacity(f.graph().n_edges());
    for j in 0..f.graph().n_edges() {
        let r = f.edge(j);
        edge_values.push(r[0]);
        edge_derivatives.push((-3.0 * r[0] + 4.0 * r[1] - r[2]) / (2.0 * h));
    }
    VertexTrace {
        edge_values,
        edge_derivatives,
    }
}

/// Deviation of a graph function from the Kirchhoff vertex conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KirchhoffResidual {
    /// `max_{j,k} |f_j(0) − f_k(0)|`.
    pub continuity_defect: f64,
    /// `|Σ_j f_j'(0+)|` with the trace stencil.
    pub flux_defect: f64,
}

/// Measure both Kirchhoff defects of `f` at the vertex.
pub fn kirchhoff_residual(f: &GraphFunction) -> KirchhoffResidual {
    let trace = vertex_trace(f);
    let mut continuity_defect = 0.0_f64;
    for a in &trace.edge_values {
        for b in &trace.edge_values {
            continuity_defect = continuity_defect.max((a - b).norm());
        }
    }
    let flux: C64 = trace.edge_derivatives.iter().sum();
    KirchhoffResidual {
        continuity_defect,
        flux_defect: flux.norm(),
    }
}

/// Split `f` into its vertex-symmetric average and the edgewise remainder:
/// `avg(x) = (1/n) Σ_j f_j(x)`, `perp_j = f_j − avg`.
///
/// The returned remainder is re-centered (its edge mean is subtracted again)
/// so `Σ_j perp_j ≡ 0` holds to machine precision even after rounding.
pub fn symmetric_decompose(f: &GraphFunction) -> (Array1<C64>, GraphFunction) {
    let graph = f.graph();
    let n = graph.n_edges() as f64;
    let mut avg = Array1::<C64>::zeros(graph.n_samples());
    for j in 0..graph.n_edges() {
        avg += &f.edge(j);
    }
    avg.mapv_inplace(|z| z / n);
    let mut perp = Array2::<C64>::zeros((graph.n_edges(), graph.n_samples()));
    for j in 0..graph.n_edges() {
        for m in 0..graph.n_samples() {
            perp[[j, m]] = f.values()[[j, m]] - avg[m];
        }
    }
    // Kill accumulated roundoff in the constraint Σ_j perp_j = 0.
    for m in 0..graph.n_samples() {
        let mut s = C64::new(0.0, 0.0);
        for j in 0..graph.n_edges() {
            s += perp[[j, m]];
        }
        let s = s / n;
        for j in 0..graph.n_edges() {
            perp[[j, m]] -= s;
        }
    }
    (
        avg,
        GraphFunction {
            graph,
            values: perp,
        },
    )
}

/// Rebuild `f_j = avg + perp_j` from a symmetric decomposition.
pub fn recompose(avg: &Array1<C64>, perp: &GraphFunction) -> Result<GraphFunction> {
    let graph = perp.graph();
    if avg.len() != graph.n_samples() {
        return Err(CoreError::GridMismatch(format!(
            "average profile has {} samples, graph needs {}",
            avg.len(),
            graph.n_samples()
        )));
    }
    let mut values = perp.values().clone();
    for j in 0..graph.n_edges() {
        for m in 0..graph.n_samples() {
            values[[j, m]] += avg[m];
        }
    }
    Ok(GraphFunction { graph, values })
}

/// Fraction of the squared `L²` mass of `f` sitting in the far-wall window
/// `[0.9L, L]`. Returns `0` for the zero function.
pub fn support_tail_fraction(f: &GraphFunction) -> f64 {
    let graph = f.graph();
    let h = graph.h();
    let n = graph.grid_points();
    let cut = graph.edge_length() * (1.0 - SUPPORT_TAIL_FRACTION);
    let mut tail = 0.0;
    let mut total = 0.0;
    for j in 0..graph.n_edges() {
        for (m, z) in f.edge(j).iter().enumerate() {
            let w = trapezoid_weight(m, n, h) * z.norm_sqr();
            total += w;
            if graph.x(m) >= cut {
                tail += w;
            }
        }
    }
    if total == 0.0 {
        0.0
    } else {
        tail / total
    }
}

/// Collection of weighted norms used by the scattering analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedNorms {
    /// `‖f‖_{L²}`.
    pub l2: f64,
    /// `‖f‖_{H¹} = (‖f‖² + ‖f'‖²)^{1/2}`.
    pub h1: f64,
    /// `‖f‖_{H^{0,1}} = (‖f‖² + ‖x f‖²)^{1/2}`.
    pub h01: f64,
    /// `‖f‖_Σ = ‖f‖_{H¹} + ‖f‖_{H^{0,1}}`.
    pub sigma: f64,
}

/// Edgewise fourth-order finite-difference derivative on the closed grid.
///
/// Interior: centered 5-point stencil; the two nodes at each wall use the
/// matching one-sided fourth-order stencils. Used for diagnostic norms, where
/// no vertex-compatibility assumption may be made (the spectral derivative in
/// [`crate::transforms`] is reserved for compatible data).
pub fn fd_derivative(f: &GraphFunction) -> GraphFunction {
    let graph = f.graph();
    let h = graph.h();
    let ns = graph.n_samples();
    let mut out = Array2::<C64>::zeros((graph.n_edges(), ns));
    for j in 0..graph.n_edges() {
        let r = f.edge(j);
        let d = |m: usize| r[m];
        for m in 0..ns {
            out[[j, m]] = if m >= 2 && m + 2 < ns {
                (-d(m + 2) + 8.0 * d(m + 1) - 8.0 * d(m - 1) + d(m - 2)) / (12.0 * h)
            } else if m == 0 {
                (-25.0 * d(0) + 48.0 * d(1) - 36.0 * d(2) + 16.0 * d(3) - 3.0 * d(4)) / (12.0 * h)
            } else if m == 1 {
                (-3.0 * d(0) - 10.0 * d(1) + 18.0 * d(2) - 6.0 * d(3) + d(4)) / (12.0 * h)
            } else if m == ns - 2 {
                (3.0 * d(ns - 1) + 10.0 * d(ns - 2) - 18.0 * d(ns - 3) + 6.0 * d(ns - 4)
                    - d(ns - 5))
                    / (12.0 * h)
            } else {
                (25.0 * d(ns - 1) - 48.0 * d(ns - 2) + 36.0 * d(ns - 3) - 16.0 * d(ns - 4)
                    + 3.0 * d(ns - 5))
                    / (12.0 * h)
            };
        }
    }
    GraphFunction {
        graph,
        values: out,
    }
}

/// Multiply by the spatial weight: `(x^power · f_j)(x)`.
pub(crate) fn x_weighted(f: &GraphFunction, power: f64) -> GraphFunction {
    let graph = f.graph();
    let mut values = f.values().clone();
    for j in 0..graph.n_edges() {
        for m in 0..graph.n_samples() {
            values[[j, m]] *= C64::from(graph.x(m).powf(power));
        }
    }
    GraphFunction { graph, values }
}

/// Compute all [`WeightedNorms`] of `f` (derivative via [`fd_derivative`]).
pub fn weighted_norms(f: &GraphFunction) -> WeightedNorms {
    let l2 = l2_norm(f);
    let d = fd_derivative(f);
    let dl2 = l2_norm(&d);
    let xf = x_weighted(f, 1.0);
    let xl2 = l2_norm(&xf);
    let h1 = (l2 * l2 + dl2 * dl2).sqrt();
    let h01 = (l2 * l2 + xl2 * xl2).sqrt();
    WeightedNorms {
        l2,
        h1,
        h01,
        sigma: h1 + h01,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(0x5eed_1234)
    }

    fn random_function(graph: StarGraph, rng: &mut ChaCha8Rng) -> GraphFunction {
        let mut f = GraphFunction::zeros(graph);
        for v in f.values_mut().iter_mut() {
            *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        f
    }

    #[test]
    fn graph_validation_rejects_bad_parameters() {
        assert!(StarGraph::new(1, 1.0, 64).is_err());
        assert!(StarGraph::new(3, 0.0, 64).is_err());
        assert!(StarGraph::new(3, -2.0, 64).is_err());
        assert!(StarGraph::new(3, f64::NAN, 64).is_err());
        assert!(StarGraph::new(3, 1.0, 4).is_err());
        assert!(StarGraph::new(2, 1.0, 8).is_ok());
    }

    #[test]
    fn grid_layout_is_closed_and_uniform() {
        let g = StarGraph::new(3, 64.0, 128).unwrap();
        assert_eq!(g.n_samples(), 129);
        assert_relative_eq!(g.x(0), 0.0);
        assert_relative_eq!(g.x(128), 64.0);
        assert_relative_eq!(g.h(), 0.5);
        assert_relative_eq!(g.xi(128), 128.0 * std::f64::consts::PI / 64.0);
    }

    #[test]
    fn inner_product_matches_closed_form_exponential() {
        // f_j(x) = e^{-x} on every edge of a 3-star: Σ_j ∫_0^∞ e^{-2x} dx = 3/2.
        // Truncation error at L = 24 is e^{-48}/2 per edge; the trapezoid bias
        // is (h²/12)·[g'(L) − g'(0)] = h²/6 per edge for g = e^{-2x}, i.e.
        // 3·h²/6 ≈ 1.7e-5 total — the asserted band is twice that.
        let g = StarGraph::new(3, 24.0, 4096).unwrap();
        let f = GraphFunction::from_profile_fn(g, |_, x| C64::from((-x).exp()));
        let ip = inner_product(&f, &f).unwrap();
        let h = g.h();
        assert!((ip.re - 1.5).abs() < h * h, "got {}", ip.re);
        assert!(ip.im.abs() < 1e-14);
    }

    #[test]
    fn inner_product_is_sesquilinear() {
        let g = StarGraph::new(3, 8.0, 64).unwrap();
        let mut r = rng();
        let f = random_function(g, &mut r);
        let gg = random_function(g, &mut r);
        let hh = random_function(g, &mut r);
        let a = C64::new(0.3, -1.1);
        let b = C64::new(-0.7, 0.2);

        let lhs = inner_product(&f.scale(a).add(&gg.scale(b)).unwrap(), &hh).unwrap();
        let rhs = a * inner_product(&f, &hh).unwrap() + b * inner_product(&gg, &hh).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);

        let lhs2 = inner_product(&f, &gg.scale(a)).unwrap();
        let rhs2 = a.conj() * inner_product(&f, &gg).unwrap();
        assert!((lhs2 - rhs2).norm() < 1e-12);

        let sym = inner_product(&gg, &f).unwrap();
        assert!((sym - inner_product(&f, &gg).unwrap().conj()).norm() < 1e-12);
    }

    #[test]
    fn lp_norm_contract() {
        let g = StarGraph::new(3, 8.0, 256).unwrap();
        let mut r = rng();
        let f = random_function(g, &mut r);
        let gg = random_function(g, &mut r);

        // p < 1 and NaN are domain errors.
        assert!(matches!(lp_norm(&f, 0.5), Err(CoreError::Domain(_))));
        assert!(matches!(lp_norm(&f, f64::NAN), Err(CoreError::Domain(_))));

        // ‖f‖₂² = ⟨f,f⟩.
        let n2 = lp_norm(&f, 2.0).unwrap();
        assert_relative_eq!(
            n2 * n2,
            inner_product(&f, &f).unwrap().re,
            max_relative = 1e-12
        );

        // Sup norm is the max modulus over all samples.
        let sup = lp_norm(&f, f64::INFINITY).unwrap();
        let expected = f.values().iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
        assert_eq!(sup, expected);

        // Homogeneity and triangle inequality, p ∈ {1, 2, 3.5, ∞}.
        for p in [1.0, 2.0, 3.5, f64::INFINITY] {
            let c = C64::new(-2.0, 1.0);
            assert_relative_eq!(
                lp_norm(&f.scale(c), p).unwrap(),
                c.norm() * lp_norm(&f, p).unwrap(),
                max_relative = 1e-12
            );
            let sum = f.add(&gg).unwrap();
            assert!(
                lp_norm(&sum, p).unwrap()
                    <= lp_norm(&f, p).unwrap() + lp_norm(&gg, p).unwrap() + 1e-12
            );
        }
    }

    #[test]
    fn vertex_trace_stencil_is_exact_on_quadratics() {
        // The documented stencil (−3f₀ + 4f₁ − f₂)/(2h) reproduces the
        // derivative of any quadratic exactly.
        let g = StarGraph::new(2, 4.0, 32).unwrap();
        let f = GraphFunction::from_profile_fn(g, |j, x| {
            let (a, b, c) = if j == 0 { (1.5, -4.0, 2.0) } else { (-0.5, 3.0, 1.0) };
            C64::from(a * x * x + b * x + c)
        });
        let tr = vertex_trace(&f);
        assert!((tr.edge_values[0] - C64::from(2.0)).norm() < 1e-13);
        assert!((tr.edge_values[1] - C64::from(1.0)).norm() < 1e-13);
        assert!((tr.edge_derivatives[0] - C64::from(-4.0)).norm() < 1e-12);
        assert!((tr.edge_derivatives[1] - C64::from(3.0)).norm() < 1e-12);
    }

    #[test]
    fn kirchhoff_residual_of_cosine_data() {
        // cos(ξx) on every edge: continuous at the vertex with zero slope, so
        // both defects vanish (flux up to the stencil's O(h³) bias on the
        // quartic term).
        let g = StarGraph::new(3, 64.0, 4096).unwrap();
        let xi = g.xi(7);
        let f = GraphFunction::from_profile_fn(g, |_, x| C64::from((xi * x).cos()));
        let res = kirchhoff_residual(&f);
        assert_eq!(res.continuity_defect, 0.0);
        assert!(res.flux_defect < 1e-5, "flux {}", res.flux_defect);

        // Breaking continuity on one edge registers exactly.
        let mut broken = f.clone();
        broken.values_mut()[[0, 0]] += C64::new(1.0, 0.0);
        let res2 = kirchhoff_residual(&broken);
        assert_relative_eq!(res2.continuity_defect, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn symmetric_decompose_constraint_and_recompose() {
        let g = StarGraph::new(5, 8.0, 128).unwrap();
        let mut r = rng();
        let f = random_function(g, &mut r);
        let (avg, perp) = symmetric_decompose(&f);

        // Σ_j perp_j ≡ 0 to machine precision.
        for m in 0..g.n_samples() {
            let s: C64 = (0..g.n_edges()).map(|j| perp.values()[[j, m]]).sum();
            assert!(s.norm() < 1e-14, "constraint violated at node {m}: {s}");
        }

        // Recomposition returns the original within 1e-14 relative.
        let back = recompose(&avg, &perp).unwrap();
        let scale = lp_norm(&f, f64::INFINITY).unwrap();
        let diff = lp_norm(&back.sub(&f).unwrap(), f64::INFINITY).unwrap();
        assert!(diff < 1e-14 * scale.max(1.0));

        // All-equal data has zero remainder.
        let sym = GraphFunction::from_profile_fn(g, |_, x| C64::new((-x).exp(), 0.3 * x.sin()));
        let (avg_s, perp_s) = symmetric_decompose(&sym);
        assert!(lp_norm(&perp_s, f64::INFINITY).unwrap() < 1e-14);
        assert!((avg_s[0] - sym.values()[[0, 0]]).norm() < 1e-14);
    }

    #[test]
    fn weighted_norms_against_dense_quadrature_oracle() {
        // Oracle: Simpson quadrature of the closed-form integrands for a
        // Gaussian bump, evaluated analytically on a 4× finer grid.
        let g = StarGraph::new(3, 64.0, 2048).unwrap();
        let (c, w, a) = (20.0, 2.0, 0.8);
        let f = GraphFunction::from_profile_fn(g, |_, x| {
            C64::from(a * (-(x - c) * (x - c) / (2.0 * w * w)).exp())
        });

        let simpson = |integrand: &dyn Fn(f64) -> f64| -> f64 {
            let n = 8192usize; // even
            let h = g.edge_length() / n as f64;
            let mut acc = integrand(0.0) + integrand(g.edge_length());
            for m in 1..n {
                let x = m as f64 * h;
                acc += if m % 2 == 1 { 4.0 } else { 2.0 } * integrand(x);
            }
            acc * h / 3.0
        };
        let profile = |x: f64| a * (-(x - c) * (x - c) / (2.0 * w * w)).exp();
        let dprofile = |x: f64| -(x - c) / (w * w) * profile(x);
        let n_edges = g.n_edges() as f64;
        let l2_ref = (n_edges * simpson(&|x| profile(x).powi(2))).sqrt();
        let dl2_ref = (n_edges * simpson(&|x| dprofile(x).powi(2))).sqrt();
        let xl2_ref = (n_edges * simpson(&|x| (x * profile(x)).powi(2))).sqrt();

        let norms = weighted_norms(&f);
        assert_relative_eq!(norms.l2, l2_ref, max_relative = 1e-9);
        assert_relative_eq!(
            norms.h1,
            (l2_ref * l2_ref + dl2_ref * dl2_ref).sqrt(),
            max_relative = 1e-7
        );
        assert_relative_eq!(
            norms.h01,
            (l2_ref * l2_ref + xl2_ref * xl2_ref).sqrt(),
            max_relative = 1e-9
        );
        assert_relative_eq!(norms.sigma, norms.h1 + norms.h01, max_relative = 1e-15);

        // Scaling by 2 doubles every entry.
        let doubled = weighted_norms(&f.scale(C64::from(2.0)));
        assert_relative_eq!(doubled.l2, 2.0 * norms.l2, max_relative = 1e-12);
        assert_relative_eq!(doubled.h1, 2.0 * norms.h1, max_relative = 1e-12);
        assert_relative_eq!(doubled.h01, 2.0 * norms.h01, max_relative = 1e-12);
        assert_relative_eq!(doubled.sigma, 2.0 * norms.sigma, max_relative = 1e-12);
    }

    #[test]
    fn support_monitor_flags_wall_mass() {
        let g = StarGraph::new(2, 64.0, 512).unwrap();
        let interior = GraphFunction::from_profile_fn(g, |_, x| {
            C64::from((-(x - 20.0) * (x - 20.0) / 4.0).exp())
        });
        assert!(support_tail_fraction(&interior) < 1e-8);

        let wall = GraphFunction::from_profile_fn(g, |_, x| {
            C64::from((-(x - 62.0) * (x - 62.0) / 4.0).exp())
        });
        assert!(support_tail_fraction(&wall) > 0.5);

        assert_eq!(support_tail_fraction(&GraphFunction::zeros(g)), 0.0);
    }

    #[test]
    fn fd_derivative_is_fourth_order_on_smooth_data() {
        let g = StarGraph::new(2, 8.0, 256).unwrap();
        let f = GraphFunction::from_profile_fn(g, |_, x| C64::from((0.9 * x).sin()));
        let d = fd_derivative(&f);
        let exact = GraphFunction::from_profile_fn(g, |_, x| C64::from(0.9 * (0.9 * x).cos()));
        let err = lp_norm(&d.sub(&exact).unwrap(), f64::INFINITY).unwrap();
        // h = 1/32. Centered-stencil error is h⁴/30·max|f⁽⁵⁾| ≈ 1.9e-8; the
        // one-sided wall stencils carry a ~6× larger constant (≈ 1.2e-7
        // observed), so the band is set just above that.
        assert!(err < 5e-7, "err {err}");
    }
}
