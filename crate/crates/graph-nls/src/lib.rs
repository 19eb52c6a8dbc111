//! Fourier analysis and nonlinear Schrödinger dynamics on star graphs.
//!
//! A star graph `G` consists of `n` half-line edges glued at a single vertex.
//! Functions on `G` are tuples `f = (f_1, …, f_n)` of functions on `[0, ∞)`
//! (truncated to `[0, L]` on the grid), and the Kirchhoff Laplacian `Δ_K` acts
//! edgewise as `∂_x²` on the domain of `H²` functions satisfying
//!
//! * continuity at the vertex: `f_1(0) = f_2(0) = … = f_n(0)`,
//! * zero total flux: `Σ_j f_j'(0+) = 0`.
//!
//! The crate provides, in dependency order:
//!
//! * [`graph`] — grids, sampled functions, inner products, weighted norms,
//!   vertex traces and Kirchhoff residuals, symmetric decomposition;
//! * [`spline`] — natural cubic spline interpolation (real and complex);
//! * [`transforms`] — the distorted Fourier transform `F` adapted to `Δ_K`,
//!   its conjugate `F_c`, inverses, the modulation `M(t) = e^{i|x|²/4t}`,
//!   dilation `D(t)`, weight `X`, spectral derivatives, and the commutation
//!   identities tying them together;
//! * [`propagator`] — the free flow `e^{itΔ_K}` via three routes (spectral
//!   multiplier, oscillatory kernel quadrature, `M D F M` factorization) and a
//!   Strang split-step integrator for `i∂_t u + Δ_K u + λ|u|^p u = 0`;
//! * [`fit`] — log–log decay-rate fitting;
//! * [`scattering`] — final-state Picard iteration around the modified profile,
//!   forward-in-time modified scattering data extraction, asymptotic remainder
//!   diagnostics, and the failure-of-scattering monotonicity functional;
//! * [`bank`] — seeded generation of vertex-continuous test function banks;
//! * [`config`], [`experiment`], [`report`] — the TOML-driven experiment
//!   harness behind the `graph-nls` binary.
//!
//! # Conventions
//!
//! Half-line Fourier kernels use the normalization
//! `[F^± g](ξ) = (2π)^{-1/2} ∫_0^∞ e^{∓ixξ} g(x) dx` with the upper sign in
//! the exponent matching `F^-`, so that `F = (F^- − F^+) I_n + (2/n) F^+ J_n`
//! diagonalizes `Δ_K`: `F Δ_K f = −ξ² F f` on Kirchhoff-compatible data.
//! The grid is `x_m = mL/N` (`m = 0..N` inclusive) against `ξ_k = kπ/L`
//! (`k = 0..N` inclusive); all quadratures are trapezoid rules, which makes the
//! discrete cosine/sine calculus exactly invertible on the compatible subspace.

pub mod bank;
pub mod config;
pub mod error;
pub mod experiment;
pub mod fit;
pub mod graph;
pub mod propagator;
pub mod report;
pub mod scattering;
pub mod spline;
pub mod transforms;

pub use error::{CoreError, Result};

/// Complex sample type used throughout.
pub type C64 = num_complex::Complex64;
