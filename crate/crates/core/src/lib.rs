//! Stabilizer-free weak Galerkin discretization of the biharmonic equation
//! Δ²u = f with clamped boundary conditions (u = ξ, ∂u/∂n = ν) on 2D
//! polytopal meshes, including non-convex cells.
//!
//! The discrete unknown is a weak function v = {v₀, v_b, v_n n_e}: a P_k
//! polynomial per cell, a P_p trace and a P_q normal-derivative polynomial
//! per edge. The scheme is (Δ_w u_h, Δ_w v) = (f, v₀) with no penalty term;
//! stability comes from computing the discrete weak Laplacian Δ_w in P_r(T)
//! with r = 2N + k − 2 on cells with N edges (r = N + k − 2 when every cell
//! is convex).
//!
//! Crate layout mirrors the pipeline:
//! - [`mesh`]: polytopal meshes, refinement families, sub-triangulation;
//! - [`polyspaces`]: polynomial bases, quadrature, L² projections;
//! - [`weak_laplacian`]: the per-element map from weak DOFs to P_r(T);
//! - [`solver`]: DOF management, SPD assembly, boundary elimination, solve;
//! - [`analysis`]: error norms, manufactured solutions, verification sweeps;
//! - [`cli`]: convergence-study and verification drivers behind the binary.
//!
//! Element loops run in parallel via rayon when the default `parallel`
//! feature is enabled; disabling it yields a single-threaded build with
//! identical results.

pub mod analysis;
pub mod cli;
pub mod error;
pub mod mesh;
pub mod par;
pub mod polyspaces;
pub mod rng;
pub mod solver;
pub mod weak_laplacian;

pub use error::WgError;
