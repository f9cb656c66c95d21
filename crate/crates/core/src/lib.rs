// index loops keep the dense-matrix assembly readable
#![allow(clippy::needless_range_loop)]

//! Geometry engine for decoder-defined manifolds: constrained spline curves,
//! pullback metrics, energy-minimizing geodesics, and manifold statistics.
//!
//! A decoder `f: Z -> D` pulls the ambient Euclidean metric back onto its
//! latent space; distances between latent points are then lengths of
//! energy-minimizing curves under that metric. Curves are cubic splines
//! around the connecting straight line, parametrized by free coordinates in
//! the null space of the spline smoothness constraints, and optimized with
//! Adam. Because the pullback construction is invariant under latent
//! reparametrization, geodesic distances agree across decoders that span the
//! same manifold; the statistics module quantifies that stability.

pub mod error;
pub mod manifold;
pub mod solver;
pub mod spline;
pub mod stats;

pub use error::{GeometryError, Result};
pub use manifold::{
    gaussian_curvature_2d, load_decoder, pullback_metric, pullback_metric_verified, Activation,
    Decoder, DenseLayer, Diffeomorphism, LatentPoint, MetricTensor,
};
pub use solver::{
    derive_seed, discrete_energy, energy_gradient, ensemble_energy, geodesic_distance,
    solve_geodesic, solve_geodesic_ensemble, GeodesicSolution, SolverConfig,
};
pub use spline::{
    build_constraint_matrix, null_space_basis, ConstraintMatrix, GeodesicCurve, KnotVector,
    NullSpaceBasis,
};
pub use stats::{
    coefficient_of_variation, frechet_variance, karcher_mean, one_sided_t_test, KarcherMeanResult,
    TTest,
};
