//! Pullback metric tensors and pointwise tangent-space measurements.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeometryError, Result};
use crate::manifold::decoder::{Decoder, LatentPoint};

/// Symmetry tolerance enforced at construction.
const SYMMETRY_TOL: f64 = 1e-12;
/// Default full-rank threshold on the decoder Jacobian in verification mode.
pub const RANK_TOL: f64 = 1e-8;

/// Symmetric positive-definite metric at a specific latent point.
#[derive(Debug, Clone)]
pub struct MetricTensor {
    g: DMatrix<f64>,
}

impl MetricTensor {
    pub fn new(g: DMatrix<f64>) -> Result<Self> {
        if !g.is_square() {
            return Err(GeometryError::invalid("metric tensor must be square"));
        }
        let asym = (&g - g.transpose()).amax();
        if asym > SYMMETRY_TOL * g.amax().max(1.0) {
            return Err(GeometryError::numerical(format!(
                "metric tensor asymmetric (deviation {asym:.3e})"
            )));
        }
        Ok(Self { g })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn smallest_eigenvalue(&self) -> f64 {
        self.g
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min)
    }

    fn check_dim(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                context: "tangent vector vs metric",
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `<u, v>_G = u^T G v`.
    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        self.check_dim(u)?;
        self.check_dim(v)?;
        Ok((u.transpose() * &self.g * v)[(0, 0)])
    }

    /// `|v|_G = sqrt(v^T G v)`.
    pub fn norm(&self, v: &DVector<f64>) -> Result<f64> {
        Ok(self.inner(v, v)?.max(0.0).sqrt())
    }

    /// Angle in `[0, pi]` between two nonzero tangent vectors.
    pub fn angle(&self, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        let nu = self.norm(u)?;
        let nv = self.norm(v)?;
        if nu == 0.0 || nv == 0.0 {
            return Err(GeometryError::invalid(
                "angle undefined for zero tangent vector",
            ));
        }
        let cos = (self.inner(u, v)? / (nu * nv)).clamp(-1.0, 1.0);
        Ok(cos.acos())
    }
}

/// `G(z) = J(z)^T J(z)` for the Euclidean ambient metric.
pub fn pullback_metric(f: &Decoder, z: &LatentPoint) -> Result<MetricTensor> {
    let jac = f.jacobian(z)?;
    MetricTensor::new(jac.transpose() * &jac)
}

/// Like [`pullback_metric`], but fails when the Jacobian loses column rank
/// (smallest singular value at or below `rank_tol`).
pub fn pullback_metric_verified(
    f: &Decoder,
    z: &LatentPoint,
    rank_tol: f64,
) -> Result<MetricTensor> {
    let jac = f.jacobian(z)?;
    let smin = jac
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if smin <= rank_tol {
        return Err(GeometryError::RankDeficient {
            sigma_min: smin,
            tol: rank_tol,
        });
    }
    MetricTensor::new(jac.transpose() * &jac)
}
