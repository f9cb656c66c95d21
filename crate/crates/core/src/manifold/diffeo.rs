//! Latent-space diffeomorphisms with exact analytic inverses, used to
//! construct alternative parametrizations of the same manifold.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{GeometryError, Result};
use crate::manifold::mlp::{self, Activation, DenseLayer};

/// Maximum admissible condition number for affine maps.
const AFFINE_COND_LIMIT: f64 = 1e8;

#[derive(Debug, Clone)]
pub enum Diffeomorphism {
    /// `z -> M z + c`, with the inverse matrix precomputed.
    Affine {
        matrix: DMatrix<f64>,
        inverse: DMatrix<f64>,
        offset: DVector<f64>,
    },
    /// `(z1, z2) -> (z1, z2 + m(z1))` where `z1` is the first `split`
    /// coordinates and `m` is a small dense net.
    Coupling {
        split: usize,
        shift: Vec<DenseLayer>,
    },
    /// Left-to-right composition of parts.
    Composition(Vec<Diffeomorphism>),
}

impl Diffeomorphism {
    pub fn identity(dim: usize) -> Self {
        Diffeomorphism::Affine {
            matrix: DMatrix::identity(dim, dim),
            inverse: DMatrix::identity(dim, dim),
            offset: DVector::zeros(dim),
        }
    }

    pub fn affine(matrix: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(GeometryError::invalid("affine matrix must be square"));
        }
        if matrix.nrows() != offset.len() {
            return Err(GeometryError::DimensionMismatch {
                context: "affine offset vs matrix",
                expected: matrix.nrows(),
                got: offset.len(),
            });
        }
        let svd = matrix.clone().svd(false, false);
        let smax = svd.singular_values.iter().cloned().fold(0.0_f64, f64::max);
        let smin = svd
            .singular_values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if smin.is_nan() || smin <= 0.0 || smax / smin > AFFINE_COND_LIMIT {
            return Err(GeometryError::invalid(format!(
                "affine matrix singular or ill-conditioned (cond = {:.3e})",
                if smin > 0.0 {
                    smax / smin
                } else {
                    f64::INFINITY
                }
            )));
        }
        let inverse = matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| GeometryError::invalid("affine matrix not invertible"))?;
        Ok(Diffeomorphism::Affine {
            matrix,
            inverse,
            offset,
        })
    }

    pub fn coupling(split: usize, shift: Vec<DenseLayer>) -> Result<Self> {
        mlp::validate_stack(&shift)?;
        if split == 0 {
            return Err(GeometryError::invalid("coupling split must be >= 1"));
        }
        if shift[0].input_dim() != split {
            return Err(GeometryError::DimensionMismatch {
                context: "coupling shift input vs split",
                expected: split,
                got: shift[0].input_dim(),
            });
        }
        Ok(Diffeomorphism::Coupling { split, shift })
    }

    /// Fixed two-layer tanh shift net with seeded weights scaled by 0.5,
    /// keeping the warp moderate while staying exactly invertible.
    pub fn seeded_coupling(dim: usize, split: usize, hidden: usize, seed: u64) -> Result<Self> {
        if split >= dim {
            return Err(GeometryError::invalid(
                "coupling split must leave at least one shifted coordinate",
            ));
        }
        let out = dim - split;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |r: usize, c: usize| {
            DMatrix::from_fn(r, c, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal))
        };
        let w1 = normal(hidden, split);
        let w2 = normal(out, hidden);
        let mut rng2 = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let b1 = DVector::from_fn(hidden, |_, _| 0.5 * rng2.sample::<f64, _>(StandardNormal));
        let b2 = DVector::from_fn(out, |_, _| 0.5 * rng2.sample::<f64, _>(StandardNormal));
        let shift = vec![
            DenseLayer::new(w1, b1, Activation::Tanh)?,
            DenseLayer::new(w2, b2, Activation::Linear)?,
        ];
        Self::coupling(split, shift)
    }

    pub fn composition(parts: Vec<Diffeomorphism>) -> Result<Self> {
        if parts.is_empty() {
            return Err(GeometryError::invalid(
                "composition needs at least one part",
            ));
        }
        let dim = parts[0].dim();
        if parts.iter().any(|p| p.dim() != dim) {
            return Err(GeometryError::invalid(
                "composition parts have mixed dimensions",
            ));
        }
        Ok(Diffeomorphism::Composition(parts))
    }

    pub fn dim(&self) -> usize {
        match self {
            Diffeomorphism::Affine { matrix, .. } => matrix.nrows(),
            Diffeomorphism::Coupling { split, shift } => split + shift.last().unwrap().output_dim(),
            Diffeomorphism::Composition(parts) => parts[0].dim(),
        }
    }

    fn check_dim(&self, z: &DVector<f64>, context: &'static str) -> Result<()> {
        if z.len() != self.dim() {
            return Err(GeometryError::DimensionMismatch {
                context,
                expected: self.dim(),
                got: z.len(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(z, "diffeo apply")?;
        match self {
            Diffeomorphism::Affine { matrix, offset, .. } => Ok(matrix * z + offset),
            Diffeomorphism::Coupling { split, shift } => {
                let z1 = z.rows(0, *split).into_owned();
                let m = mlp::forward(shift, &z1)?;
                let mut out = z.clone();
                for i in 0..m.len() {
                    out[split + i] += m[i];
                }
                Ok(out)
            }
            Diffeomorphism::Composition(parts) => {
                let mut cur = z.clone();
                for p in parts {
                    cur = p.apply(&cur)?;
                }
                Ok(cur)
            }
        }
    }

    pub fn invert(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(z, "diffeo invert")?;
        match self {
            Diffeomorphism::Affine {
                inverse, offset, ..
            } => Ok(inverse * (z - offset)),
            Diffeomorphism::Coupling { split, shift } => {
                let z1 = z.rows(0, *split).into_owned();
                let m = mlp::forward(shift, &z1)?;
                let mut out = z.clone();
                for i in 0..m.len() {
                    out[split + i] -= m[i];
                }
                Ok(out)
            }
            Diffeomorphism::Composition(parts) => {
                let mut cur = z.clone();
                for p in parts.iter().rev() {
                    cur = p.invert(&cur)?;
                }
                Ok(cur)
            }
        }
    }

    /// Jacobian of the forward map at `z`.
    pub fn jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(z, "diffeo jacobian")?;
        match self {
            Diffeomorphism::Affine { matrix, .. } => Ok(matrix.clone()),
            Diffeomorphism::Coupling { split, shift } => {
                let d = self.dim();
                let z1 = z.rows(0, *split).into_owned();
                let jm = mlp::jacobian(shift, &z1)?;
                let mut jac = DMatrix::identity(d, d);
                for r in 0..jm.nrows() {
                    for c in 0..jm.ncols() {
                        jac[(split + r, c)] = jm[(r, c)];
                    }
                }
                Ok(jac)
            }
            Diffeomorphism::Composition(parts) => {
                let mut cur = z.clone();
                let mut jac = DMatrix::identity(self.dim(), self.dim());
                for p in parts {
                    jac = p.jacobian(&cur)? * jac;
                    cur = p.apply(&cur)?;
                }
                Ok(jac)
            }
        }
    }

    /// Jacobian of the inverse map at `y`, computed analytically per variant
    /// rather than by inverting the forward Jacobian.
    pub fn inverse_jacobian(&self, y: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(y, "diffeo inverse jacobian")?;
        match self {
            Diffeomorphism::Affine { inverse, .. } => Ok(inverse.clone()),
            Diffeomorphism::Coupling { split, shift } => {
                let d = self.dim();
                let y1 = y.rows(0, *split).into_owned();
                let jm = mlp::jacobian(shift, &y1)?;
                let mut jac = DMatrix::identity(d, d);
                for r in 0..jm.nrows() {
                    for c in 0..jm.ncols() {
                        jac[(split + r, c)] = -jm[(r, c)];
                    }
                }
                Ok(jac)
            }
            Diffeomorphism::Composition(parts) => {
                let mut cur = y.clone();
                let mut jac = DMatrix::identity(self.dim(), self.dim());
                for p in parts.iter().rev() {
                    jac = p.inverse_jacobian(&cur)? * jac;
                    cur = p.invert(&cur)?;
                }
                Ok(jac)
            }
        }
    }
}
