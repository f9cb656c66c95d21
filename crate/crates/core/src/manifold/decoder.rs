//! Decoders: smooth maps from latent space into a higher-dimensional ambient
//! space, with analytic Jacobians.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeometryError, Result};
use crate::manifold::diffeo::Diffeomorphism;
use crate::manifold::mlp::{self, DenseLayer};

/// Latent coordinates of a point.
pub type LatentPoint = DVector<f64>;

/// Smallest singular value of a weight matrix accepted as full column rank.
const LINEAR_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub enum Decoder {
    /// `z -> W z + b` with `W` of full column rank.
    Linear {
        weights: DMatrix<f64>,
        bias: DVector<f64>,
    },
    /// Spherical coordinate chart `(theta, phi) -> r (sin t cos p, sin t sin p, cos t)`.
    SphereChart { radius: f64 },
    /// Graph embedding `(z_1 .. z_d) -> (z_1 .. z_d, sum_i c_i z_i^2)`.
    Paraboloid { coeffs: DVector<f64> },
    /// Dense network; injectivity is not certified for this variant.
    Mlp { layers: Vec<DenseLayer> },
    /// `z -> base(diffeo^{-1}(z))`: the same image under new coordinates.
    Reparametrized {
        base: Box<Decoder>,
        diffeo: Diffeomorphism,
    },
}

impl Decoder {
    pub fn linear(weights: DMatrix<f64>, bias: DVector<f64>) -> Result<Self> {
        if weights.nrows() < weights.ncols() {
            return Err(GeometryError::invalid(
                "linear decoder must not compress (ambient dim < latent dim)",
            ));
        }
        if weights.nrows() != bias.len() {
            return Err(GeometryError::DimensionMismatch {
                context: "linear decoder bias",
                expected: weights.nrows(),
                got: bias.len(),
            });
        }
        let svd = weights.clone().svd(false, false);
        let smin = svd
            .singular_values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if smin.is_nan() || smin <= LINEAR_RANK_TOL {
            return Err(GeometryError::invalid(
                "linear decoder weights are column rank deficient",
            ));
        }
        Ok(Decoder::Linear { weights, bias })
    }

    pub fn sphere_chart(radius: f64) -> Result<Self> {
        if radius.is_nan() || radius <= 0.0 {
            return Err(GeometryError::invalid("sphere radius must be positive"));
        }
        Ok(Decoder::SphereChart { radius })
    }

    pub fn paraboloid(coeffs: DVector<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(GeometryError::invalid(
                "paraboloid needs at least one coefficient",
            ));
        }
        Ok(Decoder::Paraboloid { coeffs })
    }

    pub fn mlp(layers: Vec<DenseLayer>) -> Result<Self> {
        mlp::validate_stack(&layers)?;
        let d = layers.first().unwrap().input_dim();
        let out = layers.last().unwrap().output_dim();
        if out < d {
            return Err(GeometryError::invalid(
                "mlp decoder must not compress (output dim < input dim)",
            ));
        }
        Ok(Decoder::Mlp { layers })
    }

    /// Swaps in new latent coordinates: the returned decoder evaluates the
    /// base map at `diffeo^{-1}(z)` and therefore spans the same image.
    pub fn reparametrize(self, diffeo: Diffeomorphism) -> Result<Self> {
        if diffeo.dim() != self.latent_dim() {
            return Err(GeometryError::DimensionMismatch {
                context: "reparametrization dimension",
                expected: self.latent_dim(),
                got: diffeo.dim(),
            });
        }
        Ok(Decoder::Reparametrized {
            base: Box::new(self),
            diffeo,
        })
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Decoder::Linear { weights, .. } => weights.ncols(),
            Decoder::SphereChart { .. } => 2,
            Decoder::Paraboloid { coeffs } => coeffs.len(),
            Decoder::Mlp { layers } => layers.first().unwrap().input_dim(),
            Decoder::Reparametrized { base, .. } => base.latent_dim(),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        match self {
            Decoder::Linear { weights, .. } => weights.nrows(),
            Decoder::SphereChart { .. } => 3,
            Decoder::Paraboloid { coeffs } => coeffs.len() + 1,
            Decoder::Mlp { layers } => layers.last().unwrap().output_dim(),
            Decoder::Reparametrized { base, .. } => base.ambient_dim(),
        }
    }

    /// Whether injectivity on the declared domain is guaranteed by
    /// construction; dense networks are reported as unverified.
    pub fn injectivity_certified(&self) -> bool {
        match self {
            Decoder::Mlp { .. } => false,
            Decoder::Reparametrized { base, .. } => base.injectivity_certified(),
            _ => true,
        }
    }

    /// Declared compact latent domain, as per-dimension `(lo, hi)` bounds.
    /// Curves are not clipped to it; the solver only warns when an optimized
    /// geodesic leaves it.
    pub fn latent_box(&self) -> Vec<(f64, f64)> {
        match self {
            Decoder::Linear { weights, .. } => vec![(-3.0, 3.0); weights.ncols()],
            // injectivity region of the chart, poles and the phi cut excluded
            Decoder::SphereChart { .. } => vec![
                (0.05, std::f64::consts::PI - 0.05),
                (-std::f64::consts::PI + 0.05, std::f64::consts::PI - 0.05),
            ],
            Decoder::Paraboloid { coeffs } => vec![(-2.0, 2.0); coeffs.len()],
            Decoder::Mlp { layers } => vec![(-2.0, 2.0); layers.first().unwrap().input_dim()],
            Decoder::Reparametrized { base, diffeo } => {
                Self::mapped_box(&base.latent_box(), diffeo)
            }
        }
    }

    /// Conservative region for drawing point pairs; kept well inside
    /// [`Self::latent_box`] so connecting geodesics stay in a
    /// well-conditioned part of the domain.
    pub fn sampling_box(&self) -> Vec<(f64, f64)> {
        match self {
            Decoder::SphereChart { .. } => {
                vec![(0.7, std::f64::consts::PI - 0.7), (-1.2, 1.2)]
            }
            Decoder::Reparametrized { base, diffeo } => {
                Self::mapped_box(&base.sampling_box(), diffeo)
            }
            _ => self.latent_box(),
        }
    }

    /// Axis-aligned bound of a box image under a diffeomorphism, taken from
    /// corners plus center and padded; approximate, used for diagnostics and
    /// sampling only.
    fn mapped_box(base_box: &[(f64, f64)], diffeo: &Diffeomorphism) -> Vec<(f64, f64)> {
        let d = base_box.len();
        let mut probes: Vec<DVector<f64>> = Vec::new();
        for mask in 0..(1usize << d.min(16)) {
            probes.push(DVector::from_fn(d, |i, _| {
                if mask >> i & 1 == 1 {
                    base_box[i].1
                } else {
                    base_box[i].0
                }
            }));
        }
        probes.push(DVector::from_fn(d, |i, _| {
            0.5 * (base_box[i].0 + base_box[i].1)
        }));
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for probe in &probes {
            if let Ok(mapped) = diffeo.apply(probe) {
                for i in 0..d {
                    lo[i] = lo[i].min(mapped[i]);
                    hi[i] = hi[i].max(mapped[i]);
                }
            }
        }
        (0..d)
            .map(|i| {
                let pad = 0.25 * (hi[i] - lo[i]).max(1e-6);
                (lo[i] - pad, hi[i] + pad)
            })
            .collect()
    }

    fn check_dim(&self, z: &DVector<f64>) -> Result<()> {
        if z.len() != self.latent_dim() {
            return Err(GeometryError::DimensionMismatch {
                context: "decoder input",
                expected: self.latent_dim(),
                got: z.len(),
            });
        }
        Ok(())
    }

    pub fn decode(&self, z: &LatentPoint) -> Result<DVector<f64>> {
        self.check_dim(z)?;
        match self {
            Decoder::Linear { weights, bias } => Ok(weights * z + bias),
            Decoder::SphereChart { radius } => {
                let (theta, phi) = (z[0], z[1]);
                Ok(DVector::from_vec(vec![
                    radius * theta.sin() * phi.cos(),
                    radius * theta.sin() * phi.sin(),
                    radius * theta.cos(),
                ]))
            }
            Decoder::Paraboloid { coeffs } => {
                let d = coeffs.len();
                let mut out = DVector::zeros(d + 1);
                let mut height = 0.0;
                for i in 0..d {
                    out[i] = z[i];
                    height += coeffs[i] * z[i] * z[i];
                }
                out[d] = height;
                Ok(out)
            }
            Decoder::Mlp { layers } => mlp::forward(layers, z),
            Decoder::Reparametrized { base, diffeo } => base.decode(&diffeo.invert(z)?),
        }
    }

    /// Analytic `D x d` Jacobian of the decoder at `z`.
    pub fn jacobian(&self, z: &LatentPoint) -> Result<DMatrix<f64>> {
        let jac = self.jacobian_inner(z)?;
        if jac.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::numerical(
                "non-finite decoder jacobian entry",
            ));
        }
        Ok(jac)
    }

    fn jacobian_inner(&self, z: &LatentPoint) -> Result<DMatrix<f64>> {
        self.check_dim(z)?;
        match self {
            Decoder::Linear { weights, .. } => Ok(weights.clone()),
            Decoder::SphereChart { radius } => {
                let (theta, phi) = (z[0], z[1]);
                let (st, ct) = (theta.sin(), theta.cos());
                let (sp, cp) = (phi.sin(), phi.cos());
                let r = *radius;
                Ok(DMatrix::from_row_slice(
                    3,
                    2,
                    &[
                        r * ct * cp,
                        -r * st * sp,
                        r * ct * sp,
                        r * st * cp,
                        -r * st,
                        0.0,
                    ],
                ))
            }
            Decoder::Paraboloid { coeffs } => {
                let d = coeffs.len();
                let mut jac = DMatrix::zeros(d + 1, d);
                for i in 0..d {
                    jac[(i, i)] = 1.0;
                    jac[(d, i)] = 2.0 * coeffs[i] * z[i];
                }
                Ok(jac)
            }
            Decoder::Mlp { layers } => mlp::jacobian(layers, z),
            Decoder::Reparametrized { base, diffeo } => {
                let w = diffeo.invert(z)?;
                Ok(base.jacobian(&w)? * diffeo.inverse_jacobian(z)?)
            }
        }
    }
}
