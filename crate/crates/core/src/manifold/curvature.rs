//! Gaussian curvature of 2-D latent spaces under the pullback metric.
//!
//! Uses the Brioschi formula, which needs only the first fundamental form
//! `E = G_11`, `F = G_12`, `G = G_22` and its first/second derivatives; the
//! derivatives are taken by central finite differences of the metric entries.

use nalgebra::DVector;

use crate::error::{GeometryError, Result};
use crate::manifold::decoder::{Decoder, LatentPoint};
use crate::manifold::metric::pullback_metric;

pub const DEFAULT_FD_STEP: f64 = 1e-3;

fn fundamental_form(f: &Decoder, z: &DVector<f64>) -> Result<[f64; 3]> {
    let g = pullback_metric(f, z)?;
    let m = g.matrix();
    Ok([m[(0, 0)], m[(0, 1)], m[(1, 1)]])
}

/// Gaussian curvature of `(Z, g^f)` at a 2-D latent point.
pub fn gaussian_curvature_2d(f: &Decoder, z: &LatentPoint, fd_step: f64) -> Result<f64> {
    if f.latent_dim() != 2 {
        return Err(GeometryError::invalid(
            "gaussian curvature implemented for 2-D latent spaces only",
        ));
    }
    if z.len() != 2 {
        return Err(GeometryError::DimensionMismatch {
            context: "curvature input",
            expected: 2,
            got: z.len(),
        });
    }
    if fd_step.is_nan() || fd_step <= 0.0 {
        return Err(GeometryError::invalid("fd_step must be positive"));
    }

    let h = fd_step;
    let at = |du: f64, dv: f64| -> Result<[f64; 3]> {
        fundamental_form(f, &DVector::from_vec(vec![z[0] + du, z[1] + dv]))
    };

    let c = at(0.0, 0.0)?;
    let pu = at(h, 0.0)?;
    let mu = at(-h, 0.0)?;
    let pv = at(0.0, h)?;
    let mv = at(0.0, -h)?;
    let pupv = at(h, h)?;
    let pumv = at(h, -h)?;
    let mupv = at(-h, h)?;
    let mumv = at(-h, -h)?;

    let d_u = |i: usize| (pu[i] - mu[i]) / (2.0 * h);
    let d_v = |i: usize| (pv[i] - mv[i]) / (2.0 * h);
    let d_uu = |i: usize| (pu[i] - 2.0 * c[i] + mu[i]) / (h * h);
    let d_vv = |i: usize| (pv[i] - 2.0 * c[i] + mv[i]) / (h * h);
    let d_uv = |i: usize| (pupv[i] - pumv[i] - mupv[i] + mumv[i]) / (4.0 * h * h);

    let (e, ff, g) = (c[0], c[1], c[2]);
    let (e_u, e_v) = (d_u(0), d_v(0));
    let (f_u, f_v) = (d_u(1), d_v(1));
    let (g_u, g_v) = (d_u(2), d_v(2));
    let e_vv = d_vv(0);
    let g_uu = d_uu(2);
    let f_uv = d_uv(1);

    let det3 = |m: [[f64; 3]; 3]| -> f64 {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };

    let m1 = [
        [-0.5 * e_vv + f_uv - 0.5 * g_uu, 0.5 * e_u, f_u - 0.5 * e_v],
        [f_v - 0.5 * g_u, e, ff],
        [0.5 * g_v, ff, g],
    ];
    let m2 = [
        [0.0, 0.5 * e_v, 0.5 * g_u],
        [0.5 * e_v, e, ff],
        [0.5 * g_u, ff, g],
    ];

    let denom = e * g - ff * ff;
    if !denom.is_finite() || denom <= 0.0 {
        return Err(GeometryError::numerical(format!(
            "degenerate first fundamental form (EG - F^2 = {denom:.3e})"
        )));
    }

    Ok((det3(m1) - det3(m2)) / (denom * denom))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    #[test]
    fn flat_linear_decoder_has_zero_curvature() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w = DMatrix::from_fn(3, 2, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let f = Decoder::linear(w, DVector::zeros(3)).unwrap();
        for _ in 0..10 {
            let z = DVector::from_fn(2, |_, _| rng.gen::<f64>() * 4.0 - 2.0);
            let k = gaussian_curvature_2d(&f, &z, DEFAULT_FD_STEP).unwrap();
            assert!(k.abs() <= 1e-6, "curvature {k}");
        }
    }

    #[test]
    fn unit_sphere_has_unit_curvature() {
        let f = Decoder::sphere_chart(1.0).unwrap();
        for theta in [std::f64::consts::FRAC_PI_2, 1.0, 2.0] {
            let z = DVector::from_vec(vec![theta, 0.5]);
            let k = gaussian_curvature_2d(&f, &z, DEFAULT_FD_STEP).unwrap();
            assert!((k - 1.0).abs() <= 0.02, "curvature {k} at theta {theta}");
        }
    }

    #[test]
    fn sphere_curvature_scales_inverse_square_radius() {
        let f = Decoder::sphere_chart(2.0).unwrap();
        let z = DVector::from_vec(vec![1.3, -0.4]);
        let k = gaussian_curvature_2d(&f, &z, DEFAULT_FD_STEP).unwrap();
        assert!((k - 0.25).abs() <= 0.25 * 0.02, "curvature {k}");
    }

    #[test]
    fn non_two_dimensional_input_rejected() {
        let f = Decoder::paraboloid(DVector::from_vec(vec![1.0, 1.0, 1.0])).unwrap();
        assert!(gaussian_curvature_2d(&f, &DVector::zeros(3), DEFAULT_FD_STEP).is_err());
    }
}
