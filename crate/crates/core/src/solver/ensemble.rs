//! Uncertainty-aware energy over a decoder ensemble: each segment endpoint is
//! decoded by an independently drawn ensemble member, turning the energy into
//! a stochastic objective.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{GeometryError, Result};
use crate::manifold::decoder::{Decoder, LatentPoint};
use crate::solver::{
    curve_length, optimize_curve, EnergyObjective, GeodesicSolution, SampleGrid, SolverConfig,
};
use crate::spline::GeodesicCurve;

fn validate_ensemble(ensemble: &[Decoder]) -> Result<()> {
    if ensemble.is_empty() {
        return Err(GeometryError::invalid("ensemble must be nonempty"));
    }
    let d = ensemble[0].latent_dim();
    let amb = ensemble[0].ambient_dim();
    for f in ensemble.iter().skip(1) {
        if f.latent_dim() != d || f.ambient_dim() != amb {
            return Err(GeometryError::invalid(
                "ensemble members have mixed latent or ambient dimensions",
            ));
        }
    }
    Ok(())
}

/// Per-segment decoder pairing: segment `i` couples `f[left[i]](t_{i-1})`
/// with `f[right[i]](t_i)`.
fn draw_pairing(rng: &mut ChaCha8Rng, n_segments: usize, k: usize) -> Vec<(usize, usize)> {
    (0..n_segments)
        .map(|_| (rng.gen_range(0..k), rng.gen_range(0..k)))
        .collect()
}

fn pairing_energy_and_gradient(
    ensemble: &[Decoder],
    curve: &GeodesicCurve,
    grid: &SampleGrid,
    pairing: &[(usize, usize)],
    with_gradient: bool,
) -> Result<(f64, DMatrix<f64>)> {
    let points = grid.curve_points(curve);
    let dt = grid.dt;
    let d = curve.latent_dim();
    let k = curve.n_free();
    let mut energy = 0.0;
    let mut grad = DMatrix::zeros(d, k);

    // decoded values per point, per member actually used at that point
    for (seg, &(left, right)) in pairing.iter().enumerate() {
        let i = seg + 1;
        let xl = ensemble[left].decode(&points[i - 1])?;
        let xr = ensemble[right].decode(&points[i])?;
        if xl.iter().chain(xr.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::numerical(format!(
                "non-finite decoder output at segment {seg}"
            )));
        }
        let diff = &xr - &xl;
        energy += diff.norm_squared();
        if with_gradient {
            let jr = ensemble[right].jacobian(&points[i])?;
            let jl = ensemble[left].jacobian(&points[i - 1])?;
            let gr = jr.transpose() * &diff;
            let gl = jl.transpose() * &diff;
            grad.ger(1.0 / dt, &gr, &grid.rows[i], 1.0);
            grad.ger(-1.0 / dt, &gl, &grid.rows[i - 1], 1.0);
        }
    }
    energy /= 2.0 * dt;
    Ok((energy, grad))
}

/// One draw of the stochastic ensemble energy.
pub fn ensemble_energy(
    ensemble: &[Decoder],
    curve: &GeodesicCurve,
    n_t: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    validate_ensemble(ensemble)?;
    if n_t < 2 {
        return Err(GeometryError::invalid("n_t must be >= 2"));
    }
    let grid = SampleGrid::new(curve.basis(), n_t);
    let pairing = draw_pairing(rng, n_t - 1, ensemble.len());
    pairing_energy_and_gradient(ensemble, curve, &grid, &pairing, false).map(|(e, _)| e)
}

struct EnsembleObjective<'a> {
    ensemble: &'a [Decoder],
    rng: ChaCha8Rng,
    fixed_pairing: Option<Vec<(usize, usize)>>,
}

impl EnergyObjective for EnsembleObjective<'_> {
    fn eval(&mut self, curve: &GeodesicCurve, grid: &SampleGrid) -> Result<(f64, DMatrix<f64>)> {
        let n_segments = grid.ts.len() - 1;
        let pairing = match &self.fixed_pairing {
            Some(p) => p.clone(),
            None => draw_pairing(&mut self.rng, n_segments, self.ensemble.len()),
        };
        pairing_energy_and_gradient(self.ensemble, curve, grid, &pairing, true)
    }
}

/// Ensemble variant of the geodesic solve. Decoder indices are redrawn every
/// step per segment (configurable); the reported length is evaluated under a
/// fixed pairing drawn once from the seed, with per-member lengths attached
/// as a spread diagnostic.
pub fn solve_geodesic_ensemble(
    ensemble: &[Decoder],
    z1: &LatentPoint,
    z2: &LatentPoint,
    cfg: &SolverConfig,
) -> Result<GeodesicSolution> {
    cfg.validate()?;
    validate_ensemble(ensemble)?;
    let d = ensemble[0].latent_dim();
    if z1.len() != d || z2.len() != d {
        return Err(GeometryError::DimensionMismatch {
            context: "ensemble solve endpoints",
            expected: d,
            got: if z1.len() != d { z1.len() } else { z2.len() },
        });
    }

    let basis = cfg.basis()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let fixed_pairing = if cfg.ensemble_redraw_per_step {
        None
    } else {
        Some(draw_pairing(&mut rng, cfg.n_t - 1, ensemble.len()))
    };
    let mut objective = EnsembleObjective {
        ensemble,
        rng,
        fixed_pairing,
    };
    let (curve, energy, steps, converged, trace) =
        optimize_curve(&mut objective, z1, z2, Arc::clone(&basis), cfg)?;

    // final length under a fixed pairing drawn once from the seed
    let mut length_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let grid = SampleGrid::new(&basis, cfg.length_n_t);
    let pairing = draw_pairing(&mut length_rng, cfg.length_n_t - 1, ensemble.len());
    let points = grid.curve_points(&curve);
    let mut length = 0.0;
    for (seg, &(left, right)) in pairing.iter().enumerate() {
        let xl = ensemble[left].decode(&points[seg])?;
        let xr = ensemble[right].decode(&points[seg + 1])?;
        length += (xr - xl).norm();
    }

    let per_decoder: Result<Vec<f64>> = ensemble
        .iter()
        .map(|f| curve_length(f, &curve, cfg.length_n_t))
        .collect();

    let mut smin = f64::INFINITY;
    for p in &points {
        for f in ensemble {
            let s = f
                .jacobian(p)?
                .svd(false, false)
                .singular_values
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            smin = smin.min(s);
        }
    }

    let bounds = ensemble[0].latent_box();
    let exited = points
        .iter()
        .any(|p| (0..p.len()).any(|i| p[i] < bounds[i].0 || p[i] > bounds[i].1));

    Ok(GeodesicSolution {
        curve,
        energy,
        length,
        steps_taken: steps,
        converged,
        min_singular_value_seen: smin,
        exited_domain: exited,
        energy_trace: trace,
        per_decoder_lengths: Some(per_decoder?),
    })
}
