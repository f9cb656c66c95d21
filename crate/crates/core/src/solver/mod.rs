//! Geodesic solver: minimizes the discretized curve energy over the spline
//! free parameters with Adam, starting from the straight line.

pub mod ensemble;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::manifold::decoder::{Decoder, LatentPoint};
use crate::spline::{GeodesicCurve, NullSpaceBasis};

pub use ensemble::{ensemble_energy, solve_geodesic_ensemble};

/// Solver hyperparameters; the defaults follow the shared geodesic training
/// parameters used throughout the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Number of cubic segments in the spline.
    pub n_segments: usize,
    /// Time discretization for the energy sum.
    pub n_t: usize,
    /// Maximum number of Adam steps.
    pub max_steps: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Early stopping patience in steps.
    pub patience_steps: usize,
    /// Absolute energy improvement below which patience counts down.
    pub early_stop_delta: f64,
    /// Time discretization for the final length evaluation.
    pub length_n_t: usize,
    pub seed: u64,
    /// Extra random restarts beyond the zero (straight line) initialization.
    pub n_restarts: usize,
    /// Redraw ensemble decoder indices every step (otherwise once per solve).
    pub ensemble_redraw_per_step: bool,
    /// Relative singular-value cutoff for the spline null space.
    pub sv_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            n_segments: 10,
            n_t: 256,
            max_steps: 4096,
            learning_rate: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            patience_steps: 100,
            early_stop_delta: 1.0,
            length_n_t: 256,
            seed: 0,
            n_restarts: 0,
            ensemble_redraw_per_step: true,
            sv_tol: 1e-10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_segments == 0 {
            return Err(GeometryError::invalid("n_segments must be >= 1"));
        }
        if self.n_t < 2 || self.length_n_t < 2 {
            return Err(GeometryError::invalid(
                "time discretizations need >= 2 samples",
            ));
        }
        if self.max_steps == 0 {
            return Err(GeometryError::invalid("max_steps must be >= 1"));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(GeometryError::invalid("learning_rate must be positive"));
        }
        if self.patience_steps == 0 {
            return Err(GeometryError::invalid("patience_steps must be >= 1"));
        }
        if self.sv_tol.is_nan() || self.sv_tol <= 0.0 {
            return Err(GeometryError::invalid("sv_tol must be positive"));
        }
        Ok(())
    }

    pub fn basis(&self) -> Result<Arc<NullSpaceBasis>> {
        Ok(Arc::new(NullSpaceBasis::uniform(
            self.n_segments,
            self.sv_tol,
        )?))
    }
}

/// Splits a seed into independent per-task streams.
pub fn derive_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64 over the packed indices
    let mut x = seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ b.rotate_left(32);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Optimized curve with its diagnostics.
#[derive(Debug, Clone)]
pub struct GeodesicSolution {
    pub curve: GeodesicCurve,
    pub energy: f64,
    pub length: f64,
    pub steps_taken: usize,
    pub converged: bool,
    /// Smallest singular value of the decoder Jacobian over the final curve
    /// samples (full-rank diagnostic).
    pub min_singular_value_seen: f64,
    /// Whether any final curve sample left the decoder's declared latent
    /// domain (the curve is not clipped; this is a warning flag).
    pub exited_domain: bool,
    /// Raw energy per evaluated iterate, starting with the initialization.
    pub energy_trace: Vec<f64>,
    /// Lengths of the final curve under each ensemble member (ensemble
    /// solves only).
    pub per_decoder_lengths: Option<Vec<f64>>,
}

fn outside_box(points: &[DVector<f64>], bounds: &[(f64, f64)]) -> bool {
    points
        .iter()
        .any(|p| (0..p.len()).any(|i| p[i] < bounds[i].0 || p[i] > bounds[i].1))
}

/// Uniform time grid with precomputed parameter-sensitivity rows.
pub(crate) struct SampleGrid {
    pub ts: Vec<f64>,
    pub rows: Vec<DVector<f64>>,
    pub dt: f64,
}

impl SampleGrid {
    pub fn new(basis: &NullSpaceBasis, n_t: usize) -> Self {
        let ts: Vec<f64> = (0..n_t).map(|i| i as f64 / (n_t - 1) as f64).collect();
        let rows = ts.iter().map(|&t| basis.sensitivity_row(t)).collect();
        let dt = 1.0 / (n_t - 1) as f64;
        Self { ts, rows, dt }
    }

    /// Curve points at all grid samples.
    pub fn curve_points(&self, curve: &GeodesicCurve) -> Vec<DVector<f64>> {
        let (a, b) = curve.endpoints();
        let dir = b - a;
        let omega = curve.omega();
        self.ts
            .iter()
            .zip(&self.rows)
            .map(|(&t, row)| {
                let mut p = a.clone();
                p.axpy(t, &dir, 1.0);
                p.gemv(1.0, omega, row, 1.0);
                p
            })
            .collect()
    }
}

fn decode_all(f: &Decoder, points: &[DVector<f64>], ts: &[f64]) -> Result<Vec<DVector<f64>>> {
    points
        .iter()
        .zip(ts)
        .map(|(p, &t)| {
            let x = f.decode(p)?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(GeometryError::numerical(format!(
                    "non-finite decoder output at t = {t}"
                )));
            }
            Ok(x)
        })
        .collect()
}

fn energy_of_decoded(decoded: &[DVector<f64>], dt: f64) -> f64 {
    let mut acc = 0.0;
    for i in 1..decoded.len() {
        let mut seg = 0.0;
        for (xr, xl) in decoded[i].iter().zip(decoded[i - 1].iter()) {
            let d = xr - xl;
            seg += d * d;
        }
        acc += seg;
    }
    acc / (2.0 * dt)
}

/// Discretized curve energy `(1 / 2 dt) sum_i |f(g(t_i)) - f(g(t_{i-1}))|^2`
/// on a uniform grid of `n_t` samples.
pub fn discrete_energy(f: &Decoder, curve: &GeodesicCurve, n_t: usize) -> Result<f64> {
    if n_t < 2 {
        return Err(GeometryError::invalid("n_t must be >= 2"));
    }
    if f.latent_dim() != curve.latent_dim() {
        return Err(GeometryError::DimensionMismatch {
            context: "decoder vs curve",
            expected: f.latent_dim(),
            got: curve.latent_dim(),
        });
    }
    let grid = SampleGrid::new(curve.basis(), n_t);
    let points = grid.curve_points(curve);
    let decoded = decode_all(f, &points, &grid.ts)?;
    Ok(energy_of_decoded(&decoded, grid.dt))
}

/// Energy and its exact gradient with respect to the free parameters, via the
/// chain rule through the decoder Jacobian and the curve's linearity in
/// `omega`.
pub(crate) fn energy_and_gradient(
    f: &Decoder,
    curve: &GeodesicCurve,
    grid: &SampleGrid,
) -> Result<(f64, DMatrix<f64>)> {
    let points = grid.curve_points(curve);
    let decoded = decode_all(f, &points, &grid.ts)?;
    let energy = energy_of_decoded(&decoded, grid.dt);

    let n = points.len();
    let d = curve.latent_dim();
    let k = curve.n_free();
    let mut grad = DMatrix::zeros(d, k);
    // point i contributes through the segments on both sides:
    // s_i = (x_i - x_{i-1}) - (x_{i+1} - x_i)
    for i in 0..n {
        let mut s = DVector::zeros(decoded[i].len());
        if i > 0 {
            s += &decoded[i] - &decoded[i - 1];
        }
        if i + 1 < n {
            s -= &decoded[i + 1] - &decoded[i];
        }
        if s.amax() == 0.0 {
            continue;
        }
        let jac = f.jacobian(&points[i])?;
        let g = jac.transpose() * s;
        grad.ger(1.0 / grid.dt, &g, &grid.rows[i], 1.0);
    }
    Ok((energy, grad))
}

/// Gradient of [`discrete_energy`] with respect to `omega`.
pub fn energy_gradient(f: &Decoder, curve: &GeodesicCurve, n_t: usize) -> Result<DMatrix<f64>> {
    if n_t < 2 {
        return Err(GeometryError::invalid("n_t must be >= 2"));
    }
    let grid = SampleGrid::new(curve.basis(), n_t);
    energy_and_gradient(f, curve, &grid).map(|(_, g)| g)
}

/// Curve length as the sum of decoded segment lengths on a fresh grid.
pub fn curve_length(f: &Decoder, curve: &GeodesicCurve, n_t: usize) -> Result<f64> {
    if n_t < 2 {
        return Err(GeometryError::invalid("n_t must be >= 2"));
    }
    let grid = SampleGrid::new(curve.basis(), n_t);
    let points = grid.curve_points(curve);
    let decoded = decode_all(f, &points, &grid.ts)?;
    let mut len = 0.0;
    for i in 1..decoded.len() {
        len += (&decoded[i] - &decoded[i - 1]).norm();
    }
    Ok(len)
}

fn min_jacobian_singular_value(f: &Decoder, points: &[DVector<f64>]) -> Result<f64> {
    let mut smin = f64::INFINITY;
    for p in points {
        let jac = f.jacobian(p)?;
        let s = jac
            .svd(false, false)
            .singular_values
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        smin = smin.min(s);
    }
    Ok(smin)
}

struct AdamState {
    m: DMatrix<f64>,
    v: DMatrix<f64>,
    t: usize,
}

impl AdamState {
    fn new(rows: usize, cols: usize) -> Self {
        Self {
            m: DMatrix::zeros(rows, cols),
            v: DMatrix::zeros(rows, cols),
            t: 0,
        }
    }

    fn step(&mut self, omega: &mut DMatrix<f64>, grad: &DMatrix<f64>, cfg: &SolverConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..omega.nrows() {
            for j in 0..omega.ncols() {
                let g = grad[(i, j)];
                self.m[(i, j)] = b1 * self.m[(i, j)] + (1.0 - b1) * g;
                self.v[(i, j)] = b2 * self.v[(i, j)] + (1.0 - b2) * g * g;
                let mh = self.m[(i, j)] / bc1;
                let vh = self.v[(i, j)] / bc2;
                omega[(i, j)] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_eps);
            }
        }
    }
}

struct EarlyStop {
    reference: f64,
    since_improvement: usize,
}

impl EarlyStop {
    fn new(initial: f64) -> Self {
        Self {
            reference: initial,
            since_improvement: 0,
        }
    }

    /// Returns true once no improvement of at least `delta` has been seen for
    /// `patience` consecutive steps.
    fn update(&mut self, best: f64, delta: f64, patience: usize) -> bool {
        if self.reference - best >= delta {
            self.reference = best;
            self.since_improvement = 0;
            false
        } else {
            self.since_improvement += 1;
            self.since_improvement >= patience
        }
    }
}

/// Objective abstraction shared by the deterministic and ensemble solves.
pub(crate) trait EnergyObjective {
    fn eval(&mut self, curve: &GeodesicCurve, grid: &SampleGrid) -> Result<(f64, DMatrix<f64>)>;
}

struct SingleDecoder<'a> {
    f: &'a Decoder,
}

impl EnergyObjective for SingleDecoder<'_> {
    fn eval(&mut self, curve: &GeodesicCurve, grid: &SampleGrid) -> Result<(f64, DMatrix<f64>)> {
        energy_and_gradient(self.f, curve, grid)
    }
}

pub(crate) fn optimize_curve(
    objective: &mut dyn EnergyObjective,
    z1: &LatentPoint,
    z2: &LatentPoint,
    basis: Arc<NullSpaceBasis>,
    cfg: &SolverConfig,
) -> Result<(GeodesicCurve, f64, usize, bool, Vec<f64>)> {
    let grid = SampleGrid::new(&basis, cfg.n_t);
    let d = z1.len();
    let k = basis.n_free();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let scale = 0.1 * (z2 - z1).norm().max(1e-3);
    let mut best_overall: Option<(DMatrix<f64>, f64)> = None;
    let mut trace = Vec::new();
    let mut total_steps = 0;
    let mut converged = false;

    for restart in 0..=cfg.n_restarts {
        let mut omega = if restart == 0 {
            DMatrix::zeros(d, k)
        } else {
            DMatrix::from_fn(d, k, |_, _| scale * (rng.gen::<f64>() * 2.0 - 1.0))
        };
        let mut curve =
            GeodesicCurve::new(z1.clone(), z2.clone(), Arc::clone(&basis), omega.clone())?;

        let (e0, mut grad) = objective
            .eval(&curve, &grid)
            .map_err(|e| GeometryError::numerical(format!("at step 0: {e}")))?;
        if !e0.is_finite() {
            return Err(GeometryError::numerical(
                "non-finite energy at initialization (step 0)".to_string(),
            ));
        }
        trace.push(e0);
        let mut best = e0;
        let mut best_omega = omega.clone();
        let mut stopper = EarlyStop::new(e0);
        let mut adam = AdamState::new(d, k);
        let mut steps = 0;

        // degenerate case: already at the energy floor
        if e0 == 0.0 {
            converged = true;
        } else {
            for step in 1..=cfg.max_steps {
                adam.step(&mut omega, &grad, cfg);
                curve = curve.with_omega(omega.clone())?;
                let (e, g) = objective
                    .eval(&curve, &grid)
                    .map_err(|err| GeometryError::numerical(format!("at step {step}: {err}")))?;
                if !e.is_finite() {
                    return Err(GeometryError::numerical(format!(
                        "non-finite energy at step {step}"
                    )));
                }
                grad = g;
                trace.push(e);
                steps = step;
                if e < best {
                    best = e;
                    best_omega = omega.clone();
                }
                if stopper.update(best, cfg.early_stop_delta, cfg.patience_steps) {
                    converged = true;
                    break;
                }
            }
        }
        total_steps += steps;

        match &best_overall {
            Some((_, b)) if *b <= best => {}
            _ => best_overall = Some((best_omega, best)),
        }
    }

    let (best_omega, best_energy) = best_overall.unwrap();
    let curve = GeodesicCurve::new(z1.clone(), z2.clone(), basis, best_omega)?;
    Ok((curve, best_energy, total_steps, converged, trace))
}

/// Minimizes the discretized energy between two latent points and reports the
/// optimized curve, its energy and its length.
pub fn solve_geodesic(
    f: &Decoder,
    z1: &LatentPoint,
    z2: &LatentPoint,
    cfg: &SolverConfig,
) -> Result<GeodesicSolution> {
    cfg.validate()?;
    if z1.len() != f.latent_dim() || z2.len() != f.latent_dim() {
        return Err(GeometryError::DimensionMismatch {
            context: "solve endpoints",
            expected: f.latent_dim(),
            got: if z1.len() != f.latent_dim() {
                z1.len()
            } else {
                z2.len()
            },
        });
    }

    let basis = cfg.basis()?;
    let mut objective = SingleDecoder { f };
    let (curve, energy, steps, converged, trace) =
        optimize_curve(&mut objective, z1, z2, Arc::clone(&basis), cfg)?;

    let length = curve_length(f, &curve, cfg.length_n_t)?;
    let grid = SampleGrid::new(&basis, cfg.length_n_t);
    let final_points = grid.curve_points(&curve);
    let smin = min_jacobian_singular_value(f, &final_points)?;
    let exited = outside_box(&final_points, &f.latent_box());

    Ok(GeodesicSolution {
        curve,
        energy,
        length,
        steps_taken: steps,
        converged,
        min_singular_value_seen: smin,
        exited_domain: exited,
        energy_trace: trace,
        per_decoder_lengths: None,
    })
}

/// Geodesic distance `d(z1, z2)`: the length of the optimized curve.
pub fn geodesic_distance(
    f: &Decoder,
    z1: &LatentPoint,
    z2: &LatentPoint,
    cfg: &SolverConfig,
) -> Result<f64> {
    solve_geodesic(f, z1, z2, cfg).map(|s| s.length)
}
