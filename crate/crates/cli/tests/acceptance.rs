//! Acceptance suite: runs every gate criterion sequentially and prints one
//! pass/fail line per criterion.
//!
//! Run with `cargo test -p latentgeo-cli --test acceptance -- --nocapture`.

#![allow(clippy::needless_range_loop, clippy::vec_init_then_push)]

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use latentgeo::manifold::schema::DecoderSpec;
use latentgeo::spline::{build_constraint_matrix, null_space_basis, GeodesicCurve, KnotVector};
use latentgeo::{
    discrete_energy, energy_gradient, gaussian_curvature_2d, karcher_mean, pullback_metric,
    Activation, Decoder, DenseLayer, Diffeomorphism, SolverConfig,
};
use latentgeo_cli::config::{DiffeoFamilyConfig, EnsembleSource, ExperimentConfig, OutputFormat};
use latentgeo_cli::family::draw_diffeo;
use latentgeo_cli::runners::{run_cv_experiment, run_invariance_experiment, run_oracle_experiment};

struct Outcome {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn seeded_linear_3x2(seed: u64) -> (DMatrix<f64>, Decoder) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = DMatrix::from_fn(3, 2, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let f = Decoder::linear(w.clone(), DVector::zeros(3)).unwrap();
    (w, f)
}

fn linear_spec_from(w: &DMatrix<f64>) -> DecoderSpec {
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|r| (0..2).map(|c| w[(r, c)]).collect())
        .collect();
    DecoderSpec {
        latent_dim: 2,
        ambient_dim: 3,
        kind: "linear".to_string(),
        weights: Some(rows),
        bias: None,
        radius: None,
        coeffs: None,
        layers: None,
        base: None,
        diffeo: None,
    }
}

fn sphere_spec() -> DecoderSpec {
    DecoderSpec {
        latent_dim: 2,
        ambient_dim: 3,
        kind: "sphere".to_string(),
        weights: None,
        bias: None,
        radius: Some(1.0),
        coeffs: None,
        layers: None,
        base: None,
        diffeo: None,
    }
}

fn tuned_solver() -> SolverConfig {
    SolverConfig {
        n_t: 128,
        length_n_t: 128,
        max_steps: 4096,
        early_stop_delta: 1e-6,
        ..SolverConfig::default()
    }
}

fn sample_decoders(seed: u64) -> Vec<Decoder> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = DMatrix::from_fn(3, 2, |_, _| rng.gen::<f64>() * 2.0 - 1.0);
    let linear = Decoder::linear(w, DVector::from_fn(3, |_, _| rng.gen::<f64>())).unwrap();
    let sphere = Decoder::sphere_chart(1.0).unwrap();
    let parab = Decoder::paraboloid(DVector::from_vec(vec![0.5, -0.25])).unwrap();
    let layers = vec![
        DenseLayer::new(
            DMatrix::from_fn(6, 2, |_, _| rng.gen::<f64>() - 0.5),
            DVector::from_fn(6, |_, _| rng.gen::<f64>() - 0.5),
            Activation::Tanh,
        )
        .unwrap(),
        DenseLayer::new(
            DMatrix::from_fn(4, 6, |_, _| rng.gen::<f64>() - 0.5),
            DVector::from_fn(4, |_, _| rng.gen::<f64>() - 0.5),
            Activation::Elu,
        )
        .unwrap(),
    ];
    let mlp = Decoder::mlp(layers).unwrap();
    vec![linear, sphere, parab, mlp]
}

fn random_diffeo(kind: usize, seed: u64) -> Diffeomorphism {
    let family = DiffeoFamilyConfig::default();
    match kind {
        0 => draw_diffeo(&family, 2, seed, 0).unwrap().diffeo,
        1 => Diffeomorphism::seeded_coupling(2, 1, 8, seed).unwrap(),
        _ => {
            let a = draw_diffeo(&family, 2, seed, 0).unwrap().diffeo;
            let c = Diffeomorphism::seeded_coupling(2, 1, 8, seed ^ 0xABCD).unwrap();
            Diffeomorphism::composition(vec![a, c]).unwrap()
        }
    }
}

fn random_in_box(rng: &mut ChaCha8Rng, bounds: &[(f64, f64)]) -> DVector<f64> {
    DVector::from_fn(bounds.len(), |i, _| {
        bounds[i].0 + (bounds[i].1 - bounds[i].0) * rng.gen::<f64>()
    })
}

fn criterion_1_flat_exactness() -> Outcome {
    let start = Instant::now();
    let (w, _) = seeded_linear_3x2(42);
    let cfg = ExperimentConfig {
        decoder: Some(linear_spec_from(&w)),
        n_pairs: 20,
        seed: 42,
        solver: tuned_solver(),
        ..ExperimentConfig::default()
    };
    let report = run_oracle_experiment(&cfg, 1).unwrap();
    let max_rel = report.summary.max_relative_error.unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    Outcome {
        name: "1 flat-manifold exactness",
        passed: max_rel <= 1e-3 && elapsed <= 30.0 && report.summary.pass,
        detail: format!(
            "max rel err {max_rel:.2e} (tol 1e-3), {elapsed:.1}s single-threaded (limit 30s)"
        ),
    }
}

fn criterion_2_sphere_oracle() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        decoder: Some(sphere_spec()),
        n_pairs: 20,
        seed: 7,
        solver: tuned_solver(),
        ..ExperimentConfig::default()
    };
    let report = run_oracle_experiment(&cfg, 4).unwrap();
    let max_rel = report.summary.max_relative_error.unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    Outcome {
        name: "2 sphere great-circle oracle",
        passed: max_rel <= 0.01 && elapsed <= 120.0 && report.summary.pass,
        detail: format!("max rel err {max_rel:.2e} (tol 1e-2), {elapsed:.1}s (limit 120s)"),
    }
}

fn criterion_3_invariance() -> Outcome {
    let start = Instant::now();
    let mut solver = tuned_solver();
    solver.early_stop_delta = 1e-5;
    let cfg = ExperimentConfig {
        decoder: Some(sphere_spec()),
        n_pairs: 20,
        n_models: 10,
        seed: 3,
        diffeo_family: DiffeoFamilyConfig::default(), // mixed: 5 affine + 5 coupling
        solver,
        ..ExperimentConfig::default()
    };
    let report = run_invariance_experiment(&cfg, 4).unwrap();
    let geo = report.summary.geodesic_spreads.as_ref().unwrap();
    let euc = report.summary.euclidean_spreads.as_ref().unwrap();
    let max_geo = geo.iter().cloned().fold(0.0_f64, f64::max);
    let euc_frac = euc.iter().filter(|&&s| s > 0.10).count() as f64 / euc.len() as f64;
    let elapsed = start.elapsed().as_secs_f64();
    Outcome {
        name: "3 geodesic invariance across models",
        passed: max_geo <= 0.02 && euc_frac >= 0.80 && report.summary.pass,
        detail: format!(
            "max geodesic spread {max_geo:.2e} (tol 2e-2), euclidean spread > 10% on {:.0}% of pairs (need 80%), {elapsed:.1}s",
            100.0 * euc_frac
        ),
    }
}

fn criterion_4_pointwise_isometry() -> Outcome {
    let decoders = sample_decoders(11);
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    let mut worst = 0.0_f64;
    for trial in 0..100u64 {
        let f = &decoders[(trial % 4) as usize];
        if f.latent_dim() != 2 {
            continue;
        }
        let diffeo = random_diffeo((trial % 3) as usize, 500 + trial);
        let bounds = f.latent_box();
        let z = random_in_box(&mut rng, &bounds);
        let u = DVector::from_fn(2, |_, _| rng.gen::<f64>() - 0.5);
        let v = DVector::from_fn(2, |_, _| rng.gen::<f64>() - 0.5);

        let lhs = pullback_metric(f, &z).unwrap().inner(&u, &v).unwrap();
        let f2 = f.clone().reparametrize(diffeo.clone()).unwrap();
        let zz = diffeo.apply(&z).unwrap();
        let ja = diffeo.jacobian(&z).unwrap();
        let rhs = pullback_metric(&f2, &zz)
            .unwrap()
            .inner(&(&ja * &u), &(&ja * &v))
            .unwrap();
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(1e-12));
    }
    Outcome {
        name: "4 pointwise pullback isometry",
        passed: worst <= 1e-8,
        detail: format!("worst relative disagreement {worst:.2e} over 100 draws (tol 1e-8)"),
    }
}

fn criterion_5_gradient_correctness() -> Outcome {
    let decoders = sample_decoders(21);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0.0_f64;
    for trial in 0..50usize {
        let f = &decoders[trial % 4];
        let d = f.latent_dim();
        let bounds = f.latent_box();
        let basis = Arc::new(latentgeo::NullSpaceBasis::uniform(5, 1e-10).unwrap());
        let a = random_in_box(&mut rng, &bounds);
        let b = random_in_box(&mut rng, &bounds);
        let omega = DMatrix::from_fn(d, basis.n_free(), |_, _| 0.1 * (rng.gen::<f64>() - 0.5));
        let curve = GeodesicCurve::new(a, b, basis, omega.clone()).unwrap();
        let n_t = 32;
        let grad = energy_gradient(f, &curve, n_t).unwrap();
        let h = 1e-5;
        let mut fd = DMatrix::zeros(d, curve.n_free());
        for i in 0..d {
            for j in 0..curve.n_free() {
                let mut p = omega.clone();
                p[(i, j)] += h;
                let mut m = omega.clone();
                m[(i, j)] -= h;
                let ep = discrete_energy(f, &curve.with_omega(p).unwrap(), n_t).unwrap();
                let em = discrete_energy(f, &curve.with_omega(m).unwrap(), n_t).unwrap();
                fd[(i, j)] = (ep - em) / (2.0 * h);
            }
        }
        worst = worst.max((&grad - &fd).amax() / fd.amax().max(1e-8));
    }
    Outcome {
        name: "5 analytic energy gradient",
        passed: worst <= 1e-5,
        detail: format!("worst relative error vs central differences {worst:.2e} over 50 configurations (tol 1e-5)"),
    }
}

fn criterion_6_spline_constraints() -> Outcome {
    let mut residual_worst = 0.0_f64;
    let mut continuity_worst = 0.0_f64;
    let mut endpoint_worst = 0.0_f64;

    for n in [1usize, 4, 10, 16] {
        let knots = KnotVector::uniform(n).unwrap();
        let a = build_constraint_matrix(n, &knots).unwrap();
        let basis = null_space_basis(&a, 1e-10).unwrap();
        residual_worst = residual_worst.max((a.matrix() * basis.basis()).amax());

        // direct polynomial evaluation of every basis column on both sides
        // of every interior knot, to second order
        let h = basis.knots().knots().to_vec();
        let n_free = basis.n_free();
        let nb = basis.basis();
        for col in 0..n_free {
            for i in 1..n {
                for order in 0..3usize {
                    let eval = |seg: usize, t: f64| -> f64 {
                        let off = 4 * seg;
                        let c = [
                            nb[(off, col)],
                            nb[(off + 1, col)],
                            nb[(off + 2, col)],
                            nb[(off + 3, col)],
                        ];
                        match order {
                            0 => c[0] + c[1] * t + c[2] * t * t + c[3] * t * t * t,
                            1 => c[1] + 2.0 * c[2] * t + 3.0 * c[3] * t * t,
                            _ => 2.0 * c[2] + 6.0 * c[3] * t,
                        }
                    };
                    continuity_worst =
                        continuity_worst.max((eval(i - 1, h[i]) - eval(i, h[i])).abs());
                }
            }
        }
    }

    let basis = Arc::new(latentgeo::NullSpaceBasis::uniform(10, 1e-10).unwrap());
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let a_pt = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let b_pt = DVector::from_vec(vec![-0.5, 1.5, 2.0]);
    for _ in 0..100 {
        let omega = DMatrix::from_fn(3, basis.n_free(), |_, _| rng.gen::<f64>() * 2.0 - 1.0);
        let curve =
            GeodesicCurve::new(a_pt.clone(), b_pt.clone(), Arc::clone(&basis), omega).unwrap();
        endpoint_worst = endpoint_worst
            .max((curve.eval(0.0).unwrap() - &a_pt).amax())
            .max((curve.eval(1.0).unwrap() - &b_pt).amax());
    }

    Outcome {
        name: "6 spline constraint suite",
        passed: residual_worst <= 1e-10 && continuity_worst <= 1e-10 && endpoint_worst <= 1e-10,
        detail: format!(
            "null residual {residual_worst:.2e}, knot continuity {continuity_worst:.2e}, endpoint error {endpoint_worst:.2e} (all tol 1e-10)"
        ),
    }
}

fn criterion_7_curvature() -> Outcome {
    let (_, linear) = seeded_linear_3x2(77);
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut flat_worst = 0.0_f64;
    for _ in 0..5 {
        let z = DVector::from_fn(2, |_, _| rng.gen::<f64>() * 4.0 - 2.0);
        flat_worst = flat_worst.max(gaussian_curvature_2d(&linear, &z, 1e-3).unwrap().abs());
    }

    let mut sphere_ok = true;
    let mut sphere_detail = String::new();
    for radius in [1.0, 2.0] {
        let f = Decoder::sphere_chart(radius).unwrap();
        let expect = 1.0 / (radius * radius);
        let z = DVector::from_vec(vec![1.2, 0.3]);
        let k = gaussian_curvature_2d(&f, &z, 1e-3).unwrap();
        let rel = (k - expect).abs() / expect;
        sphere_ok &= rel <= 0.02;
        sphere_detail.push_str(&format!(
            "r={radius}: K={k:.5} (expect {expect}, rel {rel:.2e}); "
        ));
    }

    Outcome {
        name: "7 gaussian curvature",
        passed: flat_worst <= 1e-6 && sphere_ok,
        detail: format!("flat |K| {flat_worst:.2e} (tol 1e-6); {sphere_detail}tol 2%"),
    }
}

fn criterion_8_karcher_flat() -> Outcome {
    let (_, f) = seeded_linear_3x2(88);
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let points: Vec<DVector<f64>> = (0..10)
        .map(|_| DVector::from_fn(2, |_, _| rng.gen::<f64>() * 2.0 - 1.0))
        .collect();
    let solver = SolverConfig {
        n_t: 32,
        length_n_t: 64,
        max_steps: 20,
        patience_steps: 5,
        early_stop_delta: 1e-12,
        ..SolverConfig::default()
    };
    let result = karcher_mean(&f, &points, &solver).unwrap();
    let mut mean = DVector::zeros(2);
    for p in &points {
        mean += p;
    }
    mean /= points.len() as f64;
    let err = (&result.mean - &mean).amax();
    Outcome {
        name: "8 karcher mean, flat case",
        passed: err <= 1e-2 && result.converged,
        detail: format!(
            "max coordinate error {err:.2e} vs arithmetic mean (tol 1e-2), {} iterations",
            result.iterations
        ),
    }
}

fn cv_protocol_config() -> ExperimentConfig {
    let mut solver = tuned_solver();
    solver.early_stop_delta = 1e-5;
    ExperimentConfig {
        decoder: Some(sphere_spec()),
        n_pairs: 50,
        n_models: 10,
        seed: 9,
        ensemble_source: EnsembleSource::DiffeoReparametrization,
        diffeo_family: DiffeoFamilyConfig::default(),
        solver,
        format: OutputFormat::Csv,
        ..ExperimentConfig::default()
    }
}

fn criterion_9_and_10_cv_protocol() -> (Outcome, Outcome) {
    let start = Instant::now();
    let cfg = cv_protocol_config();
    let report = run_cv_experiment(&cfg, 4).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let mean_g = report.summary.mean_cv_geodesic.unwrap();
    let mean_e = report.summary.mean_cv_euclidean.unwrap();
    let t = report.summary.t_statistic.unwrap();
    let nine = Outcome {
        name: "9 coefficient-of-variation protocol",
        passed: mean_g < 0.1 * mean_e && t <= -5.0 && elapsed <= 900.0 && report.summary.pass,
        detail: format!(
            "mean CV geodesic {mean_g:.2e} vs euclidean {mean_e:.2e} (need < 0.1x), t = {t:.2} (need <= -5), {elapsed:.0}s on 4 workers (limit 900s)"
        ),
    };

    // identical config, fresh run: the emitted CSV must match byte for byte
    let csv_first = report.to_csv().unwrap();
    let report_again = run_cv_experiment(&cfg, 4).unwrap();
    let csv_second = report_again.to_csv().unwrap();
    let ten = Outcome {
        name: "10 byte-identical reruns",
        passed: csv_first == csv_second && !csv_first.is_empty(),
        detail: format!(
            "two runs, {} bytes each, identical: {}",
            csv_first.len(),
            csv_first == csv_second
        ),
    };
    (nine, ten)
}

#[test]
fn acceptance_suite() {
    let mut outcomes = Vec::new();
    outcomes.push(criterion_1_flat_exactness());
    outcomes.push(criterion_2_sphere_oracle());
    outcomes.push(criterion_3_invariance());
    outcomes.push(criterion_4_pointwise_isometry());
    outcomes.push(criterion_5_gradient_correctness());
    outcomes.push(criterion_6_spline_constraints());
    outcomes.push(criterion_7_curvature());
    outcomes.push(criterion_8_karcher_flat());
    let (nine, ten) = criterion_9_and_10_cv_protocol();
    outcomes.push(nine);
    outcomes.push(ten);

    let mut failed = Vec::new();
    for outcome in &outcomes {
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] criterion {}: {}", outcome.name, outcome.detail);
        if !outcome.passed {
            failed.push(outcome.name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
