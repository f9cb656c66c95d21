//! Experiment runners: oracle validation, invariance, coefficient-of-variation
//! stability, single-pair geodesics, and Karcher means.

use anyhow::{anyhow, bail, Result};
use nalgebra::DVector;
use rayon::prelude::*;

use latentgeo::solver::derive_seed;
use latentgeo::{
    coefficient_of_variation, karcher_mean, one_sided_t_test, solve_geodesic, Decoder,
    GeodesicSolution, SolverConfig,
};

use crate::config::{EnsembleSource, ExperimentConfig};
use crate::family::{draw_diffeo, perturb_mlp, sample_pairs};
use crate::report::{CurveDump, DistanceSample, ExperimentReport, Summary};

/// Pair rejection threshold as a fraction of the latent box diagonal.
const PAIR_MIN_SEPARATION: f64 = 0.05;
/// A report fails once more than this fraction of solves did not converge.
const UNCONVERGED_LIMIT: f64 = 0.10;

/// Invariance pass thresholds: geodesic spread must stay below 2% while the
/// Euclidean spread exceeds 10% on at least 80% of pairs.
const GEODESIC_SPREAD_MAX: f64 = 0.02;
const EUCLIDEAN_SPREAD_MIN: f64 = 0.10;
const EUCLIDEAN_SPREAD_FRACTION: f64 = 0.80;

/// Oracle pass thresholds per decoder kind.
const LINEAR_ORACLE_TOL: f64 = 1e-3;
const SPHERE_ORACLE_TOL: f64 = 1e-2;

/// CV pass threshold: mean geodesic CV under 10% of the mean Euclidean CV for
/// the reparametrization source.
const CV_RATIO_MAX: f64 = 0.1;

fn run_pool<T: Send>(threads: usize, work: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| anyhow!("thread pool: {e}"))?;
    Ok(pool.install(work))
}

fn per_pair_cfg(cfg: &ExperimentConfig, pair: usize, model: usize) -> SolverConfig {
    let mut solver = cfg.solver.clone();
    solver.seed = derive_seed(cfg.seed, pair as u64, model as u64);
    solver
}

fn record_from(
    pair_id: usize,
    model_id: usize,
    d_euclidean: f64,
    sol: &GeodesicSolution,
) -> DistanceSample {
    DistanceSample {
        pair_id,
        model_id,
        d_euclidean,
        d_geodesic: sol.length,
        converged: sol.converged,
        steps: sol.steps_taken,
        energy: sol.energy,
    }
}

fn unconverged_fraction(records: &[DistanceSample]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    records.iter().filter(|r| !r.converged).count() as f64 / records.len() as f64
}

/// Relative spread `(max - min) / mean` of one pair's distances across models.
fn relative_spread(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean == 0.0 {
        0.0
    } else {
        (max - min) / mean
    }
}

/// Closed-form geodesic length oracle for the supported decoder kinds.
fn oracle_length(f: &Decoder, z1: &DVector<f64>, z2: &DVector<f64>) -> Result<f64> {
    match f {
        Decoder::Linear { weights, .. } => Ok((weights * (z2 - z1)).norm()),
        Decoder::SphereChart { radius } => {
            let x1 = f.decode(z1).map_err(|e| anyhow!(e.to_string()))?;
            let x2 = f.decode(z2).map_err(|e| anyhow!(e.to_string()))?;
            let cos = (x1.dot(&x2) / (radius * radius)).clamp(-1.0, 1.0);
            Ok(radius * cos.acos())
        }
        _ => bail!("oracle mode supports linear and sphere decoders only"),
    }
}

/// Solver length against the closed-form length for random pairs.
pub fn run_oracle_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentReport> {
    let decoder = cfg.resolve_decoder()?;
    let tol = match &decoder {
        Decoder::Linear { .. } => LINEAR_ORACLE_TOL,
        Decoder::SphereChart { .. } => SPHERE_ORACLE_TOL,
        _ => bail!("oracle mode supports linear and sphere decoders only"),
    };

    let mut pairs = sample_pairs(
        &decoder.sampling_box(),
        cfg.n_pairs,
        derive_seed(cfg.seed, 0x5061, 0),
        PAIR_MIN_SEPARATION,
    )?;
    let mut messages = Vec::new();
    if cfg.include_degenerate_pair {
        let z = pairs[0].0.clone();
        pairs[0] = (z.clone(), z);
        messages.push("pair 0 is a degenerate z1 = z2 probe".to_string());
    }

    let results: Result<Vec<(DistanceSample, f64, f64)>> = run_pool(threads, || {
        pairs
            .par_iter()
            .enumerate()
            .map(|(pair_id, (z1, z2))| {
                let solver = per_pair_cfg(cfg, pair_id, 0);
                let sol = solve_geodesic(&decoder, z1, z2, &solver)
                    .map_err(|e| anyhow!("pair {pair_id}: {e}"))?;
                let oracle = oracle_length(&decoder, z1, z2)?;
                let rel = if oracle == 0.0 {
                    0.0
                } else {
                    (sol.length - oracle).abs() / oracle
                };
                Ok((record_from(pair_id, 0, (z2 - z1).norm(), &sol), oracle, rel))
            })
            .collect()
    })?;
    let results = results?;

    let mut report = ExperimentReport::new("oracle", cfg, decoder.injectivity_certified());
    let mut oracles = Vec::with_capacity(results.len());
    let mut rels = Vec::with_capacity(results.len());
    for (record, oracle, rel) in results {
        report.records.push(record);
        oracles.push(oracle);
        rels.push(rel);
    }
    report.sort_records();

    let max_rel = rels.iter().cloned().fold(0.0_f64, f64::max);
    let unconverged = unconverged_fraction(&report.records);
    report.summary = Summary {
        pass: max_rel <= tol && unconverged <= UNCONVERGED_LIMIT,
        unconverged_fraction: unconverged,
        messages,
        oracle_lengths: Some(oracles),
        relative_errors: Some(rels),
        max_relative_error: Some(max_rel),
        ..Summary::default()
    };
    Ok(report)
}

/// Geodesic distances across reparametrized copies of one decoder. Model 0 is
/// the base model; models 1..=n_models apply random diffeomorphisms.
pub fn run_invariance_experiment(
    cfg: &ExperimentConfig,
    threads: usize,
) -> Result<ExperimentReport> {
    let base = cfg.resolve_decoder()?;
    let d = base.latent_dim();
    let pairs = sample_pairs(
        &base.sampling_box(),
        cfg.n_pairs,
        derive_seed(cfg.seed, 0x5062, 0),
        PAIR_MIN_SEPARATION,
    )?;

    let mut messages = Vec::new();
    let mut diffeos = vec![latentgeo::Diffeomorphism::identity(d)];
    for m in 1..=cfg.n_models {
        let draw = draw_diffeo(&cfg.diffeo_family, d, derive_seed(cfg.seed, 0xD1FF, 0), m)?;
        if draw.retries > 0 {
            messages.push(format!(
                "model {m}: affine draw retried {} time(s)",
                draw.retries
            ));
        }
        diffeos.push(draw.diffeo);
    }

    let tasks: Vec<(usize, usize)> = (0..pairs.len())
        .flat_map(|p| (0..diffeos.len()).map(move |m| (p, m)))
        .collect();

    let records: Result<Vec<DistanceSample>> = run_pool(threads, || {
        tasks
            .par_iter()
            .map(|&(pair_id, model_id)| {
                let (z1, z2) = &pairs[pair_id];
                let diffeo = &diffeos[model_id];
                let w1 = diffeo.apply(z1).map_err(|e| anyhow!(e.to_string()))?;
                let w2 = diffeo.apply(z2).map_err(|e| anyhow!(e.to_string()))?;
                let model = base
                    .clone()
                    .reparametrize(diffeo.clone())
                    .map_err(|e| anyhow!(e.to_string()))?;
                let solver = per_pair_cfg(cfg, pair_id, model_id);
                let sol = solve_geodesic(&model, &w1, &w2, &solver)
                    .map_err(|e| anyhow!("pair {pair_id} model {model_id}: {e}"))?;
                Ok(record_from(pair_id, model_id, (&w2 - &w1).norm(), &sol))
            })
            .collect()
    })?;

    let mut report = ExperimentReport::new("invariance", cfg, base.injectivity_certified());
    report.records = records?;
    report.sort_records();

    let n_models = diffeos.len();
    let mut geo_spreads = Vec::with_capacity(pairs.len());
    let mut euc_spreads = Vec::with_capacity(pairs.len());
    for pair_id in 0..pairs.len() {
        let geo: Vec<f64> = report.records[pair_id * n_models..(pair_id + 1) * n_models]
            .iter()
            .map(|r| r.d_geodesic)
            .collect();
        let euc: Vec<f64> = report.records[pair_id * n_models..(pair_id + 1) * n_models]
            .iter()
            .map(|r| r.d_euclidean)
            .collect();
        geo_spreads.push(relative_spread(&geo));
        euc_spreads.push(relative_spread(&euc));
    }

    let max_geo_spread = geo_spreads.iter().cloned().fold(0.0_f64, f64::max);
    let euc_fraction = euc_spreads
        .iter()
        .filter(|&&s| s > EUCLIDEAN_SPREAD_MIN)
        .count() as f64
        / euc_spreads.len() as f64;
    let unconverged = unconverged_fraction(&report.records);

    let pass = max_geo_spread <= GEODESIC_SPREAD_MAX
        && euc_fraction >= EUCLIDEAN_SPREAD_FRACTION
        && unconverged <= UNCONVERGED_LIMIT;
    messages.push(format!(
        "max geodesic spread {max_geo_spread:.3e}; euclidean spread > {EUCLIDEAN_SPREAD_MIN} on {:.0}% of pairs",
        100.0 * euc_fraction
    ));

    report.summary = Summary {
        pass,
        unconverged_fraction: unconverged,
        messages,
        geodesic_spreads: Some(geo_spreads),
        euclidean_spreads: Some(euc_spreads),
        ..Summary::default()
    };
    Ok(report)
}

/// The stability protocol: per-pair coefficients of variation of geodesic and
/// Euclidean distances across a family of model surrogates, with a one-sided
/// t-test between the two CV populations.
pub fn run_cv_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentReport> {
    if cfg.n_models < 2 {
        bail!("cv experiment needs n_models >= 2 (coefficient of variation undefined)");
    }
    let base = cfg.resolve_decoder()?;
    let d = base.latent_dim();
    let pairs = sample_pairs(
        &base.sampling_box(),
        cfg.n_pairs,
        derive_seed(cfg.seed, 0x5063, 0),
        PAIR_MIN_SEPARATION,
    )?;

    enum Model {
        Reparametrized(latentgeo::Diffeomorphism),
        Perturbed(Decoder),
    }

    let mut messages = Vec::new();
    let models: Vec<Model> = match cfg.ensemble_source {
        EnsembleSource::DiffeoReparametrization => {
            messages.push("model source: exact diffeomorphic reparametrizations".to_string());
            (0..cfg.n_models)
                .map(|m| {
                    let draw =
                        draw_diffeo(&cfg.diffeo_family, d, derive_seed(cfg.seed, 0xD1FF, 1), m)?;
                    if draw.retries > 0 {
                        messages.push(format!(
                            "model {m}: affine draw retried {} time(s)",
                            draw.retries
                        ));
                    }
                    Ok(Model::Reparametrized(draw.diffeo))
                })
                .collect::<Result<_>>()?
        }
        EnsembleSource::WeightPerturbation => {
            messages.push(format!(
                "model source: weight perturbations (sigma = {}), approximate surrogate",
                cfg.perturbation_scale
            ));
            (0..cfg.n_models)
                .map(|m| {
                    Ok(Model::Perturbed(perturb_mlp(
                        &base,
                        cfg.perturbation_scale,
                        derive_seed(cfg.seed, 0x6D6C, m as u64),
                    )?))
                })
                .collect::<Result<_>>()?
        }
    };

    let tasks: Vec<(usize, usize)> = (0..pairs.len())
        .flat_map(|p| (0..models.len()).map(move |m| (p, m)))
        .collect();

    let records: Result<Vec<DistanceSample>> = run_pool(threads, || {
        tasks
            .par_iter()
            .map(|&(pair_id, model_id)| {
                let (z1, z2) = &pairs[pair_id];
                let solver = per_pair_cfg(cfg, pair_id, model_id);
                match &models[model_id] {
                    Model::Reparametrized(diffeo) => {
                        let w1 = diffeo.apply(z1).map_err(|e| anyhow!(e.to_string()))?;
                        let w2 = diffeo.apply(z2).map_err(|e| anyhow!(e.to_string()))?;
                        let model = base
                            .clone()
                            .reparametrize(diffeo.clone())
                            .map_err(|e| anyhow!(e.to_string()))?;
                        let sol = solve_geodesic(&model, &w1, &w2, &solver)
                            .map_err(|e| anyhow!("pair {pair_id} model {model_id}: {e}"))?;
                        Ok(record_from(pair_id, model_id, (&w2 - &w1).norm(), &sol))
                    }
                    Model::Perturbed(model) => {
                        let sol = solve_geodesic(model, z1, z2, &solver)
                            .map_err(|e| anyhow!("pair {pair_id} model {model_id}: {e}"))?;
                        Ok(record_from(pair_id, model_id, (z2 - z1).norm(), &sol))
                    }
                }
            })
            .collect()
    })?;

    let mut report = ExperimentReport::new("cv", cfg, base.injectivity_certified());
    report.records = records?;
    report.sort_records();

    let n_models = models.len();
    let mut cv_geo = Vec::with_capacity(pairs.len());
    let mut cv_euc = Vec::with_capacity(pairs.len());
    for pair_id in 0..pairs.len() {
        let block = &report.records[pair_id * n_models..(pair_id + 1) * n_models];
        let geo: Vec<f64> = block.iter().map(|r| r.d_geodesic).collect();
        let euc: Vec<f64> = block.iter().map(|r| r.d_euclidean).collect();
        cv_geo.push(coefficient_of_variation(&geo).map_err(|e| anyhow!(e.to_string()))?);
        cv_euc.push(coefficient_of_variation(&euc).map_err(|e| anyhow!(e.to_string()))?);
    }

    let mean_cv_geo = cv_geo.iter().sum::<f64>() / cv_geo.len() as f64;
    let mean_cv_euc = cv_euc.iter().sum::<f64>() / cv_euc.len() as f64;
    let t = one_sided_t_test(&cv_geo, &cv_euc).map_err(|e| anyhow!(e.to_string()))?;
    let unconverged = unconverged_fraction(&report.records);

    let ratio_ok = match cfg.ensemble_source {
        EnsembleSource::DiffeoReparametrization => {
            mean_cv_geo < CV_RATIO_MAX * mean_cv_euc && t.t_statistic < 0.0
        }
        // the perturbation surrogate moves the manifold itself, so no ratio
        // guarantee applies; the report carries the statistics as-is
        EnsembleSource::WeightPerturbation => true,
    };
    messages.push(
        "CV = Bessel-corrected std / mean; p_value tests mean CV(geodesic) < mean CV(euclidean)"
            .to_string(),
    );
    messages.push(format!(
        "mean CV geodesic {mean_cv_geo:.3e}, mean CV euclidean {mean_cv_euc:.3e}, t = {:.2}",
        t.t_statistic
    ));

    report.summary = Summary {
        pass: ratio_ok && unconverged <= UNCONVERGED_LIMIT,
        unconverged_fraction: unconverged,
        messages,
        cv_geodesic: Some(cv_geo),
        cv_euclidean: Some(cv_euc),
        mean_cv_geodesic: Some(mean_cv_geo),
        mean_cv_euclidean: Some(mean_cv_euc),
        t_statistic: Some(t.t_statistic),
        p_value: Some(t.p_less),
        p_value_greater: Some(t.p_greater),
        ..Summary::default()
    };
    Ok(report)
}

/// Solves a single pair and dumps the optimized curve.
pub fn run_geodesic(cfg: &ExperimentConfig, _threads: usize) -> Result<ExperimentReport> {
    let decoder = cfg.resolve_decoder()?;
    let points = cfg
        .points
        .as_ref()
        .ok_or_else(|| anyhow!("geodesic mode needs `points` with exactly 2 latent points"))?;
    if points.len() != 2 {
        bail!("geodesic mode needs exactly 2 points, got {}", points.len());
    }
    let z1 = DVector::from_vec(points[0].clone());
    let z2 = DVector::from_vec(points[1].clone());

    let mut solver = cfg.solver.clone();
    solver.seed = derive_seed(cfg.seed, 0, 0);
    let sol = solve_geodesic(&decoder, &z1, &z2, &solver).map_err(|e| anyhow!(e.to_string()))?;

    let n = solver.length_n_t;
    let mut ts = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);
    let mut decoded = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / (n - 1) as f64;
        let z = sol.curve.eval(t).map_err(|e| anyhow!(e.to_string()))?;
        let x = decoder.decode(&z).map_err(|e| anyhow!(e.to_string()))?;
        ts.push(t);
        latent.push(z.iter().cloned().collect());
        decoded.push(x.iter().cloned().collect());
    }

    let mut messages = Vec::new();
    if sol.exited_domain {
        messages.push("optimized curve leaves the decoder's declared latent domain".to_string());
    }
    let mut report = ExperimentReport::new("geodesic", cfg, decoder.injectivity_certified());
    report.records = vec![record_from(0, 0, (&z2 - &z1).norm(), &sol)];
    report.curve = Some(CurveDump {
        ts,
        latent,
        decoded,
        energy_trace: sol.energy_trace.clone(),
    });
    report.summary = Summary {
        pass: sol.converged,
        unconverged_fraction: if sol.converged { 0.0 } else { 1.0 },
        messages,
        energy: Some(sol.energy),
        length: Some(sol.length),
        min_singular_value: Some(sol.min_singular_value_seen),
        ..Summary::default()
    };
    Ok(report)
}

/// Karcher mean of the configured points under the decoder's geometry.
pub fn run_karcher(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentReport> {
    let decoder = cfg.resolve_decoder()?;
    let points = cfg
        .points
        .as_ref()
        .ok_or_else(|| anyhow!("karcher mode needs `points` with at least 1 latent point"))?;
    if points.is_empty() {
        bail!("karcher mode needs at least 1 point");
    }
    let pts: Vec<DVector<f64>> = points
        .iter()
        .map(|p| DVector::from_vec(p.clone()))
        .collect();

    let mut solver = cfg.solver.clone();
    solver.seed = cfg.seed;
    let result = run_pool(threads, || karcher_mean(&decoder, &pts, &solver))?
        .map_err(|e| anyhow!(e.to_string()))?;

    let mut report = ExperimentReport::new("karcher", cfg, decoder.injectivity_certified());
    report.summary = Summary {
        pass: result.converged,
        unconverged_fraction: if result.converged { 0.0 } else { 1.0 },
        karcher_mean: Some(result.mean.iter().cloned().collect()),
        frechet_variance: Some(result.variance),
        iterations: Some(result.iterations),
        ..Summary::default()
    };
    Ok(report)
}
