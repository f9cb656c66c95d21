//! Runner- and binary-level integration tests: report shapes, error paths,
//! file output, and exit codes.

use std::process::Command;

use latentgeo::manifold::schema::DecoderSpec;
use latentgeo::SolverConfig;
use latentgeo_cli::config::{
    parse_config, DiffeoFamilyConfig, EnsembleSource, ExperimentConfig, OutputFormat,
};
use latentgeo_cli::report::read_records_csv;
use latentgeo_cli::runners::{run_cv_experiment, run_geodesic, run_karcher, run_oracle_experiment};

fn sphere_spec() -> DecoderSpec {
    serde_json::from_str(r#"{"latent_dim": 2, "ambient_dim": 3, "kind": "sphere", "radius": 1.0}"#)
        .unwrap()
}

fn linear_spec() -> DecoderSpec {
    serde_json::from_str(
        r#"{"latent_dim": 2, "ambient_dim": 3, "kind": "linear",
            "weights": [[1.0, 0.2], [-0.3, 1.1], [0.5, -0.4]]}"#,
    )
    .unwrap()
}

fn quick_solver() -> SolverConfig {
    SolverConfig {
        n_t: 64,
        length_n_t: 64,
        max_steps: 1024,
        early_stop_delta: 1e-6,
        ..SolverConfig::default()
    }
}

#[test]
fn oracle_degenerate_pair_recorded_as_zero() {
    let cfg = ExperimentConfig {
        decoder: Some(linear_spec()),
        n_pairs: 5,
        seed: 1,
        solver: quick_solver(),
        include_degenerate_pair: true,
        ..ExperimentConfig::default()
    };
    let report = run_oracle_experiment(&cfg, 2).unwrap();
    let first = &report.records[0];
    assert_eq!(first.pair_id, 0);
    assert_eq!(first.d_geodesic, 0.0);
    assert_eq!(first.d_euclidean, 0.0);
    assert!(first.converged);
    assert!(report
        .summary
        .messages
        .iter()
        .any(|m| m.contains("degenerate")));
    assert!(report.summary.pass);
}

#[test]
fn oracle_rejects_unsupported_decoder() {
    let spec: DecoderSpec = serde_json::from_str(
        r#"{"latent_dim": 2, "ambient_dim": 3, "kind": "paraboloid", "coeffs": [1.0, 1.0]}"#,
    )
    .unwrap();
    let cfg = ExperimentConfig {
        decoder: Some(spec),
        n_pairs: 3,
        solver: quick_solver(),
        ..ExperimentConfig::default()
    };
    let err = run_oracle_experiment(&cfg, 1).unwrap_err().to_string();
    assert!(err.contains("oracle"), "got: {err}");
}

#[test]
fn cv_requires_at_least_two_models() {
    let cfg = ExperimentConfig {
        decoder: Some(sphere_spec()),
        n_pairs: 3,
        n_models: 1,
        solver: quick_solver(),
        ..ExperimentConfig::default()
    };
    let err = run_cv_experiment(&cfg, 1).unwrap_err().to_string();
    assert!(err.contains("n_models"), "got: {err}");
}

#[test]
fn invariance_affine_family_on_flat_decoder() {
    // flat geometry: every reparametrized model solves to the same exact
    // length, while the latent euclidean distances move with the draws
    let cfg = ExperimentConfig {
        decoder: Some(linear_spec()),
        n_pairs: 6,
        n_models: 4,
        seed: 14,
        solver: quick_solver(),
        diffeo_family: DiffeoFamilyConfig {
            kind: "affine".to_string(),
            ..DiffeoFamilyConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let report = latentgeo_cli::runners::run_invariance_experiment(&cfg, 2).unwrap();
    for spread in report.summary.geodesic_spreads.as_ref().unwrap() {
        assert!(*spread <= 0.005, "geodesic spread {spread}");
    }
    let euc = report.summary.euclidean_spreads.as_ref().unwrap();
    let moved = euc.iter().filter(|&&s| s > 0.10).count();
    assert!(moved * 2 >= euc.len(), "euclidean spreads {euc:?}");
}

#[test]
fn invariance_identity_family_gives_identical_distances() {
    let cfg = ExperimentConfig {
        decoder: Some(sphere_spec()),
        n_pairs: 4,
        n_models: 3,
        seed: 12,
        solver: quick_solver(),
        diffeo_family: DiffeoFamilyConfig {
            kind: "identity".to_string(),
            ..DiffeoFamilyConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let report = latentgeo_cli::runners::run_invariance_experiment(&cfg, 2).unwrap();
    // every model is the base model, so per-pair distances agree exactly
    for spread in report.summary.geodesic_spreads.as_ref().unwrap() {
        assert!(*spread <= 1e-10, "spread {spread}");
    }
    for pair in 0..4 {
        let block: Vec<f64> = report
            .records
            .iter()
            .filter(|r| r.pair_id == pair)
            .map(|r| r.d_geodesic)
            .collect();
        assert_eq!(block.len(), 4);
        for d in &block {
            assert!((d - block[0]).abs() <= 1e-10);
        }
    }
}

#[test]
fn cv_record_count_is_pairs_times_models() {
    let cfg = ExperimentConfig {
        decoder: Some(sphere_spec()),
        n_pairs: 4,
        n_models: 3,
        seed: 2,
        solver: quick_solver(),
        diffeo_family: DiffeoFamilyConfig::default(),
        ensemble_source: EnsembleSource::DiffeoReparametrization,
        ..ExperimentConfig::default()
    };
    let report = run_cv_experiment(&cfg, 2).unwrap();
    assert_eq!(report.records.len(), 4 * 3);
    assert_eq!(report.summary.cv_geodesic.as_ref().unwrap().len(), 4);
    // sorted by (pair, model)
    for w in report.records.windows(2) {
        assert!((w[0].pair_id, w[0].model_id) < (w[1].pair_id, w[1].model_id));
    }
}

#[test]
fn cv_weight_perturbation_source_runs_on_mlp() {
    let spec: DecoderSpec = serde_json::from_str(
        r#"{"latent_dim": 2, "ambient_dim": 3, "kind": "mlp",
            "layers": [
              {"weights": [[0.9, 0.1], [-0.2, 1.0], [0.4, 0.3]],
               "bias": [0.0, 0.1, -0.1], "activation": "tanh"}
            ]}"#,
    )
    .unwrap();
    let cfg = ExperimentConfig {
        decoder: Some(spec),
        n_pairs: 3,
        n_models: 4,
        seed: 6,
        perturbation_scale: 0.01,
        ensemble_source: EnsembleSource::WeightPerturbation,
        solver: quick_solver(),
        ..ExperimentConfig::default()
    };
    let report = run_cv_experiment(&cfg, 2).unwrap();
    assert_eq!(report.records.len(), 12);
    // latent points are shared across perturbed models, so the euclidean
    // distances repeat per pair and their CV is exactly zero
    for cv in report.summary.cv_euclidean.as_ref().unwrap() {
        assert_eq!(*cv, 0.0);
    }
    // the decoder itself moved, so geodesic distances vary
    assert!(report.summary.mean_cv_geodesic.unwrap() > 0.0);
    assert!(!report.provenance.injectivity_certified);
    assert!(report
        .summary
        .messages
        .iter()
        .any(|m| m.contains("weight perturbations")));
}

#[test]
fn geodesic_mode_flat_curve_is_collinear() {
    let cfg = ExperimentConfig {
        decoder: Some(linear_spec()),
        points: Some(vec![vec![-1.0, 0.5], vec![2.0, -0.5]]),
        seed: 3,
        solver: quick_solver(),
        ..ExperimentConfig::default()
    };
    let report = run_geodesic(&cfg, 1).unwrap();
    let curve = report.curve.as_ref().unwrap();
    let z0 = &curve.latent[0];
    let z1 = curve.latent.last().unwrap();
    // max deviation of sampled latent points from the chord
    let mut worst = 0.0_f64;
    for (i, z) in curve.latent.iter().enumerate() {
        let t = curve.ts[i];
        for k in 0..2 {
            let on_line = z0[k] + t * (z1[k] - z0[k]);
            worst = worst.max((z[k] - on_line).abs());
        }
    }
    assert!(worst <= 1e-6, "deviation {worst}");

    // best-so-far energies are non-increasing along the recorded trace
    let mut best = f64::INFINITY;
    for &e in &curve.energy_trace {
        best = best.min(e);
        assert!(best <= curve.energy_trace[0]);
    }
}

#[test]
fn geodesic_mode_sphere_stays_on_sphere() {
    let cfg = ExperimentConfig {
        decoder: Some(sphere_spec()),
        points: Some(vec![vec![1.2, -0.6], vec![1.9, 0.8]]),
        seed: 4,
        solver: quick_solver(),
        ..ExperimentConfig::default()
    };
    let report = run_geodesic(&cfg, 1).unwrap();
    let curve = report.curve.as_ref().unwrap();
    for x in &curve.decoded {
        let norm = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
        assert!((norm - 1.0).abs() <= 1e-9);
    }
    assert!(report.summary.length.unwrap() > 0.0);
    assert!(report.summary.min_singular_value.unwrap() > 1e-8);
}

#[test]
fn geodesic_mode_needs_two_points() {
    let cfg = ExperimentConfig {
        decoder: Some(sphere_spec()),
        points: Some(vec![vec![1.2, -0.6]]),
        solver: quick_solver(),
        ..ExperimentConfig::default()
    };
    assert!(run_geodesic(&cfg, 1).is_err());
}

#[test]
fn karcher_mode_reports_mean() {
    let cfg = ExperimentConfig {
        decoder: Some(linear_spec()),
        points: Some(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ]),
        seed: 5,
        solver: SolverConfig {
            n_t: 32,
            length_n_t: 32,
            max_steps: 20,
            patience_steps: 5,
            early_stop_delta: 1e-12,
            ..SolverConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let report = run_karcher(&cfg, 2).unwrap();
    let mean = report.summary.karcher_mean.as_ref().unwrap();
    assert!((mean[0] - 0.5).abs() < 1e-2);
    assert!((mean[1] - 0.5).abs() < 1e-2);
    assert!(report.summary.pass);
}

#[test]
fn report_written_to_disk_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.csv");
    let cfg = ExperimentConfig {
        decoder: Some(linear_spec()),
        n_pairs: 4,
        seed: 8,
        solver: quick_solver(),
        out: Some(path.display().to_string()),
        format: OutputFormat::Csv,
        ..ExperimentConfig::default()
    };
    let report = run_oracle_experiment(&cfg, 1).unwrap();
    report.write(&path, OutputFormat::Csv).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let records = read_records_csv(&text).unwrap();
    assert_eq!(records, report.records);
}

#[test]
fn binary_exit_codes_and_output() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("cfg.json");
    let out_path = dir.path().join("out.csv");
    std::fs::write(
        &config_path,
        r#"{
            "decoder": {"latent_dim": 2, "ambient_dim": 3, "kind": "linear",
                        "weights": [[1.0, 0.2], [-0.3, 1.1], [0.5, -0.4]]},
            "n_pairs": 4,
            "seed": 9,
            "solver": {"n_t": 64, "length_n_t": 64, "max_steps": 512, "early_stop_delta": 1e-6}
        }"#,
    )
    .unwrap();

    let status = Command::new(env!("CARGO_BIN_EXE_latentgeo"))
        .args([
            "oracle",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
            "--threads",
            "2",
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let text = std::fs::read_to_string(&out_path).unwrap();
    assert!(text.starts_with("pair_id,model_id,d_euclidean,d_geodesic,converged,steps,energy"));

    // strict mode rejects unknown keys with a nonzero exit code
    std::fs::write(&config_path, r#"{"n_pair": 3}"#).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_latentgeo"))
        .args([
            "oracle",
            "--config",
            config_path.to_str().unwrap(),
            "--strict",
        ])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn binary_json_output_carries_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("cfg.json");
    std::fs::write(
        &config_path,
        r#"{
            "decoder": {"latent_dim": 2, "ambient_dim": 3, "kind": "sphere"},
            "points": [[1.2, -0.6], [1.9, 0.8]],
            "solver": {"n_t": 64, "length_n_t": 64, "max_steps": 512, "early_stop_delta": 1e-6}
        }"#,
    )
    .unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_latentgeo"))
        .args([
            "geodesic",
            "--config",
            config_path.to_str().unwrap(),
            "--format",
            "json",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert!(report["summary"]["length"].as_f64().unwrap() > 0.0);
    assert_eq!(report["provenance"]["experiment"], "geodesic");
    assert_eq!(report["curve"]["ts"].as_array().unwrap().len(), 64);
}

#[test]
fn config_documents_parse_consistently() {
    // flag-style override order: config echo parses back to the same config
    let text = r#"{
        "decoder": {"latent_dim": 2, "ambient_dim": 3, "kind": "sphere"},
        "n_pairs": 6, "seed": 17, "format": "json"
    }"#;
    let cfg = parse_config(text, true).unwrap();
    assert_eq!(cfg.format, OutputFormat::Json);
    let echo = cfg.echo_json().unwrap();
    assert_eq!(parse_config(&echo, true).unwrap(), cfg);
}
