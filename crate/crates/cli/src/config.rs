//! Experiment configuration: JSON document, strict-mode key checking, and
//! decoder resolution.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use latentgeo::manifold::schema::{build_decoder, DecoderSpec};
use latentgeo::{Decoder, SolverConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiffeoFamilyConfig {
    /// "affine", "coupling" or "mixed" (alternating, affine first).
    pub kind: String,
    /// Entry scale of the random perturbation added to the identity matrix.
    pub affine_scale: f64,
    /// Scale of the random affine offset.
    pub offset_scale: f64,
    /// Hidden width of coupling shift nets.
    pub coupling_hidden: usize,
}

impl Default for DiffeoFamilyConfig {
    fn default() -> Self {
        Self {
            kind: "mixed".to_string(),
            affine_scale: 0.4,
            offset_scale: 0.3,
            coupling_hidden: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnsembleSource {
    #[default]
    #[serde(rename = "diffeo-reparametrization")]
    DiffeoReparametrization,
    #[serde(rename = "weight-perturbation")]
    WeightPerturbation,
}

/// Full experiment configuration. Defaults: 100 pairs, 30 models, and the
/// shared solver parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Inline decoder spec; mutually exclusive with `decoder_path`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoder: Option<DecoderSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decoder_path: Option<String>,
    pub solver: SolverConfig,
    pub n_pairs: usize,
    pub n_models: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<String>,
    pub format: OutputFormat,
    pub diffeo_family: DiffeoFamilyConfig,
    pub ensemble_source: EnsembleSource,
    /// Std of weight noise for the weight-perturbation source.
    pub perturbation_scale: f64,
    /// Latent points for the geodesic (2) and karcher (>= 1) modes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<Vec<f64>>>,
    /// Replace the first sampled pair with a coincident pair (oracle mode).
    pub include_degenerate_pair: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            decoder: None,
            decoder_path: None,
            solver: SolverConfig::default(),
            n_pairs: 100,
            n_models: 30,
            seed: 0,
            out: None,
            format: OutputFormat::default(),
            diffeo_family: DiffeoFamilyConfig::default(),
            ensemble_source: EnsembleSource::default(),
            perturbation_scale: 0.01,
            points: None,
            include_degenerate_pair: false,
        }
    }
}

const ROOT_KEYS: &[&str] = &[
    "decoder",
    "decoder_path",
    "solver",
    "n_pairs",
    "n_models",
    "seed",
    "out",
    "format",
    "diffeo_family",
    "ensemble_source",
    "perturbation_scale",
    "points",
    "include_degenerate_pair",
];

const SOLVER_KEYS: &[&str] = &[
    "n_segments",
    "n_t",
    "max_steps",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "patience_steps",
    "early_stop_delta",
    "length_n_t",
    "seed",
    "n_restarts",
    "ensemble_redraw_per_step",
    "sv_tol",
];

const FAMILY_KEYS: &[&str] = &["kind", "affine_scale", "offset_scale", "coupling_hidden"];

/// Collects unknown keys in the experiment-level objects (the decoder payload
/// is validated separately by its own schema).
fn unknown_keys(value: &Value) -> Vec<String> {
    let mut unknown = Vec::new();
    let check = |obj: &Value, allowed: &[&str], prefix: &str, out: &mut Vec<String>| {
        if let Value::Object(map) = obj {
            let allowed: BTreeSet<&str> = allowed.iter().copied().collect();
            for key in map.keys() {
                if !allowed.contains(key.as_str()) {
                    out.push(format!("{prefix}{key}"));
                }
            }
        }
    };
    check(value, ROOT_KEYS, "", &mut unknown);
    if let Some(solver) = value.get("solver") {
        check(solver, SOLVER_KEYS, "solver.", &mut unknown);
    }
    if let Some(family) = value.get("diffeo_family") {
        check(family, FAMILY_KEYS, "diffeo_family.", &mut unknown);
    }
    unknown
}

/// Removes keys the strict walk flagged, so the lenient path can proceed.
fn strip_unknown(value: &mut Value) {
    let retain = |obj: &mut Value, allowed: &[&str]| {
        if let Value::Object(map) = obj {
            let allowed: BTreeSet<&str> = allowed.iter().copied().collect();
            map.retain(|k, _| allowed.contains(k.as_str()));
        }
    };
    retain(value, ROOT_KEYS);
    if let Some(solver) = value.get_mut("solver") {
        retain(solver, SOLVER_KEYS);
    }
    if let Some(family) = value.get_mut("diffeo_family") {
        retain(family, FAMILY_KEYS);
    }
}

/// Parses a config document. In strict mode unknown experiment-level keys
/// are an error listing every offender; otherwise they are dropped with a
/// warning on stderr.
pub fn parse_config(text: &str, strict: bool) -> Result<ExperimentConfig> {
    let mut value: Value = serde_json::from_str(text).context("config is not valid JSON")?;
    if !value.is_object() {
        bail!("config must be a JSON object");
    }
    let unknown = unknown_keys(&value);
    if !unknown.is_empty() {
        if strict {
            bail!("unknown config keys: {}", unknown.join(", "));
        }
        eprintln!(
            "warning: ignoring unknown config keys: {}",
            unknown.join(", ")
        );
        strip_unknown(&mut value);
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(value).map_err(|e| anyhow!("config field error: {e}"))?;
    cfg.solver
        .validate()
        .map_err(|e| anyhow!("solver config: {e}"))?;
    if cfg.n_pairs == 0 {
        bail!("n_pairs must be >= 1");
    }
    Ok(cfg)
}

pub fn load_config(path: &Path, strict: bool) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    parse_config(&text, strict)
}

impl ExperimentConfig {
    /// Builds the decoder from the inline spec or the referenced file.
    pub fn resolve_decoder(&self) -> Result<Decoder> {
        match (&self.decoder, &self.decoder_path) {
            (Some(spec), None) => {
                build_decoder(spec, "decoder").map_err(|e| anyhow!(e.to_string()))
            }
            (None, Some(path)) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read decoder file {path}"))?;
                latentgeo::load_decoder(&text).map_err(|e| anyhow!(e.to_string()))
            }
            (Some(_), Some(_)) => bail!("config sets both decoder and decoder_path"),
            (None, None) => bail!("config needs either decoder or decoder_path"),
        }
    }

    /// Round-trip echo used for report provenance.
    pub fn echo_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_protocol_defaults() {
        let cfg = parse_config("{}", true).unwrap();
        assert_eq!(cfg.n_pairs, 100);
        assert_eq!(cfg.n_models, 30);
        assert_eq!(cfg.solver.learning_rate, 0.01);
        assert_eq!(cfg.solver.max_steps, 4096);
        assert_eq!(cfg.solver.n_segments, 10);
    }

    #[test]
    fn unknown_key_rejected_in_strict_mode() {
        let err = parse_config(r#"{"solver": {"learningrate": 0.1}}"#, true).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("solver.learningrate"), "got: {msg}");
    }

    #[test]
    fn all_unknown_keys_listed() {
        let err = parse_config(r#"{"n_pair": 1, "solver": {"lr": 0.1, "steps": 2}}"#, true)
            .unwrap_err()
            .to_string();
        assert!(err.contains("n_pair"), "got: {err}");
        assert!(err.contains("solver.lr"), "got: {err}");
        assert!(err.contains("solver.steps"), "got: {err}");
    }

    #[test]
    fn lenient_mode_drops_unknown_keys() {
        let cfg = parse_config(r#"{"n_pairs": 7, "typo_key": true}"#, false).unwrap();
        assert_eq!(cfg.n_pairs, 7);
    }

    #[test]
    fn parse_echo_parse_is_stable() {
        let text = r#"{
            "n_pairs": 12, "n_models": 3, "seed": 42,
            "decoder": {"latent_dim": 2, "ambient_dim": 3, "kind": "sphere", "radius": 1.0},
            "solver": {"n_t": 64, "max_steps": 100},
            "diffeo_family": {"kind": "affine", "affine_scale": 0.5}
        }"#;
        let cfg = parse_config(text, true).unwrap();
        let echoed = cfg.echo_json().unwrap();
        let cfg2 = parse_config(&echoed, true).unwrap();
        assert_eq!(cfg, cfg2);
    }

    #[test]
    fn type_mismatch_is_an_error() {
        assert!(parse_config(r#"{"n_pairs": "many"}"#, true).is_err());
        assert!(parse_config(r#"{"solver": {"n_t": -3}}"#, true).is_err());
    }

    #[test]
    fn decoder_resolution_requires_exactly_one_source() {
        let cfg = parse_config("{}", true).unwrap();
        assert!(cfg.resolve_decoder().is_err());
        let cfg = parse_config(
            r#"{"decoder": {"latent_dim": 2, "ambient_dim": 3, "kind": "sphere"},
                "decoder_path": "x.json"}"#,
            true,
        )
        .unwrap();
        assert!(cfg.resolve_decoder().is_err());
    }
}
