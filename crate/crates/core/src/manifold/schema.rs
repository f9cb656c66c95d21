//! JSON specs for decoders and diffeomorphisms, with eager validation that
//! reports the offending field path.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};
use crate::manifold::decoder::Decoder;
use crate::manifold::diffeo::Diffeomorphism;
use crate::manifold::mlp::{Activation, DenseLayer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffeoSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parts: Option<Vec<DiffeoSpec>>,
}

/// Top-level decoder document: `latent_dim`, `ambient_dim`, `kind`, plus the
/// kind-specific payload fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderSpec {
    pub latent_dim: usize,
    pub ambient_dim: usize,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coeffs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<Vec<LayerSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Box<DecoderSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffeo: Option<DiffeoSpec>,
}

fn matrix_from_rows(rows: &[Vec<f64>], path: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(GeometryError::spec(path, "matrix has no rows"));
    }
    let cols = rows[0].len();
    if cols == 0 {
        return Err(GeometryError::spec(path, "matrix has empty rows"));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != cols {
            return Err(GeometryError::spec(
                format!("{path}[{i}]"),
                format!(
                    "ragged matrix: row has {} entries, expected {cols}",
                    row.len()
                ),
            ));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

fn build_layers(specs: &[LayerSpec], path: &str) -> Result<Vec<DenseLayer>> {
    let mut layers = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let lp = format!("{path}[{i}]");
        let activation = Activation::parse(&spec.activation).ok_or_else(|| {
            GeometryError::spec(
                format!("{lp}.activation"),
                format!(
                    "unknown activation \"{}\"; expected linear, tanh or elu",
                    spec.activation
                ),
            )
        })?;
        let weights = matrix_from_rows(&spec.weights, &format!("{lp}.weights"))?;
        if spec.bias.len() != weights.nrows() {
            return Err(GeometryError::spec(
                format!("{lp}.bias"),
                format!(
                    "bias length {} does not match {} weight rows",
                    spec.bias.len(),
                    weights.nrows()
                ),
            ));
        }
        let bias = DVector::from_vec(spec.bias.clone());
        layers.push(
            DenseLayer::new(weights, bias, activation)
                .map_err(|e| GeometryError::spec(lp.clone(), e.to_string()))?,
        );
    }
    Ok(layers)
}

fn require<'a, T>(field: &'a Option<T>, path: &str, name: &str, kind: &str) -> Result<&'a T> {
    field.as_ref().ok_or_else(|| {
        GeometryError::spec(
            format!("{path}.{name}"),
            format!("field required for kind \"{kind}\""),
        )
    })
}

pub fn build_diffeo(spec: &DiffeoSpec, path: &str) -> Result<Diffeomorphism> {
    match spec.kind.as_str() {
        "affine" => {
            let rows = require(&spec.matrix, path, "matrix", "affine")?;
            let matrix = matrix_from_rows(rows, &format!("{path}.matrix"))?;
            let offset = match &spec.offset {
                Some(o) => DVector::from_vec(o.clone()),
                None => DVector::zeros(matrix.nrows()),
            };
            Diffeomorphism::affine(matrix, offset)
                .map_err(|e| GeometryError::spec(path, e.to_string()))
        }
        "coupling" => {
            let split = *require(&spec.split, path, "split", "coupling")?;
            let layer_specs = require(&spec.layers, path, "layers", "coupling")?;
            let layers = build_layers(layer_specs, &format!("{path}.layers"))?;
            Diffeomorphism::coupling(split, layers)
                .map_err(|e| GeometryError::spec(path, e.to_string()))
        }
        "composition" => {
            let parts = require(&spec.parts, path, "parts", "composition")?;
            let built: Result<Vec<_>> = parts
                .iter()
                .enumerate()
                .map(|(i, p)| build_diffeo(p, &format!("{path}.parts[{i}]")))
                .collect();
            Diffeomorphism::composition(built?)
                .map_err(|e| GeometryError::spec(path, e.to_string()))
        }
        other => Err(GeometryError::spec(
            format!("{path}.kind"),
            format!("unknown diffeo kind \"{other}\"; expected affine, coupling or composition"),
        )),
    }
}

pub fn build_decoder(spec: &DecoderSpec, path: &str) -> Result<Decoder> {
    let decoder = match spec.kind.as_str() {
        "linear" => {
            let rows = require(&spec.weights, path, "weights", "linear")?;
            let weights = matrix_from_rows(rows, &format!("{path}.weights"))?;
            let bias = match &spec.bias {
                Some(b) => DVector::from_vec(b.clone()),
                None => DVector::zeros(weights.nrows()),
            };
            Decoder::linear(weights, bias).map_err(|e| GeometryError::spec(path, e.to_string()))?
        }
        "sphere" => {
            let radius = spec.radius.unwrap_or(1.0);
            Decoder::sphere_chart(radius).map_err(|e| GeometryError::spec(path, e.to_string()))?
        }
        "paraboloid" => {
            let coeffs = require(&spec.coeffs, path, "coeffs", "paraboloid")?;
            Decoder::paraboloid(DVector::from_vec(coeffs.clone()))
                .map_err(|e| GeometryError::spec(path, e.to_string()))?
        }
        "mlp" => {
            let layer_specs = require(&spec.layers, path, "layers", "mlp")?;
            let layers = build_layers(layer_specs, &format!("{path}.layers"))?;
            Decoder::mlp(layers).map_err(|e| GeometryError::spec(path, e.to_string()))?
        }
        "reparametrized" => {
            let base_spec = require(&spec.base, path, "base", "reparametrized")?;
            let diffeo_spec = require(&spec.diffeo, path, "diffeo", "reparametrized")?;
            let base = build_decoder(base_spec, &format!("{path}.base"))?;
            let diffeo = build_diffeo(diffeo_spec, &format!("{path}.diffeo"))?;
            base.reparametrize(diffeo)
                .map_err(|e| GeometryError::spec(path, e.to_string()))?
        }
        other => {
            return Err(GeometryError::spec(
                format!("{path}.kind"),
                format!(
                    "unknown decoder kind \"{other}\"; expected linear, sphere, paraboloid, mlp or reparametrized"
                ),
            ))
        }
    };

    if decoder.latent_dim() != spec.latent_dim {
        return Err(GeometryError::spec(
            format!("{path}.latent_dim"),
            format!(
                "declared latent_dim {} but payload implies {}",
                spec.latent_dim,
                decoder.latent_dim()
            ),
        ));
    }
    if decoder.ambient_dim() != spec.ambient_dim {
        return Err(GeometryError::spec(
            format!("{path}.ambient_dim"),
            format!(
                "declared ambient_dim {} but payload implies {}",
                spec.ambient_dim,
                decoder.ambient_dim()
            ),
        ));
    }
    Ok(decoder)
}

/// Parses a decoder document and constructs the decoder, validating shapes
/// and declared dimensions eagerly.
pub fn load_decoder(document: &str) -> Result<Decoder> {
    let spec: DecoderSpec = serde_json::from_str(document)
        .map_err(|e| GeometryError::spec("decoder", e.to_string()))?;
    build_decoder(&spec, "decoder")
}
