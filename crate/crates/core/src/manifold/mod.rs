//! Decoders, diffeomorphisms, pullback metrics and pointwise geometry.

pub mod curvature;
pub mod decoder;
pub mod diffeo;
pub mod metric;
pub mod mlp;
pub mod schema;

pub use curvature::{gaussian_curvature_2d, DEFAULT_FD_STEP};
pub use decoder::{Decoder, LatentPoint};
pub use diffeo::Diffeomorphism;
pub use metric::{pullback_metric, pullback_metric_verified, MetricTensor, RANK_TOL};
pub use mlp::{Activation, DenseLayer};
pub use schema::{load_decoder, DecoderSpec, DiffeoSpec, LayerSpec};
