//! Model-family surrogates for retrained decoders: random diffeomorphic
//! reparametrizations and random weight perturbations.

use anyhow::{anyhow, bail, Result};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use latentgeo::solver::derive_seed;
use latentgeo::{Decoder, DenseLayer, Diffeomorphism};

use crate::config::DiffeoFamilyConfig;

pub struct DiffeoDraw {
    pub diffeo: Diffeomorphism,
    pub retries: usize,
}

/// Draws one diffeomorphism for model `index`. The mixed family alternates
/// affine and coupling, affine first; the identity family yields identity
/// maps (a null control for invariance runs). Singular affine draws are
/// redrawn.
pub fn draw_diffeo(
    family: &DiffeoFamilyConfig,
    dim: usize,
    seed: u64,
    index: usize,
) -> Result<DiffeoDraw> {
    let kind = match family.kind.as_str() {
        "affine" => "affine",
        "coupling" => "coupling",
        "identity" => {
            return Ok(DiffeoDraw {
                diffeo: Diffeomorphism::identity(dim),
                retries: 0,
            })
        }
        "mixed" => {
            if index.is_multiple_of(2) {
                "affine"
            } else {
                "coupling"
            }
        }
        other => bail!("unknown diffeo family kind \"{other}\""),
    };

    match kind {
        "affine" => {
            let mut retries = 0;
            loop {
                let draw_seed = derive_seed(seed, index as u64, retries as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(draw_seed);
                let matrix = DMatrix::from_fn(dim, dim, |r, c| {
                    let diag = if r == c { 1.0 } else { 0.0 };
                    diag + family.affine_scale * rng.sample::<f64, _>(StandardNormal)
                });
                let offset = DVector::from_fn(dim, |_, _| {
                    family.offset_scale * rng.sample::<f64, _>(StandardNormal)
                });
                match Diffeomorphism::affine(matrix, offset) {
                    Ok(diffeo) => return Ok(DiffeoDraw { diffeo, retries }),
                    Err(_) if retries < 16 => retries += 1,
                    Err(e) => bail!("affine draw failed after {retries} retries: {e}"),
                }
            }
        }
        _ => {
            let split = (dim / 2).max(1);
            let diffeo = Diffeomorphism::seeded_coupling(
                dim,
                split,
                family.coupling_hidden,
                derive_seed(seed, index as u64, 0x00C0),
            )
            .map_err(|e| anyhow!(e.to_string()))?;
            Ok(DiffeoDraw { diffeo, retries: 0 })
        }
    }
}

/// Independent Gaussian perturbation of every weight and bias of a dense
/// decoder; the surrogate for retraining variance.
pub fn perturb_mlp(f: &Decoder, sigma: f64, seed: u64) -> Result<Decoder> {
    let layers = match f {
        Decoder::Mlp { layers } => layers,
        _ => bail!("weight-perturbation source needs an mlp decoder"),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perturbed: Vec<DenseLayer> = layers
        .iter()
        .map(|layer| {
            let weights = layer
                .weights
                .map(|w| w + sigma * rng.sample::<f64, _>(StandardNormal));
            let bias = layer
                .bias
                .map(|b| b + sigma * rng.sample::<f64, _>(StandardNormal));
            DenseLayer::new(weights, bias, layer.activation)
        })
        .collect::<latentgeo::Result<_>>()
        .map_err(|e| anyhow!(e.to_string()))?;
    Decoder::mlp(perturbed).map_err(|e| anyhow!(e.to_string()))
}

/// Uniform pair sampling inside the decoder's declared latent box, rejecting
/// pairs closer than `min_frac` of the box diagonal.
pub fn sample_pairs(
    bounds: &[(f64, f64)],
    n_pairs: usize,
    seed: u64,
    min_frac: f64,
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    let d = bounds.len();
    let diagonal = bounds
        .iter()
        .map(|(lo, hi)| (hi - lo) * (hi - lo))
        .sum::<f64>()
        .sqrt();
    let min_dist = min_frac * diagonal;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n_pairs);
    let mut attempts = 0usize;
    while pairs.len() < n_pairs {
        attempts += 1;
        if attempts > 1000 * n_pairs.max(1) {
            bail!("pair sampling failed: rejection rate too high for the declared box");
        }
        let draw = |rng: &mut ChaCha8Rng| {
            DVector::from_fn(d, |i, _| {
                bounds[i].0 + (bounds[i].1 - bounds[i].0) * rng.gen::<f64>()
            })
        };
        let z1 = draw(&mut rng);
        let z2 = draw(&mut rng);
        if (&z2 - &z1).norm() >= min_dist {
            pairs.push((z1, z2));
        }
    }
    Ok(pairs)
}
