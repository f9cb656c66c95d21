//! Small dense networks with analytic Jacobians, used both as decoder
//! variants and as coupling shift nets.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Tanh,
    Elu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Linear => x,
            Activation::Tanh => x.tanh(),
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Linear => 1.0,
            Activation::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            Activation::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    x.exp()
                }
            }
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "linear" => Some(Activation::Linear),
            "tanh" => Some(Activation::Tanh),
            "elu" => Some(Activation::Elu),
            _ => None,
        }
    }
}

/// One dense layer `act(W x + b)`; `weights[(i, j)]` multiplies input `j`
/// into output `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: DMatrix<f64>, bias: DVector<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(GeometryError::DimensionMismatch {
                context: "dense layer bias vs weight rows",
                expected: weights.nrows(),
                got: bias.len(),
            });
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.nrows()
    }
}

/// Checks that consecutive layer shapes chain.
pub fn validate_stack(layers: &[DenseLayer]) -> Result<()> {
    if layers.is_empty() {
        return Err(GeometryError::invalid("network needs at least one layer"));
    }
    for (i, pair) in layers.windows(2).enumerate() {
        if pair[0].output_dim() != pair[1].input_dim() {
            return Err(GeometryError::DimensionMismatch {
                context: "layer shapes do not chain",
                expected: pair[0].output_dim(),
                got: pair[1].input_dim(),
            });
        }
        let _ = i;
    }
    Ok(())
}

pub fn forward(layers: &[DenseLayer], x: &DVector<f64>) -> Result<DVector<f64>> {
    let mut h = x.clone();
    for layer in layers {
        if h.len() != layer.input_dim() {
            return Err(GeometryError::DimensionMismatch {
                context: "mlp input",
                expected: layer.input_dim(),
                got: h.len(),
            });
        }
        let pre = &layer.weights * &h + &layer.bias;
        h = pre.map(|v| layer.activation.apply(v));
    }
    Ok(h)
}

/// Chain-rule Jacobian of the whole stack at `x`.
pub fn jacobian(layers: &[DenseLayer], x: &DVector<f64>) -> Result<DMatrix<f64>> {
    let mut h = x.clone();
    let mut jac = DMatrix::identity(x.len(), x.len());
    for layer in layers {
        if h.len() != layer.input_dim() {
            return Err(GeometryError::DimensionMismatch {
                context: "mlp input",
                expected: layer.input_dim(),
                got: h.len(),
            });
        }
        let pre = &layer.weights * &h + &layer.bias;
        let mut local = &layer.weights * jac;
        for r in 0..local.nrows() {
            let dv = layer.activation.derivative(pre[r]);
            for c in 0..local.ncols() {
                local[(r, c)] *= dv;
            }
        }
        jac = local;
        h = pre.map(|v| layer.activation.apply(v));
    }
    Ok(jac)
}
