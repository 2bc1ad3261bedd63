use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equally spaced grid over the latent scale with standard-normal weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuadratureShape", into = "QuadratureShape")]
pub struct QuadratureSpec {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    lower: f64,
    upper: f64,
}

/// Serialized form; nodes and weights are regenerated on load.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct QuadratureShape {
    node_count: usize,
    lower: f64,
    upper: f64,
}

impl TryFrom<QuadratureShape> for QuadratureSpec {
    type Error = Error;

    fn try_from(s: QuadratureShape) -> Result<Self> {
        QuadratureSpec::new(s.node_count, s.lower, s.upper)
    }
}

impl From<QuadratureSpec> for QuadratureShape {
    fn from(q: QuadratureSpec) -> Self {
        QuadratureShape {
            node_count: q.nodes.len(),
            lower: q.lower,
            upper: q.upper,
        }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::new(61, -6.0, 6.0).expect("default grid is valid")
    }
}

impl QuadratureSpec {
    pub const MIN_NODES: usize = 11;

    pub fn new(node_count: usize, lower: f64, upper: f64) -> Result<Self> {
        if node_count < Self::MIN_NODES {
            return Err(Error::InvalidInput(format!(
                "quadrature needs at least {} nodes, got {node_count}",
                Self::MIN_NODES
            )));
        }
        if !(lower.is_finite() && upper.is_finite() && lower < upper) {
            return Err(Error::InvalidInput(format!("bad quadrature range [{lower}, {upper}]")));
        }
        let step = (upper - lower) / (node_count - 1) as f64;
        let nodes: Vec<f64> = (0..node_count).map(|k| lower + step * k as f64).collect();
        let raw: Vec<f64> = nodes.iter().map(|x| (-0.5 * x * x).exp()).collect();
        let total: f64 = raw.iter().sum();
        let weights = raw.into_iter().map(|w| w / total).collect();
        Ok(Self {
            nodes,
            weights,
            lower,
            upper,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Range that calibrated difficulties are clamped to.
    pub fn difficulty_bounds(&self) -> (f64, f64) {
        (self.lower + 0.5, self.upper - 0.5)
    }
}
