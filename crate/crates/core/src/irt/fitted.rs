use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ItemParameters, ModelFamily};
use super::quadrature::QuadratureSpec;
use crate::error::{Error, Result};
use crate::schema::{self, MODEL_SCHEMA};

/// Ability prior. The scale is anchored by fixing it to N(0, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    pub mean: f64,
    pub sd: f64,
}

impl Prior {
    pub const STANDARD_NORMAL: Prior = Prior { mean: 0.0, sd: 1.0 };
}

impl Default for Prior {
    fn default() -> Self {
        Self::STANDARD_NORMAL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStatistics {
    pub log_likelihood: f64,
    pub aic: f64,
    pub bic: f64,
    pub rmsea: f64,
    /// Limited-information statistic the RMSEA is derived from.
    pub m2: f64,
    pub df: usize,
}

/// A calibrated item bank together with the settings it was fitted under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub family: ModelFamily,
    pub items: Vec<ItemParameters>,
    pub quadrature: QuadratureSpec,
    pub prior: Prior,
    pub log_likelihood: f64,
    pub n_subjects: usize,
    pub n_params: usize,
    pub converged: bool,
    pub em_cycles: usize,
    /// Marginal log-likelihood at the start of each cycle, plus the final value.
    #[serde(default)]
    pub log_likelihood_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitStatistics>,
}

impl FittedModel {
    /// Wraps fixed item parameters (e.g. from an external calibration) as a model.
    pub fn from_items(family: ModelFamily, items: Vec<ItemParameters>, quadrature: QuadratureSpec) -> Result<Self> {
        for item in &items {
            item.validate(family)?;
        }
        let n_params = family.params_per_item() * items.len();
        Ok(Self {
            family,
            items,
            quadrature,
            prior: Prior::STANDARD_NORMAL,
            log_likelihood: 0.0,
            n_subjects: 0,
            n_params,
            converged: false,
            em_cycles: 0,
            log_likelihood_trace: Vec::new(),
            fit: None,
        })
    }

    pub fn item(&self, item_id: &str) -> Option<&ItemParameters> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    pub fn item_ids(&self) -> Vec<String> {
        self.items.iter().map(|i| i.item_id.clone()).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        schema::write_document(path, MODEL_SCHEMA, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let model: Self = schema::read_document(path, MODEL_SCHEMA)?;
        model.check()?;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        schema::to_document(MODEL_SCHEMA, self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = schema::from_document(MODEL_SCHEMA, text, "<model>")?;
        model.check()?;
        Ok(model)
    }

    fn check(&self) -> Result<()> {
        if self.prior != Prior::STANDARD_NORMAL {
            return Err(Error::InvalidInput("model prior must be the standard normal".into()));
        }
        for item in &self.items {
            item.validate(self.family)?;
        }
        Ok(())
    }
}
