//! Logistic item response functions and Fisher information.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which item parameters are free during calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelFamily {
    #[serde(rename = "RASCH_1PL")]
    Rasch1pl,
    #[serde(rename = "TWO_PL")]
    TwoPl,
    #[serde(rename = "THREE_PL")]
    ThreePl,
}

impl ModelFamily {
    /// Free parameters per item.
    pub fn params_per_item(self) -> usize {
        match self {
            ModelFamily::Rasch1pl => 1,
            ModelFamily::TwoPl => 2,
            ModelFamily::ThreePl => 3,
        }
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "1pl" | "rasch" | "rasch_1pl" => Ok(ModelFamily::Rasch1pl),
            "2pl" | "two_pl" => Ok(ModelFamily::TwoPl),
            "3pl" | "three_pl" => Ok(ModelFamily::ThreePl),
            other => Err(Error::InvalidInput(format!("unknown model family `{other}`"))),
        }
    }
}

/// Calibrated parameters of one dichotomous item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemParameters {
    pub item_id: String,
    #[serde(rename = "a")]
    pub discrimination: f64,
    #[serde(rename = "beta")]
    pub difficulty: f64,
    #[serde(rename = "c")]
    pub guessing: f64,
    /// Set when calibration pushed the difficulty onto the grid clamp.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub boundary: bool,
}

impl ItemParameters {
    pub fn rasch(item_id: impl Into<String>, difficulty: f64) -> Self {
        Self::new(item_id, 1.0, difficulty, 0.0)
    }

    pub fn new(item_id: impl Into<String>, discrimination: f64, difficulty: f64, guessing: f64) -> Self {
        Self {
            item_id: item_id.into(),
            discrimination,
            difficulty,
            guessing,
            boundary: false,
        }
    }

    /// Checks the parameter invariants for the given family.
    pub fn validate(&self, family: ModelFamily) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("item `{}`: {msg}", self.item_id)));
        if !(self.discrimination > 0.0) || !self.discrimination.is_finite() {
            return bad("discrimination must be positive and finite");
        }
        if !self.difficulty.is_finite() {
            return bad("difficulty must be finite");
        }
        if !(0.0..1.0).contains(&self.guessing) {
            return bad("guessing must lie in [0, 1)");
        }
        match family {
            ModelFamily::Rasch1pl if self.discrimination != 1.0 || self.guessing != 0.0 => {
                bad("Rasch items require a = 1 and c = 0")
            }
            ModelFamily::TwoPl if self.guessing != 0.0 => bad("2PL items require c = 0"),
            _ => Ok(()),
        }
    }

    /// Probability of a correct response at ability `theta`.
    pub fn irf(&self, theta: f64) -> f64 {
        irf(theta, self)
    }
}

pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c + (1 - c) * logistic(a * (theta - beta))`.
pub fn irf(theta: f64, item: &ItemParameters) -> f64 {
    let g = logistic(item.discrimination * (theta - item.difficulty));
    item.guessing + (1.0 - item.guessing) * g
}

/// Natural logs of `P` and `1 - P`, computed without cancellation.
pub(crate) fn log_irf_pair(theta: f64, item: &ItemParameters) -> (f64, f64) {
    let z = item.discrimination * (theta - item.difficulty);
    // log logistic(z) and log logistic(-z)
    let log_g = -softplus(-z);
    let log_1mg = -softplus(z);
    let c = item.guessing;
    if c == 0.0 {
        (log_g, log_1mg)
    } else {
        let p = c + (1.0 - c) * log_g.exp();
        (p.ln(), (1.0 - c).ln() + log_1mg)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Fisher information contributed by one item at `theta`.
pub fn item_information(theta: f64, item: &ItemParameters) -> f64 {
    let a = item.discrimination;
    let c = item.guessing;
    let g = logistic(a * (theta - item.difficulty));
    if c == 0.0 {
        a * a * g * (1.0 - g)
    } else {
        // a^2 ((P - c) / (1 - c))^2 (1 - P) / P with (P - c)/(1 - c) = g
        let p = c + (1.0 - c) * g;
        a * a * g * g * (1.0 - p) / p
    }
}

/// Sum of item information over the test.
pub fn test_information(theta: f64, items: &[ItemParameters]) -> Result<f64> {
    if items.is_empty() {
        return Err(Error::InvalidInput("test information needs at least one item".into()));
    }
    Ok(items.iter().map(|it| item_information(theta, it)).sum())
}

/// Standard error of measurement, `1 / sqrt(TIF(theta))`.
pub fn standard_error_curve(theta: f64, items: &[ItemParameters]) -> Result<f64> {
    standard_error_from_information(theta, test_information(theta, items)?)
}

pub fn standard_error_from_information(theta: f64, information: f64) -> Result<f64> {
    if !(information > 0.0) {
        return Err(Error::ZeroInformation { theta });
    }
    Ok(1.0 / information.sqrt())
}
