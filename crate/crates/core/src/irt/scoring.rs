//! Ability estimation with item parameters held fixed.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::em::{log_tables, row_posterior};
use super::fitted::FittedModel;
use super::model::{item_information, log_irf_pair, logistic, ItemParameters};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AbilityMethod {
    /// Posterior mean over the quadrature grid.
    #[default]
    Eap,
    /// Posterior mode.
    Map,
    /// Likelihood maximum without a prior.
    Ml,
}

impl std::str::FromStr for AbilityMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "eap" => Ok(AbilityMethod::Eap),
            "map" => Ok(AbilityMethod::Map),
            "ml" | "mle" => Ok(AbilityMethod::Ml),
            other => Err(Error::InvalidInput(format!("unknown ability method `{other}`"))),
        }
    }
}

/// Marks ML estimates that diverge for perfect or zero scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbilityFlag {
    AllCorrect,
    AllIncorrect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentAbility {
    pub subject_id: String,
    pub theta: f64,
    pub standard_error: f64,
    pub method: AbilityMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flag: Option<AbilityFlag>,
}

impl LatentAbility {
    /// Estimate before any response: the prior mean and sd.
    pub fn prior(subject_id: impl Into<String>) -> Self {
        Self {
            subject_id: subject_id.into(),
            theta: 0.0,
            standard_error: 1.0,
            method: AbilityMethod::Eap,
            flag: None,
        }
    }
}

/// Scores response patterns against one fitted model.
///
/// Building a scorer indexes the items and tabulates log response
/// probabilities on the quadrature grid once; every subject reuses them.
pub struct Scorer<'m> {
    model: &'m FittedModel,
    index: HashMap<&'m str, usize>,
    lp: Vec<f64>,
    lq: Vec<f64>,
    log_prior: Vec<f64>,
}

const ML_RANGE: (f64, f64) = (-15.0, 15.0);

impl<'m> Scorer<'m> {
    pub fn new(model: &'m FittedModel) -> Self {
        let index = model.items.iter().enumerate().map(|(j, it)| (it.item_id.as_str(), j)).collect();
        let (lp, lq) = log_tables(&model.items, &model.quadrature);
        let log_prior = model.quadrature.weights().iter().map(|w| w.ln()).collect();
        Self {
            model,
            index,
            lp,
            lq,
            log_prior,
        }
    }

    pub fn model(&self) -> &FittedModel {
        self.model
    }

    pub fn item_index(&self, item_id: &str) -> Option<usize> {
        self.index.get(item_id).copied()
    }

    /// Scores `(item_id, correct)` pairs.
    pub fn score<S: AsRef<str>>(&self, subject_id: &str, responses: &[(S, bool)], method: AbilityMethod) -> Result<LatentAbility> {
        if responses.is_empty() {
            return Err(Error::InvalidInput(format!("subject `{subject_id}` has no responses to score")));
        }
        let mut row = vec![None; self.model.items.len()];
        for (id, correct) in responses {
            let id = id.as_ref();
            let j = self.item_index(id).ok_or_else(|| Error::UnknownItem(id.to_string()))?;
            row[j] = Some(*correct);
        }
        self.score_row(subject_id, &row, method)
    }

    /// Scores a row aligned with the model's item order.
    pub fn score_row(&self, subject_id: &str, row: &[Option<bool>], method: AbilityMethod) -> Result<LatentAbility> {
        if row.len() != self.model.items.len() {
            return Err(Error::ItemMismatch(format!("row has {} cells for {} items", row.len(), self.model.items.len())));
        }
        let answered: Vec<(&ItemParameters, bool)> = row
            .iter()
            .zip(&self.model.items)
            .filter_map(|(c, it)| c.map(|v| (it, v)))
            .collect();
        if answered.is_empty() {
            return Err(Error::InvalidInput(format!("subject `{subject_id}` has no responses to score")));
        }
        let (theta, standard_error, flag) = match method {
            AbilityMethod::Eap => {
                let (post, _) = row_posterior(row, &self.lp, &self.lq, &self.log_prior);
                let nodes = self.model.quadrature.nodes();
                let mean: f64 = post.iter().zip(nodes).map(|(p, x)| p * x).sum();
                let var: f64 = post.iter().zip(nodes).map(|(p, x)| p * (x - mean) * (x - mean)).sum();
                (mean, var.sqrt(), None)
            }
            AbilityMethod::Map => {
                let objective = |t: f64| log_likelihood(&answered, t) - 0.5 * t * t;
                let range = (self.model.quadrature.lower(), self.model.quadrature.upper());
                let theta = polish(&answered, maximize(objective, range, 0.01), 1.0, range);
                (theta, 1.0 / (information(&answered, theta) + 1.0).sqrt(), None)
            }
            AbilityMethod::Ml => {
                if answered.iter().all(|(_, c)| *c) {
                    (f64::INFINITY, f64::INFINITY, Some(AbilityFlag::AllCorrect))
                } else if answered.iter().all(|(_, c)| !*c) {
                    (f64::NEG_INFINITY, f64::INFINITY, Some(AbilityFlag::AllIncorrect))
                } else {
                    let theta = maximize(|t| log_likelihood(&answered, t), ML_RANGE, 0.02);
                    let theta = polish(&answered, theta, 0.0, ML_RANGE);
                    let info = information(&answered, theta);
                    let se = if info > 0.0 { 1.0 / info.sqrt() } else { f64::INFINITY };
                    (theta, se, None)
                }
            }
        };
        Ok(LatentAbility {
            subject_id: subject_id.to_string(),
            theta,
            standard_error,
            method,
            flag,
        })
    }
}

fn log_likelihood(answered: &[(&ItemParameters, bool)], theta: f64) -> f64 {
    answered
        .iter()
        .map(|(it, c)| {
            let (lp, lq) = log_irf_pair(theta, it);
            if *c {
                lp
            } else {
                lq
            }
        })
        .sum()
}

/// d/dtheta of the log-likelihood.
fn slope(answered: &[(&ItemParameters, bool)], theta: f64) -> f64 {
    answered
        .iter()
        .map(|(it, c)| {
            let g = logistic(it.discrimination * (theta - it.difficulty));
            let p = it.guessing + (1.0 - it.guessing) * g;
            // dP/dtheta / (P (1 - P)) with 1 - P = (1 - c)(1 - g)
            let s = it.discrimination * g / p;
            if *c {
                s * (1.0 - p)
            } else {
                -s * p
            }
        })
        .sum()
}

/// Fisher-scoring steps on the stationarity condition; `prior_precision` is 1 for MAP.
fn polish(answered: &[(&ItemParameters, bool)], start: f64, prior_precision: f64, (lo, hi): (f64, f64)) -> f64 {
    let mut theta = start;
    let grad = |t: f64| slope(answered, t) - prior_precision * t;
    let mut g = grad(theta);
    for _ in 0..20 {
        let curvature = information(answered, theta) + prior_precision;
        if !(curvature > 0.0) {
            break;
        }
        let next = (theta + g / curvature).clamp(lo, hi);
        let g_next = grad(next);
        if g_next.abs() >= g.abs() {
            break;
        }
        theta = next;
        g = g_next;
    }
    theta
}

fn information(answered: &[(&ItemParameters, bool)], theta: f64) -> f64 {
    answered.iter().map(|(it, _)| item_information(theta, it)).sum()
}

/// Grid scan followed by golden-section refinement around the best cell.
fn maximize(f: impl Fn(f64) -> f64, (lo, hi): (f64, f64), step: f64) -> f64 {
    let n = ((hi - lo) / step).ceil() as usize;
    let mut best = (lo, f(lo));
    for k in 1..=n {
        let t = (lo + step * k as f64).min(hi);
        let v = f(t);
        if v > best.1 {
            best = (t, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - ratio * (b - a);
    let mut x2 = a + ratio * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > 1e-11 {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + ratio * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - ratio * (b - a);
            f1 = f(x1);
        }
    }
    0.5 * (a + b)
}

/// Scores one subject's responses against a fitted model.
pub fn estimate_ability<S: AsRef<str>>(
    subject_id: &str,
    responses: &[(S, bool)],
    model: &FittedModel,
    method: AbilityMethod,
) -> Result<LatentAbility> {
    Scorer::new(model).score(subject_id, responses, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irt::model::ModelFamily;
    use crate::irt::quadrature::QuadratureSpec;

    fn bank(betas: &[f64]) -> FittedModel {
        let items = betas.iter().enumerate().map(|(j, &b)| ItemParameters::rasch(format!("i{j}"), b)).collect();
        FittedModel::from_items(ModelFamily::Rasch1pl, items, QuadratureSpec::default()).unwrap()
    }

    #[test]
    fn single_item_eap_regression() {
        // frozen from a direct 61-node posterior sum; the continuous integral is 0.41324192828
        let model = bank(&[0.0]);
        let est = estimate_ability("s", &[("i0", true)], &model, AbilityMethod::Eap).unwrap();
        assert!((est.theta - 0.413_241_922_469).abs() < 1e-9, "{}", est.theta);
        assert!((est.standard_error - 0.910_621_257_859).abs() < 1e-9);
    }

    #[test]
    fn all_correct_eap_is_finite_and_above_prior_mean() {
        let model = bank(&[-1.0, 0.0, 1.0, 2.0]);
        let resp: Vec<(String, bool)> = model.item_ids().into_iter().map(|id| (id, true)).collect();
        let est = estimate_ability("s", &resp, &model, AbilityMethod::Eap).unwrap();
        assert!(est.theta.is_finite() && est.theta > 0.0);
        let ml = estimate_ability("s", &resp, &model, AbilityMethod::Ml).unwrap();
        assert_eq!(ml.flag, Some(AbilityFlag::AllCorrect));
        assert!(ml.theta.is_infinite());
    }

    #[test]
    fn ml_and_map_agree_with_stationarity() {
        let model = bank(&[-1.0, -0.5, 0.0, 0.5, 1.0]);
        let resp = [("i0", true), ("i1", true), ("i2", false), ("i3", true), ("i4", false)];
        let ml = estimate_ability("s", &resp, &model, AbilityMethod::Ml).unwrap();
        // Rasch ML solves sum(P) = raw score
        let expected: f64 = model.items.iter().map(|it| it.irf(ml.theta)).sum();
        assert!((expected - 3.0).abs() < 1e-8);
        let map = estimate_ability("s", &resp, &model, AbilityMethod::Map).unwrap();
        // MAP shrinks toward the prior mean
        assert!(map.theta.abs() < ml.theta.abs());
        let resid: f64 = model.items.iter().map(|it| it.irf(map.theta)).sum::<f64>();
        assert!((3.0 - resid - map.theta).abs() < 1e-8);
    }

    #[test]
    fn errors_on_unknown_or_empty() {
        let model = bank(&[0.0, 1.0]);
        assert!(matches!(
            estimate_ability("s", &[("nope", true)], &model, AbilityMethod::Eap),
            Err(Error::UnknownItem(_))
        ));
        let empty: [(&str, bool); 0] = [];
        assert!(estimate_ability("s", &empty, &model, AbilityMethod::Eap).is_err());
    }
}
