//! Scores and statistics for comparing cohorts, forms and sessions.

mod compare;
mod correlation;
mod report;
mod series;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use compare::{group_compare, Comparison, GroupTest, EXACT_RANK_SUM_LIMIT};
pub use correlation::{pearson, pearson_r, Correlation};
pub use report::{AnalysisReport, ReportEntry};
pub use series::ScoreSeries;

use crate::error::{Error, Result};
use crate::irt::{AbilityMethod, FittedModel, LatentAbility, ResponseMatrix, Scorer};

/// Scores every subject of `data` against fixed item parameters.
///
/// `data` may hold any subset of the model's items; each subject is scored
/// on the items they answered.
pub fn project_cohort(data: &ResponseMatrix, model: &FittedModel, method: AbilityMethod) -> Result<Vec<LatentAbility>> {
    let scorer = Scorer::new(model);
    let positions: Vec<usize> = data
        .item_ids()
        .iter()
        .map(|id| scorer.item_index(id).ok_or_else(|| Error::UnknownItem(id.clone())))
        .collect::<Result<_>>()?;
    (0..data.n_subjects())
        .into_par_iter()
        .map(|i| {
            let mut row = vec![None; model.items.len()];
            for (cell, &j) in data.row(i).iter().zip(&positions) {
                row[j] = *cell;
            }
            scorer.score_row(&data.subject_ids()[i], &row, method)
        })
        .collect()
}

/// Abilities as a score series; non-finite estimates are dropped with a warning.
pub fn abilities_series(label: &str, abilities: &[LatentAbility]) -> Result<ScoreSeries> {
    let (mut ids, mut values) = (Vec::new(), Vec::new());
    for a in abilities {
        if a.theta.is_finite() {
            ids.push(a.subject_id.clone());
            values.push(a.theta);
        } else {
            warn!("subject `{}` has a non-finite ability and is left out of `{label}`", a.subject_id);
        }
    }
    ScoreSeries::new(label, ids, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AccuracyAxis {
    BySubject,
    ByItem,
}

/// Proportion correct per subject or per item over answered cells.
pub fn accuracy_summary(data: &ResponseMatrix, axis: AccuracyAxis) -> Result<ScoreSeries> {
    if data.n_subjects() == 0 || data.n_items() == 0 {
        return Err(Error::InvalidInput("empty response matrix".into()));
    }
    let (ids, label): (&[String], &str) = match axis {
        AccuracyAxis::BySubject => (data.subject_ids(), "accuracy_by_subject"),
        AccuracyAxis::ByItem => (data.item_ids(), "accuracy_by_item"),
    };
    let (mut out_ids, mut values) = (Vec::new(), Vec::new());
    for (k, id) in ids.iter().enumerate() {
        let cells: Vec<bool> = match axis {
            AccuracyAxis::BySubject => data.row(k).iter().flatten().copied().collect(),
            AccuracyAxis::ByItem => data.column(k).flatten().collect(),
        };
        if cells.is_empty() {
            warn!("`{id}` has no answered cells and is left out of the accuracy summary");
            continue;
        }
        out_ids.push(id.clone());
        values.push(cells.iter().filter(|&&c| c).count() as f64 / cells.len() as f64);
    }
    ScoreSeries::new(label, out_ids, values)
}

/// Interpretation tag of [`VarianceDecomposition`]: SDs of paired score differences.
pub const VARIANCE_INTERPRETATION: &str = "sd-of-paired-differences";

/// Splits the spread of score differences into a session part and a test part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceDecomposition {
    pub sd_session_and_test: f64,
    pub sd_test_only: f64,
    pub sd_session: f64,
    pub interpretation: String,
    /// The test-only SD exceeded the combined SD and the session part was set to 0.
    pub clamped: bool,
}

fn sample_sd(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

/// Session SD from two SDs: sqrt(max(0, combined² - test_only²)).
pub fn decompose_sds(sd_session_and_test: f64, sd_test_only: f64) -> Result<VarianceDecomposition> {
    if !(sd_session_and_test >= 0.0 && sd_test_only >= 0.0) || !sd_session_and_test.is_finite() || !sd_test_only.is_finite() {
        return Err(Error::InvalidInput("standard deviations must be finite and non-negative".into()));
    }
    let radicand = sd_session_and_test * sd_session_and_test - sd_test_only * sd_test_only;
    let clamped = radicand < 0.0;
    if clamped {
        warn!("test-only SD {sd_test_only} exceeds combined SD {sd_session_and_test}; session SD set to 0");
    }
    Ok(VarianceDecomposition {
        sd_session_and_test,
        sd_test_only,
        sd_session: radicand.max(0.0).sqrt(),
        interpretation: VARIANCE_INTERPRETATION.to_string(),
        clamped,
    })
}

/// Decomposes the SDs of cross-session and same-session score differences.
pub fn variance_decompose(cross_session_diffs: &[f64], same_session_diffs: &[f64]) -> Result<VarianceDecomposition> {
    if cross_session_diffs.len() < 2 || same_session_diffs.len() < 2 {
        return Err(Error::InvalidInput("each list of differences needs at least 2 values".into()));
    }
    if cross_session_diffs.iter().chain(same_session_diffs).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("differences must be finite".into()));
    }
    decompose_sds(sample_sd(cross_session_diffs), sample_sd(same_session_diffs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irt::{ItemParameters, ModelFamily, QuadratureSpec};

    #[test]
    fn reported_sds_reconcile_when_squared() {
        let d = decompose_sds(0.40, 0.31).unwrap();
        assert!((d.sd_session - 0.252_784).abs() < 1e-6);
        assert!(!d.clamped);
        assert!((d.sd_session.powi(2) + d.sd_test_only.powi(2) - d.sd_session_and_test.powi(2)).abs() < 1e-12);
        assert_eq!(d.interpretation, VARIANCE_INTERPRETATION);
        let c = decompose_sds(0.2, 0.3).unwrap();
        assert_eq!((c.sd_session, c.clamped), (0.0, true));
    }

    #[test]
    fn identical_difference_lists() {
        let diffs = [0.3, -0.1, 0.5, 0.2];
        let d = variance_decompose(&diffs, &diffs).unwrap();
        assert_eq!(d.sd_session, 0.0);
        assert!(variance_decompose(&[1.0], &diffs).is_err());
    }

    #[test]
    fn accuracy_axes() {
        let mut rows = vec![vec![1u8; 12]; 2];
        rows[0][..3].fill(0);
        let data = ResponseMatrix::from_rows(vec!["a".into(), "b".into()], (0..12).map(|k| format!("i{k}")).collect(), &rows).unwrap();
        let by_subject = accuracy_summary(&data, AccuracyAxis::BySubject).unwrap();
        assert_eq!(by_subject.values, vec![0.75, 1.0]);
        let by_item = accuracy_summary(&data, AccuracyAxis::ByItem).unwrap();
        assert_eq!(by_item.values[0], 0.5);
        assert_eq!(by_item.values[11], 1.0);
    }

    #[test]
    fn projection_on_a_subset_of_items() {
        let items = (0..6).map(|k| ItemParameters::rasch(format!("i{k}"), k as f64 - 2.5)).collect();
        let model = FittedModel::from_items(ModelFamily::Rasch1pl, items, QuadratureSpec::default()).unwrap();
        let data = ResponseMatrix::from_rows(vec!["x".into(), "y".into()], vec!["i4".into(), "i1".into()], &[vec![1, 0], vec![0, 1]]).unwrap();
        let scores = project_cohort(&data, &model, AbilityMethod::Eap).unwrap();
        let direct = crate::irt::estimate_ability("x", &[("i4", true), ("i1", false)], &model, AbilityMethod::Eap).unwrap();
        assert_eq!(scores[0], direct);
        assert!(scores.iter().all(|s| s.theta.is_finite()));

        let stranger = ResponseMatrix::from_rows(vec!["x".into()], vec!["zz".into()], &[vec![1]]).unwrap();
        assert!(matches!(project_cohort(&stranger, &model, AbilityMethod::Eap), Err(Error::UnknownItem(_))));
    }
}
