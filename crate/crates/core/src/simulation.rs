//! Synthetic response data, a brute-force calibration oracle and
//! parameter-recovery metrics.
//!
//! Replicates take their seeds from one master seed via
//! [`derive_seed`](crate::rng::derive_seed)`(master, replicate_index)`.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::analysis::pearson;
use crate::error::{Error, Result};
use crate::irt::{irf, FittedModel, ItemParameters, LatentAbility, ModelFamily, QuadratureSpec, ResponseMatrix};
use crate::rng;
use crate::schema::{self, TRUTH_SCHEMA};

/// Observed difficulty span of the calibrated triad bank.
pub const REFERENCE_BETA_RANGE: (f64, f64) = (-3.81, 1.67);

/// Largest instance [`brute_force_mml`] accepts.
pub const BRUTE_FORCE_MAX_ITEMS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ThetaDistribution {
    Normal { mean: f64, sd: f64 },
    Values { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BetaDistribution {
    Uniform { low: f64, high: f64 },
    Values { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_subjects: usize,
    pub n_items: usize,
    pub family: ModelFamily,
    pub theta: ThetaDistribution,
    pub beta: BetaDistribution,
    /// Uniform range of discriminations for the 2PL and 3PL families.
    #[serde(default = "default_discrimination_range")]
    pub discrimination_range: (f64, f64),
    /// Uniform range of lower asymptotes for the 3PL family.
    #[serde(default = "default_guessing_range")]
    pub guessing_range: (f64, f64),
    pub seed: u64,
}

fn default_discrimination_range() -> (f64, f64) {
    (0.8, 2.0)
}

fn default_guessing_range() -> (f64, f64) {
    (0.05, 0.3)
}

impl SimulationConfig {
    /// Rasch data with θ ~ N(0, 1) and β uniform over the reference span.
    pub fn rasch(n_subjects: usize, n_items: usize, seed: u64) -> Self {
        Self {
            n_subjects,
            n_items,
            family: ModelFamily::Rasch1pl,
            theta: ThetaDistribution::Normal { mean: 0.0, sd: 1.0 },
            beta: BetaDistribution::Uniform {
                low: REFERENCE_BETA_RANGE.0,
                high: REFERENCE_BETA_RANGE.1,
            },
            discrimination_range: default_discrimination_range(),
            guessing_range: default_guessing_range(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.n_items == 0 {
            return Err(Error::InvalidInput("subject and item counts must be positive".into()));
        }
        match &self.theta {
            ThetaDistribution::Normal { mean, sd } if !(mean.is_finite() && sd.is_finite() && *sd >= 0.0) => {
                return Err(Error::InvalidInput(format!("bad theta distribution N({mean}, {sd})")));
            }
            ThetaDistribution::Values { values } if values.len() != self.n_subjects || values.iter().any(|v| !v.is_finite()) => {
                return Err(Error::InvalidInput(format!("expected {} finite theta values", self.n_subjects)));
            }
            _ => {}
        }
        match &self.beta {
            BetaDistribution::Uniform { low, high } if !(low.is_finite() && high.is_finite() && low <= high) => {
                return Err(Error::InvalidInput(format!("bad beta range [{low}, {high}]")));
            }
            BetaDistribution::Values { values } if values.len() != self.n_items || values.iter().any(|v| !v.is_finite()) => {
                return Err(Error::InvalidInput(format!("expected {} finite beta values", self.n_items)));
            }
            _ => {}
        }
        let (a_lo, a_hi) = self.discrimination_range;
        let (c_lo, c_hi) = self.guessing_range;
        if !(a_lo > 0.0 && a_lo <= a_hi && a_hi.is_finite()) || !(0.0..1.0).contains(&c_lo) || !(c_lo..1.0).contains(&c_hi) {
            return Err(Error::InvalidInput("bad discrimination or guessing range".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut rng::Rng, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo
    } else {
        Uniform::new_inclusive(lo, hi).expect("checked range").sample(rng)
    }
}

/// Ids `prefix001`, `prefix002`, ... padded to the width of `n`.
pub fn sequential_ids(prefix: &str, n: usize) -> Vec<String> {
    let width = n.to_string().len().max(3);
    (1..=n).map(|k| format!("{prefix}{k:0width$}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub subject_id: String,
    pub theta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub config: SimulationConfig,
    pub subjects: Vec<SubjectTruth>,
    pub items: Vec<ItemParameters>,
}

impl SimulationTruth {
    pub fn thetas(&self) -> Vec<f64> {
        self.subjects.iter().map(|s| s.theta).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        schema::write_document(path, TRUTH_SCHEMA, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        schema::read_document(path, TRUTH_SCHEMA)
    }
}

#[derive(Debug, Clone)]
pub struct Simulated {
    pub truth: SimulationTruth,
    pub data: ResponseMatrix,
}

/// Draws true parameters, then every cell independently from the response function.
pub fn simulate_responses(config: &SimulationConfig) -> Result<Simulated> {
    config.validate()?;
    let mut rng = rng::seeded(config.seed);

    let thetas: Vec<f64> = match &config.theta {
        ThetaDistribution::Normal { mean, sd } => {
            let dist = Normal::new(*mean, *sd).map_err(|e| Error::InvalidInput(e.to_string()))?;
            (0..config.n_subjects).map(|_| dist.sample(&mut rng)).collect()
        }
        ThetaDistribution::Values { values } => values.clone(),
    };
    let item_ids = sequential_ids("i", config.n_items);
    let mut items = Vec::with_capacity(config.n_items);
    for (j, id) in item_ids.iter().enumerate() {
        let beta = match &config.beta {
            BetaDistribution::Uniform { low, high } => uniform(&mut rng, *low, *high),
            BetaDistribution::Values { values } => values[j],
        };
        let (a, c) = match config.family {
            ModelFamily::Rasch1pl => (1.0, 0.0),
            ModelFamily::TwoPl => (uniform(&mut rng, config.discrimination_range.0, config.discrimination_range.1), 0.0),
            ModelFamily::ThreePl => (
                uniform(&mut rng, config.discrimination_range.0, config.discrimination_range.1),
                uniform(&mut rng, config.guessing_range.0, config.guessing_range.1),
            ),
        };
        items.push(ItemParameters::new(id.as_str(), a, beta, c));
    }

    let mut cells = Vec::with_capacity(config.n_subjects * config.n_items);
    for &theta in &thetas {
        for item in &items {
            cells.push(Some(rng.random::<f64>() < irf(theta, item)));
        }
    }
    let subject_ids = sequential_ids("s", config.n_subjects);
    let data = ResponseMatrix::new(subject_ids.clone(), item_ids, cells)?;
    let subjects = subject_ids
        .into_iter()
        .zip(thetas)
        .map(|(subject_id, theta)| SubjectTruth { subject_id, theta })
        .collect();
    Ok(Simulated {
        truth: SimulationTruth {
            config: config.clone(),
            subjects,
            items,
        },
        data,
    })
}

/// Regenerates a response matrix of the same shape from fitted parameters and given abilities.
pub fn resimulate(model: &FittedModel, subject_ids: &[String], thetas: &[f64], seed: u64) -> Result<ResponseMatrix> {
    if subject_ids.len() != thetas.len() {
        return Err(Error::SubjectMismatch(format!("{} ids for {} abilities", subject_ids.len(), thetas.len())));
    }
    let mut rng = rng::seeded(seed);
    let mut cells = Vec::with_capacity(thetas.len() * model.items.len());
    for &theta in thetas {
        for item in &model.items {
            cells.push(Some(rng.random::<f64>() < irf(theta, item)));
        }
    }
    ResponseMatrix::new(subject_ids.to_vec(), model.item_ids(), cells)
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-likelihood of one Rasch response at one node, written out longhand.
fn rasch_log_prob(theta: f64, beta: f64, correct: bool) -> f64 {
    let z = theta - beta;
    let (log_p, log_q) = if z >= 0.0 {
        let t = (-z).exp().ln_1p();
        (-t, -z - t)
    } else {
        let t = z.exp().ln_1p();
        (z - t, -t)
    };
    if correct {
        log_p
    } else {
        log_q
    }
}

struct Oracle<'a> {
    data: &'a ResponseMatrix,
    nodes: &'a [f64],
    log_weights: Vec<f64>,
    /// `[item][subject][node]` log-likelihood contributions.
    parts: Vec<Vec<Vec<f64>>>,
    /// Per subject and node, the sum over items of `parts`.
    totals: Vec<Vec<f64>>,
}

impl<'a> Oracle<'a> {
    fn contribution(&self, j: usize, beta: f64) -> Vec<Vec<f64>> {
        (0..self.data.n_subjects())
            .map(|i| {
                self.nodes
                    .iter()
                    .map(|&t| self.data.get(i, j).map_or(0.0, |x| rasch_log_prob(t, beta, x)))
                    .collect()
            })
            .collect()
    }

    /// Marginal log-likelihood with item `j` at `beta` and the rest as they stand.
    fn objective(&self, j: usize, beta: f64) -> f64 {
        let part = self.contribution(j, beta);
        (0..self.data.n_subjects())
            .map(|i| {
                log_sum_exp(
                    self.nodes
                        .iter()
                        .enumerate()
                        .map(|(q, _)| self.log_weights[q] + self.totals[i][q] - self.parts[j][i][q] + part[i][q]),
                )
            })
            .sum()
    }

    fn set(&mut self, j: usize, beta: f64) {
        let part = self.contribution(j, beta);
        for (i, row) in self.totals.iter_mut().enumerate() {
            for (q, v) in row.iter_mut().enumerate() {
                *v += part[i][q] - self.parts[j][i][q];
            }
        }
        self.parts[j] = part;
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Rasch difficulties by coordinate-wise search of the marginal likelihood.
///
/// Each difficulty is scanned over the quadrature nodes inside the difficulty
/// bounds, refined by golden section to 1e-4 around the best node, and the
/// sweep over items repeats until no coordinate improves the likelihood.
pub fn brute_force_mml(data: &ResponseMatrix, quadrature: &QuadratureSpec) -> Result<Vec<ItemParameters>> {
    if data.n_items() > BRUTE_FORCE_MAX_ITEMS {
        return Err(Error::TooLarge(format!("{} items (limit {BRUTE_FORCE_MAX_ITEMS})", data.n_items())));
    }
    if data.n_items() == 0 || data.n_subjects() == 0 {
        return Err(Error::Degenerate("empty response matrix".into()));
    }
    let (lo, hi) = quadrature.difficulty_bounds();
    let spacing = (quadrature.upper() - quadrature.lower()) / (quadrature.len() - 1) as f64;
    let mut grid: Vec<f64> = quadrature.nodes().iter().copied().filter(|t| (lo..=hi).contains(t)).collect();
    grid.insert(0, lo);
    grid.push(hi);

    let nodes = quadrature.nodes();
    let norm: f64 = quadrature.weights().iter().sum();
    let mut oracle = Oracle {
        data,
        nodes,
        log_weights: quadrature.weights().iter().map(|w| (w / norm).ln()).collect(),
        parts: Vec::new(),
        totals: vec![vec![0.0; nodes.len()]; data.n_subjects()],
    };
    let mut betas = vec![0.0; data.n_items()];
    for j in 0..data.n_items() {
        let part = oracle.contribution(j, 0.0);
        for (i, row) in oracle.totals.iter_mut().enumerate() {
            for (q, v) in row.iter_mut().enumerate() {
                *v += part[i][q];
            }
        }
        oracle.parts.push(part);
    }

    let mut current = oracle.objective(0, betas[0]);
    for _cycle in 0..1000 {
        let mut improved = false;
        for j in 0..data.n_items() {
            let f = |b: f64| oracle.objective(j, b);
            let best_node = grid.iter().copied().max_by(|a, b| f(*a).total_cmp(&f(*b))).expect("non-empty grid");
            let refined = golden_max(f, (best_node - spacing).max(lo), (best_node + spacing).min(hi), 1e-4);
            let candidate = [refined, best_node, betas[j]]
                .into_iter()
                .map(|b| (b, f(b)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .expect("three candidates");
            if candidate.1 > current + 1e-10 {
                improved |= (candidate.0 - betas[j]).abs() > 1e-6;
                betas[j] = candidate.0;
                current = candidate.1;
                oracle.set(j, betas[j]);
            }
        }
        if !improved {
            break;
        }
    }
    Ok(data
        .item_ids()
        .iter()
        .zip(&betas)
        .map(|(id, &b)| {
            let mut item = ItemParameters::rasch(id.as_str(), b);
            item.boundary = (b - lo).abs() < 1e-3 || (hi - b).abs() < 1e-3;
            item
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub r_beta: f64,
    pub rmse_beta: f64,
    pub r_theta: f64,
    pub rmse_theta: f64,
    /// Fraction of true abilities inside the estimate ± 2 SE.
    pub coverage: f64,
    /// Subjects left out of the ability metrics for a non-finite estimate.
    pub n_theta_excluded: usize,
}

fn rmse(x: &[f64], y: &[f64]) -> f64 {
    (x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Compares estimates with the truth that generated the data, matching by id.
pub fn recovery_report(truth: &SimulationTruth, model: &FittedModel, abilities: &[LatentAbility]) -> Result<RecoveryReport> {
    if model.items.len() != truth.items.len() {
        return Err(Error::ItemMismatch(format!("{} fitted items for {} true items", model.items.len(), truth.items.len())));
    }
    let mut true_beta = Vec::with_capacity(truth.items.len());
    let mut est_beta = Vec::with_capacity(truth.items.len());
    for item in &truth.items {
        let fitted = model.item(&item.item_id).ok_or_else(|| Error::ItemMismatch(format!("item `{}` was not fitted", item.item_id)))?;
        true_beta.push(item.difficulty);
        est_beta.push(fitted.difficulty);
    }

    if abilities.len() != truth.subjects.len() {
        return Err(Error::SubjectMismatch(format!("{} estimates for {} subjects", abilities.len(), truth.subjects.len())));
    }
    let estimates: HashMap<&str, &LatentAbility> = abilities.iter().map(|a| (a.subject_id.as_str(), a)).collect();
    let (mut true_theta, mut est_theta) = (Vec::new(), Vec::new());
    let (mut covered, mut excluded) = (0usize, 0usize);
    for s in &truth.subjects {
        let est = estimates
            .get(s.subject_id.as_str())
            .ok_or_else(|| Error::SubjectMismatch(format!("subject `{}` has no estimate", s.subject_id)))?;
        if !est.theta.is_finite() {
            excluded += 1;
            continue;
        }
        true_theta.push(s.theta);
        est_theta.push(est.theta);
        if (s.theta - est.theta).abs() <= 2.0 * est.standard_error {
            covered += 1;
        }
    }
    if true_theta.is_empty() {
        return Err(Error::Degenerate("no finite ability estimates".into()));
    }
    Ok(RecoveryReport {
        r_beta: pearson(&true_beta, &est_beta)?,
        rmse_beta: rmse(&true_beta, &est_beta),
        r_theta: pearson(&true_theta, &est_theta)?,
        rmse_theta: rmse(&true_theta, &est_theta),
        coverage: covered as f64 / true_theta.len() as f64,
        n_theta_excluded: excluded,
    })
}
