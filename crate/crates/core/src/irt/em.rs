//! Marginal maximum likelihood calibration by expectation-maximization.
//!
//! The E-step integrates ability out over the quadrature grid against the
//! standard-normal prior and accumulates expected response counts per item
//! and node. The M-step maximizes each item's expected complete-data
//! log-likelihood with Fisher scoring and step halving, so the marginal
//! likelihood never decreases from one cycle to the next.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::fitted::{FittedModel, Prior};
use super::model::{log_irf_pair, logistic, ItemParameters, ModelFamily};
use super::quadrature::QuadratureSpec;
use super::response::ResponseMatrix;
use crate::error::{Error, Result};

pub const DISCRIMINATION_BOUNDS: (f64, f64) = (0.05, 8.0);
pub const GUESSING_BOUNDS: (f64, f64) = (0.0, 0.5);

#[derive(Debug, Clone)]
pub struct EmConfig {
    pub quadrature: QuadratureSpec,
    /// Convergence threshold on the largest absolute parameter change.
    pub tol: f64,
    pub max_cycles: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            quadrature: QuadratureSpec::default(),
            tol: 1e-4,
            max_cycles: 500,
        }
    }
}

/// Expected counts from one E-step, stored item-major (`item * nodes + node`).
pub(crate) struct ExpectedCounts {
    pub log_likelihood: f64,
    pub correct: Vec<f64>,
    pub answered: Vec<f64>,
}

/// Per-item tables of `ln P` and `ln (1 - P)` on every node.
pub(crate) fn log_tables(items: &[ItemParameters], quad: &QuadratureSpec) -> (Vec<f64>, Vec<f64>) {
    let q = quad.len();
    let mut lp = vec![0.0; items.len() * q];
    let mut lq = vec![0.0; items.len() * q];
    for (j, item) in items.iter().enumerate() {
        for (k, &theta) in quad.nodes().iter().enumerate() {
            let (a, b) = log_irf_pair(theta, item);
            lp[j * q + k] = a;
            lq[j * q + k] = b;
        }
    }
    (lp, lq)
}

/// Posterior over nodes for one response row, plus the row's marginal log-likelihood.
pub(crate) fn row_posterior(row: &[Option<bool>], lp: &[f64], lq: &[f64], log_prior: &[f64]) -> (Vec<f64>, f64) {
    let q = log_prior.len();
    let mut ll = log_prior.to_vec();
    for (j, cell) in row.iter().enumerate() {
        let table = match cell {
            Some(true) => &lp[j * q..(j + 1) * q],
            Some(false) => &lq[j * q..(j + 1) * q],
            None => continue,
        };
        for (acc, v) in ll.iter_mut().zip(table) {
            *acc += v;
        }
    }
    let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in ll.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in ll.iter_mut() {
        *v /= total;
    }
    (ll, max + total.ln())
}

pub(crate) fn e_step(data: &ResponseMatrix, items: &[ItemParameters], quad: &QuadratureSpec) -> ExpectedCounts {
    let q = quad.len();
    let (lp, lq) = log_tables(items, quad);
    let log_prior: Vec<f64> = quad.weights().iter().map(|w| w.ln()).collect();
    let posteriors: Vec<(Vec<f64>, f64)> = (0..data.n_subjects())
        .into_par_iter()
        .map(|s| row_posterior(data.row(s), &lp, &lq, &log_prior))
        .collect();

    // fixed subject order keeps the reduction independent of the thread schedule
    let mut correct = vec![0.0; items.len() * q];
    let mut answered = vec![0.0; items.len() * q];
    let mut log_likelihood = 0.0;
    for (s, (post, ll)) in posteriors.iter().enumerate() {
        log_likelihood += ll;
        for (j, cell) in data.row(s).iter().enumerate() {
            let Some(x) = cell else { continue };
            let base = j * q;
            for k in 0..q {
                answered[base + k] += post[k];
            }
            if *x {
                for k in 0..q {
                    correct[base + k] += post[k];
                }
            }
        }
    }
    ExpectedCounts {
        log_likelihood,
        correct,
        answered,
    }
}

/// Marginal log-likelihood of the data under fixed item parameters.
pub fn marginal_log_likelihood(data: &ResponseMatrix, items: &[ItemParameters], quad: &QuadratureSpec) -> f64 {
    let (lp, lq) = log_tables(items, quad);
    let log_prior: Vec<f64> = quad.weights().iter().map(|w| w.ln()).collect();
    (0..data.n_subjects())
        .map(|s| row_posterior(data.row(s), &lp, &lq, &log_prior).1)
        .sum()
}

/// Free parameters of one item in family order `[a, beta, c]` restricted to the family.
fn free_params(item: &ItemParameters, family: ModelFamily) -> Vec<f64> {
    match family {
        ModelFamily::Rasch1pl => vec![item.difficulty],
        ModelFamily::TwoPl => vec![item.discrimination, item.difficulty],
        ModelFamily::ThreePl => vec![item.discrimination, item.difficulty, item.guessing],
    }
}

fn with_params(item: &ItemParameters, family: ModelFamily, p: &[f64]) -> ItemParameters {
    let mut out = item.clone();
    match family {
        ModelFamily::Rasch1pl => out.difficulty = p[0],
        ModelFamily::TwoPl => {
            out.discrimination = p[0];
            out.difficulty = p[1];
        }
        ModelFamily::ThreePl => {
            out.discrimination = p[0];
            out.difficulty = p[1];
            out.guessing = p[2];
        }
    }
    out
}

fn bounds(family: ModelFamily, quad: &QuadratureSpec) -> Vec<(f64, f64)> {
    let b = quad.difficulty_bounds();
    match family {
        ModelFamily::Rasch1pl => vec![b],
        ModelFamily::TwoPl => vec![DISCRIMINATION_BOUNDS, b],
        ModelFamily::ThreePl => vec![DISCRIMINATION_BOUNDS, b, GUESSING_BOUNDS],
    }
}

/// `P(theta)` and `dP/dparam` for the family's free parameters.
pub(crate) fn irf_gradient(theta: f64, item: &ItemParameters, family: ModelFamily) -> (f64, Vec<f64>) {
    let (a, b, c) = (item.discrimination, item.difficulty, item.guessing);
    let g = logistic(a * (theta - b));
    let p = c + (1.0 - c) * g;
    let slope = (1.0 - c) * g * (1.0 - g);
    let d_a = slope * (theta - b);
    let d_b = -slope * a;
    let grad = match family {
        ModelFamily::Rasch1pl => vec![d_b],
        ModelFamily::TwoPl => vec![d_a, d_b],
        ModelFamily::ThreePl => vec![d_a, d_b, 1.0 - g],
    };
    (p, grad)
}

/// Expected complete-data log-likelihood of one item.
fn item_objective(item: &ItemParameters, nodes: &[f64], r: &[f64], n: &[f64]) -> f64 {
    nodes
        .iter()
        .zip(r.iter().zip(n))
        .map(|(&theta, (&rk, &nk))| {
            let (lp, lq) = log_irf_pair(theta, item);
            let mut v = 0.0;
            if rk > 0.0 {
                v += rk * lp;
            }
            if nk - rk > 0.0 {
                v += (nk - rk) * lq;
            }
            v
        })
        .sum()
}

/// Gradient and expected information of the item objective.
fn item_score(item: &ItemParameters, family: ModelFamily, nodes: &[f64], r: &[f64], n: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
    let dim = family.params_per_item();
    let mut grad = DVector::zeros(dim);
    let mut info = DMatrix::zeros(dim, dim);
    let (a, b, c) = (item.discrimination, item.difficulty, item.guessing);
    for (k, &theta) in nodes.iter().enumerate() {
        if n[k] <= 0.0 {
            continue;
        }
        let g = logistic(a * (theta - b));
        let p = c + (1.0 - c) * g;
        // s = dP / (P (1 - P)), w = P (1 - P), written to avoid 0/0 in the tails
        let s: Vec<f64> = match family {
            ModelFamily::Rasch1pl => vec![-a * g / p],
            ModelFamily::TwoPl => vec![(theta - b) * g / p, -a * g / p],
            ModelFamily::ThreePl => vec![(theta - b) * g / p, -a * g / p, 1.0 / (p * (1.0 - c))],
        };
        let w = p * (1.0 - c) * (1.0 - g);
        let resid = r[k] - n[k] * p;
        for i in 0..dim {
            grad[i] += resid * s[i];
            for j in 0..dim {
                info[(i, j)] += n[k] * w * s[i] * s[j];
            }
        }
    }
    (grad, info)
}

/// Maximizes one item's expected log-likelihood within the box bounds.
fn m_step_item(item: &ItemParameters, family: ModelFamily, quad: &QuadratureSpec, r: &[f64], n: &[f64]) -> ItemParameters {
    let bounds = bounds(family, quad);
    let nodes = quad.nodes();
    let mut current = item.clone();
    let mut value = item_objective(&current, nodes, r, n);
    for _ in 0..100 {
        let (grad, mut info) = item_score(&current, family, nodes, r, n);
        let ridge = 1e-10 * (1.0 + info.diagonal().iter().map(|v| v.abs()).sum::<f64>());
        for i in 0..info.nrows() {
            info[(i, i)] += ridge;
        }
        let step = match info.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let start = free_params(&current, family);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let proposal: Vec<f64> = start
                .iter()
                .zip(step.iter())
                .zip(&bounds)
                .map(|((x, d), (lo, hi))| (x + t * d).clamp(*lo, *hi))
                .collect();
            let candidate = with_params(&current, family, &proposal);
            let v = item_objective(&candidate, nodes, r, n);
            if v >= value {
                accepted = Some((candidate, v, proposal));
                break;
            }
            t *= 0.5;
        }
        let Some((candidate, v, proposal)) = accepted else { break };
        let moved = proposal.iter().zip(&start).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        current = candidate;
        value = v;
        if moved < 1e-10 {
            break;
        }
    }
    current
}

fn initial_item(item_id: &str, family: ModelFamily, p_correct: f64) -> ItemParameters {
    let difficulty = -(p_correct / (1.0 - p_correct)).ln();
    match family {
        ModelFamily::Rasch1pl | ModelFamily::TwoPl => ItemParameters::new(item_id, 1.0, difficulty, 0.0),
        ModelFamily::ThreePl => ItemParameters::new(item_id, 1.0, difficulty, 0.2),
    }
}

/// Calibrates item parameters by marginal maximum likelihood.
pub fn fit_em(data: &ResponseMatrix, family: ModelFamily, config: &EmConfig) -> Result<FittedModel> {
    if data.n_subjects() < 2 || data.n_items() < 2 {
        return Err(Error::Degenerate(format!(
            "calibration needs at least 2 subjects and 2 items, got {} x {}",
            data.n_subjects(),
            data.n_items()
        )));
    }
    if !(config.tol > 0.0) {
        return Err(Error::InvalidInput("tolerance must be positive".into()));
    }
    let quad = &config.quadrature;
    let (lo, hi) = quad.difficulty_bounds();

    let mut items = Vec::with_capacity(data.n_items());
    let mut fixed = vec![false; data.n_items()];
    for (j, id) in data.item_ids().iter().enumerate() {
        let (mut k, mut n) = (0usize, 0usize);
        for cell in data.column(j).flatten() {
            n += 1;
            k += usize::from(cell);
        }
        if n == 0 {
            return Err(Error::Degenerate(format!("item `{id}` has no responses")));
        }
        if k == 0 || k == n {
            warn!("item `{id}` answered identically by every subject; difficulty clamped to the grid bound");
            let mut item = ItemParameters::rasch(id.as_str(), if k == n { lo } else { hi });
            item.boundary = true;
            fixed[j] = true;
            items.push(item);
            continue;
        }
        let p = (k as f64 + 0.5) / (n as f64 + 1.0);
        let mut item = initial_item(id, family, p);
        item.difficulty = item.difficulty.clamp(lo, hi);
        items.push(item);
    }

    let q = quad.len();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut cycles = 0;
    while cycles < config.max_cycles {
        cycles += 1;
        let counts = e_step(data, &items, quad);
        trace.push(counts.log_likelihood);
        let updated: Vec<ItemParameters> = items
            .par_iter()
            .enumerate()
            .map(|(j, item)| {
                if fixed[j] {
                    return item.clone();
                }
                let r = &counts.correct[j * q..(j + 1) * q];
                let n = &counts.answered[j * q..(j + 1) * q];
                m_step_item(item, family, quad, r, n)
            })
            .collect();
        let change = items
            .iter()
            .zip(&updated)
            .flat_map(|(old, new)| {
                [
                    (old.discrimination - new.discrimination).abs(),
                    (old.difficulty - new.difficulty).abs(),
                    (old.guessing - new.guessing).abs(),
                ]
            })
            .fold(0.0, f64::max);
        items = updated;
        debug!("EM cycle {cycles}: logL = {:.6}, max change = {change:.3e}", counts.log_likelihood);
        if change < config.tol {
            converged = true;
            break;
        }
    }
    let final_ll = marginal_log_likelihood(data, &items, quad);
    trace.push(final_ll);

    for item in items.iter_mut() {
        if item.difficulty <= lo + 1e-9 || item.difficulty >= hi - 1e-9 {
            item.boundary = true;
        }
    }

    Ok(FittedModel {
        family,
        n_params: family.params_per_item() * items.len(),
        items,
        quadrature: quad.clone(),
        prior: Prior::STANDARD_NORMAL,
        log_likelihood: final_ll,
        n_subjects: data.n_subjects(),
        converged,
        em_cycles: cycles,
        log_likelihood_trace: trace,
        fit: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: &[Vec<u8>]) -> ResponseMatrix {
        let subjects = (0..rows.len()).map(|s| format!("s{s}")).collect();
        let items = (0..rows[0].len()).map(|j| format!("i{j}")).collect();
        ResponseMatrix::from_rows(subjects, items, rows).unwrap()
    }

    #[test]
    fn degenerate_matrix_is_an_error() {
        let one_subject = matrix(&[vec![1, 0, 1]]);
        assert!(matches!(fit_em(&one_subject, ModelFamily::Rasch1pl, &EmConfig::default()), Err(Error::Degenerate(_))));
        let one_item = matrix(&[vec![1], vec![0]]);
        assert!(fit_em(&one_item, ModelFamily::Rasch1pl, &EmConfig::default()).is_err());
    }

    #[test]
    fn constant_items_are_clamped_and_flagged() {
        let data = matrix(&[vec![1, 0, 1], vec![1, 1, 0], vec![1, 0, 0], vec![1, 1, 1]]);
        let model = fit_em(&data, ModelFamily::Rasch1pl, &EmConfig::default()).unwrap();
        assert!(model.items[0].boundary);
        assert_eq!(model.items[0].difficulty, -5.5);
        assert!(!model.items[1].boundary);
    }

    #[test]
    fn likelihood_trace_is_monotone_for_every_family() {
        let rows: Vec<Vec<u8>> = (0..40)
            .map(|s| (0..6).map(|j| u8::from((s * 7 + j * 3) % 5 < 2 + (s % 3))).collect())
            .collect();
        let data = matrix(&rows);
        for family in [ModelFamily::Rasch1pl, ModelFamily::TwoPl, ModelFamily::ThreePl] {
            let model = fit_em(&data, family, &EmConfig::default()).unwrap();
            for w in model.log_likelihood_trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-8, "{family:?}: {} -> {}", w[0], w[1]);
            }
            for item in &model.items {
                item.validate(family).unwrap();
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let item = ItemParameters::new("x", 1.3, 0.4, 0.15);
        let h = 1e-6;
        let (_, grad) = irf_gradient(0.9, &item, ModelFamily::ThreePl);
        let bump = |k: usize, d: f64| {
            let mut p = free_params(&item, ModelFamily::ThreePl);
            p[k] += d;
            with_params(&item, ModelFamily::ThreePl, &p).irf(0.9)
        };
        for k in 0..3 {
            let fd = (bump(k, h) - bump(k, -h)) / (2.0 * h);
            assert!((fd - grad[k]).abs() < 1e-7, "param {k}: {fd} vs {}", grad[k]);
        }
    }
}
