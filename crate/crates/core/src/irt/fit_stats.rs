//! Information criteria and a limited-information RMSEA.
//!
//! The RMSEA is built from first- and second-order response margins. Each
//! residual (observed minus model-implied margin) is weighted by the inverse
//! of its own binomial variance, and the part of the residual vector that
//! the item parameters can absorb is projected out through the Jacobian of
//! the margins. This approximates the M2 quadratic form without the full
//! covariance of all margins, which is quartic in the number of items.

use nalgebra::{DMatrix, DVector};

use super::em::{irf_gradient, marginal_log_likelihood};
use super::fitted::{FitStatistics, FittedModel};
use super::response::ResponseMatrix;
use crate::error::{Error, Result};

/// `(AIC, BIC)` from a log-likelihood, parameter count and sample size.
pub fn information_criteria(log_likelihood: f64, n_params: usize, n_subjects: usize) -> (f64, f64) {
    let p = n_params as f64;
    let aic = -2.0 * log_likelihood + 2.0 * p;
    let bic = -2.0 * log_likelihood + p * (n_subjects as f64).ln();
    (aic, bic)
}

/// Limited-information statistic on univariate and bivariate margins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginStatistic {
    pub m2: f64,
    pub df: usize,
    pub rmsea: f64,
}

pub fn margin_statistic(model: &FittedModel, data: &ResponseMatrix) -> Result<MarginStatistic> {
    let n_items = model.items.len();
    let quad = &model.quadrature;
    let weights = quad.weights();
    let nq = quad.len();
    let ppi = model.family.params_per_item();
    let n_params = ppi * n_items;

    // P and dP/dparam for every item and node
    let mut prob = vec![0.0; n_items * nq];
    let mut dprob = vec![0.0; n_items * nq * ppi];
    for (j, item) in model.items.iter().enumerate() {
        for (k, &theta) in quad.nodes().iter().enumerate() {
            let (p, g) = irf_gradient(theta, item, model.family);
            prob[j * nq + k] = p;
            dprob[(j * nq + k) * ppi..(j * nq + k + 1) * ppi].copy_from_slice(&g);
        }
    }

    // observed counts; pairwise-complete for the bivariate margins
    let cols: Vec<Vec<Option<bool>>> = (0..n_items).map(|j| data.column(j).collect()).collect();

    let mut weighted_sq = 0.0;
    let mut h = DVector::<f64>::zeros(n_params);
    let mut g = DMatrix::<f64>::zeros(n_params, n_params);
    let mut n_margins = 0usize;

    let mut accumulate = |resid: f64, weight: f64, grads: &[(usize, f64)]| {
        weighted_sq += weight * resid * resid;
        for &(a, da) in grads {
            h[a] += weight * resid * da;
            for &(b, db) in grads {
                g[(a, b)] += weight * da * db;
            }
        }
    };

    for j in 0..n_items {
        let (mut hits, mut n) = (0usize, 0usize);
        for c in cols[j].iter().flatten() {
            n += 1;
            hits += usize::from(*c);
        }
        if n == 0 {
            continue;
        }
        let pi: f64 = (0..nq).map(|k| weights[k] * prob[j * nq + k]).sum();
        let var = pi * (1.0 - pi);
        if !(var > 0.0) {
            continue;
        }
        let grads: Vec<(usize, f64)> = (0..ppi)
            .map(|l| (j * ppi + l, (0..nq).map(|k| weights[k] * dprob[(j * nq + k) * ppi + l]).sum()))
            .collect();
        accumulate(hits as f64 / n as f64 - pi, n as f64 / var, &grads);
        n_margins += 1;
    }

    for j in 0..n_items {
        for m in (j + 1)..n_items {
            let (mut hits, mut n) = (0usize, 0usize);
            for (a, b) in cols[j].iter().zip(&cols[m]) {
                if let (Some(a), Some(b)) = (a, b) {
                    n += 1;
                    hits += usize::from(*a && *b);
                }
            }
            if n == 0 {
                continue;
            }
            let mut pi = 0.0;
            let mut grads: Vec<(usize, f64)> = (0..ppi).map(|l| (j * ppi + l, 0.0)).chain((0..ppi).map(|l| (m * ppi + l, 0.0))).collect();
            for k in 0..nq {
                let (pj, pm) = (prob[j * nq + k], prob[m * nq + k]);
                pi += weights[k] * pj * pm;
                for l in 0..ppi {
                    grads[l].1 += weights[k] * dprob[(j * nq + k) * ppi + l] * pm;
                    grads[ppi + l].1 += weights[k] * dprob[(m * nq + k) * ppi + l] * pj;
                }
            }
            let var = pi * (1.0 - pi);
            if !(var > 0.0) {
                continue;
            }
            accumulate(hits as f64 / n as f64 - pi, n as f64 / var, &grads);
            n_margins += 1;
        }
    }

    let ridge = 1e-10 * (1.0 + g.diagonal().iter().sum::<f64>() / n_params.max(1) as f64);
    for i in 0..n_params {
        g[(i, i)] += ridge;
    }
    let absorbed = match g.clone().cholesky() {
        Some(ch) => h.dot(&ch.solve(&h)),
        None => {
            let pinv = g.pseudo_inverse(1e-12).map_err(|e| Error::Degenerate(e.to_string()))?;
            h.dot(&(pinv * &h))
        }
    };
    let m2 = (weighted_sq - absorbed).max(0.0);
    let df = n_margins.saturating_sub(n_params);
    let n = data.n_subjects() as f64;
    let rmsea = if df == 0 || n == 0.0 {
        0.0
    } else {
        ((m2 - df as f64) / (n * df as f64)).max(0.0).sqrt()
    };
    Ok(MarginStatistic { m2, df, rmsea })
}

/// Log-likelihood, AIC, BIC and RMSEA of `model` on `data`.
pub fn fit_statistics(model: &FittedModel, data: &ResponseMatrix) -> Result<FitStatistics> {
    let model_ids: Vec<&str> = model.items.iter().map(|i| i.item_id.as_str()).collect();
    let data_ids: Vec<&str> = data.item_ids().iter().map(String::as_str).collect();
    if model_ids != data_ids {
        return Err(Error::ItemMismatch("model and response matrix list different items".into()));
    }
    let log_likelihood = marginal_log_likelihood(data, &model.items, &model.quadrature);
    let (aic, bic) = information_criteria(log_likelihood, model.n_params, data.n_subjects());
    let margins = margin_statistic(model, data)?;
    Ok(FitStatistics {
        log_likelihood,
        aic,
        bic,
        rmsea: margins.rmsea,
        m2: margins.m2,
        df: margins.df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_formula() {
        let (aic, bic) = information_criteria(-100.0, 5, 50);
        assert_eq!(aic, 210.0);
        assert!((bic - 219.560_115).abs() < 1e-6);
    }
}
