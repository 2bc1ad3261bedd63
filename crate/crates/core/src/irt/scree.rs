//! Eigenvalues of the inter-item correlation matrix for dimensionality checks.
//!
//! Correlations are plain Pearson (phi) coefficients on the 0/1 responses,
//! computed over pairwise-complete subjects. Phi understates the latent
//! correlation relative to tetrachoric estimates, so ratios are conservative.

use log::warn;
use nalgebra::DMatrix;

use super::response::ResponseMatrix;
use crate::error::{Error, Result};

fn phi(a: &[Option<bool>], b: &[Option<bool>]) -> f64 {
    let (mut n, mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        if let (Some(x), Some(y)) = (x, y) {
            let (x, y) = (f64::from(u8::from(*x)), f64::from(u8::from(*y)));
            n += 1.0;
            sa += x;
            sb += y;
            sab += x * y;
        }
    }
    if n < 2.0 {
        return 0.0;
    }
    let (pa, pb) = (sa / n, sb / n);
    let denom = (pa * (1.0 - pa) * pb * (1.0 - pb)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (sab / n - pa * pb) / denom
    }
}

/// Descending eigenvalues of the phi correlation matrix.
pub fn scree_eigenvalues(data: &ResponseMatrix) -> Result<Vec<f64>> {
    let mut cols = Vec::new();
    for j in 0..data.n_items() {
        let col: Vec<Option<bool>> = data.column(j).collect();
        let answered: Vec<bool> = col.iter().flatten().copied().collect();
        if answered.iter().all(|&v| v) || answered.iter().all(|&v| !v) {
            warn!("item `{}` has zero variance and is left out of the scree", data.item_ids()[j]);
            continue;
        }
        cols.push(col);
    }
    if cols.len() < 2 {
        return Err(Error::Degenerate(format!("scree needs at least 2 items with variance, found {}", cols.len())));
    }
    let n = cols.len();
    let mut corr = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let r = phi(&cols[i], &cols[j]);
            corr[(i, j)] = r;
            corr[(j, i)] = r;
        }
    }
    let mut values: Vec<f64> = corr.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_correlated_pair() {
        let rows = vec![vec![1, 1], vec![0, 0], vec![1, 1], vec![0, 0]];
        let m = ResponseMatrix::from_rows((0..4).map(|s| format!("s{s}")).collect(), vec!["a".into(), "b".into()], &rows).unwrap();
        let ev = scree_eigenvalues(&m).unwrap();
        assert!((ev[0] - 2.0).abs() < 1e-12);
        assert!(ev[1].abs() < 1e-12);
    }

    #[test]
    fn constant_items_dropped() {
        let rows = vec![vec![1, 1, 0], vec![1, 0, 1], vec![1, 1, 1]];
        let m = ResponseMatrix::from_rows((0..3).map(|s| format!("s{s}")).collect(), vec!["a".into(), "b".into(), "c".into()], &rows).unwrap();
        assert_eq!(scree_eigenvalues(&m).unwrap().len(), 2);
        let rows = vec![vec![1, 1], vec![1, 0]];
        let m = ResponseMatrix::from_rows(vec!["x".into(), "y".into()], vec!["a".into(), "b".into()], &rows).unwrap();
        assert!(scree_eigenvalues(&m).is_err());
    }
}
