//! Two-group comparisons: rank-sum, Welch and paired t tests.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::series::ScoreSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GroupTest {
    WilcoxonRankSum,
    WelchT,
    PairedT,
}

impl std::str::FromStr for GroupTest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "wilcoxon" | "wilcoxon_rank_sum" | "rank_sum" => Ok(Self::WilcoxonRankSum),
            "welch" | "welch_t" => Ok(Self::WelchT),
            "paired" | "paired_t" => Ok(Self::PairedT),
            other => Err(Error::InvalidInput(format!("unknown group test `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub test: GroupTest,
    /// W for the rank-sum test, t otherwise.
    pub statistic: f64,
    /// Two-sided.
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub df: Option<f64>,
    /// 95% interval of the mean difference `a - b` (t tests only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci: Option<(f64, f64)>,
    /// The rank-sum p came from the exact null distribution.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exact: bool,
    pub n_a: usize,
    pub n_b: usize,
}

/// Largest group size for which the rank-sum test enumerates its null distribution.
pub const EXACT_RANK_SUM_LIMIT: usize = 10;

pub fn group_compare(a: &ScoreSeries, b: &ScoreSeries, test: GroupTest) -> Result<Comparison> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput(format!("each group needs n >= 2 (got {} and {})", a.len(), b.len())));
    }
    match test {
        GroupTest::WilcoxonRankSum => rank_sum(&a.values, &b.values),
        GroupTest::WelchT => welch(&a.values, &b.values),
        GroupTest::PairedT => {
            let (x, y) = a.aligned_with(b)?;
            paired(&x, &y)
        }
    }
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

fn t_two_sided(t: f64, df: f64) -> (f64, f64) {
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
    ((2.0 * dist.cdf(-t.abs())).min(1.0), dist.inverse_cdf(0.975))
}

fn welch(x: &[f64], y: &[f64]) -> Result<Comparison> {
    let (vx, vy) = (variance(x) / x.len() as f64, variance(y) / y.len() as f64);
    let diff = mean(x) - mean(y);
    let se = (vx + vy).sqrt();
    if se == 0.0 {
        return Err(Error::ZeroVariance("both groups".into()));
    }
    let t = diff / se;
    let df = (vx + vy).powi(2) / (vx * vx / (x.len() - 1) as f64 + vy * vy / (y.len() - 1) as f64);
    let (p, q) = t_two_sided(t, df);
    Ok(Comparison {
        test: GroupTest::WelchT,
        statistic: t,
        p,
        df: Some(df),
        ci: Some((diff - q * se, diff + q * se)),
        exact: false,
        n_a: x.len(),
        n_b: y.len(),
    })
}

fn paired(x: &[f64], y: &[f64]) -> Result<Comparison> {
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let n = d.len();
    let (m, se) = (mean(&d), (variance(&d) / n as f64).sqrt());
    let df = (n - 1) as f64;
    let (t, p, ci) = if se == 0.0 {
        if m != 0.0 {
            return Err(Error::ZeroVariance("paired differences".into()));
        }
        (0.0, 1.0, (0.0, 0.0))
    } else {
        let t = m / se;
        let (p, q) = t_two_sided(t, df);
        (t, p, (m - q * se, m + q * se))
    };
    Ok(Comparison {
        test: GroupTest::PairedT,
        statistic: t,
        p,
        df: Some(df),
        ci: Some(ci),
        exact: false,
        n_a: n,
        n_b: n,
    })
}

/// Mid-ranks of the pooled sample and the tie-group sizes.
fn mid_ranks(pooled: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..pooled.len()).collect();
    order.sort_by(|&i, &j| pooled[i].total_cmp(&pooled[j]));
    let mut ranks = vec![0.0; pooled.len()];
    let mut ties = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && pooled[order[end]] == pooled[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        if end - start > 1 {
            ties.push(end - start);
        }
        start = end;
    }
    (ranks, ties)
}

/// Number of `k`-subsets of `1..=n` by sum of elements.
fn subset_sum_counts(n: usize, k: usize) -> Vec<Vec<f64>> {
    let max_sum = n * (n + 1) / 2;
    // counts[j][s]: subsets of size j with sum s among the values seen so far
    let mut counts = vec![vec![0.0; max_sum + 1]; k + 1];
    counts[0][0] = 1.0;
    for v in 1..=n {
        for j in (1..=k.min(v)).rev() {
            for s in (v..=max_sum).rev() {
                counts[j][s] += counts[j - 1][s - v];
            }
        }
    }
    counts
}

fn rank_sum(x: &[f64], y: &[f64]) -> Result<Comparison> {
    let (n1, n2) = (x.len(), y.len());
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (ranks, ties) = mid_ranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let w = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    let n = (n1 + n2) as f64;
    let mean_w = (n1 * n2) as f64 / 2.0;

    if ties.is_empty() && n1 <= EXACT_RANK_SUM_LIMIT && n2 <= EXACT_RANK_SUM_LIMIT {
        let counts = subset_sum_counts(n1 + n2, n1);
        let offset = n1 * (n1 + 1) / 2;
        let total: f64 = counts[n1].iter().sum();
        let w_int = w.round() as usize;
        let lower: f64 = counts[n1][offset..=offset + w_int].iter().sum();
        let upper: f64 = counts[n1][offset + w_int..].iter().sum();
        let p = (2.0 * lower.min(upper) / total).min(1.0);
        return Ok(Comparison {
            test: GroupTest::WilcoxonRankSum,
            statistic: w,
            p,
            df: None,
            ci: None,
            exact: true,
            n_a: n1,
            n_b: n2,
        });
    }

    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (n * (n - 1.0));
    let var_w = (n1 * n2) as f64 / 12.0 * ((n + 1.0) - tie_term);
    if var_w <= 0.0 {
        return Err(Error::ZeroVariance("rank-sum input: every value is tied".into()));
    }
    let dev = w - mean_w;
    let corrected = dev - 0.5 * dev.signum();
    let z = if dev.abs() < 0.5 { 0.0 } else { corrected / var_w.sqrt() };
    let p = (2.0 * Normal::standard().cdf(-z.abs())).min(1.0);
    Ok(Comparison {
        test: GroupTest::WilcoxonRankSum,
        statistic: w,
        p,
        df: None,
        ci: None,
        exact: false,
        n_a: n1,
        n_b: n2,
    })
}
