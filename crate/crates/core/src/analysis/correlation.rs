use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::series::ScoreSeries;
use crate::error::{Error, Result};

/// Product-moment correlation of two equal-length samples.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!("samples differ in length ({} vs {})", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("correlation needs at least 2 observations".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::ZeroVariance("correlation input".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub n: usize,
    /// Two-sided p from the t distribution with n - 2 df.
    pub p: f64,
    /// 95% interval from the Fisher z transform.
    pub ci_low: f64,
    pub ci_high: f64,
}

pub(crate) fn z_975() -> f64 {
    Normal::standard().inverse_cdf(0.975)
}

/// Correlates two score series matched by subject id.
pub fn pearson_r(a: &ScoreSeries, b: &ScoreSeries) -> Result<Correlation> {
    let (x, y) = a.aligned_with(b)?;
    let n = x.len();
    if n < 3 {
        return Err(Error::InvalidInput(format!("correlation needs n >= 3, got {n}")));
    }
    let r = pearson(&x, &y)?;
    let df = (n - 2) as f64;
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("positive df");
        (2.0 * dist.cdf(-t.abs())).min(1.0)
    };
    let (ci_low, ci_high) = if r.abs() >= 1.0 {
        (r, r)
    } else if n == 3 {
        (-1.0, 1.0)
    } else {
        let z = r.atanh();
        let half = z_975() / ((n - 3) as f64).sqrt();
        ((z - half).tanh(), (z + half).tanh())
    };
    Ok(Correlation { r, n, p, ci_low, ci_high })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(label: &str, values: &[f64]) -> ScoreSeries {
        let ids = (0..values.len()).map(|k| format!("s{k}")).collect();
        ScoreSeries::new(label, ids, values.to_vec()).unwrap()
    }

    #[test]
    fn hand_dataset() {
        // means 3 and 3; sxy = 8, sxx = syy = 10
        let c = pearson_r(&series("x", &[1.0, 2.0, 3.0, 4.0, 5.0]), &series("y", &[2.0, 1.0, 4.0, 3.0, 5.0])).unwrap();
        assert!((c.r - 0.8).abs() < 1e-12);
        // t = 0.8 * sqrt(3 / 0.36) = 2.3094, two-sided p with 3 df
        assert!((c.p - 0.104_088).abs() < 1e-5, "{}", c.p);
        assert!(c.ci_low < 0.8 && c.ci_high > 0.8 && c.ci_high < 1.0);
    }

    #[test]
    fn perfect_lines() {
        let a = series("a", &[0.3, 1.0, 2.5, 4.0]);
        let up = series("b", &[1.6, 3.0, 6.0, 9.0]);
        let down = series("c", &[-0.3, -1.0, -2.5, -4.0]);
        assert!((pearson_r(&a, &up).unwrap().r - 1.0).abs() < 1e-12);
        assert!((pearson_r(&a, &down).unwrap().r + 1.0).abs() < 1e-12);
        assert!(matches!(pearson_r(&a, &series("k", &[1.0; 4])), Err(Error::ZeroVariance(_))));
    }
}
