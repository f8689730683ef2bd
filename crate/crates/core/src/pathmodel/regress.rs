use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::PathError;

/// Weighted mean with weights used as given.
pub fn wmean(x: &[f64], w: &[f64]) -> f64 {
    x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / w.iter().sum::<f64>()
}

/// Weighted covariance with the total weight as denominator.
pub fn wcov(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let (mx, my) = (wmean(x, w), wmean(y, w));
    x.iter()
        .zip(y)
        .zip(w)
        .map(|((a, b), c)| c * (a - mx) * (b - my))
        .sum::<f64>()
        / w.iter().sum::<f64>()
}

pub fn wsd(x: &[f64], w: &[f64]) -> f64 {
    wcov(x, x, w).sqrt()
}

pub fn wcorr(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    wcov(x, y, w) / (wsd(x, w) * wsd(y, w))
}

pub(crate) fn two_sided_p(z: f64) -> f64 {
    let n = Normal::standard();
    2.0 * (1.0 - n.cdf(z.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub predictor: String,
    pub estimate: f64,
    /// Heteroskedasticity-robust (HC1) standard error.
    pub se: f64,
    pub std_estimate: f64,
    pub std_se: f64,
    pub z: f64,
    pub p_value: f64,
}

/// A weighted least-squares fit with an intercept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub outcome: String,
    pub intercept: f64,
    pub coefficients: Vec<Coefficient>,
    pub r2: f64,
    /// Weighted residual variance, total weight as denominator.
    pub residual_variance: f64,
    /// Robust covariance of the standardized slopes, row-major.
    pub std_vcov: Vec<Vec<f64>>,
    pub n: usize,
}

impl Regression {
    pub fn coefficient(&self, predictor: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.predictor == predictor)
    }

    /// An equation given directly by standardized slopes and their standard
    /// errors, e.g. to decompose published estimates. Slopes are treated as
    /// uncorrelated; a zero SE yields a NaN p-value.
    pub fn from_standardized(outcome: &str, slopes: &[(&str, f64, f64)]) -> Self {
        let k = slopes.len();
        let mut std_vcov = vec![vec![0.0; k]; k];
        for (i, s) in slopes.iter().enumerate() {
            std_vcov[i][i] = s.2 * s.2;
        }
        Self {
            outcome: outcome.into(),
            intercept: 0.0,
            coefficients: slopes
                .iter()
                .map(|&(p, b, se)| {
                    let z = if se > 0.0 { b / se } else { f64::NAN };
                    Coefficient {
                        predictor: p.into(),
                        estimate: b,
                        se,
                        std_estimate: b,
                        std_se: se,
                        z,
                        p_value: if z.is_nan() { f64::NAN } else { two_sided_p(z) },
                    }
                })
                .collect(),
            r2: f64::NAN,
            residual_variance: f64::NAN,
            std_vcov,
            n: 0,
        }
    }
}

/// Weighted least squares of `y` on `xs` plus an intercept. Weights are
/// rescaled to mean 1 first, so their overall scale does not matter.
pub fn wls(outcome: &str, y: &[f64], xs: &[(&str, &[f64])], weights: &[f64]) -> Result<Regression, PathError> {
    let n = y.len();
    let k = xs.len() + 1;
    if n <= k {
        return Err(PathError::SingularDesign(outcome.to_string()));
    }
    let wm = weights.iter().sum::<f64>() / n as f64;
    let w: Vec<f64> = weights.iter().map(|v| v / wm).collect();
    let x = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { xs[j - 1].1[i] });
    let mut xtwx = DMatrix::zeros(k, k);
    let mut xtwy = DVector::zeros(k);
    for i in 0..n {
        let row = x.row(i);
        for a in 0..k {
            xtwy[a] += w[i] * row[a] * y[i];
            for b in 0..=a {
                xtwx[(a, b)] += w[i] * row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            xtwx[(b, a)] = xtwx[(a, b)];
        }
    }
    let chol = xtwx
        .clone()
        .cholesky()
        .ok_or_else(|| PathError::SingularDesign(outcome.to_string()))?;
    // Reject near-collinear designs that Cholesky alone lets through.
    let l = chol.l();
    let scale = (0..k).map(|i| xtwx[(i, i)]).fold(0.0f64, f64::max);
    if (0..k).any(|i| l[(i, i)].powi(2) <= scale * 1e-12) {
        return Err(PathError::SingularDesign(outcome.to_string()));
    }
    let beta = chol.solve(&xtwy);
    let bread = chol.inverse();
    let resid: Vec<f64> = (0..n).map(|i| y[i] - (x.row(i) * &beta)[0]).collect();
    let mut meat = DMatrix::zeros(k, k);
    for i in 0..n {
        let s = (w[i] * resid[i]).powi(2);
        let row = x.row(i);
        for a in 0..k {
            for b in 0..k {
                meat[(a, b)] += s * row[a] * row[b];
            }
        }
    }
    let vcov = &bread * meat * &bread * (n as f64 / (n - k) as f64);

    let sum_w: f64 = w.iter().sum();
    let residual_variance = resid.iter().zip(&w).map(|(e, w)| w * e * e).sum::<f64>() / sum_w;
    let var_y = wcov(y, y, &w);
    let sd_y = var_y.sqrt();
    let sds: Vec<f64> = xs.iter().map(|(_, c)| wsd(c, &w)).collect();
    let coefficients = xs
        .iter()
        .enumerate()
        .map(|(j, (name, _))| {
            let est = beta[j + 1];
            let se = vcov[(j + 1, j + 1)].sqrt();
            let f = sds[j] / sd_y;
            Coefficient {
                predictor: name.to_string(),
                estimate: est,
                se,
                std_estimate: est * f,
                std_se: se * f,
                z: est / se,
                p_value: two_sided_p(est / se),
            }
        })
        .collect();
    let std_vcov = (0..xs.len())
        .map(|a| {
            (0..xs.len())
                .map(|b| vcov[(a + 1, b + 1)] * sds[a] * sds[b] / var_y)
                .collect()
        })
        .collect();
    Ok(Regression {
        outcome: outcome.to_string(),
        intercept: beta[0],
        coefficients,
        r2: 1.0 - residual_variance / var_y,
        residual_variance,
        std_vcov,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_and_identities() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 + 0.5 * v + if (*v as i32) % 2 == 0 { 0.3 } else { -0.3 }).collect();
        let w: Vec<f64> = (0..20).map(|i| 1.0 + (i % 3) as f64).collect();
        let r = wls("y", &y, &[("x", &x)], &w).unwrap();
        let c = &r.coefficients[0];
        assert!((c.std_estimate - wcorr(&x, &y, &w)).abs() < 1e-12);
        assert!((r.r2 - wcorr(&x, &y, &w).powi(2)).abs() < 1e-12);
        // Scaling all weights changes nothing.
        let w10: Vec<f64> = w.iter().map(|v| v * 10.0).collect();
        let r10 = wls("y", &y, &[("x", &x)], &w10).unwrap();
        assert!((r10.coefficients[0].se - c.se).abs() < 1e-12);
    }

    #[test]
    fn hc1_matches_hand_computation() {
        // Unweighted simple regression; HC1 slope variance
        // = n/(n-2) · Σ (x-x̄)² e² / (Σ (x-x̄)²)².
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [1.1, 1.9, 3.4, 3.9, 5.6, 5.8];
        let w = [1.0; 6];
        let r = wls("y", &y, &[("x", &x)], &w).unwrap();
        let mx = 3.5;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let my = y.iter().sum::<f64>() / 6.0;
        let b = x.iter().zip(&y).map(|(a, c)| (a - mx) * (c - my)).sum::<f64>() / sxx;
        let a = my - b * mx;
        let meat: f64 = x.iter().zip(&y).map(|(xi, yi)| ((xi - mx) * (yi - a - b * xi)).powi(2)).sum();
        let se = (6.0 / 4.0 * meat / (sxx * sxx)).sqrt();
        assert!((r.coefficients[0].estimate - b).abs() < 1e-12);
        assert!((r.coefficients[0].se - se).abs() < 1e-12);
    }

    #[test]
    fn collinear_design_rejected() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let y = x.clone();
        assert!(matches!(
            wls("y", &y, &[("a", &x), ("b", &x2)], &[1.0; 10]),
            Err(PathError::SingularDesign(e)) if e == "y"
        ));
    }
}
